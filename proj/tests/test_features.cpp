#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "unlab/features.hpp"

using namespace unlab;
using doctest::Approx;

namespace {

PosteriorVector pv(std::vector<double> p) { return PosteriorVector{std::move(p)}; }

FeatureMode mode_of(FeatureKind kind, int top_k = 1, int decimals = 2) {
    FeatureMode m;
    m.kind = kind;
    m.top_k = top_k;
    m.decimals = decimals;
    return m;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("membership encoding is 0 unseen, 1 forget, 2 retain") {
    CHECK(kUnseen == 0);
    CHECK(kForget == 1);
    CHECK(kRetain == 2);
    CHECK(std::string(kSetNames[0]) == "unseen");
    CHECK(std::string(kSetNames[1]) == "forget");
    CHECK(std::string(kSetNames[2]) == "retain");
}

TEST_CASE("kind names round trip") {
    for (FeatureKind k : {FeatureKind::Cp, FeatureKind::Ct, FeatureKind::Df, FeatureKind::Sm,
                          FeatureKind::Cds, FeatureKind::LabelOnly, FeatureKind::TopK,
                          FeatureKind::Rounded}) {
        CHECK(feature_kind_from_name(feature_kind_name(k)) == k);
    }
    CHECK(feature_kind_name(FeatureKind::Cds) == "cds");
    CHECK(feature_kind_name(FeatureKind::LabelOnly) == "label_only");
    CHECK_THROWS_AS(feature_kind_from_name("bogus"), ConfigError);
    CHECK(feature_mode_name(mode_of(FeatureKind::TopK, 3)) == "topk-3");
    CHECK(feature_mode_name(mode_of(FeatureKind::Rounded, 1, 4)) == "rounded-4");
    CHECK(feature_mode_name(mode_of(FeatureKind::Ct)) == "ct");
}

TEST_CASE("worked example: P=(0.7,0.2,0.1), P-=(0.5,0.3,0.2), y=0") {
    const PosteriorVector p = pv({0.7, 0.2, 0.1});
    const PosteriorVector pu = pv({0.5, 0.3, 0.2});

    SUBCASE("difference and sum") {
        const auto f = derive_features(p, pu, 0, mode_of(FeatureKind::Cds));
        REQUIRE(f.size() == 2);
        CHECK(f[0] == Approx(0.2).epsilon(1e-12));
        CHECK(f[1] == Approx(1.2).epsilon(1e-12));
    }
    SUBCASE("true-class confidence pair") {
        const auto f = derive_features(p, pu, 0, mode_of(FeatureKind::Ct));
        CHECK(f == std::vector<double>{0.7, 0.5});
    }
    SUBCASE("difference alone and sum alone") {
        const auto d = derive_features(p, pu, 0, mode_of(FeatureKind::Df));
        REQUIRE(d.size() == 1);
        CHECK(d[0] == Approx(0.2).epsilon(1e-12));
        const auto s = derive_features(p, pu, 0, mode_of(FeatureKind::Sm));
        REQUIRE(s.size() == 1);
        CHECK(s[0] == Approx(1.2).epsilon(1e-12));
    }
    SUBCASE("hard-label correctness pair") {
        const auto f = derive_features(p, pu, 0, mode_of(FeatureKind::LabelOnly));
        CHECK(f == std::vector<double>{1.0, 1.0});
    }
    SUBCASE("full posterior concatenation") {
        const auto f = derive_features(p, pu, 0, mode_of(FeatureKind::Cp));
        CHECK(f == std::vector<double>{0.7, 0.2, 0.1, 0.5, 0.3, 0.2});
    }
}

TEST_CASE("identical posteriors give zero confidence difference") {
    const PosteriorVector p = pv({0.25, 0.25, 0.5});
    const auto d = derive_features(p, p, 2, mode_of(FeatureKind::Df));
    CHECK(d[0] == 0.0);
    const auto cds = derive_features(p, p, 2, mode_of(FeatureKind::Cds));
    CHECK(cds[0] == 0.0);
    CHECK(cds[1] == 1.0);
}

TEST_CASE("label-only covers all four correctness patterns") {
    const PosteriorVector right = pv({0.6, 0.4});
    const PosteriorVector wrong = pv({0.4, 0.6});
    const auto m = mode_of(FeatureKind::LabelOnly);
    CHECK(derive_features(right, right, 0, m) == std::vector<double>{1.0, 1.0});
    CHECK(derive_features(right, wrong, 0, m) == std::vector<double>{1.0, 0.0});
    CHECK(derive_features(wrong, right, 0, m) == std::vector<double>{0.0, 1.0});
    CHECK(derive_features(wrong, wrong, 0, m) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("top-k confidences come out sorted descending") {
    const PosteriorVector p = pv({0.1, 0.4, 0.2, 0.3});
    const PosteriorVector pu = pv({0.25, 0.25, 0.25, 0.25});
    const auto f = derive_features(p, pu, 0, mode_of(FeatureKind::TopK, 3));
    REQUIRE(f.size() == 6);
    CHECK(f[0] == 0.4);
    CHECK(f[1] == 0.3);
    CHECK(f[2] == 0.2);
    CHECK(f[3] == 0.25);
    CHECK(f[4] == 0.25);
    CHECK(f[5] == 0.25);
    CHECK_THROWS_AS(derive_features(p, pu, 0, mode_of(FeatureKind::TopK, 5)), ConfigError);
    CHECK_THROWS_AS(derive_features(p, pu, 0, mode_of(FeatureKind::TopK, 0)), ConfigError);
}

TEST_CASE("rounded mode quantizes the confidence pair") {
    const PosteriorVector p = pv({0.678, 0.322});
    const PosteriorVector pu = pv({0.123, 0.877});
    const auto f2 = derive_features(p, pu, 0, mode_of(FeatureKind::Rounded, 1, 2));
    CHECK(f2[0] == Approx(0.68).epsilon(1e-12));
    CHECK(f2[1] == Approx(0.12).epsilon(1e-12));
    const auto f0 = derive_features(p, pu, 0, mode_of(FeatureKind::Rounded, 1, 0));
    CHECK(f0[0] == 1.0);
    CHECK(f0[1] == 0.0);
    CHECK_THROWS_AS(derive_features(p, pu, 0, mode_of(FeatureKind::Rounded, 1, -1)),
                    ConfigError);
}

TEST_CASE("feature dimensionality matches the produced vectors for every class count") {
    for (std::size_t c : {std::size_t{2}, std::size_t{3}, std::size_t{10}, std::size_t{100}}) {
        std::vector<double> probs(c, 1.0 / static_cast<double>(c));
        const PosteriorVector p = pv(probs);
        const int k = static_cast<int>(c < 4 ? c : 4);
        const std::vector<FeatureMode> modes = {
            mode_of(FeatureKind::Cp),      mode_of(FeatureKind::Ct),
            mode_of(FeatureKind::Df),      mode_of(FeatureKind::Sm),
            mode_of(FeatureKind::Cds),     mode_of(FeatureKind::LabelOnly),
            mode_of(FeatureKind::TopK, k), mode_of(FeatureKind::Rounded),
        };
        for (const auto& m : modes) {
            CHECK(derive_features(p, p, 0, m).size() == feature_dim(m, c));
        }
        CHECK(feature_dim(mode_of(FeatureKind::Cp), c) == 2 * c);
        CHECK(feature_dim(mode_of(FeatureKind::TopK, k), c) ==
              2 * static_cast<std::size_t>(k));
    }
    CHECK(feature_dim(mode_of(FeatureKind::Ct), 10) == 2);
    CHECK(feature_dim(mode_of(FeatureKind::Df), 10) == 1);
    CHECK(feature_dim(mode_of(FeatureKind::Sm), 10) == 1);
    CHECK(feature_dim(mode_of(FeatureKind::Cds), 10) == 2);
    CHECK(feature_dim(mode_of(FeatureKind::LabelOnly), 10) == 2);
    CHECK(feature_dim(mode_of(FeatureKind::Rounded), 10) == 2);
    CHECK_THROWS_AS(feature_dim(mode_of(FeatureKind::Cp), 0), ShapeError);
    CHECK_THROWS_AS(feature_dim(mode_of(FeatureKind::TopK, 11), 10), ConfigError);
}

TEST_CASE("difference and sum reconstruct the confidence pair") {
    const PosteriorVector p = pv({0.61, 0.39});
    const PosteriorVector pu = pv({0.17, 0.83});
    const auto cds = derive_features(p, pu, 0, mode_of(FeatureKind::Cds));
    const auto ct = derive_features(p, pu, 0, mode_of(FeatureKind::Ct));
    CHECK(0.5 * (cds[1] + cds[0]) == Approx(ct[0]).epsilon(1e-12));
    CHECK(0.5 * (cds[1] - cds[0]) == Approx(ct[1]).epsilon(1e-12));
}

TEST_CASE("bad inputs are rejected") {
    const PosteriorVector p = pv({0.5, 0.5});
    const PosteriorVector q = pv({0.3, 0.3, 0.4});
    CHECK_THROWS_AS(derive_features(p, q, 0, mode_of(FeatureKind::Cds)), ShapeError);
    CHECK_THROWS_AS(derive_features(pv({}), pv({}), 0, mode_of(FeatureKind::Cds)), ShapeError);
    CHECK_THROWS_AS(derive_features(p, p, 2, mode_of(FeatureKind::Cds)), DataError);
    CHECK_THROWS_AS(derive_features(p, p, -1, mode_of(FeatureKind::Cds)), DataError);
}

}  // TEST_SUITE
