#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "unlab/data.hpp"
#include "unlab/nn.hpp"
#include "unlab/unlearn.hpp"

using namespace unlab;
using doctest::Approx;

namespace {

ModelSpec small_spec() {
    ModelSpec spec;
    spec.layer_sizes = {2, 4, 2};
    spec.activation = Activation::Tanh;
    return spec;
}

TrainConfig fast_cfg(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.learning_rate = 5e-3;
    cfg.weight_decay = 0.0;
    cfg.seed = seed;
    return cfg;
}

struct Bench {
    Dataset data;
    MembershipSplit split;
};

Bench small_bench(std::uint64_t seed) {
    Bench b;
    b.data = generate_blobs(2, 2, 30, 0.3, seed);
    b.split = make_membership_split(b.data, 0.5, 0.25, seed);
    return b;
}

double mean_loss_on(const ModelParams& p, const Dataset& data, const std::vector<int>& rows) {
    return mean_ce_loss(p, subset(data, rows));
}

double mean_kl_on(const ModelParams& student, const ModelParams& teacher, const Dataset& data,
                  const std::vector<int>& rows, double temperature) {
    double acc = 0.0;
    for (int i : rows)
        acc += softened_kl(student, teacher, data.features.row(static_cast<std::size_t>(i)),
                           data.dim(), temperature);
    return acc / static_cast<double>(rows.size());
}

}  // namespace

TEST_SUITE("unlearn") {

TEST_CASE("method names round trip") {
    for (UnlearnMethod m : {UnlearnMethod::Retrain, UnlearnMethod::Sisa,
                            UnlearnMethod::Ga, UnlearnMethod::Sparsity,
                            UnlearnMethod::Scrub}) {
        CHECK(unlearn_method_from_name(unlearn_method_name(m)) == m);
    }
    CHECK_THROWS_AS(unlearn_method_from_name("telepathy"), ConfigError);
}

TEST_CASE("retrain is bit-identical to training on the retain rows") {
    const Bench b = small_bench(1);
    const ModelSpec spec = small_spec();
    const TrainConfig cfg = fast_cfg(5);

    const ModelParams got = retrain(b.data, b.split, spec, cfg);
    const ModelParams want = train(make_model(spec, cfg.seed), subset(b.data, b.split.retain), cfg);
    CHECK(got == want);

    // An empty forget set makes retraining the same as the original fit.
    MembershipSplit keep_all = b.split;
    keep_all.forget.clear();
    keep_all.retain = keep_all.train;
    const ModelParams full = retrain(b.data, keep_all, spec, cfg);
    CHECK(full == train(make_model(spec, cfg.seed), subset(b.data, keep_all.train), cfg));

    MembershipSplit hollow = b.split;
    hollow.retain.clear();
    CHECK_THROWS_AS(retrain(b.data, hollow, spec, cfg), DataError);
}

TEST_CASE("one-shard sisa degenerates to plain training") {
    const Bench b = small_bench(2);
    const ModelSpec spec = small_spec();
    const TrainConfig cfg = fast_cfg(9);

    const SisaModel model = sisa_train(b.data, b.split, 1, spec, cfg);
    REQUIRE(model.shard_models.size() == 1);
    CHECK(model.num_shards == 1);

    TrainConfig shard_cfg = cfg;
    shard_cfg.seed = mix_seed(cfg.seed, seed_tag::sisa_shard, 0);
    const ModelParams want =
        train(make_model(spec, shard_cfg.seed), subset(b.data, b.split.train), shard_cfg);
    CHECK(model.shard_models[0] == want);

    // Every train row is assigned, and predictions collapse to the model.
    CHECK(model.shard_assignment.size() == b.split.train.size());
    const double* x = b.data.features.row(0);
    const PosteriorVector one = sisa_predict(model, x, b.data.dim());
    const PosteriorVector direct = forward(model.shard_models[0], x, b.data.dim());
    CHECK(one.probs == direct.probs);
}

TEST_CASE("round-robin sharding balances the shards") {
    const Dataset data = generate_blobs(4, 3, 250, 0.4, 3);  // 1000 rows
    MembershipSplit split;
    for (int i = 0; i < 800; ++i) split.train.push_back(i);
    for (int i = 800; i < 1000; ++i) split.test.push_back(i);
    split.forget = {0};
    split.retain.assign(split.train.begin() + 1, split.train.end());
    split.unseen = split.test;

    ModelSpec spec;
    spec.layer_sizes = {3, 4, 4};
    spec.activation = Activation::Tanh;
    const SisaModel model = sisa_train(data, split, 4, spec, fast_cfg(1));
    REQUIRE(model.shard_models.size() == 4);
    CHECK(model.shard_assignment.size() == 800);
    std::map<int, int> counts;
    for (const auto& [row, shard] : model.shard_assignment) counts[shard]++;
    REQUIRE(counts.size() == 4);
    for (const auto& [shard, n] : counts) CHECK(n == 200);

    CHECK_THROWS_AS(sisa_train(data, split, 0, spec, fast_cfg(1)), ConfigError);
    CHECK_THROWS_AS(sisa_train(data, split, 801, spec, fast_cfg(1)), ConfigError);
}

TEST_CASE("sisa unlearning retrains only the shards that held forget rows") {
    const Dataset data = generate_blobs(2, 2, 60, 0.3, 4);  // 120 rows
    MembershipSplit split = make_membership_split(data, 0.5, 0.1, 4);
    ModelSpec spec = small_spec();
    const TrainConfig cfg = fast_cfg(7);

    const SisaModel model = sisa_train(data, split, 3, spec, cfg);

    // Forget two rows of shard 0 only.
    std::vector<int> forget;
    for (const auto& [row, shard] : model.shard_assignment)
        if (shard == 0 && forget.size() < 2) forget.push_back(row);
    REQUIRE(forget.size() == 2);

    const SisaModel after = sisa_unlearn(model, data, forget);
    CHECK(after.shard_models[1] == model.shard_models[1]);
    CHECK(after.shard_models[2] == model.shard_models[2]);
    CHECK_FALSE(after.shard_models[0] == model.shard_models[0]);
    for (int f : forget) CHECK(after.shard_assignment.count(f) == 0);

    // Exactness: identical to training the surviving assignment from scratch.
    std::map<int, int> survivors = model.shard_assignment;
    for (int f : forget) survivors.erase(f);
    const SisaModel fresh = sisa_train_assigned(data, survivors, 3, spec, cfg);
    CHECK(after.shard_models == fresh.shard_models);
    CHECK(after.shard_assignment == fresh.shard_assignment);

    // Empty forget set: the model comes back bit-identical.
    const SisaModel same = sisa_unlearn(model, data, {});
    CHECK(same.shard_models == model.shard_models);
    CHECK(same.shard_assignment == model.shard_assignment);

    // A row that was never trained on cannot be forgotten.
    CHECK_THROWS_AS(sisa_unlearn(model, data, {split.test[0]}), DataError);
}

TEST_CASE("sisa prediction averages the shard posteriors") {
    // Two saturated single-layer shards voting for opposite classes.
    ModelParams m1 = init_model({2, 2}, Activation::Relu, 1);
    std::fill(m1.weights[0].a.begin(), m1.weights[0].a.end(), 0.0);
    m1.biases[0] = {1000.0, 0.0};
    ModelParams m2 = m1;
    m2.biases[0] = {0.0, 1000.0};

    SisaModel model;
    model.num_shards = 2;
    model.shard_models = {m1, m2};
    model.spec.layer_sizes = {2, 2};

    const std::vector<double> x = {0.3, -0.8};
    const PosteriorVector p = sisa_predict(model, x.data(), 2);
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);

    SisaModel hollow;
    CHECK_THROWS_AS(sisa_predict(hollow, x.data(), 2), ConfigError);
}

TEST_CASE("gradient ascent pushes the forget loss up") {
    const Bench b = small_bench(6);
    const ModelSpec spec = small_spec();
    TrainConfig cfg = fast_cfg(3);
    cfg.epochs = 40;
    cfg.learning_rate = 1e-2;
    const ModelParams fitted = train(make_model(spec, 3), subset(b.data, b.split.train), cfg);

    const ModelParams same = gradient_ascent_unlearn(fitted, b.data, b.split.forget, 0, 1e-2);
    CHECK(same == fitted);

    const double before = mean_loss_on(fitted, b.data, b.split.forget);
    const ModelParams blown = gradient_ascent_unlearn(fitted, b.data, b.split.forget, 10, 1e-2);
    const double after = mean_loss_on(blown, b.data, b.split.forget);
    CHECK(after > before);
    CHECK_FALSE(blown == fitted);

    CHECK_THROWS_AS(gradient_ascent_unlearn(fitted, b.data, {}, 3, 1e-2), DataError);
    CHECK_THROWS_AS(gradient_ascent_unlearn(fitted, b.data, b.split.forget, -1, 1e-2),
                    ConfigError);
    CHECK_THROWS_AS(gradient_ascent_unlearn(fitted, b.data, b.split.forget, 3, 0.0),
                    ConfigError);
}

TEST_CASE("magnitude pruning zeroes the smallest weights, ties by position") {
    ModelParams p = init_model({1, 2, 1}, Activation::Relu, 1);
    p.weights[0].a = {0.2, 0.9};
    p.weights[1].a = {0.2, 0.7};

    const WeightMask none = magnitude_prune_mask(p, 0.0);
    CHECK(none[0].a == std::vector<double>{1.0, 1.0});
    CHECK(none[1].a == std::vector<double>{1.0, 1.0});

    // ratio 0.25 of 4 weights prunes exactly one; the magnitude tie at 0.2
    // resolves to the earlier layer and flat position.
    const WeightMask one = magnitude_prune_mask(p, 0.25);
    CHECK(one[0].a == std::vector<double>{0.0, 1.0});
    CHECK(one[1].a == std::vector<double>{1.0, 1.0});

    const WeightMask half = magnitude_prune_mask(p, 0.5);
    CHECK(half[0].a == std::vector<double>{0.0, 1.0});
    CHECK(half[1].a == std::vector<double>{0.0, 1.0});

    const WeightMask all = magnitude_prune_mask(p, 1.0);
    CHECK(all[0].a == std::vector<double>{0.0, 0.0});
    CHECK(all[1].a == std::vector<double>{0.0, 0.0});

    // Sign does not matter, only magnitude.
    p.weights[0].a = {-0.05, 0.9};
    const WeightMask negd = magnitude_prune_mask(p, 0.25);
    CHECK(negd[0].a == std::vector<double>{0.0, 1.0});

    CHECK_THROWS_AS(magnitude_prune_mask(p, -0.1), ConfigError);
    CHECK_THROWS_AS(magnitude_prune_mask(p, 1.1), ConfigError);

    // The advertised count: floor(ratio * weight_count) zeros.
    const ModelParams big = init_model({5, 10, 5}, Activation::Relu, 8);  // 100 weights
    const WeightMask m = magnitude_prune_mask(big, 0.5);
    std::size_t zeros = 0;
    for (const auto& layer : m)
        zeros += static_cast<std::size_t>(
            std::count(layer.a.begin(), layer.a.end(), 0.0));
    CHECK(zeros == 50);
}

TEST_CASE("sparsity unlearning keeps pruned weights at exactly zero") {
    const Bench b = small_bench(8);
    const ModelSpec spec = small_spec();
    TrainConfig cfg = fast_cfg(2);
    cfg.epochs = 10;
    const ModelParams fitted = train(make_model(spec, 2), subset(b.data, b.split.train), cfg);
    const WeightMask mask = magnitude_prune_mask(fitted, 0.4);

    // No finetuning: pruning alone, bit for bit.
    const ModelParams cut = sparsity_unlearn(fitted, b.data, b.split, 0.4, 0, cfg);
    for (std::size_t l = 0; l < cut.weights.size(); ++l)
        for (std::size_t i = 0; i < cut.weights[l].a.size(); ++i) {
            if (mask[l].a[i] == 0.0) CHECK(cut.weights[l].a[i] == 0.0);
            else CHECK(cut.weights[l].a[i] == fitted.weights[l].a[i]);
        }
    CHECK(cut.biases == fitted.biases);

    // Finetuning moves the survivors but never the pruned coordinates.
    const ModelParams tuned = sparsity_unlearn(fitted, b.data, b.split, 0.4, 3, cfg);
    bool moved = false;
    for (std::size_t l = 0; l < tuned.weights.size(); ++l)
        for (std::size_t i = 0; i < tuned.weights[l].a.size(); ++i) {
            if (mask[l].a[i] == 0.0) CHECK(tuned.weights[l].a[i] == 0.0);
            else moved = moved || tuned.weights[l].a[i] != fitted.weights[l].a[i];
        }
    CHECK(moved);

    // A zero ratio with no finetuning is the identity.
    CHECK(sparsity_unlearn(fitted, b.data, b.split, 0.0, 0, cfg) == fitted);

    MembershipSplit hollow = b.split;
    hollow.retain.clear();
    CHECK_THROWS_AS(sparsity_unlearn(fitted, b.data, hollow, 0.4, 3, cfg), DataError);
    CHECK_THROWS_AS(sparsity_unlearn(fitted, b.data, b.split, 0.4, -1, cfg), ConfigError);
}

TEST_CASE("softened KL behaves like a divergence") {
    const ModelParams a = init_model({2, 4, 3}, Activation::Tanh, 4);
    const ModelParams c = init_model({2, 4, 3}, Activation::Tanh, 5);
    const std::vector<double> x = {0.4, -0.2};

    CHECK(softened_kl(a, a, x.data(), 2, 4.0) == Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(softened_kl(a, c, x.data(), 2, 4.0) >= 0.0);
    CHECK(softened_kl(a, c, x.data(), 2, 1.0) > 0.0);

    // A huge temperature flattens both posteriors toward uniform.
    CHECK(softened_kl(a, c, x.data(), 2, 1e6) < 1e-6);

    CHECK_THROWS_AS(softened_kl(a, c, x.data(), 2, 0.0), ConfigError);
    CHECK_THROWS_AS(softened_kl(a, c, x.data(), 2, -1.0), ConfigError);
    const ModelParams wide = init_model({3, 4, 3}, Activation::Tanh, 4);
    CHECK_THROWS_AS(softened_kl(a, wide, x.data(), 2, 4.0), ShapeError);
}

TEST_CASE("scrub drives the student away from the teacher on forget rows") {
    const Bench b = small_bench(11);
    const ModelSpec spec = small_spec();
    TrainConfig cfg = fast_cfg(6);
    cfg.epochs = 30;
    cfg.learning_rate = 1e-2;
    const ModelParams teacher = train(make_model(spec, 6), subset(b.data, b.split.train), cfg);

    UnlearnConfig ucfg;
    ucfg.scrub_max_epochs = 0;
    ucfg.scrub_min_epochs = 0;
    CHECK(scrub_unlearn(teacher, b.data, b.split, ucfg, cfg) == teacher);

    ucfg.scrub_max_epochs = 10;
    ucfg.scrub_min_epochs = 1;
    ucfg.scrub_temperature = 2.0;
    ucfg.scrub_learning_rate = 1e-2;
    const ModelParams student = scrub_unlearn(teacher, b.data, b.split, ucfg, cfg);
    CHECK_FALSE(student == teacher);
    const double kl_forget =
        mean_kl_on(student, teacher, b.data, b.split.forget, ucfg.scrub_temperature);

    // Against a retain-only schedule the ascent rounds must show up as
    // extra divergence from the teacher on the forget rows.
    UnlearnConfig no_ascent = ucfg;
    no_ascent.scrub_max_epochs = 0;
    no_ascent.scrub_min_epochs = 1;
    const ModelParams distilled = scrub_unlearn(teacher, b.data, b.split, no_ascent, cfg);
    const double kl_forget_plain =
        mean_kl_on(distilled, teacher, b.data, b.split.forget, ucfg.scrub_temperature);
    CHECK(kl_forget > kl_forget_plain);

    MembershipSplit hollow = b.split;
    hollow.forget.clear();
    CHECK_THROWS_AS(scrub_unlearn(teacher, b.data, hollow, ucfg, cfg), DataError);
    hollow = b.split;
    hollow.retain.clear();
    CHECK_THROWS_AS(scrub_unlearn(teacher, b.data, hollow, ucfg, cfg), DataError);
    UnlearnConfig bad = ucfg;
    bad.scrub_temperature = 0.0;
    CHECK_THROWS_AS(scrub_unlearn(teacher, b.data, b.split, bad, cfg), ConfigError);
    bad = ucfg;
    bad.scrub_learning_rate = 0.0;
    CHECK_THROWS_AS(scrub_unlearn(teacher, b.data, b.split, bad, cfg), ConfigError);
    bad = ucfg;
    bad.scrub_max_epochs = -1;
    CHECK_THROWS_AS(scrub_unlearn(teacher, b.data, b.split, bad, cfg), ConfigError);
}

TEST_CASE("pipeline models answer through the right backend") {
    const Bench b = small_bench(13);
    const ModelSpec spec = small_spec();
    const TrainConfig cfg = fast_cfg(4);

    PipelineModel dense;
    dense.dense = train(make_model(spec, 4), subset(b.data, b.split.train), cfg);
    const double* x = b.data.features.row(1);
    CHECK(dense.posterior(x, 2).probs == forward(*dense.dense, x, 2).probs);
    CHECK(dense.accuracy(b.data, b.split.test) ==
          evaluate(*dense.dense, b.data, b.split.test));

    PipelineModel sharded;
    sharded.sisa = sisa_train(b.data, b.split, 2, spec, cfg);
    CHECK(sharded.posterior(x, 2).probs == sisa_predict(*sharded.sisa, x, 2).probs);

    PipelineModel hollow;
    CHECK_THROWS_AS(hollow.posterior(x, 2), ConfigError);
    CHECK_THROWS_AS(dense.accuracy(b.data, {}), MetricError);
}

TEST_CASE("train_and_unlearn dispatches to the configured method") {
    const Bench b = small_bench(17);
    const ModelSpec spec = small_spec();
    const TrainConfig tcfg = fast_cfg(8);
    UnlearnConfig ucfg;

    const ModelParams original =
        train(make_model(spec, tcfg.seed), subset(b.data, b.split.train), tcfg);

    SUBCASE("retrain") {
        ucfg.method = UnlearnMethod::Retrain;
        const ModelPair pair = train_and_unlearn(b.data, b.split, spec, tcfg, ucfg);
        REQUIRE(pair.original.dense.has_value());
        REQUIRE(pair.unlearned.dense.has_value());
        CHECK(*pair.original.dense == original);
        CHECK(*pair.unlearned.dense == retrain(b.data, b.split, spec, tcfg));
    }
    SUBCASE("sisa") {
        ucfg.method = UnlearnMethod::Sisa;
        ucfg.num_shards = 2;
        const ModelPair pair = train_and_unlearn(b.data, b.split, spec, tcfg, ucfg);
        REQUIRE(pair.original.sisa.has_value());
        REQUIRE(pair.unlearned.sisa.has_value());
        const SisaModel want = sisa_train(b.data, b.split, 2, spec, tcfg);
        CHECK(pair.original.sisa->shard_models == want.shard_models);
        const SisaModel after = sisa_unlearn(want, b.data, b.split.forget);
        CHECK(pair.unlearned.sisa->shard_models == after.shard_models);
    }
    SUBCASE("gradient ascent") {
        ucfg.method = UnlearnMethod::Ga;
        ucfg.ga_steps = 4;
        ucfg.ga_learning_rate = 1e-2;
        const ModelPair pair = train_and_unlearn(b.data, b.split, spec, tcfg, ucfg);
        CHECK(*pair.original.dense == original);
        CHECK(*pair.unlearned.dense ==
              gradient_ascent_unlearn(original, b.data, b.split.forget, 4, 1e-2));
    }
    SUBCASE("sparsity") {
        ucfg.method = UnlearnMethod::Sparsity;
        ucfg.prune_ratio = 0.3;
        ucfg.finetune_epochs = 2;
        const ModelPair pair = train_and_unlearn(b.data, b.split, spec, tcfg, ucfg);
        CHECK(*pair.original.dense == original);
        CHECK(*pair.unlearned.dense ==
              sparsity_unlearn(original, b.data, b.split, 0.3, 2, tcfg));
    }
    SUBCASE("scrub") {
        ucfg.method = UnlearnMethod::Scrub;
        ucfg.scrub_max_epochs = 2;
        ucfg.scrub_min_epochs = 1;
        const ModelPair pair = train_and_unlearn(b.data, b.split, spec, tcfg, ucfg);
        CHECK(*pair.original.dense == original);
        CHECK(*pair.unlearned.dense == scrub_unlearn(original, b.data, b.split, ucfg, tcfg));
    }
}

}  // TEST_SUITE
