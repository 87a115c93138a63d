#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "unlab/config.hpp"

using namespace unlab;

namespace {

bool is_hex(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isdigit(c) || (c >= 'a' && c <= 'f');
    });
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("empty text yields the desk defaults under the high preset") {
    const ExperimentConfig cfg = parse_config_text("");
    CHECK(cfg.classes == 10);
    CHECK(cfg.dim == 20);
    CHECK(cfg.per_class == 600);
    CHECK(cfg.spread == 0.45);
    CHECK(cfg.data_seed == 7);
    CHECK(cfg.target_fraction == 0.5);
    CHECK(cfg.train_fraction == 2.0 / 3.0);
    CHECK(cfg.forget_fraction == 0.02);
    CHECK(cfg.hidden == std::vector<int>{64, 64});
    CHECK(cfg.activation == Activation::Relu);
    CHECK(cfg.train.epochs == 150);  // the preset stretches the schedule
    CHECK(cfg.train.weight_decay == 0.0);
    CHECK(cfg.train.batch_size == 64);
    CHECK(cfg.train.optimizer == Optimizer::Adam);
    CHECK(cfg.unlearn.method == UnlearnMethod::Retrain);
    CHECK(cfg.attack == AttackVariant::Tc);
    CHECK(cfg.mode.kind == FeatureKind::Cds);
    CHECK(cfg.repetitions == 5);
    CHECK(cfg.defense == DefenseKind::None);
    CHECK(cfg.name == "experiment");
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(cfg.output_dir == "out");
    CHECK(cfg.fpr_budget == 0.05);
    CHECK(cfg.overfit == "high");
    CHECK(cfg.retain_probe);
}

TEST_CASE("overfit presets rewrite the training schedule") {
    ExperimentConfig cfg;
    cfg.overfit = "high";
    apply_overfit_preset(cfg);
    CHECK(cfg.train.epochs == 150);
    CHECK(cfg.train.weight_decay == 0.0);

    cfg.overfit = "low";
    apply_overfit_preset(cfg);
    CHECK(cfg.train.epochs == 8);
    CHECK(cfg.train.weight_decay == 2e-3);

    cfg.overfit = "custom";
    cfg.train.epochs = 33;
    apply_overfit_preset(cfg);
    CHECK(cfg.train.epochs == 33);

    cfg.overfit = "extreme";
    CHECK_THROWS_AS(apply_overfit_preset(cfg), ConfigError);
}

TEST_CASE("explicit schedule keys override the preset in either order") {
    const ExperimentConfig after = parse_config_text(
        "[experiment]\noverfit = high\n[train]\nepochs = 12\n");
    CHECK(after.train.epochs == 12);
    CHECK(after.train.weight_decay == 0.0);

    const ExperimentConfig before = parse_config_text(
        "[train]\nepochs = 12\n[experiment]\noverfit = high\n");
    CHECK(before.train.epochs == 12);

    const ExperimentConfig low = parse_config_text(
        "[train]\nweight_decay = 0.01\n[experiment]\noverfit = low\n");
    CHECK(low.train.epochs == 8);
    CHECK(low.train.weight_decay == 0.01);
}

TEST_CASE("a full round trip preserves every field") {
    ExperimentConfig cfg;
    cfg.classes = 4;
    cfg.dim = 3;
    cfg.per_class = 50;
    cfg.spread = 0.3;
    cfg.data_seed = 99;
    cfg.target_fraction = 0.6;
    cfg.train_fraction = 0.7;
    cfg.forget_fraction = 0.05;
    cfg.hidden = {8, 4};
    cfg.activation = Activation::Tanh;
    cfg.train.epochs = 11;
    cfg.train.batch_size = 16;
    cfg.train.learning_rate = 0.002;
    cfg.train.weight_decay = 1e-4;
    cfg.train.optimizer = Optimizer::Sgd;
    cfg.unlearn.method = UnlearnMethod::Scrub;
    cfg.unlearn.num_shards = 6;
    cfg.unlearn.ga_steps = 3;
    cfg.unlearn.ga_learning_rate = 0.04;
    cfg.unlearn.prune_ratio = 0.4;
    cfg.unlearn.finetune_epochs = 7;
    cfg.unlearn.scrub_max_epochs = 5;
    cfg.unlearn.scrub_min_epochs = 1;
    cfg.unlearn.scrub_temperature = 2.5;
    cfg.unlearn.scrub_learning_rate = 0.003;
    cfg.attack = AttackVariant::PosteriorPair;
    cfg.mode.kind = FeatureKind::TopK;
    cfg.mode.top_k = 2;
    cfg.mode.decimals = 3;
    cfg.repetitions = 2;
    cfg.ratio = {4, 1, 2};
    cfg.attack_train.epochs = 25;
    cfg.defense = DefenseKind::DpSgd;
    cfg.dropout_rate = 0.8;
    cfg.dp_epsilon = 5.0;
    cfg.dp_sigma = 0.0;
    cfg.dp_clip_norm = 0.7;
    cfg.dp_epochs = 3;
    cfg.dp_batch_size = 32;
    cfg.dp_learning_rate = 0.15;
    cfg.dp_delta = 1e-4;
    cfg.name = "roundtrip";
    cfg.seeds = {5, 6};
    cfg.output_dir = "elsewhere";
    cfg.fpr_budget = 0.01;
    cfg.overfit = "custom";
    cfg.retain_probe = false;

    const std::string text = serialize_config(cfg);
    const ExperimentConfig back = parse_config_text(text);
    CHECK(serialize_config(back) == text);
    CHECK(back.classes == cfg.classes);
    CHECK(back.train_fraction == cfg.train_fraction);
    CHECK(back.hidden == cfg.hidden);
    CHECK(back.activation == Activation::Tanh);
    CHECK(back.train.optimizer == Optimizer::Sgd);
    CHECK(back.unlearn.method == UnlearnMethod::Scrub);
    CHECK(back.unlearn.scrub_temperature == cfg.unlearn.scrub_temperature);
    CHECK(back.attack == AttackVariant::PosteriorPair);
    CHECK(back.mode.kind == FeatureKind::TopK);
    CHECK(back.mode.top_k == 2);
    CHECK(back.mode.decimals == 3);
    CHECK(back.ratio.unseen == 4);
    CHECK(back.ratio.forget == 1);
    CHECK(back.ratio.retain == 2);
    CHECK(back.defense == DefenseKind::DpSgd);
    CHECK(back.dp_delta == cfg.dp_delta);
    CHECK(back.seeds == cfg.seeds);
    CHECK_FALSE(back.retain_probe);
}

TEST_CASE("serialization always declares a custom schedule") {
    // The emitted schedule is literal, so re-parsing must not re-trigger
    // a preset rewrite.
    const ExperimentConfig cfg = parse_config_text("");
    const std::string text = serialize_config(cfg);
    CHECK(text.find("overfit = custom") != std::string::npos);
    const ExperimentConfig back = parse_config_text(text);
    CHECK(back.train.epochs == cfg.train.epochs);
    CHECK(back.overfit == "custom");
}

TEST_CASE("digests are stable sixteen-char hex and field sensitive") {
    const ExperimentConfig cfg = parse_config_text("");
    const std::string d = config_digest(cfg);
    CHECK(d.size() == 16);
    CHECK(is_hex(d));
    CHECK(config_digest(cfg) == d);
    const ExperimentConfig back = parse_config_text(serialize_config(cfg));
    CHECK(config_digest(back) == d);

    ExperimentConfig other = cfg;
    other.fpr_budget = 0.1;
    CHECK(config_digest(other) != d);
}

TEST_CASE("comments and blank lines are ignored") {
    const ExperimentConfig cfg = parse_config_text(
        "# leading comment\n\n[dataset]\nclasses = 4  # trailing comment\n\n"
        "# [train] commented out entirely\n");
    CHECK(cfg.classes == 4);
    CHECK(cfg.train.epochs == 150);
}

TEST_CASE("list and ratio values parse") {
    const ExperimentConfig cfg = parse_config_text(
        "[model]\nhidden = 32, 16,8\n[experiment]\nseeds = 9,10\n"
        "[attack]\nratio = 4:1:2\n");
    CHECK(cfg.hidden == std::vector<int>{32, 16, 8});
    CHECK(cfg.seeds == std::vector<std::uint64_t>{9, 10});
    CHECK(cfg.ratio.unseen == 4);
    CHECK(cfg.ratio.forget == 1);
    CHECK(cfg.ratio.retain == 2);

    CHECK_THROWS_WITH_AS(parse_config_text("[attack]\nratio = 4:1\n"),
                         "config line 2: ratio needs unseen:forget:retain", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[model]\nhidden =\n"),
                         "config line 2: empty list for hidden", ConfigError);
}

TEST_CASE("malformed input is rejected with the offending line") {
    CHECK_THROWS_WITH_AS(parse_config_text("[dataset]\nclasses = ten\n"),
                         "config line 2: bad integer for classes: ten", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[dataset]\nspread = wide\n"),
                         "config line 2: bad number for spread: wide", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[experiment]\nretain_probe = maybe\n"),
                         "config line 2: bad boolean for retain_probe: maybe", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[dataset]\nseed = -3\n"),
                         "config line 2: bad unsigned integer for seed: -3", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[dataset]\nflavour = 3\n"),
                         "config line 2: unknown key [dataset] flavour", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[kitchen]\nsink = 1\n"),
                         "config line 2: unknown section [kitchen]", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("classes = 4\n"),
                         "config line 1: key outside any [section]", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[dataset\nclasses = 4\n"),
                         "config line 1: unterminated section header", ConfigError);
    CHECK_THROWS_AS(parse_config_text("[dataset]\nclasses\n"), ConfigError);
}

TEST_CASE("enum-valued keys parse and reject unknown names") {
    const ExperimentConfig cfg = parse_config_text(
        "[model]\nactivation = tanh\n[train]\noptimizer = sgd\n"
        "[unlearn]\nmethod = scrub\n[attack]\nvariant = two_round\n"
        "feature_mode = ct\n[defense]\nkind = dropout\n");
    CHECK(cfg.activation == Activation::Tanh);
    CHECK(cfg.train.optimizer == Optimizer::Sgd);
    CHECK(cfg.unlearn.method == UnlearnMethod::Scrub);
    CHECK(cfg.attack == AttackVariant::TwoRound);
    CHECK(cfg.mode.kind == FeatureKind::Ct);
    CHECK(cfg.defense == DefenseKind::Dropout);

    CHECK_THROWS_AS(parse_config_text("[model]\nactivation = sigmoid\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[train]\noptimizer = lion\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[unlearn]\nmethod = wish\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[attack]\nvariant = solo\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[attack]\nfeature_mode = vibes\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[defense]\nkind = moat\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[experiment]\noverfit = maximal\n"), ConfigError);
}

TEST_CASE("attack variant names round trip") {
    for (auto v : {AttackVariant::Tc, AttackVariant::TwoRound, AttackVariant::PosteriorPair})
        CHECK(attack_variant_from_name(attack_variant_name(v)) == v);
    CHECK(attack_variant_name(AttackVariant::Tc) == "tc");
    CHECK(attack_variant_name(AttackVariant::TwoRound) == "two_round");
    CHECK(attack_variant_name(AttackVariant::PosteriorPair) == "posterior_pair");
    CHECK_THROWS_AS(attack_variant_from_name("quad"), ConfigError);
}

TEST_CASE("missing config files are reported") {
    CHECK_THROWS_AS(parse_config_file("/nonexistent/unlab.ini"), ConfigError);

    const std::string path =
        (std::filesystem::temp_directory_path() / "unlab_test_cfg.ini").string();
    {
        std::ofstream out(path);
        out << "[dataset]\nclasses = 3\n";
    }
    const ExperimentConfig cfg = parse_config_file(path);
    CHECK(cfg.classes == 3);
    std::remove(path.c_str());
}

}  // TEST_SUITE
