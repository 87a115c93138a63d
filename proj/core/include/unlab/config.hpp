#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unlab/attack.hpp"
#include "unlab/defense.hpp"
#include "unlab/features.hpp"
#include "unlab/nn.hpp"
#include "unlab/unlearn.hpp"

namespace unlab {

enum class AttackVariant { Tc, TwoRound, PosteriorPair };

std::string attack_variant_name(AttackVariant v);
AttackVariant attack_variant_from_name(const std::string& name);

// Full description of one experiment. Field defaults are the desk-scale
// preset: 10-class blobs in 20 dims, a [20,64,64,10] relu net, retrain
// unlearning, the tri-class attack on (difference, sum) features.
struct ExperimentConfig {
    // [dataset]
    int classes = 10;
    int dim = 20;
    int per_class = 600;
    double spread = 0.45;
    std::uint64_t data_seed = 7;
    double target_fraction = 0.5;

    // [split]
    double train_fraction = 2.0 / 3.0;
    double forget_fraction = 0.02;

    // [model]
    std::vector<int> hidden = {64, 64};
    Activation activation = Activation::Relu;

    // [train]
    TrainConfig train{.epochs = 40, .batch_size = 64, .learning_rate = 1e-3,
                      .weight_decay = 0.0, .optimizer = Optimizer::Adam};

    // [unlearn]
    UnlearnConfig unlearn;

    // [attack]
    AttackVariant attack = AttackVariant::Tc;
    FeatureMode mode;
    int repetitions = 5;
    SetRatio ratio;
    TrainConfig attack_train{.epochs = 300, .batch_size = 64, .learning_rate = 1e-3,
                             .weight_decay = 0.0, .optimizer = Optimizer::Adam};

    // [defense]
    DefenseKind defense = DefenseKind::None;
    double dropout_rate = 0.95;
    double dp_epsilon = 0.0;  // > 0: calibrate sigma to this target
    double dp_sigma = 0.0;    // used directly when dp_epsilon == 0
    double dp_clip_norm = 1.0;
    int dp_epochs = 8;
    int dp_batch_size = 64;
    double dp_learning_rate = 0.2;
    double dp_delta = 5e-4;

    // [experiment]
    std::string name = "experiment";
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::string output_dir = "out";
    double fpr_budget = 0.05;
    std::string overfit = "high";  // high | low | custom
    bool retain_probe = true;
};

// Apply the named overfitting preset to the training schedule.
void apply_overfit_preset(ExperimentConfig& cfg);

// INI-like file: [section] headers, key = value pairs, # comments.
// Unknown sections or keys are rejected.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

// Canonical serialization: every field, fixed order; parseable back.
std::string serialize_config(const ExperimentConfig& cfg);

// FNV-1a hash of the canonical serialization, as fixed-width hex.
std::string config_digest(const ExperimentConfig& cfg);

}  // namespace unlab
