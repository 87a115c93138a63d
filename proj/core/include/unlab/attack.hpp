#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "unlab/data.hpp"
#include "unlab/features.hpp"
#include "unlab/nn.hpp"
#include "unlab/unlearn.hpp"

namespace unlab {

// Everything needed to run one shadow (or target) pipeline end to end.
// pair_builder, when set, replaces plain training (e.g. with a DP trainer).
struct ShadowPipelineConfig {
    ModelSpec spec;
    TrainConfig train;
    UnlearnConfig unlearn;
    double train_fraction = 0.8;
    double forget_fraction = 0.02;
    FeatureMode mode;
    SetRatio ratio;  // class balance of the derived examples
    std::function<ModelPair(const Dataset&, const MembershipSplit&, const TrainConfig&)>
        pair_builder;
};

// One shadow repetition: its membership split and trained model pair.
struct ShadowRep {
    MembershipSplit split;
    ModelPair pair;
    std::uint64_t seed = 0;
};

// Train `repetitions` shadow pipelines, each on a fresh membership split.
std::vector<ShadowRep> run_shadow_reps(const Dataset& shadow, const ShadowPipelineConfig& cfg,
                                       int repetitions, std::uint64_t seed);

// Derive balanced attack examples from already-trained shadow reps.
AttackDataset derive_attack_examples(const Dataset& shadow, const std::vector<ShadowRep>& reps,
                                     const FeatureMode& mode, const SetRatio& ratio);

// Per repetition: fresh membership split of the shadow data, fresh
// original/unlearned model pair, balanced feature triples from both.
AttackDataset build_attack_training_set(const Dataset& shadow, const ShadowPipelineConfig& cfg,
                                        int repetitions, std::uint64_t seed);

// Tri-class attack classifier: an MLP with hidden layers [32, 16] over the
// derived features, softmax over the three membership classes.
struct AttackClassifier {
    ModelParams model;
    FeatureMode mode;
};

struct AttackInference {
    int predicted_set = 0;
    std::array<double, 3> posterior = {0.0, 0.0, 0.0};
};

AttackClassifier train_attack(const AttackDataset& set, const TrainConfig& cfg);
AttackInference infer(const AttackClassifier& clf, const PosteriorVector& p_original,
                      const PosteriorVector& p_unlearned, int true_label);

// Variant restricted to full posterior-pair features.
AttackClassifier posterior_pair_attack(const AttackDataset& set, const TrainConfig& cfg);

void attack_to_file(const AttackClassifier& clf, const std::string& path);
AttackClassifier attack_from_file(const std::string& path);

// Binary membership inference on one model's posteriors.
struct BinaryMia {
    ModelParams model;
};

BinaryMia train_binary_mia(const std::vector<std::vector<double>>& member_posteriors,
                           const std::vector<std::vector<double>>& nonmember_posteriors,
                           const TrainConfig& cfg);
// 1 = member, 0 = non-member; ties resolve to non-member.
int is_member(const BinaryMia& mia, const PosteriorVector& p);

// Two-round composition of binary verdicts on the original and unlearned
// models: (non, non) -> unseen, (mem, mem) -> retain, (mem, non) -> forget,
// (non, mem) -> unseen.
int two_round_attack(const BinaryMia& mia_original, const BinaryMia& mia_unlearned,
                     const PosteriorVector& p_original, const PosteriorVector& p_unlearned);

// Per-class Gaussian likelihood test on confidence shifts.
struct GaussianFit {
    double mean = 0.0;
    double stddev = 1.0;
};

struct UliraFit {
    GaussianFit forget;
    GaussianFit unseen;
    GaussianFit retain;
    int num_trials = 0;
};

// One shadow trial: the confidence shift observed for one example of each
// membership class.
struct UliraTrialObs {
    double forget = 0.0;
    double unseen = 0.0;
    double retain = 0.0;
};

using UliraTrialRunner = std::function<UliraTrialObs(std::uint64_t trial_seed)>;

// Logit of the clamped true-class confidence.
double confidence_logit(double p_true);
// confidence_logit(after) - confidence_logit(before) at the true label.
double confidence_shift(const PosteriorVector& before, const PosteriorVector& after,
                        int true_label);

double normal_pdf(double x, const GaussianFit& g);

// Run `trials` shadow trials and fit one Gaussian per membership class
// (sample stddev, floored at 1e-6).
UliraFit ulira_fit(const UliraTrialRunner& runner, int trials, std::uint64_t seed);

// Highest-density class; ties prefer forget, then unseen, then retain.
int ulira_classify(const UliraFit& fit, double observation);

// Shadow trial that retrains a model pair with a single-row forget set and
// reports the shift for that row, one unseen row, and one retain row.
UliraTrialRunner make_unlearn_trial_runner(const Dataset& shadow,
                                           const ShadowPipelineConfig& cfg);

void ulira_to_json(const UliraFit& fit, const std::string& path);
UliraFit ulira_from_json(const std::string& path);

}  // namespace unlab
