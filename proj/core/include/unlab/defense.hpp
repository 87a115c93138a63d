#pragma once

#include <functional>
#include <string>
#include <vector>

#include "unlab/data.hpp"
#include "unlab/features.hpp"
#include "unlab/nn.hpp"

namespace unlab {

enum class DefenseKind { None, LabelOnly, Dropout, DpSgd };

std::string defense_kind_name(DefenseKind kind);
DefenseKind defense_kind_from_name(const std::string& name);

enum class OutputPolicy { FullPosterior, LabelOnly };

// A label-only model interface degrades every attack to hard-label
// features, whatever mode was requested.
FeatureMode apply_output_policy(const FeatureMode& requested, OutputPolicy policy);

// High-rate dropout on the last hidden layer.
ModelSpec dropout_defense(ModelSpec spec, double rate = 0.95);

struct DpConfig {
    double clip_norm = 1.0;
    double noise_multiplier = 1.0;  // sigma; noise stddev is sigma * clip_norm
    double target_delta = 5e-4;
    int epochs = 5;
    int batch_size = 64;  // expected batch size; Poisson rate is batch/n
    double learning_rate = 0.1;
    std::uint64_t seed = 0;
};

struct DpSgdResult {
    ModelParams params;
    double epsilon = 0.0;
    double sample_rate = 0.0;
    int steps = 0;
    std::string warning;  // set when noise_multiplier is 0
};

// Called once per step with the post-clip per-example gradient norms.
using ClipObserver = std::function<void(int step, const std::vector<double>& clipped_norms)>;

// DP-SGD: Poisson-sampled batches, per-example clipping to clip_norm,
// Gaussian noise on the summed gradient, fixed 1/(q*n) normalization.
DpSgdResult dp_sgd_train(const Dataset& data, const ModelSpec& spec, const DpConfig& dp,
                         const ClipObserver& observer = nullptr);

// RDP of one subsampled Gaussian mechanism step at one order.
double rdp_subsampled_gaussian(double q, double sigma, double alpha);

// The order grid the accountant searches.
const std::vector<double>& rdp_order_grid();

// (epsilon, delta) after `steps` compositions, minimized over the order
// grid; never negative.
double compute_epsilon(double sigma, int steps, double sample_rate, double delta);

// Same, also reporting the order that attained the minimum.
struct EpsilonDetail {
    double epsilon = 0.0;
    double order = 0.0;
};
EpsilonDetail compute_epsilon_detail(double sigma, int steps, double sample_rate, double delta);

// Smallest noise multiplier whose epsilon does not exceed the target.
double calibrate_sigma(double target_epsilon, int steps, double sample_rate, double delta);

// JSON audit trail: the accounting inputs, the final epsilon, and the
// epsilon trajectory after each epoch.
void write_privacy_ledger(const std::string& path, const DpConfig& dp, const DpSgdResult& result,
                          std::size_t dataset_size);

}  // namespace unlab
