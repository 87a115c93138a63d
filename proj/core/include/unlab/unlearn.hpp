#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "unlab/data.hpp"
#include "unlab/nn.hpp"

namespace unlab {

enum class UnlearnMethod { Retrain, Sisa, Ga, Sparsity, Scrub };

std::string unlearn_method_name(UnlearnMethod m);
UnlearnMethod unlearn_method_from_name(const std::string& name);

struct UnlearnConfig {
    UnlearnMethod method = UnlearnMethod::Retrain;
    int num_shards = 4;            // sisa
    int ga_steps = 10;             // gradient ascent
    double ga_learning_rate = 2e-2;
    double prune_ratio = 0.65;     // sparsity
    int finetune_epochs = 25;
    int scrub_max_epochs = 10;  // rounds with a forget ascent step and a retain epoch
    int scrub_min_epochs = 2;  // trailing retain-only epochs
    double scrub_temperature = 4.0;
    double scrub_learning_rate = 6e-3;
};

// Exact unlearning: fresh model trained on the retain rows only, seeded
// identically to direct training.
ModelParams retrain(const Dataset& data, const MembershipSplit& split, const ModelSpec& spec,
                    const TrainConfig& cfg);

// Sharded ensemble. shard_assignment maps a dataset row index to its shard.
struct SisaModel {
    int num_shards = 0;
    std::map<int, int> shard_assignment;
    std::vector<ModelParams> shard_models;
    ModelSpec spec;
    TrainConfig train_cfg;
};

SisaModel sisa_train(const Dataset& data, const MembershipSplit& split, int num_shards,
                     const ModelSpec& spec, const TrainConfig& cfg);
// Same, but with a caller-fixed assignment (rows absent from the map are
// simply not trained on).
SisaModel sisa_train_assigned(const Dataset& data, const std::map<int, int>& assignment,
                              int num_shards, const ModelSpec& spec, const TrainConfig& cfg);
// Drop the forget rows and retrain only the shards that held them.
SisaModel sisa_unlearn(const SisaModel& model, const Dataset& data,
                       const std::vector<int>& forget);
// Uniform average of the shard posteriors.
PosteriorVector sisa_predict(const SisaModel& model, const double* x, std::size_t dim);

// Approximate unlearning: ascend the mean forget-set cross-entropy.
ModelParams gradient_ascent_unlearn(ModelParams params, const Dataset& data,
                                    const std::vector<int>& forget, int steps,
                                    double learning_rate);

// Keep mask zeroing the floor(prune_ratio * weight_count) smallest-magnitude
// weights (biases exempt; ties broken by flat position).
WeightMask magnitude_prune_mask(const ModelParams& params, double prune_ratio);

// Approximate unlearning: global magnitude pruning, then finetuning on the
// retain rows with pruned weights frozen at zero.
ModelParams sparsity_unlearn(ModelParams params, const Dataset& data,
                             const MembershipSplit& split, double prune_ratio,
                             int finetune_epochs, const TrainConfig& cfg);

// Temperature-softened KL(student || teacher) at one input.
double softened_kl(const ModelParams& student, const ModelParams& teacher, const double* x,
                   std::size_t dim, double temperature);

// Approximate unlearning: teacher-student rounds that push the student away
// from the teacher on forget rows and back toward it (plus the labels) on
// retain rows, then min-only epochs.
ModelParams scrub_unlearn(const ModelParams& teacher, const Dataset& data,
                          const MembershipSplit& split, const UnlearnConfig& ucfg,
                          const TrainConfig& cfg);

// A trained model before or after unlearning; dense net or sisa ensemble.
struct PipelineModel {
    std::optional<ModelParams> dense;
    std::optional<SisaModel> sisa;

    PosteriorVector posterior(const double* x, std::size_t dim) const;
    double accuracy(const Dataset& data, const std::vector<int>& indices) const;
};

struct ModelPair {
    PipelineModel original;
    PipelineModel unlearned;
};

// Train the original model on split.train and derive its unlearned
// counterpart with the configured method.
ModelPair train_and_unlearn(const Dataset& data, const MembershipSplit& split,
                            const ModelSpec& spec, const TrainConfig& tcfg,
                            const UnlearnConfig& ucfg);

}  // namespace unlab
