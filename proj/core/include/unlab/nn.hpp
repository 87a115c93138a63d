#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "unlab/common.hpp"
#include "unlab/data.hpp"

namespace unlab {

enum class Activation { Relu, Tanh };
enum class Optimizer { Sgd, Adam };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Architecture description: layer widths (input first, output last), the
// hidden activation, and per-layer dropout rates. dropout_rates[i] applies
// to the activations of layer i (0 = input features); it must have one
// entry per layer and end in 0, or be empty for no dropout.
struct ModelSpec {
    std::vector<int> layer_sizes;
    Activation activation = Activation::Relu;
    std::vector<double> dropout_rates;
};

struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    Optimizer optimizer = Optimizer::Adam;
    std::uint64_t seed = 0;
};

// Fully-connected classifier parameters. weights[l] has shape
// layer_sizes[l+1] x layer_sizes[l].
struct ModelParams {
    std::vector<int> layer_sizes;
    Activation activation = Activation::Relu;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
    std::vector<double> dropout_rates;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    std::size_t num_weight_layers() const { return weights.size(); }
    std::size_t weight_count() const;

    bool operator==(const ModelParams& o) const = default;
};

// Gradient (or any parameter-shaped tensor bundle) matching a ModelParams.
struct Gradients {
    std::vector<Matrix> w;
    std::vector<std::vector<double>> b;

    static Gradients zeros_like(const ModelParams& params);
    void add_scaled(const Gradients& g, double scale);
    void scale(double s);
    double l2_norm() const;
};

// Per-weight keep mask for pruning: 0 entries are frozen at zero.
using WeightMask = std::vector<Matrix>;

// Intermediate activations of one forward pass, kept for backprop.
// z[l] are pre-activations of weight layer l; act[l] are the (dropped-out)
// activations feeding weight layer l, act[0] being the input row.
struct ForwardTrace {
    std::vector<std::vector<double>> z;
    std::vector<std::vector<double>> act;
    std::vector<std::vector<double>> drop_scale;  // empty when eval mode
    std::vector<double> logits;
};

ModelParams init_model(const std::vector<int>& layer_sizes, Activation activation,
                       std::uint64_t seed);
ModelParams make_model(const ModelSpec& spec, std::uint64_t seed);

std::vector<double> softmax(const std::vector<double>& logits);
std::vector<double> log_softmax(const std::vector<double>& logits);

// Deterministic inference pass (dropout off).
PosteriorVector forward(const ModelParams& params, const double* x, std::size_t dim);
PosteriorVector forward(const ModelParams& params, const std::vector<double>& x);
std::vector<double> raw_logits(const ModelParams& params, const double* x, std::size_t dim);

// Forward pass keeping the trace; applies dropout when rng is non-null.
ForwardTrace forward_trace(const ModelParams& params, const double* x, std::size_t dim,
                           std::mt19937_64* dropout_rng);

// Backprop from dL/dlogits through the traced pass; accumulates into out.
void backward_from_dlogits(const ModelParams& params, const ForwardTrace& trace,
                           const std::vector<double>& dlogits, Gradients& out);

// Mean cross-entropy loss over the rows of data (dropout off).
double mean_ce_loss(const ModelParams& params, const Dataset& data);

// Mean cross-entropy gradient over the given rows (dropout off, no decay).
Gradients mean_ce_gradient(const ModelParams& params, const Dataset& data,
                           const std::vector<int>& indices);

// One cross-entropy gradient per listed row; their mean equals the
// minibatch gradient over the same rows.
std::vector<Gradients> per_example_gradients(const ModelParams& params, const Dataset& data,
                                             const std::vector<int>& indices);

// Minibatch training with cross-entropy loss. Optional mask freezes pruned
// weights at zero. Deterministic for a fixed (params, data, cfg, mask).
ModelParams train(ModelParams params, const Dataset& data, const TrainConfig& cfg,
                  const WeightMask* mask = nullptr);

// theta += scale * g, honoring the optional mask.
void apply_step(ModelParams& params, const Gradients& g, double scale,
                const WeightMask* mask = nullptr);

// Classification accuracy; argmax ties resolve to the lowest index.
double evaluate(const ModelParams& params, const Dataset& data);
double evaluate(const ModelParams& params, const Dataset& data, const std::vector<int>& indices);

// Binary checkpoint with exact parameter round trip.
void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

}  // namespace unlab
