#include "unlab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace unlab {

namespace {

void validate_spec_sizes(const std::vector<int>& layer_sizes) {
    if (layer_sizes.size() < 2) throw ConfigError("model needs at least input and output layers");
    for (int s : layer_sizes)
        if (s < 1) throw ConfigError("layer sizes must be >= 1");
}

void validate_dropout(const std::vector<double>& rates, std::size_t n_layers) {
    if (rates.empty()) return;
    if (rates.size() != n_layers)
        throw ConfigError("dropout_rates must have one entry per layer");
    for (double p : rates)
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("dropout rate outside [0,1]");
    if (rates.back() != 0.0) throw ConfigError("output layer cannot have dropout");
}

void validate_params(const ModelParams& params) {
    validate_spec_sizes(params.layer_sizes);
    const std::size_t n_weight_layers = params.layer_sizes.size() - 1;
    if (params.weights.size() != n_weight_layers || params.biases.size() != n_weight_layers)
        throw ShapeError("parameter tensors do not match layer_sizes");
    for (std::size_t l = 0; l < n_weight_layers; ++l) {
        const auto out_dim = static_cast<std::size_t>(params.layer_sizes[l + 1]);
        const auto in_dim = static_cast<std::size_t>(params.layer_sizes[l]);
        if (params.weights[l].rows != out_dim || params.weights[l].cols != in_dim)
            throw ShapeError("weight matrix shape mismatch");
        if (params.biases[l].size() != out_dim) throw ShapeError("bias shape mismatch");
    }
    validate_dropout(params.dropout_rates, params.layer_sizes.size());
}

void validate_data_for_model(const ModelParams& params, const Dataset& data) {
    if (data.size() == 0) throw DataError("empty dataset");
    if (data.dim() != static_cast<std::size_t>(params.input_dim()))
        throw ShapeError("dataset dim does not match model input dim");
    for (int y : data.labels)
        if (y < 0 || y >= params.output_dim()) throw DataError("label out of range for model");
}

double act_fn(Activation a, double z) {
    return a == Activation::Relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

double act_deriv(Activation a, double z) {
    if (a == Activation::Relu) return z > 0.0 ? 1.0 : 0.0;
    const double t = std::tanh(z);
    return 1.0 - t * t;
}

void matvec(const Matrix& w, const std::vector<double>& x, const std::vector<double>& b,
            std::vector<double>& out) {
    out.resize(w.rows);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double* row = w.row(i);
        double acc = b[i];
        for (std::size_t j = 0; j < w.cols; ++j) acc += row[j] * x[j];
        out[i] = acc;
    }
}

}  // namespace

std::string activation_name(Activation a) {
    return a == Activation::Relu ? "relu" : "tanh";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    throw ConfigError("unknown activation: " + name);
}

std::size_t ModelParams::weight_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.size();
    return n;
}

Gradients Gradients::zeros_like(const ModelParams& params) {
    Gradients g;
    g.w.reserve(params.weights.size());
    g.b.reserve(params.biases.size());
    for (const auto& w : params.weights) g.w.emplace_back(w.rows, w.cols);
    for (const auto& b : params.biases) g.b.emplace_back(b.size(), 0.0);
    return g;
}

void Gradients::add_scaled(const Gradients& g, double scale) {
    for (std::size_t l = 0; l < w.size(); ++l) {
        for (std::size_t i = 0; i < w[l].a.size(); ++i) w[l].a[i] += scale * g.w[l].a[i];
        for (std::size_t i = 0; i < b[l].size(); ++i) b[l][i] += scale * g.b[l][i];
    }
}

void Gradients::scale(double s) {
    for (auto& m : w)
        for (auto& v : m.a) v *= s;
    for (auto& bias : b)
        for (auto& v : bias) v *= s;
}

double Gradients::l2_norm() const {
    double acc = 0.0;
    for (const auto& m : w)
        for (double v : m.a) acc += v * v;
    for (const auto& bias : b)
        for (double v : bias) acc += v * v;
    return std::sqrt(acc);
}

ModelParams init_model(const std::vector<int>& layer_sizes, Activation activation,
                       std::uint64_t seed) {
    validate_spec_sizes(layer_sizes);
    ModelParams params;
    params.layer_sizes = layer_sizes;
    params.activation = activation;
    params.dropout_rates.assign(layer_sizes.size(), 0.0);

    auto rng = make_rng(seed, seed_tag::init);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const auto fan_in = static_cast<std::size_t>(layer_sizes[l]);
        const auto fan_out = static_cast<std::size_t>(layer_sizes[l + 1]);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> u(-limit, limit);
        Matrix w(fan_out, fan_in);
        for (auto& v : w.a) v = u(rng);
        params.weights.push_back(std::move(w));
        params.biases.emplace_back(fan_out, 0.0);
    }
    return params;
}

ModelParams make_model(const ModelSpec& spec, std::uint64_t seed) {
    ModelParams params = init_model(spec.layer_sizes, spec.activation, seed);
    if (!spec.dropout_rates.empty()) {
        validate_dropout(spec.dropout_rates, spec.layer_sizes.size());
        params.dropout_rates = spec.dropout_rates;
    }
    return params;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw ShapeError("softmax: empty logits");
    const double zmax = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - zmax);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

std::vector<double> log_softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw ShapeError("log_softmax: empty logits");
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - zmax);
    const double lse = zmax + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

ForwardTrace forward_trace(const ModelParams& params, const double* x, std::size_t dim,
                           std::mt19937_64* dropout_rng) {
    if (dim != static_cast<std::size_t>(params.input_dim()))
        throw ShapeError("forward: input dim mismatch");

    const std::size_t n_layers = params.layer_sizes.size();
    ForwardTrace trace;
    trace.z.resize(params.weights.size());
    trace.act.resize(params.weights.size());
    trace.drop_scale.resize(n_layers);

    auto apply_dropout = [&](std::vector<double>& a, std::size_t layer) {
        if (dropout_rng == nullptr || params.dropout_rates.empty()) return;
        const double p = params.dropout_rates[layer];
        if (p <= 0.0) return;
        std::bernoulli_distribution keep(1.0 - p);
        auto& scale = trace.drop_scale[layer];
        scale.resize(a.size());
        for (std::size_t j = 0; j < a.size(); ++j) {
            scale[j] = keep(*dropout_rng) ? 1.0 / (1.0 - p) : 0.0;
            a[j] *= scale[j];
        }
    };

    std::vector<double> a(x, x + dim);
    apply_dropout(a, 0);
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        trace.act[l] = a;
        matvec(params.weights[l], a, params.biases[l], trace.z[l]);
        if (l + 1 < params.weights.size()) {
            a.resize(trace.z[l].size());
            for (std::size_t j = 0; j < a.size(); ++j)
                a[j] = act_fn(params.activation, trace.z[l][j]);
            apply_dropout(a, l + 1);
        }
    }
    trace.logits = trace.z.back();
    return trace;
}

PosteriorVector forward(const ModelParams& params, const double* x, std::size_t dim) {
    ForwardTrace trace = forward_trace(params, x, dim, nullptr);
    return PosteriorVector{softmax(trace.logits)};
}

PosteriorVector forward(const ModelParams& params, const std::vector<double>& x) {
    return forward(params, x.data(), x.size());
}

std::vector<double> raw_logits(const ModelParams& params, const double* x, std::size_t dim) {
    return forward_trace(params, x, dim, nullptr).logits;
}

void backward_from_dlogits(const ModelParams& params, const ForwardTrace& trace,
                           const std::vector<double>& dlogits, Gradients& out) {
    const std::size_t n_weight_layers = params.weights.size();
    if (dlogits.size() != static_cast<std::size_t>(params.output_dim()))
        throw ShapeError("backward: dlogits dim mismatch");

    std::vector<double> delta = dlogits;
    for (std::size_t l = n_weight_layers; l-- > 0;) {
        const auto& a_in = trace.act[l];
        for (std::size_t i = 0; i < delta.size(); ++i) {
            double* grow = out.w[l].row(i);
            for (std::size_t j = 0; j < a_in.size(); ++j) grow[j] += delta[i] * a_in[j];
            out.b[l][i] += delta[i];
        }
        if (l == 0) break;
        const auto& w = params.weights[l];
        std::vector<double> next(a_in.size(), 0.0);
        for (std::size_t i = 0; i < delta.size(); ++i) {
            const double* row = w.row(i);
            for (std::size_t j = 0; j < next.size(); ++j) next[j] += delta[i] * row[j];
        }
        const auto& scale = trace.drop_scale[l];
        for (std::size_t j = 0; j < next.size(); ++j) {
            next[j] *= act_deriv(params.activation, trace.z[l - 1][j]);
            if (!scale.empty()) next[j] *= scale[j];
        }
        delta = std::move(next);
    }
}

namespace {

void accumulate_ce_gradient(const ModelParams& params, const Dataset& data, int index,
                            std::mt19937_64* dropout_rng, Gradients& out) {
    const auto row = static_cast<std::size_t>(index);
    ForwardTrace trace = forward_trace(params, data.features.row(row), data.dim(), dropout_rng);
    std::vector<double> dlogits = softmax(trace.logits);
    dlogits[static_cast<std::size_t>(data.labels[row])] -= 1.0;
    backward_from_dlogits(params, trace, dlogits, out);
}

}  // namespace

double mean_ce_loss(const ModelParams& params, const Dataset& data) {
    validate_params(params);
    validate_data_for_model(params, data);
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto ls = log_softmax(raw_logits(params, data.features.row(i), data.dim()));
        total -= ls[static_cast<std::size_t>(data.labels[i])];
    }
    return total / static_cast<double>(data.size());
}

Gradients mean_ce_gradient(const ModelParams& params, const Dataset& data,
                           const std::vector<int>& indices) {
    validate_params(params);
    if (indices.empty()) throw DataError("mean_ce_gradient: empty index set");
    Gradients g = Gradients::zeros_like(params);
    for (int idx : indices) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= data.size())
            throw DataError("mean_ce_gradient: index out of range");
        accumulate_ce_gradient(params, data, idx, nullptr, g);
    }
    g.scale(1.0 / static_cast<double>(indices.size()));
    return g;
}

std::vector<Gradients> per_example_gradients(const ModelParams& params, const Dataset& data,
                                             const std::vector<int>& indices) {
    validate_params(params);
    std::vector<Gradients> out;
    out.reserve(indices.size());
    for (int idx : indices) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= data.size())
            throw DataError("per_example_gradients: index out of range");
        Gradients g = Gradients::zeros_like(params);
        accumulate_ce_gradient(params, data, idx, nullptr, g);
        out.push_back(std::move(g));
    }
    return out;
}

void apply_step(ModelParams& params, const Gradients& g, double scale, const WeightMask* mask) {
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        auto& w = params.weights[l];
        for (std::size_t i = 0; i < w.a.size(); ++i) {
            if (mask != nullptr && (*mask)[l].a[i] == 0.0) {
                w.a[i] = 0.0;
                continue;
            }
            w.a[i] += scale * g.w[l].a[i];
        }
        auto& b = params.biases[l];
        for (std::size_t i = 0; i < b.size(); ++i) b[i] += scale * g.b[l][i];
    }
}

ModelParams train(ModelParams params, const Dataset& data, const TrainConfig& cfg,
                  const WeightMask* mask) {
    validate_params(params);
    validate_data_for_model(params, data);
    if (cfg.epochs < 0) throw ConfigError("train: negative epochs");
    if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
    if (cfg.weight_decay < 0.0) throw ConfigError("train: negative weight_decay");
    if (mask != nullptr && mask->size() != params.weights.size())
        throw ShapeError("train: mask shape mismatch");
    if (cfg.epochs == 0) return params;

    bool use_dropout = false;
    for (double p : params.dropout_rates) use_dropout = use_dropout || p > 0.0;

    auto rng_shuffle = make_rng(cfg.seed, seed_tag::shuffle);
    auto rng_dropout = make_rng(cfg.seed, seed_tag::dropout);

    Gradients m = Gradients::zeros_like(params);
    Gradients v = Gradients::zeros_like(params);
    long t = 0;
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    const std::size_t n = data.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng_shuffle);
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            Gradients g = Gradients::zeros_like(params);
            for (std::size_t k = start; k < stop; ++k)
                accumulate_ce_gradient(params, data, order[k],
                                       use_dropout ? &rng_dropout : nullptr, g);
            g.scale(1.0 / static_cast<double>(stop - start));

            if (cfg.weight_decay > 0.0) {
                for (std::size_t l = 0; l < params.weights.size(); ++l) {
                    for (std::size_t i = 0; i < g.w[l].a.size(); ++i)
                        g.w[l].a[i] += cfg.weight_decay * params.weights[l].a[i];
                    for (std::size_t i = 0; i < g.b[l].size(); ++i)
                        g.b[l][i] += cfg.weight_decay * params.biases[l][i];
                }
            }
            if (mask != nullptr)
                for (std::size_t l = 0; l < g.w.size(); ++l)
                    for (std::size_t i = 0; i < g.w[l].a.size(); ++i)
                        if ((*mask)[l].a[i] == 0.0) g.w[l].a[i] = 0.0;

            if (cfg.optimizer == Optimizer::Sgd) {
                apply_step(params, g, -cfg.learning_rate, mask);
            } else {
                ++t;
                const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
                const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
                auto adam_update = [&](double& theta, double& mi, double& vi, double gi) {
                    mi = beta1 * mi + (1.0 - beta1) * gi;
                    vi = beta2 * vi + (1.0 - beta2) * gi * gi;
                    theta -= cfg.learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + adam_eps);
                };
                for (std::size_t l = 0; l < params.weights.size(); ++l) {
                    for (std::size_t i = 0; i < params.weights[l].a.size(); ++i) {
                        if (mask != nullptr && (*mask)[l].a[i] == 0.0) continue;
                        adam_update(params.weights[l].a[i], m.w[l].a[i], v.w[l].a[i],
                                    g.w[l].a[i]);
                    }
                    for (std::size_t i = 0; i < params.biases[l].size(); ++i)
                        adam_update(params.biases[l][i], m.b[l][i], v.b[l][i], g.b[l][i]);
                }
            }
        }
    }
    return params;
}

double evaluate(const ModelParams& params, const Dataset& data) {
    validate_params(params);
    if (data.size() == 0) throw MetricError("evaluate: empty dataset");
    validate_data_for_model(params, data);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const PosteriorVector p = forward(params, data.features.row(i), data.dim());
        if (argmax(p.probs) == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

double evaluate(const ModelParams& params, const Dataset& data, const std::vector<int>& indices) {
    if (indices.empty()) throw MetricError("evaluate: empty index set");
    return evaluate(params, subset(data, indices));
}

namespace {
constexpr char kModelMagic[8] = {'U', 'N', 'L', 'B', 'M', 'D', 'L', '1'};

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw DataError("model checkpoint: truncated file");
    return value;
}
}  // namespace

void save_model(const ModelParams& params, const std::string& path) {
    validate_params(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out.write(kModelMagic, sizeof(kModelMagic));
    write_raw(out, static_cast<std::uint32_t>(1));
    write_raw(out, static_cast<std::uint8_t>(params.activation));
    write_raw(out, static_cast<std::uint32_t>(params.layer_sizes.size()));
    for (int s : params.layer_sizes) write_raw(out, static_cast<std::int32_t>(s));
    if (params.dropout_rates.empty()) {
        for (std::size_t i = 0; i < params.layer_sizes.size(); ++i) write_raw(out, 0.0);
    } else {
        for (double p : params.dropout_rates) write_raw(out, p);
    }
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        out.write(reinterpret_cast<const char*>(params.weights[l].a.data()),
                  static_cast<std::streamsize>(params.weights[l].a.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(params.biases[l].data()),
                  static_cast<std::streamsize>(params.biases[l].size() * sizeof(double)));
    }
    if (!out) throw DataError("model checkpoint: write failed");
}

ModelParams load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open for reading: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(magic, magic + 8, kModelMagic))
        throw DataError("model checkpoint: bad magic");
    if (read_raw<std::uint32_t>(in) != 1) throw DataError("model checkpoint: bad version");

    ModelParams params;
    params.activation = static_cast<Activation>(read_raw<std::uint8_t>(in));
    const auto n_layers = read_raw<std::uint32_t>(in);
    params.layer_sizes.resize(n_layers);
    for (auto& s : params.layer_sizes) s = read_raw<std::int32_t>(in);
    params.dropout_rates.resize(n_layers);
    for (auto& p : params.dropout_rates) p = read_raw<double>(in);
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
        const auto rows = static_cast<std::size_t>(params.layer_sizes[l + 1]);
        const auto cols = static_cast<std::size_t>(params.layer_sizes[l]);
        Matrix w(rows, cols);
        in.read(reinterpret_cast<char*>(w.a.data()),
                static_cast<std::streamsize>(w.a.size() * sizeof(double)));
        params.weights.push_back(std::move(w));
        std::vector<double> b(rows);
        in.read(reinterpret_cast<char*>(b.data()),
                static_cast<std::streamsize>(rows * sizeof(double)));
        params.biases.push_back(std::move(b));
    }
    if (!in) throw DataError("model checkpoint: truncated file");
    validate_params(params);
    return params;
}

}  // namespace unlab
