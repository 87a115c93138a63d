#include "unlab/defense.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "json.hpp"

namespace unlab {

std::string defense_kind_name(DefenseKind kind) {
    switch (kind) {
        case DefenseKind::None: return "none";
        case DefenseKind::LabelOnly: return "label_only";
        case DefenseKind::Dropout: return "dropout";
        case DefenseKind::DpSgd: return "dp_sgd";
    }
    throw ConfigError("defense_kind_name: unknown kind");
}

DefenseKind defense_kind_from_name(const std::string& name) {
    if (name == "none") return DefenseKind::None;
    if (name == "label_only") return DefenseKind::LabelOnly;
    if (name == "dropout") return DefenseKind::Dropout;
    if (name == "dp_sgd") return DefenseKind::DpSgd;
    throw ConfigError("unknown defense: " + name);
}

FeatureMode apply_output_policy(const FeatureMode& requested, OutputPolicy policy) {
    if (policy == OutputPolicy::FullPosterior) return requested;
    FeatureMode mode;
    mode.kind = FeatureKind::LabelOnly;
    return mode;
}

ModelSpec dropout_defense(ModelSpec spec, double rate) {
    if (spec.layer_sizes.size() < 3)
        throw ConfigError("dropout_defense: model has no hidden layer");
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("dropout_defense: rate outside [0,1]");
    spec.dropout_rates.assign(spec.layer_sizes.size(), 0.0);
    spec.dropout_rates[spec.layer_sizes.size() - 2] = rate;
    return spec;
}

// ---- RDP accountant ----------------------------------------------------

namespace {

double log_add(double a, double b) {
    if (std::isinf(a) && a < 0) return b;
    if (std::isinf(b) && b < 0) return a;
    const double hi = std::max(a, b), lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

double log_sub(double a, double b) {
    // log(exp(a) - exp(b)) for a >= b
    if (std::isinf(b) && b < 0) return a;
    if (a == b) return -std::numeric_limits<double>::infinity();
    if (a < b) throw MetricError("log_sub: negative difference");
    return a + std::log1p(-std::exp(b - a));
}

double log_erfc(double x) {
    if (x > 8.0) {
        // Asymptotic expansion; erfc underflows long before it matters.
        const double x2 = x * x;
        return -std::log(std::numbers::pi) / 2.0 - std::log(x) - x2 - 0.5 / x2 +
               0.625 / (x2 * x2) - 37.0 / 24.0 / (x2 * x2 * x2) +
               353.0 / 64.0 / (x2 * x2 * x2 * x2);
    }
    return std::log(std::erfc(x));
}

// log A_alpha for integer alpha via the binomial expansion.
double log_a_int(double q, double sigma, long alpha) {
    double log_a = -std::numeric_limits<double>::infinity();
    const double log_q = std::log(q);
    const double log_1q = std::log1p(-q);
    const double lg_alpha = std::lgamma(static_cast<double>(alpha) + 1.0);
    for (long k = 0; k <= alpha; ++k) {
        const double log_binom = lg_alpha - std::lgamma(static_cast<double>(k) + 1.0) -
                                 std::lgamma(static_cast<double>(alpha - k) + 1.0);
        const double log_term = log_binom + static_cast<double>(k) * log_q +
                                static_cast<double>(alpha - k) * log_1q +
                                static_cast<double>(k * (k - 1)) / (2.0 * sigma * sigma);
        log_a = log_add(log_a, log_term);
    }
    return log_a;
}

// log A_alpha for fractional alpha via the two-sided series.
double log_a_frac(double q, double sigma, double alpha) {
    const double inf = std::numeric_limits<double>::infinity();
    double log_a0 = -inf, log_a1 = -inf;
    const double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
    const double log_q = std::log(q);
    const double log_1q = std::log1p(-q);
    const double s2 = 2.0 * sigma * sigma;

    double log_abs_binom = 0.0;  // |binom(alpha, 0)| = 1
    int sign = 1;
    for (long i = 0;; ++i) {
        if (i > 0) {
            const double factor = alpha - static_cast<double>(i - 1);
            log_abs_binom += std::log(std::fabs(factor)) - std::log(static_cast<double>(i));
            if (factor < 0.0) sign = -sign;
        }
        const double di = static_cast<double>(i);
        const double dj = alpha - di;
        const double log_t0 = log_abs_binom + di * log_q + dj * log_1q;
        const double log_t1 = log_abs_binom + dj * log_q + di * log_1q;
        const double log_e0 =
            std::log(0.5) + log_erfc((di - z0) / (std::sqrt(2.0) * sigma));
        const double log_e1 =
            std::log(0.5) + log_erfc((z0 - dj) / (std::sqrt(2.0) * sigma));
        const double log_s0 = log_t0 + (di * di - di) / s2 + log_e0;
        const double log_s1 = log_t1 + (dj * dj - dj) / s2 + log_e1;
        if (sign > 0) {
            log_a0 = log_add(log_a0, log_s0);
            log_a1 = log_add(log_a1, log_s1);
        } else {
            log_a0 = log_sub(log_a0, log_s0);
            log_a1 = log_sub(log_a1, log_s1);
        }
        if (std::max(log_s0, log_s1) < -30.0 && di > alpha) break;
        if (i > 10000) break;
    }
    return log_add(log_a0, log_a1);
}

bool is_integer(double x) {
    return std::floor(x) == x;
}

}  // namespace

double rdp_subsampled_gaussian(double q, double sigma, double alpha) {
    if (!(q > 0.0 && q <= 1.0)) throw ConfigError("rdp: sample rate must be in (0,1]");
    if (!(sigma > 0.0)) throw ConfigError("rdp: sigma must be > 0");
    if (!(alpha > 1.0)) throw ConfigError("rdp: order must be > 1");
    if (q == 1.0) return alpha / (2.0 * sigma * sigma);
    const double log_a = is_integer(alpha)
                             ? log_a_int(q, sigma, static_cast<long>(alpha))
                             : log_a_frac(q, sigma, alpha);
    return log_a / (alpha - 1.0);
}

const std::vector<double>& rdp_order_grid() {
    static const std::vector<double> grid = [] {
        std::vector<double> g;
        for (double a = 1.25; a <= 64.0; a += 0.25) g.push_back(a);
        // Large orders matter in the very-high-noise regime, where the
        // delta term dominates epsilon.
        for (double a : {96.0, 128.0, 192.0, 256.0, 384.0, 512.0, 1024.0, 2048.0, 4096.0,
                         8192.0, 16384.0, 32768.0, 65536.0})
            g.push_back(a);
        return g;
    }();
    return grid;
}

EpsilonDetail compute_epsilon_detail(double sigma, int steps, double sample_rate, double delta) {
    if (!(sigma > 0.0)) throw ConfigError("compute_epsilon: sigma must be > 0");
    if (steps < 1) throw ConfigError("compute_epsilon: steps must be >= 1");
    if (!(sample_rate > 0.0 && sample_rate <= 1.0))
        throw ConfigError("compute_epsilon: sample rate must be in (0,1]");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("compute_epsilon: delta must be in (0,1)");

    EpsilonDetail best;
    best.epsilon = std::numeric_limits<double>::infinity();
    for (double alpha : rdp_order_grid()) {
        const double rdp = static_cast<double>(steps) * rdp_subsampled_gaussian(sample_rate, sigma, alpha);
        if (!std::isfinite(rdp)) continue;
        const double eps = rdp - (std::log(delta) + std::log(alpha)) / (alpha - 1.0) +
                           std::log((alpha - 1.0) / alpha);
        if (eps < best.epsilon) {
            best.epsilon = eps;
            best.order = alpha;
        }
    }
    if (!std::isfinite(best.epsilon)) throw MetricError("compute_epsilon: no usable order");
    best.epsilon = std::max(0.0, best.epsilon);
    return best;
}

double compute_epsilon(double sigma, int steps, double sample_rate, double delta) {
    return compute_epsilon_detail(sigma, steps, sample_rate, delta).epsilon;
}

double calibrate_sigma(double target_epsilon, int steps, double sample_rate, double delta) {
    if (!(target_epsilon > 0.0)) throw ConfigError("calibrate_sigma: target must be > 0");

    double lo = 1e-2, hi = 1e2;
    while (compute_epsilon(lo, steps, sample_rate, delta) < target_epsilon && lo > 1e-8) lo /= 10.0;
    while (compute_epsilon(hi, steps, sample_rate, delta) > target_epsilon && hi < 1e10) hi *= 10.0;
    if (compute_epsilon(hi, steps, sample_rate, delta) > target_epsilon)
        throw ConfigError("calibrate_sigma: target epsilon unattainable");
    if (compute_epsilon(lo, steps, sample_rate, delta) < target_epsilon) return lo;

    for (int iter = 0; iter < 200 && (hi - lo) / lo > 1e-9; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (compute_epsilon(mid, steps, sample_rate, delta) > target_epsilon) lo = mid;
        else hi = mid;
    }
    return hi;
}

// ---- DP-SGD trainer ------------------------------------------------------

DpSgdResult dp_sgd_train(const Dataset& data, const ModelSpec& spec, const DpConfig& dp,
                         const ClipObserver& observer) {
    if (!(dp.clip_norm > 0.0)) throw ConfigError("dp_sgd_train: clip_norm must be > 0");
    if (dp.noise_multiplier < 0.0) throw ConfigError("dp_sgd_train: negative noise multiplier");
    if (dp.epochs < 0) throw ConfigError("dp_sgd_train: negative epochs");
    if (dp.batch_size < 1) throw ConfigError("dp_sgd_train: batch_size must be >= 1");
    if (!(dp.learning_rate > 0.0)) throw ConfigError("dp_sgd_train: learning_rate must be > 0");
    if (!(dp.target_delta > 0.0 && dp.target_delta < 1.0))
        throw ConfigError("dp_sgd_train: target_delta must be in (0,1)");
    if (data.size() == 0) throw DataError("dp_sgd_train: empty dataset");

    DpSgdResult result;
    result.params = make_model(spec, dp.seed);

    const std::size_t n = data.size();
    const double q = std::min(1.0, static_cast<double>(dp.batch_size) / static_cast<double>(n));
    const int steps_per_epoch = static_cast<int>(
        (n + static_cast<std::size_t>(dp.batch_size) - 1) / static_cast<std::size_t>(dp.batch_size));
    const int total_steps = dp.epochs * steps_per_epoch;
    result.sample_rate = q;
    result.steps = total_steps;

    auto rng_sample = make_rng(dp.seed, seed_tag::dp_sample);
    auto rng_noise = make_rng(dp.seed, seed_tag::dp_noise);
    std::bernoulli_distribution include(q);
    std::normal_distribution<double> noise(0.0, dp.noise_multiplier * dp.clip_norm);
    const double denom = q * static_cast<double>(n);

    std::vector<double> clipped_norms;
    for (int step = 0; step < total_steps; ++step) {
        std::vector<int> batch;
        for (std::size_t i = 0; i < n; ++i)
            if (include(rng_sample)) batch.push_back(static_cast<int>(i));

        Gradients sum = Gradients::zeros_like(result.params);
        clipped_norms.clear();
        for (int idx : batch) {
            const Gradients g = mean_ce_gradient(result.params, data, {idx});
            const double norm = g.l2_norm();
            const double scale = std::min(1.0, dp.clip_norm / std::max(norm, 1e-300));
            sum.add_scaled(g, scale);
            clipped_norms.push_back(norm * scale);
        }
        if (observer) observer(step, clipped_norms);

        if (dp.noise_multiplier > 0.0) {
            for (auto& w : sum.w)
                for (auto& v : w.a) v += noise(rng_noise);
            for (auto& b : sum.b)
                for (auto& v : b) v += noise(rng_noise);
        }
        sum.scale(1.0 / denom);
        apply_step(result.params, sum, -dp.learning_rate);
    }

    if (dp.noise_multiplier > 0.0) {
        result.epsilon = total_steps > 0
                             ? compute_epsilon(dp.noise_multiplier, total_steps, q, dp.target_delta)
                             : 0.0;
    } else {
        result.epsilon = std::numeric_limits<double>::infinity();
        result.warning = "noise multiplier is 0: no privacy guarantee (epsilon = inf)";
    }
    return result;
}

void write_privacy_ledger(const std::string& path, const DpConfig& dp, const DpSgdResult& result,
                          std::size_t dataset_size) {
    nlohmann::json j;
    j["mechanism"] = "dp_sgd";
    j["clip_norm"] = dp.clip_norm;
    j["noise_multiplier"] = dp.noise_multiplier;
    j["sample_rate"] = result.sample_rate;
    j["dataset_size"] = dataset_size;
    j["epochs"] = dp.epochs;
    j["steps"] = result.steps;
    j["delta"] = dp.target_delta;
    if (std::isfinite(result.epsilon)) j["epsilon"] = result.epsilon;
    else j["epsilon"] = "inf";
    if (!result.warning.empty()) j["warning"] = result.warning;

    if (dp.noise_multiplier > 0.0 && dp.epochs > 0 && result.steps > 0) {
        const int steps_per_epoch = result.steps / dp.epochs;
        std::vector<double> trajectory;
        for (int e = 1; e <= dp.epochs; ++e)
            trajectory.push_back(compute_epsilon(dp.noise_multiplier, e * steps_per_epoch,
                                                 result.sample_rate, dp.target_delta));
        j["epsilon_per_epoch"] = trajectory;
    }

    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace unlab
