#include "unlab/unlearn.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace unlab {

std::string unlearn_method_name(UnlearnMethod m) {
    switch (m) {
        case UnlearnMethod::Retrain: return "retrain";
        case UnlearnMethod::Sisa: return "sisa";
        case UnlearnMethod::Ga: return "ga";
        case UnlearnMethod::Sparsity: return "sparsity";
        case UnlearnMethod::Scrub: return "scrub";
    }
    throw ConfigError("unlearn_method_name: unknown method");
}

UnlearnMethod unlearn_method_from_name(const std::string& name) {
    if (name == "retrain") return UnlearnMethod::Retrain;
    if (name == "sisa") return UnlearnMethod::Sisa;
    if (name == "ga") return UnlearnMethod::Ga;
    if (name == "sparsity") return UnlearnMethod::Sparsity;
    if (name == "scrub") return UnlearnMethod::Scrub;
    throw ConfigError("unknown unlearn method: " + name);
}

ModelParams retrain(const Dataset& data, const MembershipSplit& split, const ModelSpec& spec,
                    const TrainConfig& cfg) {
    if (split.retain.empty()) throw DataError("retrain: empty retain set");
    return train(make_model(spec, cfg.seed), subset(data, split.retain), cfg);
}

SisaModel sisa_train(const Dataset& data, const MembershipSplit& split, int num_shards,
                     const ModelSpec& spec, const TrainConfig& cfg) {
    if (num_shards < 1) throw ConfigError("sisa_train: num_shards must be >= 1");
    if (static_cast<std::size_t>(num_shards) > split.train.size())
        throw ConfigError("sisa_train: more shards than training rows");

    std::vector<int> order = split.train;
    auto rng = make_rng(cfg.seed, seed_tag::sisa_assign);
    std::shuffle(order.begin(), order.end(), rng);

    std::map<int, int> assignment;
    for (std::size_t i = 0; i < order.size(); ++i)
        assignment[order[i]] = static_cast<int>(i % static_cast<std::size_t>(num_shards));
    return sisa_train_assigned(data, assignment, num_shards, spec, cfg);
}

namespace {

ModelParams train_shard(const Dataset& data, const std::map<int, int>& assignment, int shard,
                        const ModelSpec& spec, const TrainConfig& cfg) {
    std::vector<int> indices;
    for (const auto& [row, s] : assignment)
        if (s == shard) indices.push_back(row);
    if (indices.empty()) throw DataError("sisa: empty shard " + std::to_string(shard));

    TrainConfig shard_cfg = cfg;
    shard_cfg.seed = mix_seed(cfg.seed, seed_tag::sisa_shard, static_cast<std::uint64_t>(shard));
    return train(make_model(spec, shard_cfg.seed), subset(data, indices), shard_cfg);
}

}  // namespace

SisaModel sisa_train_assigned(const Dataset& data, const std::map<int, int>& assignment,
                              int num_shards, const ModelSpec& spec, const TrainConfig& cfg) {
    if (num_shards < 1) throw ConfigError("sisa_train_assigned: num_shards must be >= 1");
    for (const auto& [row, s] : assignment) {
        if (row < 0 || static_cast<std::size_t>(row) >= data.size())
            throw DataError("sisa_train_assigned: row index out of range");
        if (s < 0 || s >= num_shards) throw ConfigError("sisa_train_assigned: bad shard id");
    }

    SisaModel model;
    model.num_shards = num_shards;
    model.shard_assignment = assignment;
    model.spec = spec;
    model.train_cfg = cfg;
    model.shard_models.reserve(static_cast<std::size_t>(num_shards));
    for (int s = 0; s < num_shards; ++s)
        model.shard_models.push_back(train_shard(data, assignment, s, spec, cfg));
    return model;
}

SisaModel sisa_unlearn(const SisaModel& model, const Dataset& data,
                       const std::vector<int>& forget) {
    if (forget.empty()) return model;

    std::set<int> touched;
    for (int f : forget) {
        auto it = model.shard_assignment.find(f);
        if (it == model.shard_assignment.end())
            throw DataError("sisa_unlearn: forget row was not trained on");
        touched.insert(it->second);
    }

    SisaModel out = model;
    for (int f : forget) out.shard_assignment.erase(f);
    for (int s : touched)
        out.shard_models[static_cast<std::size_t>(s)] =
            train_shard(data, out.shard_assignment, s, out.spec, out.train_cfg);
    return out;
}

PosteriorVector sisa_predict(const SisaModel& model, const double* x, std::size_t dim) {
    if (model.shard_models.empty()) throw ConfigError("sisa_predict: no shard models");
    std::vector<double> avg;
    for (const auto& shard : model.shard_models) {
        const PosteriorVector p = forward(shard, x, dim);
        if (avg.empty()) avg.assign(p.size(), 0.0);
        if (p.size() != avg.size()) throw ShapeError("sisa_predict: shard output mismatch");
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += p.probs[i];
    }
    for (auto& v : avg) v /= static_cast<double>(model.shard_models.size());
    return PosteriorVector{std::move(avg)};
}

ModelParams gradient_ascent_unlearn(ModelParams params, const Dataset& data,
                                    const std::vector<int>& forget, int steps,
                                    double learning_rate) {
    if (forget.empty()) throw DataError("gradient_ascent_unlearn: empty forget set");
    if (steps < 0) throw ConfigError("gradient_ascent_unlearn: negative steps");
    if (!(learning_rate > 0.0)) throw ConfigError("gradient_ascent_unlearn: bad learning rate");
    for (int step = 0; step < steps; ++step) {
        const Gradients g = mean_ce_gradient(params, data, forget);
        apply_step(params, g, learning_rate);
    }
    return params;
}

WeightMask magnitude_prune_mask(const ModelParams& params, double prune_ratio) {
    if (!(prune_ratio >= 0.0 && prune_ratio <= 1.0))
        throw ConfigError("magnitude_prune_mask: prune_ratio must be in [0,1]");

    struct Entry {
        double mag;
        std::size_t layer;
        std::size_t flat;
    };
    std::vector<Entry> entries;
    entries.reserve(params.weight_count());
    for (std::size_t l = 0; l < params.weights.size(); ++l)
        for (std::size_t i = 0; i < params.weights[l].a.size(); ++i)
            entries.push_back({std::fabs(params.weights[l].a[i]), l, i});

    const auto k = static_cast<std::size_t>(prune_ratio * static_cast<double>(entries.size()));
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.mag != b.mag) return a.mag < b.mag;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.flat < b.flat;
    });

    WeightMask mask;
    for (const auto& w : params.weights) mask.emplace_back(w.rows, w.cols, 1.0);
    for (std::size_t i = 0; i < k; ++i) mask[entries[i].layer].a[entries[i].flat] = 0.0;
    return mask;
}

ModelParams sparsity_unlearn(ModelParams params, const Dataset& data,
                             const MembershipSplit& split, double prune_ratio,
                             int finetune_epochs, const TrainConfig& cfg) {
    if (finetune_epochs < 0) throw ConfigError("sparsity_unlearn: negative finetune_epochs");
    if (split.retain.empty()) throw DataError("sparsity_unlearn: empty retain set");

    const WeightMask mask = magnitude_prune_mask(params, prune_ratio);
    for (std::size_t l = 0; l < params.weights.size(); ++l)
        for (std::size_t i = 0; i < params.weights[l].a.size(); ++i)
            if (mask[l].a[i] == 0.0) params.weights[l].a[i] = 0.0;

    if (finetune_epochs == 0) return params;
    TrainConfig ft_cfg = cfg;
    ft_cfg.epochs = finetune_epochs;
    return train(std::move(params), subset(data, split.retain), ft_cfg, &mask);
}

namespace {

// d/dz of KL(softmax(z/T) || softmax(zt/T)); also returns the KL value.
double softened_kl_dlogits(const std::vector<double>& z_student,
                           const std::vector<double>& z_teacher, double temperature,
                           std::vector<double>& dlogits) {
    std::vector<double> ss(z_student), st(z_teacher);
    for (auto& v : ss) v /= temperature;
    for (auto& v : st) v /= temperature;
    const std::vector<double> ls = log_softmax(ss);
    const std::vector<double> lt = log_softmax(st);

    double kl = 0.0;
    for (std::size_t k = 0; k < ls.size(); ++k) kl += std::exp(ls[k]) * (ls[k] - lt[k]);

    dlogits.resize(ls.size());
    for (std::size_t k = 0; k < ls.size(); ++k)
        dlogits[k] = std::exp(ls[k]) * (ls[k] - lt[k] - kl) / temperature;
    return kl;
}

}  // namespace

double softened_kl(const ModelParams& student, const ModelParams& teacher, const double* x,
                   std::size_t dim, double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("softened_kl: temperature must be > 0");
    const std::vector<double> zs = raw_logits(student, x, dim);
    const std::vector<double> zt = raw_logits(teacher, x, dim);
    if (zs.size() != zt.size()) throw ShapeError("softened_kl: output dim mismatch");
    std::vector<double> unused;
    return softened_kl_dlogits(zs, zt, temperature, unused);
}

ModelParams scrub_unlearn(const ModelParams& teacher, const Dataset& data,
                          const MembershipSplit& split, const UnlearnConfig& ucfg,
                          const TrainConfig& cfg) {
    if (split.forget.empty()) throw DataError("scrub_unlearn: empty forget set");
    if (split.retain.empty()) throw DataError("scrub_unlearn: empty retain set");
    if (!(ucfg.scrub_temperature > 0.0)) throw ConfigError("scrub_unlearn: bad temperature");
    if (!(ucfg.scrub_learning_rate > 0.0)) throw ConfigError("scrub_unlearn: bad learning rate");
    if (ucfg.scrub_max_epochs < 0 || ucfg.scrub_min_epochs < 0)
        throw ConfigError("scrub_unlearn: negative round counts");

    ModelParams student = teacher;
    auto rng = make_rng(cfg.seed, seed_tag::scrub);
    const double t_soft = ucfg.scrub_temperature;
    const auto batch = static_cast<std::size_t>(std::max(1, cfg.batch_size));

    // One optimizer instance drives the whole schedule; ascent passes the
    // negated gradient. Adam keeps step sizes meaningful even when the
    // student sits at the teacher, where raw KL gradients vanish.
    Gradients m = Gradients::zeros_like(student);
    Gradients v = Gradients::zeros_like(student);
    long t = 0;
    auto descend = [&](const Gradients& g) {
        if (cfg.optimizer == Optimizer::Sgd) {
            apply_step(student, g, -ucfg.scrub_learning_rate);
            return;
        }
        constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        auto update = [&](double& theta, double& mi, double& vi, double gi) {
            mi = beta1 * mi + (1.0 - beta1) * gi;
            vi = beta2 * vi + (1.0 - beta2) * gi * gi;
            theta -= ucfg.scrub_learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + adam_eps);
        };
        for (std::size_t l = 0; l < student.weights.size(); ++l) {
            for (std::size_t i = 0; i < student.weights[l].a.size(); ++i)
                update(student.weights[l].a[i], m.w[l].a[i], v.w[l].a[i], g.w[l].a[i]);
            for (std::size_t i = 0; i < student.biases[l].size(); ++i)
                update(student.biases[l][i], m.b[l][i], v.b[l][i], g.b[l][i]);
        }
    };

    auto max_step = [&]() {
        Gradients g = Gradients::zeros_like(student);
        std::vector<double> dlogits;
        for (int idx : split.forget) {
            const auto row = static_cast<std::size_t>(idx);
            ForwardTrace trace = forward_trace(student, data.features.row(row), data.dim(), nullptr);
            const std::vector<double> zt = raw_logits(teacher, data.features.row(row), data.dim());
            softened_kl_dlogits(trace.logits, zt, t_soft, dlogits);
            backward_from_dlogits(student, trace, dlogits, g);
        }
        g.scale(-1.0 / static_cast<double>(split.forget.size()));  // ascend
        descend(g);
    };

    auto min_epoch = [&]() {
        std::vector<int> order = split.retain;
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<double> dkl;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t stop = std::min(order.size(), start + batch);
            Gradients g = Gradients::zeros_like(student);
            for (std::size_t k = start; k < stop; ++k) {
                const auto row = static_cast<std::size_t>(order[k]);
                ForwardTrace trace =
                    forward_trace(student, data.features.row(row), data.dim(), nullptr);
                const std::vector<double> zt =
                    raw_logits(teacher, data.features.row(row), data.dim());
                softened_kl_dlogits(trace.logits, zt, t_soft, dkl);
                std::vector<double> dlogits = softmax(trace.logits);
                dlogits[static_cast<std::size_t>(data.labels[row])] -= 1.0;
                for (std::size_t j = 0; j < dlogits.size(); ++j) dlogits[j] += dkl[j];
                backward_from_dlogits(student, trace, dlogits, g);
            }
            g.scale(1.0 / static_cast<double>(stop - start));
            descend(g);
        }
    };

    for (int round = 0; round < ucfg.scrub_max_epochs; ++round) {
        max_step();
        min_epoch();
    }
    for (int round = 0; round < ucfg.scrub_min_epochs; ++round) min_epoch();
    return student;
}

PosteriorVector PipelineModel::posterior(const double* x, std::size_t dim) const {
    if (dense.has_value()) return forward(*dense, x, dim);
    if (sisa.has_value()) return sisa_predict(*sisa, x, dim);
    throw ConfigError("PipelineModel: empty");
}

double PipelineModel::accuracy(const Dataset& data, const std::vector<int>& indices) const {
    if (indices.empty()) throw MetricError("PipelineModel::accuracy: empty index set");
    std::size_t hits = 0;
    for (int idx : indices) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= data.size())
            throw DataError("PipelineModel::accuracy: index out of range");
        const auto row = static_cast<std::size_t>(idx);
        const PosteriorVector p = posterior(data.features.row(row), data.dim());
        if (argmax(p.probs) == data.labels[row]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(indices.size());
}

ModelPair train_and_unlearn(const Dataset& data, const MembershipSplit& split,
                            const ModelSpec& spec, const TrainConfig& tcfg,
                            const UnlearnConfig& ucfg) {
    ModelPair pair;
    if (ucfg.method == UnlearnMethod::Sisa) {
        SisaModel original = sisa_train(data, split, ucfg.num_shards, spec, tcfg);
        SisaModel unlearned = sisa_unlearn(original, data, split.forget);
        pair.original.sisa = std::move(original);
        pair.unlearned.sisa = std::move(unlearned);
        return pair;
    }

    ModelParams original = train(make_model(spec, tcfg.seed), subset(data, split.train), tcfg);
    ModelParams unlearned;
    switch (ucfg.method) {
        case UnlearnMethod::Retrain:
            unlearned = retrain(data, split, spec, tcfg);
            break;
        case UnlearnMethod::Ga:
            unlearned = gradient_ascent_unlearn(original, data, split.forget, ucfg.ga_steps,
                                                ucfg.ga_learning_rate);
            break;
        case UnlearnMethod::Sparsity:
            unlearned = sparsity_unlearn(original, data, split, ucfg.prune_ratio,
                                         ucfg.finetune_epochs, tcfg);
            break;
        case UnlearnMethod::Scrub:
            unlearned = scrub_unlearn(original, data, split, ucfg, tcfg);
            break;
        case UnlearnMethod::Sisa:
            break;  // handled above
    }
    pair.original.dense = std::move(original);
    pair.unlearned.dense = std::move(unlearned);
    return pair;
}

}  // namespace unlab
