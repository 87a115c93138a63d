#include "unlab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"

namespace unlab {

namespace {

Dataset attack_examples_to_dataset(const std::vector<AttackExample>& examples) {
    if (examples.empty()) throw DataError("attack training set is empty");
    const std::size_t dim = examples.front().features.size();
    Dataset data;
    data.features = Matrix(examples.size(), dim);
    data.labels.resize(examples.size());
    data.name = "attack-features";
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (examples[i].features.size() != dim)
            throw ShapeError("attack training set has ragged features");
        std::copy(examples[i].features.begin(), examples[i].features.end(),
                  data.features.row(i));
        data.labels[i] = examples[i].label;
    }
    return data;
}

}  // namespace

std::vector<ShadowRep> run_shadow_reps(const Dataset& shadow, const ShadowPipelineConfig& cfg,
                                       int repetitions, std::uint64_t seed) {
    if (repetitions < 1) throw ConfigError("run_shadow_reps: repetitions must be >= 1");
    std::vector<ShadowRep> reps;
    reps.reserve(static_cast<std::size_t>(repetitions));
    for (int rep = 0; rep < repetitions; ++rep) {
        ShadowRep r;
        r.seed = mix_seed(seed, seed_tag::attack_set, static_cast<std::uint64_t>(rep));
        r.split = make_membership_split(shadow, cfg.train_fraction, cfg.forget_fraction, r.seed);
        TrainConfig tcfg = cfg.train;
        tcfg.seed = r.seed;
        r.pair = cfg.pair_builder ? cfg.pair_builder(shadow, r.split, tcfg)
                                  : train_and_unlearn(shadow, r.split, cfg.spec, tcfg, cfg.unlearn);
        reps.push_back(std::move(r));
    }
    return reps;
}

AttackDataset derive_attack_examples(const Dataset& shadow, const std::vector<ShadowRep>& reps,
                                     const FeatureMode& mode, const SetRatio& ratio) {
    if (reps.empty()) throw ConfigError("derive_attack_examples: no shadow reps");
    AttackDataset set;
    set.feature_mode = mode;
    for (const auto& rep : reps) {
        const EvalTriple triple = balance_ratio_sample(rep.split, ratio, rep.seed);
        auto emit = [&](const std::vector<int>& rows, int set_label) {
            for (int idx : rows) {
                const auto row = static_cast<std::size_t>(idx);
                const PosteriorVector p =
                    rep.pair.original.posterior(shadow.features.row(row), shadow.dim());
                const PosteriorVector pu =
                    rep.pair.unlearned.posterior(shadow.features.row(row), shadow.dim());
                AttackExample ex;
                ex.features = derive_features(p, pu, shadow.labels[row], mode);
                ex.label = set_label;
                set.class_counts[static_cast<std::size_t>(set_label)]++;
                set.examples.push_back(std::move(ex));
            }
        };
        emit(triple.unseen, kUnseen);
        emit(triple.forget, kForget);
        emit(triple.retain, kRetain);
    }
    return set;
}

AttackDataset build_attack_training_set(const Dataset& shadow, const ShadowPipelineConfig& cfg,
                                        int repetitions, std::uint64_t seed) {
    const std::vector<ShadowRep> reps = run_shadow_reps(shadow, cfg, repetitions, seed);
    return derive_attack_examples(shadow, reps, cfg.mode, cfg.ratio);
}

AttackClassifier train_attack(const AttackDataset& set, const TrainConfig& cfg) {
    for (int k = 0; k < 3; ++k)
        if (set.class_counts[static_cast<std::size_t>(k)] == 0)
            throw DataError(std::string("train_attack: no examples of class ") + kSetNames[k]);

    const Dataset data = attack_examples_to_dataset(set.examples);
    const std::vector<int> layers = {static_cast<int>(data.dim()), 32, 16, 3};
    AttackClassifier clf;
    clf.mode = set.feature_mode;
    clf.model = train(init_model(layers, Activation::Relu, cfg.seed), data, cfg);
    return clf;
}

AttackInference infer(const AttackClassifier& clf, const PosteriorVector& p_original,
                      const PosteriorVector& p_unlearned, int true_label) {
    const std::vector<double> feats =
        derive_features(p_original, p_unlearned, true_label, clf.mode);
    if (feats.size() != static_cast<std::size_t>(clf.model.input_dim()))
        throw ShapeError("infer: feature dim does not match classifier input");
    const PosteriorVector p = forward(clf.model, feats);
    AttackInference out;
    out.predicted_set = argmax(p.probs);
    for (std::size_t k = 0; k < 3; ++k) out.posterior[k] = p[k];
    return out;
}

AttackClassifier posterior_pair_attack(const AttackDataset& set, const TrainConfig& cfg) {
    if (set.feature_mode.kind != FeatureKind::Cp)
        throw ConfigError("posterior_pair_attack: needs full posterior-pair features");
    return train_attack(set, cfg);
}

void attack_to_file(const AttackClassifier& clf, const std::string& path) {
    save_model(clf.model, path);
    nlohmann::json j;
    j["feature_mode"] = feature_kind_name(clf.mode.kind);
    j["top_k"] = clf.mode.top_k;
    j["decimals"] = clf.mode.decimals;
    std::ofstream out(path + ".mode.json");
    if (!out) throw DataError("cannot open for writing: " + path + ".mode.json");
    out << j.dump(2) << "\n";
}

AttackClassifier attack_from_file(const std::string& path) {
    AttackClassifier clf;
    clf.model = load_model(path);
    std::ifstream in(path + ".mode.json");
    if (!in) throw DataError("cannot open for reading: " + path + ".mode.json");
    nlohmann::json j;
    in >> j;
    clf.mode.kind = feature_kind_from_name(j.at("feature_mode").get<std::string>());
    clf.mode.top_k = j.at("top_k").get<int>();
    clf.mode.decimals = j.at("decimals").get<int>();
    return clf;
}

BinaryMia train_binary_mia(const std::vector<std::vector<double>>& member_posteriors,
                           const std::vector<std::vector<double>>& nonmember_posteriors,
                           const TrainConfig& cfg) {
    if (member_posteriors.empty() || nonmember_posteriors.empty())
        throw DataError("train_binary_mia: need member and non-member examples");
    const std::size_t dim = member_posteriors.front().size();

    Dataset data;
    data.features = Matrix(member_posteriors.size() + nonmember_posteriors.size(), dim);
    data.labels.resize(data.features.rows);
    data.name = "mia-posteriors";
    std::size_t row = 0;
    auto put = [&](const std::vector<double>& p, int label) {
        if (p.size() != dim) throw ShapeError("train_binary_mia: ragged posteriors");
        std::copy(p.begin(), p.end(), data.features.row(row));
        data.labels[row] = label;
        ++row;
    };
    for (const auto& p : member_posteriors) put(p, 1);
    for (const auto& p : nonmember_posteriors) put(p, 0);

    const std::vector<int> layers = {static_cast<int>(dim), 32, 16, 2};
    BinaryMia mia;
    mia.model = train(init_model(layers, Activation::Relu, cfg.seed), data, cfg);
    return mia;
}

int is_member(const BinaryMia& mia, const PosteriorVector& p) {
    const PosteriorVector out = forward(mia.model, p.probs);
    return argmax(out.probs);  // lowest-index tie break favors non-member
}

int two_round_attack(const BinaryMia& mia_original, const BinaryMia& mia_unlearned,
                     const PosteriorVector& p_original, const PosteriorVector& p_unlearned) {
    const int round1 = is_member(mia_original, p_original);
    const int round2 = is_member(mia_unlearned, p_unlearned);
    if (round1 == 1 && round2 == 1) return kRetain;
    if (round1 == 1 && round2 == 0) return kForget;
    return kUnseen;  // never a member, or only surfaced after unlearning
}

double confidence_logit(double p_true) {
    const double p = std::clamp(p_true, 1e-9, 1.0 - 1e-9);
    return std::log(p / (1.0 - p));
}

double confidence_shift(const PosteriorVector& before, const PosteriorVector& after,
                        int true_label) {
    if (before.size() != after.size()) throw ShapeError("confidence_shift: size mismatch");
    if (true_label < 0 || static_cast<std::size_t>(true_label) >= before.size())
        throw DataError("confidence_shift: label out of range");
    const auto y = static_cast<std::size_t>(true_label);
    return confidence_logit(after[y]) - confidence_logit(before[y]);
}

double normal_pdf(double x, const GaussianFit& g) {
    const double z = (x - g.mean) / g.stddev;
    return std::exp(-0.5 * z * z) / (g.stddev * std::sqrt(2.0 * std::numbers::pi));
}

namespace {

GaussianFit fit_gaussian(const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    GaussianFit g;
    g.mean = mean;
    g.stddev = std::max(std::sqrt(ss / static_cast<double>(xs.size() - 1)), 1e-6);
    return g;
}

}  // namespace

UliraFit ulira_fit(const UliraTrialRunner& runner, int trials, std::uint64_t seed) {
    if (trials < 2) throw ConfigError("ulira_fit: need at least 2 trials");
    std::vector<double> forget_obs, unseen_obs, retain_obs;
    forget_obs.reserve(static_cast<std::size_t>(trials));
    for (int t = 0; t < trials; ++t) {
        const UliraTrialObs obs =
            runner(mix_seed(seed, seed_tag::ulira, static_cast<std::uint64_t>(t)));
        forget_obs.push_back(obs.forget);
        unseen_obs.push_back(obs.unseen);
        retain_obs.push_back(obs.retain);
    }
    UliraFit fit;
    fit.forget = fit_gaussian(forget_obs);
    fit.unseen = fit_gaussian(unseen_obs);
    fit.retain = fit_gaussian(retain_obs);
    fit.num_trials = trials;
    return fit;
}

int ulira_classify(const UliraFit& fit, double observation) {
    const double df = normal_pdf(observation, fit.forget);
    const double du = normal_pdf(observation, fit.unseen);
    const double dr = normal_pdf(observation, fit.retain);
    if (df >= du && df >= dr) return kForget;
    if (du >= dr) return kUnseen;
    return kRetain;
}

UliraTrialRunner make_unlearn_trial_runner(const Dataset& shadow,
                                           const ShadowPipelineConfig& cfg) {
    return [shadow, cfg](std::uint64_t trial_seed) {
        MembershipSplit split = make_membership_split(shadow, cfg.train_fraction,
                                                      cfg.forget_fraction, trial_seed);
        // Single-row forget set: the trial observes one example per class.
        auto rng = make_rng(trial_seed, seed_tag::ulira);
        auto pick = [&rng](const std::vector<int>& pool) {
            std::uniform_int_distribution<std::size_t> u(0, pool.size() - 1);
            return pool[u(rng)];
        };
        const int forget_row = pick(split.train);
        split.forget = {forget_row};
        split.retain.clear();
        for (int idx : split.train)
            if (idx != forget_row) split.retain.push_back(idx);
        const int unseen_row = pick(split.unseen);
        const int retain_row = pick(split.retain);

        TrainConfig tcfg = cfg.train;
        tcfg.seed = trial_seed;
        const ModelPair pair =
            cfg.pair_builder ? cfg.pair_builder(shadow, split, tcfg)
                             : train_and_unlearn(shadow, split, cfg.spec, tcfg, cfg.unlearn);

        auto shift_at = [&](int idx) {
            const auto row = static_cast<std::size_t>(idx);
            const PosteriorVector p =
                pair.original.posterior(shadow.features.row(row), shadow.dim());
            const PosteriorVector pu =
                pair.unlearned.posterior(shadow.features.row(row), shadow.dim());
            return confidence_shift(p, pu, shadow.labels[row]);
        };
        UliraTrialObs obs;
        obs.forget = shift_at(forget_row);
        obs.unseen = shift_at(unseen_row);
        obs.retain = shift_at(retain_row);
        return obs;
    };
}

void ulira_to_json(const UliraFit& fit, const std::string& path) {
    nlohmann::json j;
    j["forget"] = {{"mean", fit.forget.mean}, {"stddev", fit.forget.stddev}};
    j["unseen"] = {{"mean", fit.unseen.mean}, {"stddev", fit.unseen.stddev}};
    j["retain"] = {{"mean", fit.retain.mean}, {"stddev", fit.retain.stddev}};
    j["num_trials"] = fit.num_trials;
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

UliraFit ulira_from_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open for reading: " + path);
    nlohmann::json j;
    in >> j;
    UliraFit fit;
    auto load = [&](const char* key, GaussianFit& g) {
        g.mean = j.at(key).at("mean").get<double>();
        g.stddev = j.at(key).at("stddev").get<double>();
    };
    load("forget", fit.forget);
    load("unseen", fit.unseen);
    load("retain", fit.retain);
    fit.num_trials = j.at("num_trials").get<int>();
    return fit;
}

}  // namespace unlab
