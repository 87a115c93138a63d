#include "unlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>

#include "json.hpp"

namespace unlab {

namespace {

template <typename F>
auto stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

ModelSpec base_spec(const ExperimentConfig& cfg) {
    ModelSpec spec;
    spec.layer_sizes.push_back(cfg.dim);
    for (int h : cfg.hidden) spec.layer_sizes.push_back(h);
    spec.layer_sizes.push_back(cfg.classes);
    spec.activation = cfg.activation;
    return spec;
}

ModelSpec defended_spec(const ExperimentConfig& cfg) {
    ModelSpec spec = base_spec(cfg);
    if (cfg.defense == DefenseKind::Dropout) spec = dropout_defense(spec, cfg.dropout_rate);
    return spec;
}

int dp_total_steps(const ExperimentConfig& cfg, std::size_t n_train) {
    const auto batch = static_cast<std::size_t>(cfg.dp_batch_size);
    return cfg.dp_epochs * static_cast<int>((n_train + batch - 1) / batch);
}

double dp_resolve_sigma(const ExperimentConfig& cfg, std::size_t n_train) {
    if (cfg.dp_sigma > 0.0) return cfg.dp_sigma;
    if (!(cfg.dp_epsilon > 0.0))
        throw ConfigError("dp_sgd defense needs dp_sigma or dp_epsilon");
    const double q =
        std::min(1.0, static_cast<double>(cfg.dp_batch_size) / static_cast<double>(n_train));
    return calibrate_sigma(cfg.dp_epsilon, dp_total_steps(cfg, n_train), q, cfg.dp_delta);
}

DpConfig make_dp_config(const ExperimentConfig& cfg, double sigma, std::uint64_t seed) {
    DpConfig dp;
    dp.clip_norm = cfg.dp_clip_norm;
    dp.noise_multiplier = sigma;
    dp.target_delta = cfg.dp_delta;
    dp.epochs = cfg.dp_epochs;
    dp.batch_size = cfg.dp_batch_size;
    dp.learning_rate = cfg.dp_learning_rate;
    dp.seed = seed;
    return dp;
}

// DP pipelines support exact unlearning only: the retrain runs under the
// same private trainer.
ModelPair dp_train_pair(const Dataset& data, const MembershipSplit& split,
                        const ModelSpec& spec, const DpConfig& dp, double* epsilon_out,
                        int* steps_out) {
    DpSgdResult original = dp_sgd_train(subset(data, split.train), spec, dp);
    DpSgdResult unlearned = dp_sgd_train(subset(data, split.retain), spec, dp);
    if (epsilon_out != nullptr) *epsilon_out = original.epsilon;
    if (steps_out != nullptr) *steps_out = original.steps;
    ModelPair pair;
    pair.original.dense = std::move(original.params);
    pair.unlearned.dense = std::move(unlearned.params);
    return pair;
}

std::vector<double> observable(const PosteriorVector& p, OutputPolicy policy) {
    if (policy == OutputPolicy::FullPosterior) return p.probs;
    std::vector<double> onehot(p.size(), 0.0);
    onehot[static_cast<std::size_t>(argmax(p.probs))] = 1.0;
    return onehot;
}

std::vector<int> sample_rows(const std::vector<int>& pool, std::size_t cap,
                             std::mt19937_64& rng) {
    if (pool.size() <= cap) return pool;
    std::vector<int> copy(pool);
    std::shuffle(copy.begin(), copy.end(), rng);
    copy.resize(cap);
    std::sort(copy.begin(), copy.end());
    return copy;
}

std::vector<std::vector<double>> collect_observables(const PipelineModel& model,
                                                     const Dataset& data,
                                                     const std::vector<int>& rows,
                                                     OutputPolicy policy) {
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    for (int idx : rows) {
        const auto row = static_cast<std::size_t>(idx);
        out.push_back(observable(model.posterior(data.features.row(row), data.dim()), policy));
    }
    return out;
}

struct FittedAttack {
    AttackVariant variant = AttackVariant::Tc;
    OutputPolicy policy = OutputPolicy::FullPosterior;
    FeatureMode mode;
    std::optional<AttackClassifier> clf;
    std::optional<BinaryMia> mia_original;
    std::optional<BinaryMia> mia_unlearned;
};

BinaryMia fit_mia_on_original(const ExperimentConfig& cfg, const PipelineBundle& bundle,
                              OutputPolicy policy, std::uint64_t run_seed) {
    const ShadowRep& rep = bundle.shadow_reps.front();
    auto rng = make_rng(run_seed, seed_tag::game + 17);
    const std::vector<int> members = sample_rows(rep.split.train, 1000, rng);
    const std::vector<int> nonmembers = sample_rows(rep.split.test, 1000, rng);
    TrainConfig mcfg = cfg.attack_train;
    mcfg.seed = mix_seed(run_seed, 0x6d69616fULL);
    return train_binary_mia(
        collect_observables(rep.pair.original, bundle.shadow, members, policy),
        collect_observables(rep.pair.original, bundle.shadow, nonmembers, policy), mcfg);
}

FittedAttack fit_attack(const ExperimentConfig& cfg, const PipelineBundle& bundle,
                        std::uint64_t run_seed) {
    FittedAttack fitted;
    fitted.variant = cfg.attack;
    fitted.policy = cfg.defense == DefenseKind::LabelOnly ? OutputPolicy::LabelOnly
                                                          : OutputPolicy::FullPosterior;
    FeatureMode requested = cfg.mode;
    if (cfg.attack == AttackVariant::PosteriorPair) requested.kind = FeatureKind::Cp;
    fitted.mode = apply_output_policy(requested, fitted.policy);

    if (cfg.attack == AttackVariant::TwoRound) {
        fitted.mia_original = fit_mia_on_original(cfg, bundle, fitted.policy, run_seed);
        const ShadowRep& rep = bundle.shadow_reps.front();
        auto rng = make_rng(run_seed, seed_tag::game + 18);
        const std::vector<int> members = sample_rows(rep.split.retain, 1000, rng);
        const std::vector<int> nonmembers = sample_rows(rep.split.unseen, 1000, rng);
        TrainConfig mcfg = cfg.attack_train;
        mcfg.seed = mix_seed(run_seed, 0x6d696175ULL);
        fitted.mia_unlearned = train_binary_mia(
            collect_observables(rep.pair.unlearned, bundle.shadow, members, fitted.policy),
            collect_observables(rep.pair.unlearned, bundle.shadow, nonmembers, fitted.policy),
            mcfg);
        return fitted;
    }

    const AttackDataset set =
        derive_attack_examples(bundle.shadow, bundle.shadow_reps, fitted.mode, cfg.ratio);
    TrainConfig acfg = cfg.attack_train;
    acfg.seed = run_seed;
    fitted.clf = train_attack(set, acfg);
    return fitted;
}

AttackInference predict_row(const FittedAttack& fitted, const PipelineBundle& bundle,
                            int row_index) {
    const auto row = static_cast<std::size_t>(row_index);
    const Dataset& data = bundle.target;
    const PosteriorVector p =
        bundle.target_pair.original.posterior(data.features.row(row), data.dim());
    const PosteriorVector pu =
        bundle.target_pair.unlearned.posterior(data.features.row(row), data.dim());

    if (fitted.variant == AttackVariant::TwoRound) {
        const PosteriorVector obs_p{observable(p, fitted.policy)};
        const PosteriorVector obs_pu{observable(pu, fitted.policy)};
        AttackInference inf;
        inf.predicted_set = two_round_attack(*fitted.mia_original, *fitted.mia_unlearned,
                                             obs_p, obs_pu);
        inf.posterior = {0.0, 0.0, 0.0};
        inf.posterior[static_cast<std::size_t>(inf.predicted_set)] = 1.0;
        return inf;
    }
    return infer(*fitted.clf, p, pu, data.labels[row]);
}

double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

PipelineBundle build_pipeline(const ExperimentConfig& cfg, std::uint64_t run_seed) {
    PipelineBundle bundle;

    stage("dataset", [&] {
        bundle.universe =
            generate_blobs(cfg.classes, cfg.dim, cfg.per_class, cfg.spread, cfg.data_seed);
        auto parts = split_target_shadow(bundle.universe, cfg.target_fraction, run_seed);
        bundle.target = std::move(parts.first);
        bundle.shadow = std::move(parts.second);
        return 0;
    });

    stage("target", [&] {
        bundle.split = make_membership_split(bundle.target, cfg.train_fraction,
                                             cfg.forget_fraction, run_seed);
        bundle.effective_spec = defended_spec(cfg);
        TrainConfig tcfg = cfg.train;
        tcfg.seed = run_seed;
        if (cfg.defense == DefenseKind::DpSgd) {
            if (cfg.unlearn.method != UnlearnMethod::Retrain)
                throw ConfigError("dp_sgd defense supports the retrain method only");
            bundle.dp_sigma_used = dp_resolve_sigma(cfg, bundle.split.train.size());
            const DpConfig dp = make_dp_config(cfg, bundle.dp_sigma_used, run_seed);
            bundle.target_pair = dp_train_pair(bundle.target, bundle.split,
                                               bundle.effective_spec, dp, &bundle.epsilon,
                                               &bundle.dp_steps);
        } else {
            bundle.target_pair = train_and_unlearn(bundle.target, bundle.split,
                                                   bundle.effective_spec, tcfg, cfg.unlearn);
        }
        return 0;
    });

    stage("shadow", [&] {
        ShadowPipelineConfig scfg;
        scfg.spec = bundle.effective_spec;
        scfg.train = cfg.train;
        scfg.unlearn = cfg.unlearn;
        scfg.train_fraction = cfg.train_fraction;
        scfg.forget_fraction = cfg.forget_fraction;
        scfg.mode = cfg.mode;
        scfg.ratio = cfg.ratio;
        if (cfg.defense == DefenseKind::DpSgd) {
            const ExperimentConfig cfg_copy = cfg;
            const double sigma = bundle.dp_sigma_used;
            const ModelSpec spec = bundle.effective_spec;
            scfg.pair_builder = [cfg_copy, sigma, spec](const Dataset& data,
                                                        const MembershipSplit& split,
                                                        const TrainConfig& tcfg) {
                const DpConfig dp = make_dp_config(cfg_copy, sigma, tcfg.seed);
                return dp_train_pair(data, split, spec, dp, nullptr, nullptr);
            };
        }
        bundle.shadow_reps = run_shadow_reps(bundle.shadow, scfg, cfg.repetitions, run_seed);
        return 0;
    });

    return bundle;
}

ExperimentReport evaluate_pipeline(const ExperimentConfig& cfg, const PipelineBundle& bundle,
                                   std::uint64_t run_seed) {
    ExperimentReport report;
    report.name = cfg.name;
    report.config_digest = config_digest(cfg);
    report.seed = run_seed;
    report.method = unlearn_method_name(cfg.unlearn.method);
    report.defense = defense_kind_name(cfg.defense);
    report.attack = attack_variant_name(cfg.attack);

    FittedAttack fitted = stage("attack", [&] { return fit_attack(cfg, bundle, run_seed); });
    report.feature_mode = fitted.variant == AttackVariant::TwoRound
                              ? "binary"
                              : feature_mode_name(fitted.mode);

    stage("evaluate", [&] {
        const EvalTriple triple = balance_ratio_sample(bundle.split, cfg.ratio, run_seed);
        auto emit = [&](const std::vector<int>& rows, int set_label) {
            for (int idx : rows) {
                const AttackInference inf = predict_row(fitted, bundle, idx);
                report.eval_indices.push_back(idx);
                report.truth.push_back(set_label);
                report.predicted.push_back(inf.predicted_set);
                report.posteriors.push_back(inf.posterior);
            }
        };
        emit(triple.unseen, kUnseen);
        emit(triple.forget, kForget);
        emit(triple.retain, kRetain);
        report.attack_eval =
            evaluate_tri_attack(report.predicted, report.posteriors, report.truth,
                                cfg.fpr_budget);
        return 0;
    });

    stage("utility", [&] {
        const auto& pair = bundle.target_pair;
        report.utility.train_acc = pair.original.accuracy(bundle.target, bundle.split.train);
        report.utility.test_acc = pair.original.accuracy(bundle.target, bundle.split.test);
        report.utility.overfit =
            overfitting_degree(report.utility.train_acc, report.utility.test_acc);
        report.utility.forget_acc = pair.unlearned.accuracy(bundle.target, bundle.split.forget);
        report.utility.retain_acc = pair.unlearned.accuracy(bundle.target, bundle.split.retain);
        report.utility.test_acc_unlearned =
            pair.unlearned.accuracy(bundle.target, bundle.split.test);
        report.utility.epsilon = bundle.epsilon;
        report.separability = separability_report(pair.original, pair.unlearned, bundle.target,
                                                  bundle.split);
        return 0;
    });

    if (cfg.retain_probe) {
        stage("retain_probe", [&] {
            const BinaryMia mia =
                fitted.mia_original.has_value()
                    ? *fitted.mia_original
                    : fit_mia_on_original(cfg, bundle, fitted.policy, run_seed);
            const auto& pair = bundle.target_pair;
            double pre = 0.0, post = 0.0;
            for (int idx : bundle.split.retain) {
                const auto row = static_cast<std::size_t>(idx);
                const double* x = bundle.target.features.row(row);
                const PosteriorVector p{observable(
                    pair.original.posterior(x, bundle.target.dim()), fitted.policy)};
                const PosteriorVector pu{observable(
                    pair.unlearned.posterior(x, bundle.target.dim()), fitted.policy)};
                pre += is_member(mia, p) == 1 ? 1.0 : 0.0;
                post += is_member(mia, pu) == 1 ? 1.0 : 0.0;
            }
            const auto n = static_cast<double>(bundle.split.retain.size());
            report.retain_mia_pre = pre / n;
            report.retain_mia_post = post / n;
            return 0;
        });
    }

    return report;
}

ExperimentReport run_single(const ExperimentConfig& cfg, std::uint64_t run_seed) {
    const PipelineBundle bundle = build_pipeline(cfg, run_seed);
    return evaluate_pipeline(cfg, bundle, run_seed);
}

std::string resolve_output_dir(const std::string& output_dir) {
    if (!output_dir.empty() && output_dir.front() == '/') return output_dir;
    const char* root = std::getenv("UNLAB_OUTPUT_ROOT");
    if (root == nullptr || *root == '\0') return output_dir;
    return std::string(root) + "/" + output_dir;
}

AggregateReport aggregate_reports(const std::vector<ExperimentReport>& reports) {
    if (reports.empty()) throw MetricError("aggregate_reports: no reports");

    auto scalars = [](const ExperimentReport& r) {
        std::map<std::string, double> m;
        m["micro_f1"] = r.attack_eval.micro;
        m["f1_unseen"] = r.attack_eval.class_f1[0];
        m["f1_forget"] = r.attack_eval.class_f1[1];
        m["f1_retain"] = r.attack_eval.class_f1[2];
        m["tpr_unseen"] = r.attack_eval.tpr_low_fpr[0];
        m["tpr_forget"] = r.attack_eval.tpr_low_fpr[1];
        m["tpr_retain"] = r.attack_eval.tpr_low_fpr[2];
        m["train_acc"] = r.utility.train_acc;
        m["test_acc"] = r.utility.test_acc;
        m["overfit"] = r.utility.overfit;
        m["forget_acc"] = r.utility.forget_acc;
        m["retain_acc"] = r.utility.retain_acc;
        m["test_acc_unlearned"] = r.utility.test_acc_unlearned;
        if (r.utility.epsilon >= 0.0) m["epsilon"] = r.utility.epsilon;
        if (r.retain_mia_pre >= 0.0) {
            m["retain_mia_pre"] = r.retain_mia_pre;
            m["retain_mia_post"] = r.retain_mia_post;
        }
        m["gap_retain_unseen_pre"] = r.separability.before.gap_retain_unseen;
        m["gap_retain_unseen_post"] = r.separability.after.gap_retain_unseen;
        return m;
    };

    AggregateReport agg;
    agg.num_seeds = reports.size();
    const auto keys = scalars(reports.front());
    for (const auto& [key, unused] : keys) {
        std::vector<double> values;
        values.reserve(reports.size());
        for (const auto& r : reports) {
            const auto m = scalars(r);
            const auto it = m.find(key);
            if (it != m.end()) values.push_back(it->second);
        }
        if (values.empty()) continue;
        agg.median[key] = median_of(values);
        double mean = 0.0;
        for (double v : values) mean += v;
        agg.mean[key] = mean / static_cast<double>(values.size());
    }
    return agg;
}

namespace {

nlohmann::json confusion_json(const ConfusionMatrix& cm) {
    nlohmann::json j;
    for (int a = 0; a < 3; ++a) {
        nlohmann::json row;
        for (int p = 0; p < 3; ++p)
            row[kSetNames[static_cast<std::size_t>(p)]] =
                cm.counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(p)];
        j[kSetNames[static_cast<std::size_t>(a)]] = row;
    }
    return j;
}

nlohmann::json separability_json(const SeparabilityBlock& b) {
    return {
        {"acc_retain", b.acc_retain},
        {"acc_forget", b.acc_forget},
        {"acc_unseen", b.acc_unseen},
        {"gap_retain_forget", b.gap_retain_forget},
        {"gap_retain_unseen", b.gap_retain_unseen},
        {"conf_retain", b.conf_retain},
        {"conf_forget", b.conf_forget},
        {"conf_unseen", b.conf_unseen},
        {"dist_retain_forget", b.dist_retain_forget},
        {"dist_retain_unseen", b.dist_retain_unseen},
    };
}

}  // namespace

void report_to_json(const ExperimentReport& report, const std::string& path) {
    nlohmann::json j;
    j["name"] = report.name;
    j["config_digest"] = report.config_digest;
    j["seed"] = report.seed;
    j["method"] = report.method;
    j["defense"] = report.defense;
    j["attack"] = report.attack;
    j["feature_mode"] = report.feature_mode;
    j["set_encoding"] = {{"0", "unseen"}, {"1", "forget"}, {"2", "retain"}};
    j["attack_eval"] = {
        {"micro_f1", report.attack_eval.micro},
        {"class_f1",
         {{"unseen", report.attack_eval.class_f1[0]},
          {"forget", report.attack_eval.class_f1[1]},
          {"retain", report.attack_eval.class_f1[2]}}},
        {"tpr_at_fpr",
         {{"budget", report.attack_eval.fpr_budget},
          {"unseen", report.attack_eval.tpr_low_fpr[0]},
          {"forget", report.attack_eval.tpr_low_fpr[1]},
          {"retain", report.attack_eval.tpr_low_fpr[2]}}},
        {"confusion", confusion_json(report.attack_eval.confusion)},
    };
    j["utility"] = {
        {"train_acc", report.utility.train_acc},
        {"test_acc", report.utility.test_acc},
        {"overfit", report.utility.overfit},
        {"forget_acc", report.utility.forget_acc},
        {"retain_acc", report.utility.retain_acc},
        {"test_acc_unlearned", report.utility.test_acc_unlearned},
    };
    if (report.utility.epsilon >= 0.0) j["utility"]["epsilon"] = report.utility.epsilon;
    j["separability"] = {{"before", separability_json(report.separability.before)},
                         {"after", separability_json(report.separability.after)}};
    if (report.retain_mia_pre >= 0.0) {
        j["retain_mia"] = {{"pre", report.retain_mia_pre}, {"post", report.retain_mia_post}};
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

ExperimentReport report_from_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    nlohmann::json j;
    in >> j;

    ExperimentReport r;
    r.name = j.at("name").get<std::string>();
    r.config_digest = j.at("config_digest").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.method = j.at("method").get<std::string>();
    r.defense = j.at("defense").get<std::string>();
    r.attack = j.at("attack").get<std::string>();
    r.feature_mode = j.at("feature_mode").get<std::string>();

    const auto& ae = j.at("attack_eval");
    r.attack_eval.micro = ae.at("micro_f1").get<double>();
    for (int c = 0; c < 3; ++c) {
        const char* name = kSetNames[static_cast<std::size_t>(c)];
        r.attack_eval.class_f1[static_cast<std::size_t>(c)] =
            ae.at("class_f1").at(name).get<double>();
        r.attack_eval.tpr_low_fpr[static_cast<std::size_t>(c)] =
            ae.at("tpr_at_fpr").at(name).get<double>();
        for (int p = 0; p < 3; ++p)
            r.attack_eval.confusion.counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)] =
                ae.at("confusion").at(name).at(kSetNames[static_cast<std::size_t>(p)]).get<long>();
    }
    r.attack_eval.fpr_budget = ae.at("tpr_at_fpr").at("budget").get<double>();

    const auto& ut = j.at("utility");
    r.utility.train_acc = ut.at("train_acc").get<double>();
    r.utility.test_acc = ut.at("test_acc").get<double>();
    r.utility.overfit = ut.at("overfit").get<double>();
    r.utility.forget_acc = ut.at("forget_acc").get<double>();
    r.utility.retain_acc = ut.at("retain_acc").get<double>();
    r.utility.test_acc_unlearned = ut.at("test_acc_unlearned").get<double>();
    if (ut.contains("epsilon")) r.utility.epsilon = ut.at("epsilon").get<double>();

    auto read_block = [](const nlohmann::json& b) {
        SeparabilityBlock out;
        out.acc_retain = b.at("acc_retain").get<double>();
        out.acc_forget = b.at("acc_forget").get<double>();
        out.acc_unseen = b.at("acc_unseen").get<double>();
        out.gap_retain_forget = b.at("gap_retain_forget").get<double>();
        out.gap_retain_unseen = b.at("gap_retain_unseen").get<double>();
        out.conf_retain = b.at("conf_retain").get<double>();
        out.conf_forget = b.at("conf_forget").get<double>();
        out.conf_unseen = b.at("conf_unseen").get<double>();
        out.dist_retain_forget = b.at("dist_retain_forget").get<double>();
        out.dist_retain_unseen = b.at("dist_retain_unseen").get<double>();
        return out;
    };
    r.separability.before = read_block(j.at("separability").at("before"));
    r.separability.after = read_block(j.at("separability").at("after"));
    if (j.contains("retain_mia")) {
        r.retain_mia_pre = j.at("retain_mia").at("pre").get<double>();
        r.retain_mia_post = j.at("retain_mia").at("post").get<double>();
    }
    return r;
}

void aggregate_to_json(const AggregateReport& agg, const std::string& path) {
    nlohmann::json j;
    j["num_seeds"] = agg.num_seeds;
    j["median"] = agg.median;
    j["mean"] = agg.mean;
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

void predictions_to_csv(const ExperimentReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << std::setprecision(17);
    out << "# set encoding: 0=unseen 1=forget 2=retain\n";
    out << "index,true_set,predicted_set,p_unseen,p_forget,p_retain\n";
    for (std::size_t i = 0; i < report.eval_indices.size(); ++i) {
        out << report.eval_indices[i] << "," << report.truth[i] << "," << report.predicted[i]
            << "," << report.posteriors[i][0] << "," << report.posteriors[i][1] << ","
            << report.posteriors[i][2] << "\n";
    }
}

void confusion_to_csv(const ConfusionMatrix& cm, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "actual\\predicted,unseen,forget,retain\n";
    for (int a = 0; a < 3; ++a) {
        out << kSetNames[static_cast<std::size_t>(a)];
        for (int p = 0; p < 3; ++p)
            out << "," << cm.counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(p)];
        out << "\n";
    }
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    if (cfg.seeds.empty()) throw ConfigError("run_experiment: no seeds");

    ExperimentResult result;
    result.output_dir = resolve_output_dir(cfg.output_dir);
    std::filesystem::create_directories(result.output_dir);

    {
        std::ofstream out(result.output_dir + "/config.ini");
        if (!out) throw DataError("cannot open for writing: " + result.output_dir + "/config.ini");
        out << serialize_config(cfg);
    }

    for (std::uint64_t seed : cfg.seeds) {
        const PipelineBundle bundle = build_pipeline(cfg, seed);
        ExperimentReport report = evaluate_pipeline(cfg, bundle, seed);
        const std::string tag = std::to_string(seed);
        report_to_json(report, result.output_dir + "/report_seed" + tag + ".json");
        predictions_to_csv(report, result.output_dir + "/predictions_seed" + tag + ".csv");
        confusion_to_csv(report.attack_eval.confusion,
                         result.output_dir + "/confusion_seed" + tag + ".csv");
        if (cfg.defense == DefenseKind::DpSgd) {
            const DpConfig dp = make_dp_config(cfg, bundle.dp_sigma_used, seed);
            DpSgdResult summary;
            summary.epsilon = bundle.epsilon;
            summary.steps = bundle.dp_steps;
            summary.sample_rate =
                std::min(1.0, static_cast<double>(cfg.dp_batch_size) /
                                  static_cast<double>(bundle.split.train.size()));
            write_privacy_ledger(result.output_dir + "/privacy_ledger_seed" + tag + ".json", dp,
                                 summary, bundle.split.train.size());
        }
        result.reports.push_back(std::move(report));
    }

    result.aggregate = aggregate_reports(result.reports);
    aggregate_to_json(result.aggregate, result.output_dir + "/aggregate.json");
    return result;
}

// ---- distinguishing game ---------------------------------------------------

std::string adversary_kind_name(AdversaryKind kind) {
    switch (kind) {
        case AdversaryKind::Constant: return "constant";
        case AdversaryKind::Oracle: return "oracle";
        case AdversaryKind::Attack: return "attack";
    }
    throw ConfigError("adversary_kind_name: unknown kind");
}

AdversaryKind adversary_kind_from_name(const std::string& name) {
    if (name == "constant") return AdversaryKind::Constant;
    if (name == "oracle") return AdversaryKind::Oracle;
    if (name == "attack") return AdversaryKind::Attack;
    throw ConfigError("unknown adversary: " + name);
}

GameResult play_game(const ExperimentConfig& cfg, AdversaryKind kind, long trials,
                     std::uint64_t seed) {
    if (trials < 1) throw ConfigError("play_game: trials must be >= 1");

    // The cheap adversaries need only the data pools, not trained models.
    std::optional<PipelineBundle> bundle;
    std::optional<FittedAttack> fitted;
    Dataset target;
    MembershipSplit split;
    if (kind == AdversaryKind::Attack) {
        bundle = build_pipeline(cfg, seed);
        fitted = stage("attack", [&] { return fit_attack(cfg, *bundle, seed); });
        target = bundle->target;
        split = bundle->split;
    } else {
        stage("dataset", [&] {
            const Dataset universe =
                generate_blobs(cfg.classes, cfg.dim, cfg.per_class, cfg.spread, cfg.data_seed);
            auto parts = split_target_shadow(universe, cfg.target_fraction, seed);
            target = std::move(parts.first);
            split = make_membership_split(target, cfg.train_fraction, cfg.forget_fraction, seed);
            return 0;
        });
    }

    const std::array<const std::vector<int>*, 3> pools = {&split.unseen, &split.forget,
                                                          &split.retain};
    for (const auto* pool : pools)
        if (pool->empty()) throw DataError("play_game: empty membership pool");
    auto rng = make_rng(seed, seed_tag::game);
    std::uniform_int_distribution<int> pick_class(0, 2);

    GameResult result;
    result.trials = trials;
    for (long t = 0; t < trials; ++t) {
        const int b = pick_class(rng);
        const auto& pool = *pools[static_cast<std::size_t>(b)];
        std::uniform_int_distribution<std::size_t> pick_row(0, pool.size() - 1);
        const int row = pool[pick_row(rng)];

        int guess = 0;
        switch (kind) {
            case AdversaryKind::Constant: guess = kUnseen; break;
            case AdversaryKind::Oracle: guess = b; break;
            case AdversaryKind::Attack:
                guess = predict_row(*fitted, *bundle, row).predicted_set;
                break;
        }
        if (guess == b) ++result.successes;
        result.confusion.counts[static_cast<std::size_t>(b)][static_cast<std::size_t>(guess)]++;
    }
    result.win_rate = static_cast<double>(result.successes) / static_cast<double>(trials);
    for (int c = 0; c < 3; ++c) {
        long total = 0;
        for (int g = 0; g < 3; ++g)
            total += result.confusion.counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(g)];
        result.per_class_accuracy[static_cast<std::size_t>(c)] =
            total == 0 ? 0.0
                       : static_cast<double>(result.confusion.counts[static_cast<std::size_t>(c)]
                                                                    [static_cast<std::size_t>(c)]) /
                             static_cast<double>(total);
    }
    return result;
}

// ---- suite ------------------------------------------------------------------

std::vector<SuiteRow> run_suite(const std::vector<SuiteEntry>& entries,
                                const std::string& output_dir) {
    if (entries.empty()) throw ConfigError("run_suite: no entries");
    const std::string out = resolve_output_dir(output_dir);
    std::filesystem::create_directories(out);

    std::vector<SuiteRow> rows;
    for (const auto& entry : entries) {
        SuiteRow row;
        row.label = entry.label;
        ExperimentConfig cfg = entry.cfg;
        cfg.output_dir = out + "/" + entry.label;
        try {
            row.result = run_experiment(cfg);
            row.status = "ok";
        } catch (const std::exception& e) {
            row.status = std::string("failed: ") + e.what();
        }
        rows.push_back(std::move(row));
    }
    suite_to_csv(rows, out + "/suite.csv");
    return rows;
}

void suite_to_csv(const std::vector<SuiteRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << std::setprecision(10);
    out << "label,seed,method,defense,attack,feature_mode,micro_f1,f1_unseen,f1_forget,"
           "f1_retain,tpr_unseen,tpr_forget,tpr_retain,train_acc,test_acc,overfit,forget_acc,"
           "retain_acc,test_acc_unlearned,retain_mia_pre,retain_mia_post,epsilon,status\n";
    auto cell = [&](double v) {
        out << ",";
        if (v >= 0.0) out << v;
    };
    for (const auto& row : rows) {
        if (row.status != "ok") {
            std::string safe = row.status;
            std::replace(safe.begin(), safe.end(), ',', ';');
            std::replace(safe.begin(), safe.end(), '\n', ' ');
            out << row.label << ",,,,,,,,,,,,,,,,,,,,,," << safe << "\n";
            continue;
        }
        for (const auto& r : row.result.reports) {
            out << row.label << "," << r.seed << "," << r.method << "," << r.defense << ","
                << r.attack << "," << r.feature_mode;
            cell(r.attack_eval.micro);
            cell(r.attack_eval.class_f1[0]);
            cell(r.attack_eval.class_f1[1]);
            cell(r.attack_eval.class_f1[2]);
            cell(r.attack_eval.tpr_low_fpr[0]);
            cell(r.attack_eval.tpr_low_fpr[1]);
            cell(r.attack_eval.tpr_low_fpr[2]);
            cell(r.utility.train_acc);
            cell(r.utility.test_acc);
            cell(r.utility.overfit);
            cell(r.utility.forget_acc);
            cell(r.utility.retain_acc);
            cell(r.utility.test_acc_unlearned);
            cell(r.retain_mia_pre);
            cell(r.retain_mia_post);
            cell(r.utility.epsilon);
            out << ",ok\n";
        }
        const auto& first = row.result.reports.front();
        const auto& med = row.result.aggregate.median;
        auto med_cell = [&](const char* key) {
            out << ",";
            const auto it = med.find(key);
            if (it != med.end()) out << it->second;
        };
        out << row.label << ",median," << first.method << "," << first.defense << ","
            << first.attack << "," << first.feature_mode;
        med_cell("micro_f1");
        med_cell("f1_unseen");
        med_cell("f1_forget");
        med_cell("f1_retain");
        med_cell("tpr_unseen");
        med_cell("tpr_forget");
        med_cell("tpr_retain");
        med_cell("train_acc");
        med_cell("test_acc");
        med_cell("overfit");
        med_cell("forget_acc");
        med_cell("retain_acc");
        med_cell("test_acc_unlearned");
        med_cell("retain_mia_pre");
        med_cell("retain_mia_post");
        med_cell("epsilon");
        out << ",ok\n";
    }
}

}  // namespace unlab
