#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "unlab/attack.hpp"
#include "unlab/config.hpp"
#include "unlab/defense.hpp"
#include "unlab/metrics.hpp"

namespace unlab {

// Model utility before and after unlearning.
struct UtilityReport {
    double train_acc = 0.0;   // original model on its training rows
    double test_acc = 0.0;    // original model on held-out rows
    double overfit = 0.0;     // train_acc - test_acc
    double forget_acc = 0.0;  // unlearned model on forget rows
    double retain_acc = 0.0;  // unlearned model on retain rows
    double test_acc_unlearned = 0.0;
    double epsilon = -1.0;  // -1 when no DP accounting applies
};

// Everything one (config, seed) run produced.
struct ExperimentReport {
    std::string name;
    std::string config_digest;
    std::uint64_t seed = 0;
    std::string method;
    std::string defense;
    std::string attack;
    std::string feature_mode;
    AttackEvaluation attack_eval;
    UtilityReport utility;
    SeparabilityReport separability;
    double retain_mia_pre = -1.0;   // binary-attack accuracy on retain rows, original model
    double retain_mia_post = -1.0;  // same attack, unlearned model
    // Per evaluated example: target row index, true set, predicted set,
    // attack posterior.
    std::vector<int> eval_indices;
    std::vector<int> truth;
    std::vector<int> predicted;
    std::vector<std::array<double, 3>> posteriors;
};

// Median and mean over seeds for every scalar in the reports.
struct AggregateReport {
    std::size_t num_seeds = 0;
    std::map<std::string, double> median;
    std::map<std::string, double> mean;
};

// Trained state for one (config, seed): data, target models, shadow reps.
struct PipelineBundle {
    Dataset universe;
    Dataset target;
    Dataset shadow;
    MembershipSplit split;
    ModelPair target_pair;
    std::vector<ShadowRep> shadow_reps;
    ModelSpec effective_spec;
    double dp_sigma_used = 0.0;
    double epsilon = -1.0;
    int dp_steps = 0;
};

// Stage 1+2+3: generate data, train the defended target pair, train the
// shadow reps under the same pipeline.
PipelineBundle build_pipeline(const ExperimentConfig& cfg, std::uint64_t run_seed);

// Stage 4+5: derive the attack, evaluate it on the target, collect utility.
// Reuses the bundle, so several attack settings can share trained models.
ExperimentReport evaluate_pipeline(const ExperimentConfig& cfg, const PipelineBundle& bundle,
                                   std::uint64_t run_seed);

// One full run for one seed.
ExperimentReport run_single(const ExperimentConfig& cfg, std::uint64_t run_seed);

// All seeds plus aggregation; writes reports, predictions, confusion
// matrices, the resolved config, and any privacy ledgers under the
// experiment output directory.
struct ExperimentResult {
    std::vector<ExperimentReport> reports;
    AggregateReport aggregate;
    std::string output_dir;
};
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Output root: cfg.output_dir, under $UNLAB_OUTPUT_ROOT when that is set
// and the directory is relative.
std::string resolve_output_dir(const std::string& output_dir);

AggregateReport aggregate_reports(const std::vector<ExperimentReport>& reports);

void report_to_json(const ExperimentReport& report, const std::string& path);
// Reads back the scalar fields of a written report (per-example arrays are
// in the CSVs, not the JSON).
ExperimentReport report_from_json(const std::string& path);
void aggregate_to_json(const AggregateReport& agg, const std::string& path);
void predictions_to_csv(const ExperimentReport& report, const std::string& path);
void confusion_to_csv(const ConfusionMatrix& cm, const std::string& path);

// ---- distinguishing game -------------------------------------------------

enum class AdversaryKind { Constant, Oracle, Attack };

std::string adversary_kind_name(AdversaryKind kind);
AdversaryKind adversary_kind_from_name(const std::string& name);

struct GameResult {
    long trials = 0;
    long successes = 0;
    double win_rate = 0.0;
    std::array<double, 3> per_class_accuracy = {0.0, 0.0, 0.0};
    ConfusionMatrix confusion;
};

// Membership challenge game: a uniform secret class b, one example drawn
// from that class's pool, adversary guesses b. The constant adversary
// always says unseen; the oracle reads b; the attack adversary runs the
// configured attack against the target models.
GameResult play_game(const ExperimentConfig& cfg, AdversaryKind kind, long trials,
                     std::uint64_t seed);

// ---- suite ----------------------------------------------------------------

struct SuiteEntry {
    std::string label;
    ExperimentConfig cfg;
};

struct SuiteRow {
    std::string label;
    std::string status;  // "ok" or "failed: <stage message>"
    ExperimentResult result;
};

// Run entries in isolation: one failing entry does not stop the rest.
// Writes a joined CSV over all runs plus per-entry artifacts.
std::vector<SuiteRow> run_suite(const std::vector<SuiteEntry>& entries,
                                const std::string& output_dir);

void suite_to_csv(const std::vector<SuiteRow>& rows, const std::string& path);

}  // namespace unlab
