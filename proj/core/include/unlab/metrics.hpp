#pragma once

#include <array>
#include <vector>

#include "unlab/data.hpp"
#include "unlab/unlearn.hpp"

namespace unlab {

// 3x3 confusion matrix over membership classes; counts[actual][predicted].
struct ConfusionMatrix {
    std::array<std::array<long, 3>, 3> counts = {{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}};

    long total() const;
    long trace() const;
    long row_sum(int k) const;
    long col_sum(int k) const;
};

ConfusionMatrix confusion(const std::vector<int>& predicted, const std::vector<int>& actual);

// Micro-averaged F1 from pooled per-class counts.
double micro_f1(const ConfusionMatrix& cm);

// Per-class F1; a class with no predictions and no support scores 0.
std::array<double, 3> per_class_f1(const ConfusionMatrix& cm);

// True-positive rate for the positive class at a false-positive budget.
// The threshold admits at most floor(budget * #negatives) negatives.
double tpr_at_fpr(const std::vector<double>& scores, const std::vector<int>& actual,
                  int positive_class, double fpr_budget);

double overfitting_degree(double train_accuracy, double test_accuracy);

// Per-set accuracy and mean true-class confidence structure of one model.
struct SeparabilityBlock {
    double acc_retain = 0.0;
    double acc_forget = 0.0;
    double acc_unseen = 0.0;
    double gap_retain_forget = 0.0;  // acc_retain - acc_forget
    double gap_retain_unseen = 0.0;  // acc_retain - acc_unseen
    double conf_retain = 0.0;
    double conf_forget = 0.0;
    double conf_unseen = 0.0;
    // Euclidean distance between the mean posterior of the retain set and
    // the mean posterior of the other set.
    double dist_retain_forget = 0.0;
    double dist_retain_unseen = 0.0;
};

// before = original model, after = unlearned model.
struct SeparabilityReport {
    SeparabilityBlock before;
    SeparabilityBlock after;
};

SeparabilityReport separability_report(const PipelineModel& original,
                                       const PipelineModel& unlearned, const Dataset& data,
                                       const MembershipSplit& split);

enum class ScoreKind { Entropy, Outlierness };

// Per-example posterior scores: entropy H(p), or outlierness ln(C) - H(p)
// (the KL divergence from the uniform posterior).
std::vector<double> sample_scores(const PipelineModel& model, const Dataset& data,
                                  const std::vector<int>& indices, ScoreKind kind);

// Per-example fraction of an ensemble of membership verdicts (0/1) that
// match the true member flag. Needs at least two ensemble members.
std::vector<double> vulnerability_scores(const std::vector<std::vector<int>>& mia_verdicts,
                                         const std::vector<int>& member_flags);

// Bundled tri-class attack evaluation.
struct AttackEvaluation {
    ConfusionMatrix confusion;
    double micro = 0.0;
    std::array<double, 3> class_f1 = {0.0, 0.0, 0.0};       // unseen, forget, retain
    std::array<double, 3> tpr_low_fpr = {0.0, 0.0, 0.0};    // per class
    double fpr_budget = 0.05;
};

AttackEvaluation evaluate_tri_attack(const std::vector<int>& predicted,
                                     const std::vector<std::array<double, 3>>& posteriors,
                                     const std::vector<int>& actual, double fpr_budget);

}  // namespace unlab
