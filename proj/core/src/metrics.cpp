#include "unlab/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace unlab {

long ConfusionMatrix::total() const {
    long n = 0;
    for (const auto& row : counts)
        for (long v : row) n += v;
    return n;
}

long ConfusionMatrix::trace() const {
    return counts[0][0] + counts[1][1] + counts[2][2];
}

long ConfusionMatrix::row_sum(int k) const {
    const auto& row = counts[static_cast<std::size_t>(k)];
    return row[0] + row[1] + row[2];
}

long ConfusionMatrix::col_sum(int k) const {
    return counts[0][static_cast<std::size_t>(k)] + counts[1][static_cast<std::size_t>(k)] +
           counts[2][static_cast<std::size_t>(k)];
}

ConfusionMatrix confusion(const std::vector<int>& predicted, const std::vector<int>& actual) {
    if (predicted.size() != actual.size()) throw ShapeError("confusion: length mismatch");
    if (predicted.empty()) throw MetricError("confusion: empty input");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (actual[i] < 0 || actual[i] > 2 || predicted[i] < 0 || predicted[i] > 2)
            throw DataError("confusion: membership class out of range");
        cm.counts[static_cast<std::size_t>(actual[i])][static_cast<std::size_t>(predicted[i])]++;
    }
    return cm;
}

double micro_f1(const ConfusionMatrix& cm) {
    const long total = cm.total();
    if (total == 0) throw MetricError("micro_f1: empty confusion matrix");
    // Pooled micro precision and recall coincide for a square confusion
    // matrix (every false positive is some other class's false negative),
    // so 2PR/(P+R) collapses to trace/total; computing it that way keeps
    // the identity exact in floating point as well.
    return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

std::array<double, 3> per_class_f1(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw MetricError("per_class_f1: empty confusion matrix");
    std::array<double, 3> f1{};
    for (int k = 0; k < 3; ++k) {
        const auto tp = static_cast<double>(cm.counts[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)]);
        const auto pred = static_cast<double>(cm.col_sum(k));
        const auto support = static_cast<double>(cm.row_sum(k));
        const double precision = pred > 0.0 ? tp / pred : 0.0;
        const double recall = support > 0.0 ? tp / support : 0.0;
        f1[static_cast<std::size_t>(k)] =
            precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    }
    return f1;
}

double tpr_at_fpr(const std::vector<double>& scores, const std::vector<int>& actual,
                  int positive_class, double fpr_budget) {
    if (scores.size() != actual.size()) throw ShapeError("tpr_at_fpr: length mismatch");
    if (!(fpr_budget >= 0.0 && fpr_budget < 1.0))
        throw ConfigError("tpr_at_fpr: fpr_budget must be in [0,1)");

    std::vector<double> neg;
    std::size_t n_pos = 0, pos_hits = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (actual[i] == positive_class) ++n_pos;
        else neg.push_back(scores[i]);
    }
    if (n_pos == 0) throw MetricError("tpr_at_fpr: no positive examples");
    if (neg.empty()) throw MetricError("tpr_at_fpr: no negative examples");

    std::sort(neg.begin(), neg.end(), std::greater<double>());
    const auto k = static_cast<std::size_t>(fpr_budget * static_cast<double>(neg.size()));
    const double threshold = neg[k];

    for (std::size_t i = 0; i < scores.size(); ++i)
        if (actual[i] == positive_class && scores[i] > threshold) ++pos_hits;
    return static_cast<double>(pos_hits) / static_cast<double>(n_pos);
}

double overfitting_degree(double train_accuracy, double test_accuracy) {
    return train_accuracy - test_accuracy;
}

namespace {

double mean_true_confidence(const PipelineModel& model, const Dataset& data,
                            const std::vector<int>& indices) {
    if (indices.empty()) throw MetricError("separability: empty index set");
    double acc = 0.0;
    for (int idx : indices) {
        const auto row = static_cast<std::size_t>(idx);
        const PosteriorVector p = model.posterior(data.features.row(row), data.dim());
        acc += p[static_cast<std::size_t>(data.labels[row])];
    }
    return acc / static_cast<double>(indices.size());
}

std::vector<double> mean_posterior(const PipelineModel& model, const Dataset& data,
                                   const std::vector<int>& indices) {
    if (indices.empty()) throw MetricError("separability: empty index set");
    std::vector<double> mean;
    for (int idx : indices) {
        const auto row = static_cast<std::size_t>(idx);
        const PosteriorVector p = model.posterior(data.features.row(row), data.dim());
        if (mean.empty()) mean.assign(p.size(), 0.0);
        for (std::size_t k = 0; k < p.size(); ++k) mean[k] += p[k];
    }
    for (auto& v : mean) v /= static_cast<double>(indices.size());
    return mean;
}

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

SeparabilityBlock block_for(const PipelineModel& model, const Dataset& data,
                            const MembershipSplit& split) {
    SeparabilityBlock b;
    b.acc_retain = model.accuracy(data, split.retain);
    b.acc_forget = model.accuracy(data, split.forget);
    b.acc_unseen = model.accuracy(data, split.unseen);
    b.gap_retain_forget = b.acc_retain - b.acc_forget;
    b.gap_retain_unseen = b.acc_retain - b.acc_unseen;
    b.conf_retain = mean_true_confidence(model, data, split.retain);
    b.conf_forget = mean_true_confidence(model, data, split.forget);
    b.conf_unseen = mean_true_confidence(model, data, split.unseen);
    const std::vector<double> m_retain = mean_posterior(model, data, split.retain);
    b.dist_retain_forget = euclidean(m_retain, mean_posterior(model, data, split.forget));
    b.dist_retain_unseen = euclidean(m_retain, mean_posterior(model, data, split.unseen));
    return b;
}

}  // namespace

SeparabilityReport separability_report(const PipelineModel& original,
                                       const PipelineModel& unlearned, const Dataset& data,
                                       const MembershipSplit& split) {
    return {block_for(original, data, split), block_for(unlearned, data, split)};
}

std::vector<double> sample_scores(const PipelineModel& model, const Dataset& data,
                                  const std::vector<int>& indices, ScoreKind kind) {
    std::vector<double> out;
    out.reserve(indices.size());
    for (int idx : indices) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= data.size())
            throw DataError("sample_scores: index out of range");
        const PosteriorVector p = model.posterior(data.features.row(static_cast<std::size_t>(idx)),
                                                  data.dim());
        double entropy = 0.0;
        for (double v : p.probs)
            if (v > 0.0) entropy -= v * std::log(v);
        if (kind == ScoreKind::Entropy) out.push_back(entropy);
        else out.push_back(std::log(static_cast<double>(p.size())) - entropy);
    }
    return out;
}

std::vector<double> vulnerability_scores(const std::vector<std::vector<int>>& mia_verdicts,
                                         const std::vector<int>& member_flags) {
    if (mia_verdicts.size() < 2)
        throw ConfigError("vulnerability_scores: need an ensemble of at least 2 attacks");
    for (const auto& verdicts : mia_verdicts)
        if (verdicts.size() != member_flags.size())
            throw ShapeError("vulnerability_scores: verdict length mismatch");

    std::vector<double> out(member_flags.size(), 0.0);
    for (const auto& verdicts : mia_verdicts)
        for (std::size_t i = 0; i < verdicts.size(); ++i)
            if (verdicts[i] == member_flags[i]) out[i] += 1.0;
    for (auto& v : out) v /= static_cast<double>(mia_verdicts.size());
    return out;
}

AttackEvaluation evaluate_tri_attack(const std::vector<int>& predicted,
                                     const std::vector<std::array<double, 3>>& posteriors,
                                     const std::vector<int>& actual, double fpr_budget) {
    if (posteriors.size() != actual.size())
        throw ShapeError("evaluate_tri_attack: posterior length mismatch");
    AttackEvaluation eval;
    eval.confusion = confusion(predicted, actual);
    eval.micro = micro_f1(eval.confusion);
    eval.class_f1 = per_class_f1(eval.confusion);
    eval.fpr_budget = fpr_budget;
    for (int k = 0; k < 3; ++k) {
        std::vector<double> scores(actual.size());
        for (std::size_t i = 0; i < actual.size(); ++i)
            scores[i] = posteriors[i][static_cast<std::size_t>(k)];
        eval.tpr_low_fpr[static_cast<std::size_t>(k)] =
            tpr_at_fpr(scores, actual, k, fpr_budget);
    }
    return eval;
}

}  // namespace unlab
