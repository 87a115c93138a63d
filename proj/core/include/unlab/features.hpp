#pragma once

#include <array>
#include <string>
#include <vector>

#include "unlab/common.hpp"

namespace unlab {

// Canonical membership-class encoding used throughout:
//   0 = unseen, 1 = forget, 2 = retain.
inline constexpr int kUnseen = 0;
inline constexpr int kForget = 1;
inline constexpr int kRetain = 2;
inline constexpr std::array<const char*, 3> kSetNames = {"unseen", "forget", "retain"};

enum class FeatureKind {
    Cp,         // full posterior pair, concatenated
    Ct,         // true-class confidence pair
    Df,         // confidence difference
    Sm,         // confidence sum
    Cds,        // (difference, sum)
    LabelOnly,  // hard-label correctness pair
    TopK,       // top-k confidences of each posterior, sorted descending
    Rounded,    // true-class confidence pair rounded to fixed decimals
};

struct FeatureMode {
    FeatureKind kind = FeatureKind::Cds;
    int top_k = 1;     // TopK only
    int decimals = 2;  // Rounded only
};

// One attack-classifier training point: derived features plus the
// membership class of the underlying example.
struct AttackExample {
    std::vector<double> features;
    int label = 0;  // 0 unseen, 1 forget, 2 retain
};

std::string feature_kind_name(FeatureKind kind);
FeatureKind feature_kind_from_name(const std::string& name);
std::string feature_mode_name(const FeatureMode& mode);

// Feature dimensionality for a given mode and class count.
std::size_t feature_dim(const FeatureMode& mode, std::size_t num_classes);

// Build the attack feature vector from the posterior of the original
// model, the posterior of the unlearned model, and the true label.
std::vector<double> derive_features(const PosteriorVector& p_original,
                                    const PosteriorVector& p_unlearned, int true_label,
                                    const FeatureMode& mode);

}  // namespace unlab
