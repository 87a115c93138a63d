#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "unlab/common.hpp"
#include "unlab/features.hpp"

namespace unlab {

// In-memory labelled dataset. Features are row-major, one example per row.
struct Dataset {
    Matrix features;          // n x dim
    std::vector<int> labels;  // n, values in [0, num_classes)
    std::string name;
    std::uint64_t seed_of_origin = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols; }
};

// Index sets over one dataset. train/test partition [0, n); forget/retain
// partition train; unseen = test. All vectors are sorted ascending.
struct MembershipSplit {
    std::vector<int> train;
    std::vector<int> test;
    std::vector<int> forget;
    std::vector<int> retain;
    std::vector<int> unseen;
};

// Derived attack-classifier training set.
struct AttackDataset {
    std::vector<AttackExample> examples;
    FeatureMode feature_mode;
    std::array<std::size_t, 3> class_counts = {0, 0, 0};  // unseen, forget, retain
};

// Requested unseen:forget:retain sampling ratio, e.g. {4,1,2}.
struct SetRatio {
    int unseen = 1;
    int forget = 1;
    int retain = 1;
};

// Sampled evaluation indices, one vector per membership class.
struct EvalTriple {
    std::vector<int> unseen;
    std::vector<int> forget;
    std::vector<int> retain;
};

// Synthetic Gaussian blobs: one unit-norm random mean per class, isotropic
// noise with the given spread. Rows are grouped by class, class 0 first.
Dataset generate_blobs(int classes, int dim, int points_per_class, double spread,
                       std::uint64_t seed);

// Disjoint random row split into a target dataset (first) and shadow
// dataset (second). target_fraction in (0,1); both parts non-empty.
std::pair<Dataset, Dataset> split_target_shadow(const Dataset& data, double target_fraction,
                                                std::uint64_t seed);

// Random train/test split plus a forget subset of train.
// |train| = ceil(train_fraction*n) (min 1), |forget| = ceil(forget_fraction*|train|) (min 1).
MembershipSplit make_membership_split(const Dataset& data, double train_fraction,
                                      double forget_fraction, std::uint64_t seed);

// Sample class-balanced evaluation indices in the requested ratio. The
// forget pool fixes the unit: unit = floor(|forget| / ratio.forget).
EvalTriple balance_ratio_sample(const MembershipSplit& split, const SetRatio& ratio,
                                std::uint64_t seed);

// New dataset holding the given rows, in the given order.
Dataset subset(const Dataset& data, const std::vector<int>& indices);

// CSV with header f0,...,f{dim-1},label.
void dataset_to_csv(const Dataset& data, const std::string& path);
Dataset dataset_from_csv(const std::string& path);

// Compact little-endian binary form; exact round trip.
void dataset_to_binary(const Dataset& data, const std::string& path);
Dataset dataset_from_binary(const std::string& path);

// JSON with the index sets and the membership-class encoding legend.
void split_to_json(const MembershipSplit& split, const std::string& path);
MembershipSplit split_from_json(const std::string& path);

// CSV with one row per attack example; header names the feature mode.
void attack_set_to_csv(const AttackDataset& set, const std::string& path);
AttackDataset attack_set_from_csv(const std::string& path);

}  // namespace unlab
