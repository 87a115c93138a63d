#include "unlab/features.hpp"

#include <algorithm>
#include <cmath>

namespace unlab {

std::string feature_kind_name(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::Cp: return "cp";
        case FeatureKind::Ct: return "ct";
        case FeatureKind::Df: return "df";
        case FeatureKind::Sm: return "sm";
        case FeatureKind::Cds: return "cds";
        case FeatureKind::LabelOnly: return "label_only";
        case FeatureKind::TopK: return "topk";
        case FeatureKind::Rounded: return "rounded";
    }
    throw ConfigError("feature_kind_name: unknown kind");
}

FeatureKind feature_kind_from_name(const std::string& name) {
    if (name == "cp") return FeatureKind::Cp;
    if (name == "ct") return FeatureKind::Ct;
    if (name == "df") return FeatureKind::Df;
    if (name == "sm") return FeatureKind::Sm;
    if (name == "cds") return FeatureKind::Cds;
    if (name == "label_only") return FeatureKind::LabelOnly;
    if (name == "topk") return FeatureKind::TopK;
    if (name == "rounded") return FeatureKind::Rounded;
    throw ConfigError("unknown feature mode: " + name);
}

std::string feature_mode_name(const FeatureMode& mode) {
    std::string s = feature_kind_name(mode.kind);
    if (mode.kind == FeatureKind::TopK) s += "-" + std::to_string(mode.top_k);
    if (mode.kind == FeatureKind::Rounded) s += "-" + std::to_string(mode.decimals);
    return s;
}

std::size_t feature_dim(const FeatureMode& mode, std::size_t num_classes) {
    if (num_classes == 0) throw ShapeError("feature_dim: zero classes");
    switch (mode.kind) {
        case FeatureKind::Cp: return 2 * num_classes;
        case FeatureKind::Ct: return 2;
        case FeatureKind::Df: return 1;
        case FeatureKind::Sm: return 1;
        case FeatureKind::Cds: return 2;
        case FeatureKind::LabelOnly: return 2;
        case FeatureKind::TopK: {
            if (mode.top_k < 1 || static_cast<std::size_t>(mode.top_k) > num_classes)
                throw ConfigError("feature_dim: top_k out of range");
            return 2 * static_cast<std::size_t>(mode.top_k);
        }
        case FeatureKind::Rounded: return 2;
    }
    throw ConfigError("feature_dim: unknown kind");
}

namespace {

std::vector<double> top_k_desc(const std::vector<double>& p, int k) {
    std::vector<double> s(p);
    std::partial_sort(s.begin(), s.begin() + k, s.end(), std::greater<double>());
    s.resize(static_cast<std::size_t>(k));
    return s;
}

double round_to(double x, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::round(x * scale) / scale;
}

}  // namespace

std::vector<double> derive_features(const PosteriorVector& p_original,
                                    const PosteriorVector& p_unlearned, int true_label,
                                    const FeatureMode& mode) {
    const std::size_t c = p_original.size();
    if (c == 0) throw ShapeError("derive_features: empty posterior");
    if (p_unlearned.size() != c) throw ShapeError("derive_features: posterior size mismatch");
    if (true_label < 0 || static_cast<std::size_t>(true_label) >= c)
        throw DataError("derive_features: label out of range");
    if (mode.kind == FeatureKind::Rounded && mode.decimals < 0)
        throw ConfigError("derive_features: negative decimals");

    const double py = p_original[static_cast<std::size_t>(true_label)];
    const double puy = p_unlearned[static_cast<std::size_t>(true_label)];

    switch (mode.kind) {
        case FeatureKind::Cp: {
            std::vector<double> f(p_original.probs);
            f.insert(f.end(), p_unlearned.probs.begin(), p_unlearned.probs.end());
            return f;
        }
        case FeatureKind::Ct: return {py, puy};
        case FeatureKind::Df: return {py - puy};
        case FeatureKind::Sm: return {py + puy};
        case FeatureKind::Cds: return {py - puy, py + puy};
        case FeatureKind::LabelOnly: {
            const double a = argmax(p_original.probs) == true_label ? 1.0 : 0.0;
            const double b = argmax(p_unlearned.probs) == true_label ? 1.0 : 0.0;
            return {a, b};
        }
        case FeatureKind::TopK: {
            if (mode.top_k < 1 || static_cast<std::size_t>(mode.top_k) > c)
                throw ConfigError("derive_features: top_k out of range");
            std::vector<double> f = top_k_desc(p_original.probs, mode.top_k);
            std::vector<double> g = top_k_desc(p_unlearned.probs, mode.top_k);
            f.insert(f.end(), g.begin(), g.end());
            return f;
        }
        case FeatureKind::Rounded:
            return {round_to(py, mode.decimals), round_to(puy, mode.decimals)};
    }
    throw ConfigError("derive_features: unknown kind");
}

}  // namespace unlab
