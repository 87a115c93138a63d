#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace unlab {

// Error hierarchy. Everything the library throws derives from Error.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Invalid configuration or parameter value.
struct ConfigError : Error {
    using Error::Error;
};
// Dimension or size mismatch.
struct ShapeError : Error {
    using Error::Error;
};
// Malformed data: bad labels, empty index sets, broken files.
struct DataError : Error {
    using Error::Error;
};
// Metric undefined for the given input.
struct MetricError : Error {
    using Error::Error;
};
// Failure inside a named harness stage; message carries the stage.
struct StageError : Error {
    StageError(const std::string& stage, const std::string& what)
        : Error("[" + stage + "] " + what), stage(stage) {}
    std::string stage;
};

// splitmix64 step, used to derive independent seeds from one base seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    return splitmix64(seed ^ splitmix64(tag));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t tag2) {
    return mix_seed(mix_seed(seed, tag), tag2);
}

// Stable tags for the seed streams used across the library.
namespace seed_tag {
inline constexpr std::uint64_t shuffle = 0x01;
inline constexpr std::uint64_t dropout = 0x02;
inline constexpr std::uint64_t init = 0x03;
inline constexpr std::uint64_t blobs = 0x04;
inline constexpr std::uint64_t target_shadow = 0x05;
inline constexpr std::uint64_t membership = 0x06;
inline constexpr std::uint64_t ratio_sample = 0x07;
inline constexpr std::uint64_t sisa_assign = 0x08;
inline constexpr std::uint64_t sisa_shard = 0x09;
inline constexpr std::uint64_t dp_sample = 0x0a;
inline constexpr std::uint64_t dp_noise = 0x0b;
inline constexpr std::uint64_t attack_set = 0x0c;
inline constexpr std::uint64_t ulira = 0x0d;
inline constexpr std::uint64_t game = 0x0e;
inline constexpr std::uint64_t scrub = 0x0f;
inline constexpr std::uint64_t experiment = 0x10;
}  // namespace seed_tag

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t tag) {
    return std::mt19937_64(mix_seed(seed, tag));
}

// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
    double* row(std::size_t i) { return a.data() + i * cols; }
    const double* row(std::size_t i) const { return a.data() + i * cols; }
    std::size_t size() const { return a.size(); }

    bool operator==(const Matrix& o) const = default;
};

// Probability vector over classes as produced by a softmax head.
struct PosteriorVector {
    std::vector<double> probs;

    std::size_t size() const { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }
};

// argmax with lowest-index tie break.
inline int argmax(const std::vector<double>& v) {
    if (v.empty()) throw ShapeError("argmax: empty vector");
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
    return best;
}

}  // namespace unlab
