#include "unlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace unlab {

namespace {

std::vector<int> iota_perm(std::size_t n, std::mt19937_64& rng) {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

std::size_t ceil_fraction_min1(double fraction, std::size_t n) {
    auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    return std::max<std::size_t>(1, k);
}

std::vector<int> sorted_head(std::vector<int> v, std::size_t k) {
    v.resize(k);
    std::sort(v.begin(), v.end());
    return v;
}

// k distinct elements of pool, sampled with the rng, returned sorted.
std::vector<int> sample_sorted(const std::vector<int>& pool, std::size_t k,
                               std::mt19937_64& rng) {
    std::vector<int> copy(pool);
    std::shuffle(copy.begin(), copy.end(), rng);
    return sorted_head(std::move(copy), k);
}

void check_indices(const Dataset& data, const std::vector<int>& indices, const char* who) {
    for (int i : indices)
        if (i < 0 || static_cast<std::size_t>(i) >= data.size())
            throw DataError(std::string(who) + ": index out of range");
}

std::ofstream open_out(const std::string& path, bool binary) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw DataError("cannot open for writing: " + path);
    return out;
}

std::ifstream open_in(const std::string& path, bool binary) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw DataError("cannot open for reading: " + path);
    return in;
}

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw DataError("truncated binary file");
    return value;
}

}  // namespace

Dataset generate_blobs(int classes, int dim, int points_per_class, double spread,
                       std::uint64_t seed) {
    if (classes < 2) throw ConfigError("generate_blobs: classes must be >= 2");
    if (dim < 1) throw ConfigError("generate_blobs: dim must be >= 1");
    if (points_per_class < 2) throw ConfigError("generate_blobs: points_per_class must be >= 2");
    if (spread < 0.0) throw ConfigError("generate_blobs: negative spread");

    auto rng = make_rng(seed, seed_tag::blobs);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<std::vector<double>> means(static_cast<std::size_t>(classes));
    for (auto& m : means) {
        m.resize(static_cast<std::size_t>(dim));
        double norm2 = 0.0;
        for (auto& x : m) {
            x = normal(rng);
            norm2 += x * x;
        }
        const double norm = std::sqrt(norm2);
        for (auto& x : m) x /= norm;
    }

    const std::size_t n = static_cast<std::size_t>(classes) * static_cast<std::size_t>(points_per_class);
    Dataset data;
    data.features = Matrix(n, static_cast<std::size_t>(dim));
    data.labels.resize(n);
    data.name = "blobs-c" + std::to_string(classes) + "-d" + std::to_string(dim);
    data.seed_of_origin = seed;

    std::size_t row = 0;
    for (int c = 0; c < classes; ++c) {
        const auto& m = means[static_cast<std::size_t>(c)];
        for (int p = 0; p < points_per_class; ++p, ++row) {
            double* x = data.features.row(row);
            for (int j = 0; j < dim; ++j)
                x[j] = m[static_cast<std::size_t>(j)] + spread * normal(rng);
            data.labels[row] = c;
        }
    }
    return data;
}

std::pair<Dataset, Dataset> split_target_shadow(const Dataset& data, double target_fraction,
                                                std::uint64_t seed) {
    if (!(target_fraction > 0.0 && target_fraction < 1.0))
        throw ConfigError("split_target_shadow: target_fraction must be in (0,1)");
    const std::size_t n = data.size();
    if (n < 2) throw DataError("split_target_shadow: need at least 2 rows");

    auto n_target = static_cast<std::size_t>(std::floor(target_fraction * static_cast<double>(n)));
    n_target = std::clamp<std::size_t>(n_target, 1, n - 1);

    auto rng = make_rng(seed, seed_tag::target_shadow);
    std::vector<int> perm = iota_perm(n, rng);
    std::vector<int> target_idx = sorted_head(perm, n_target);
    std::vector<int> shadow_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_target), perm.end());
    std::sort(shadow_idx.begin(), shadow_idx.end());

    Dataset target = subset(data, target_idx);
    Dataset shadow = subset(data, shadow_idx);
    target.name = data.name + "-target";
    shadow.name = data.name + "-shadow";
    return {std::move(target), std::move(shadow)};
}

MembershipSplit make_membership_split(const Dataset& data, double train_fraction,
                                      double forget_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("make_membership_split: train_fraction must be in (0,1)");
    if (!(forget_fraction > 0.0 && forget_fraction < 1.0))
        throw ConfigError("make_membership_split: forget_fraction must be in (0,1)");
    const std::size_t n = data.size();
    if (n < 2) throw DataError("make_membership_split: need at least 2 rows");

    const std::size_t n_train = ceil_fraction_min1(train_fraction, n);
    if (n_train >= n) throw ConfigError("make_membership_split: empty test split");

    auto rng = make_rng(seed, seed_tag::membership);
    std::vector<int> perm = iota_perm(n, rng);

    MembershipSplit split;
    split.train = sorted_head(perm, n_train);
    split.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    std::sort(split.test.begin(), split.test.end());

    const std::size_t n_forget = ceil_fraction_min1(forget_fraction, n_train);
    if (n_forget >= n_train) throw ConfigError("make_membership_split: empty retain split");

    split.forget = sample_sorted(split.train, n_forget, rng);
    split.retain.reserve(n_train - n_forget);
    std::set_difference(split.train.begin(), split.train.end(), split.forget.begin(),
                        split.forget.end(), std::back_inserter(split.retain));
    split.unseen = split.test;
    return split;
}

EvalTriple balance_ratio_sample(const MembershipSplit& split, const SetRatio& ratio,
                                std::uint64_t seed) {
    if (ratio.unseen < 1 || ratio.forget < 1 || ratio.retain < 1)
        throw ConfigError("balance_ratio_sample: ratio entries must be >= 1");
    const std::size_t unit = split.forget.size() / static_cast<std::size_t>(ratio.forget);
    if (unit == 0) throw ConfigError("balance_ratio_sample: forget pool smaller than its ratio");

    const std::size_t n_unseen = unit * static_cast<std::size_t>(ratio.unseen);
    const std::size_t n_forget = unit * static_cast<std::size_t>(ratio.forget);
    const std::size_t n_retain = unit * static_cast<std::size_t>(ratio.retain);
    if (n_unseen > split.unseen.size())
        throw ConfigError("balance_ratio_sample: unseen pool too small");
    if (n_retain > split.retain.size())
        throw ConfigError("balance_ratio_sample: retain pool too small");

    auto rng = make_rng(seed, seed_tag::ratio_sample);
    EvalTriple triple;
    triple.unseen = sample_sorted(split.unseen, n_unseen, rng);
    triple.forget = sample_sorted(split.forget, n_forget, rng);
    triple.retain = sample_sorted(split.retain, n_retain, rng);
    return triple;
}

Dataset subset(const Dataset& data, const std::vector<int>& indices) {
    check_indices(data, indices, "subset");
    Dataset out;
    out.features = Matrix(indices.size(), data.dim());
    out.labels.resize(indices.size());
    out.name = data.name;
    out.seed_of_origin = data.seed_of_origin;
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const double* src = data.features.row(static_cast<std::size_t>(indices[r]));
        std::copy(src, src + data.dim(), out.features.row(r));
        out.labels[r] = data.labels[static_cast<std::size_t>(indices[r])];
    }
    return out;
}

void dataset_to_csv(const Dataset& data, const std::string& path) {
    auto out = open_out(path, false);
    out << std::setprecision(17);
    for (std::size_t j = 0; j < data.dim(); ++j) out << "f" << j << ",";
    out << "label\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double* x = data.features.row(i);
        for (std::size_t j = 0; j < data.dim(); ++j) out << x[j] << ",";
        out << data.labels[i] << "\n";
    }
}

Dataset dataset_from_csv(const std::string& path) {
    auto in = open_in(path, false);
    std::string line;
    if (!std::getline(in, line)) throw DataError("dataset_from_csv: empty file");

    std::size_t dim = 0;
    {
        std::stringstream header(line);
        std::string cell;
        while (std::getline(header, cell, ',')) {
            if (cell == "label") break;
            if (cell != "f" + std::to_string(dim))
                throw DataError("dataset_from_csv: bad header cell: " + cell);
            ++dim;
        }
        if (cell != "label") throw DataError("dataset_from_csv: missing label column");
    }

    std::vector<double> values;
    std::vector<int> labels;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        for (std::size_t j = 0; j < dim; ++j) {
            if (!std::getline(row, cell, ',')) throw DataError("dataset_from_csv: short row");
            values.push_back(std::stod(cell));
        }
        if (!std::getline(row, cell, ',')) throw DataError("dataset_from_csv: missing label");
        labels.push_back(std::stoi(cell));
    }

    Dataset data;
    data.features.rows = labels.size();
    data.features.cols = dim;
    data.features.a = std::move(values);
    data.labels = std::move(labels);
    data.name = path;
    return data;
}

namespace {
constexpr char kDatasetMagic[8] = {'U', 'N', 'L', 'B', 'D', 'S', '0', '1'};
}

void dataset_to_binary(const Dataset& data, const std::string& path) {
    auto out = open_out(path, true);
    out.write(kDatasetMagic, sizeof(kDatasetMagic));
    write_raw(out, static_cast<std::uint64_t>(data.size()));
    write_raw(out, static_cast<std::uint64_t>(data.dim()));
    write_raw(out, data.seed_of_origin);
    write_raw(out, static_cast<std::uint64_t>(data.name.size()));
    out.write(data.name.data(), static_cast<std::streamsize>(data.name.size()));
    out.write(reinterpret_cast<const char*>(data.features.a.data()),
              static_cast<std::streamsize>(data.features.a.size() * sizeof(double)));
    for (int label : data.labels) write_raw(out, static_cast<std::int32_t>(label));
}

Dataset dataset_from_binary(const std::string& path) {
    auto in = open_in(path, true);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(magic, magic + 8, kDatasetMagic))
        throw DataError("dataset_from_binary: bad magic");
    const auto n = read_raw<std::uint64_t>(in);
    const auto dim = read_raw<std::uint64_t>(in);
    Dataset data;
    data.seed_of_origin = read_raw<std::uint64_t>(in);
    const auto name_len = read_raw<std::uint64_t>(in);
    data.name.resize(name_len);
    in.read(data.name.data(), static_cast<std::streamsize>(name_len));
    data.features = Matrix(n, dim);
    in.read(reinterpret_cast<char*>(data.features.a.data()),
            static_cast<std::streamsize>(n * dim * sizeof(double)));
    data.labels.resize(n);
    for (auto& label : data.labels) label = read_raw<std::int32_t>(in);
    if (!in) throw DataError("dataset_from_binary: truncated file");
    return data;
}

void split_to_json(const MembershipSplit& split, const std::string& path) {
    nlohmann::json j;
    j["encoding"] = {{"0", "unseen"}, {"1", "forget"}, {"2", "retain"}};
    j["train"] = split.train;
    j["test"] = split.test;
    j["forget"] = split.forget;
    j["retain"] = split.retain;
    j["unseen"] = split.unseen;
    auto out = open_out(path, false);
    out << j.dump(2) << "\n";
}

MembershipSplit split_from_json(const std::string& path) {
    auto in = open_in(path, false);
    nlohmann::json j;
    in >> j;
    MembershipSplit split;
    split.train = j.at("train").get<std::vector<int>>();
    split.test = j.at("test").get<std::vector<int>>();
    split.forget = j.at("forget").get<std::vector<int>>();
    split.retain = j.at("retain").get<std::vector<int>>();
    split.unseen = j.at("unseen").get<std::vector<int>>();
    return split;
}

void attack_set_to_csv(const AttackDataset& set, const std::string& path) {
    auto out = open_out(path, false);
    out << std::setprecision(17);
    out << "# feature_mode=" << feature_kind_name(set.feature_mode.kind)
        << " top_k=" << set.feature_mode.top_k << " decimals=" << set.feature_mode.decimals
        << "\n";
    const std::size_t dim = set.examples.empty() ? 0 : set.examples.front().features.size();
    for (std::size_t j = 0; j < dim; ++j) out << "x" << j << ",";
    out << "set_label\n";
    for (const auto& ex : set.examples) {
        if (ex.features.size() != dim) throw ShapeError("attack_set_to_csv: ragged features");
        for (double v : ex.features) out << v << ",";
        out << ex.label << "\n";
    }
}

AttackDataset attack_set_from_csv(const std::string& path) {
    auto in = open_in(path, false);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# feature_mode=", 0) != 0)
        throw DataError("attack_set_from_csv: missing feature_mode header");

    AttackDataset set;
    {
        std::stringstream header(line.substr(2));
        std::string token;
        while (header >> token) {
            const auto eq = token.find('=');
            if (eq == std::string::npos) throw DataError("attack_set_from_csv: bad header");
            const std::string key = token.substr(0, eq);
            const std::string value = token.substr(eq + 1);
            if (key == "feature_mode") set.feature_mode.kind = feature_kind_from_name(value);
            else if (key == "top_k") set.feature_mode.top_k = std::stoi(value);
            else if (key == "decimals") set.feature_mode.decimals = std::stoi(value);
            else throw DataError("attack_set_from_csv: unknown header key: " + key);
        }
    }

    if (!std::getline(in, line)) throw DataError("attack_set_from_csv: missing column header");
    std::size_t dim = 0;
    {
        std::stringstream header(line);
        std::string cell;
        while (std::getline(header, cell, ',')) {
            if (cell == "set_label") break;
            ++dim;
        }
        if (cell != "set_label") throw DataError("attack_set_from_csv: missing set_label column");
    }

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        AttackExample ex;
        for (std::size_t j = 0; j < dim; ++j) {
            if (!std::getline(row, cell, ',')) throw DataError("attack_set_from_csv: short row");
            ex.features.push_back(std::stod(cell));
        }
        if (!std::getline(row, cell, ',')) throw DataError("attack_set_from_csv: missing label");
        ex.label = std::stoi(cell);
        if (ex.label < 0 || ex.label > 2)
            throw DataError("attack_set_from_csv: set label out of range");
        set.class_counts[static_cast<std::size_t>(ex.label)]++;
        set.examples.push_back(std::move(ex));
    }
    return set;
}

}  // namespace unlab
