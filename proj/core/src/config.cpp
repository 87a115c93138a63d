#include "unlab/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace unlab {

std::string attack_variant_name(AttackVariant v) {
    switch (v) {
        case AttackVariant::Tc: return "tc";
        case AttackVariant::TwoRound: return "two_round";
        case AttackVariant::PosteriorPair: return "posterior_pair";
    }
    throw ConfigError("attack_variant_name: unknown variant");
}

AttackVariant attack_variant_from_name(const std::string& name) {
    if (name == "tc") return AttackVariant::Tc;
    if (name == "two_round") return AttackVariant::TwoRound;
    if (name == "posterior_pair") return AttackVariant::PosteriorPair;
    throw ConfigError("unknown attack variant: " + name);
}

void apply_overfit_preset(ExperimentConfig& cfg) {
    if (cfg.overfit == "custom") return;
    if (cfg.overfit == "high") {
        cfg.train.epochs = 150;
        cfg.train.weight_decay = 0.0;
        return;
    }
    if (cfg.overfit == "low") {
        cfg.train.epochs = 8;
        cfg.train.weight_decay = 2e-3;
        return;
    }
    throw ConfigError("unknown overfit preset: " + cfg.overfit);
}

namespace {

struct Entry {
    std::string section;
    std::string key;
    std::string value;
    int line = 0;
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line, const std::string& what) {
    throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

std::vector<Entry> tokenize(const std::string& text) {
    std::vector<Entry> entries;
    std::istringstream in(text);
    std::string raw, section;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail(line, "unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (section.empty()) fail(line, "empty section name");
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) fail(line, "expected key = value");
        Entry e;
        e.section = section;
        e.key = trim(s.substr(0, eq));
        e.value = trim(s.substr(eq + 1));
        e.line = line;
        if (e.section.empty()) fail(line, "key outside any [section]");
        if (e.key.empty()) fail(line, "empty key");
        entries.push_back(std::move(e));
    }
    return entries;
}

double to_double(const Entry& e) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing text");
        return v;
    } catch (const std::exception&) {
        fail(e.line, "bad number for " + e.key + ": " + e.value);
    }
}

int to_int(const Entry& e) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing text");
        return v;
    } catch (const std::exception&) {
        fail(e.line, "bad integer for " + e.key + ": " + e.value);
    }
}

std::uint64_t to_u64(const Entry& e) {
    try {
        // stoull would wrap a negative value around instead of rejecting it
        if (!e.value.empty() && e.value.front() == '-') throw std::invalid_argument("negative");
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing text");
        return v;
    } catch (const std::exception&) {
        fail(e.line, "bad unsigned integer for " + e.key + ": " + e.value);
    }
}

bool to_bool(const Entry& e) {
    if (e.value == "true" || e.value == "1") return true;
    if (e.value == "false" || e.value == "0") return false;
    fail(e.line, "bad boolean for " + e.key + ": " + e.value);
}

template <typename T, typename F>
std::vector<T> split_list(const Entry& e, char sep, F convert) {
    std::vector<T> out;
    std::stringstream ss(e.value);
    std::string item;
    while (std::getline(ss, item, sep)) {
        Entry sub = e;
        sub.value = trim(item);
        out.push_back(convert(sub));
    }
    if (out.empty()) fail(e.line, "empty list for " + e.key);
    return out;
}

void apply_entry(ExperimentConfig& cfg, const Entry& e) {
    const std::string& s = e.section;
    const std::string& k = e.key;
    try {
        if (s == "dataset") {
            if (k == "classes") cfg.classes = to_int(e);
            else if (k == "dim") cfg.dim = to_int(e);
            else if (k == "per_class") cfg.per_class = to_int(e);
            else if (k == "spread") cfg.spread = to_double(e);
            else if (k == "seed") cfg.data_seed = to_u64(e);
            else if (k == "target_fraction") cfg.target_fraction = to_double(e);
            else fail(e.line, "unknown key [dataset] " + k);
        } else if (s == "split") {
            if (k == "train_fraction") cfg.train_fraction = to_double(e);
            else if (k == "forget_fraction") cfg.forget_fraction = to_double(e);
            else fail(e.line, "unknown key [split] " + k);
        } else if (s == "model") {
            if (k == "hidden") cfg.hidden = split_list<int>(e, ',', to_int);
            else if (k == "activation") cfg.activation = activation_from_name(e.value);
            else fail(e.line, "unknown key [model] " + k);
        } else if (s == "train") {
            if (k == "epochs") cfg.train.epochs = to_int(e);
            else if (k == "batch_size") cfg.train.batch_size = to_int(e);
            else if (k == "learning_rate") cfg.train.learning_rate = to_double(e);
            else if (k == "weight_decay") cfg.train.weight_decay = to_double(e);
            else if (k == "optimizer")
                cfg.train.optimizer = e.value == "sgd" ? Optimizer::Sgd
                                      : e.value == "adam"
                                          ? Optimizer::Adam
                                          : throw ConfigError("unknown optimizer: " + e.value);
            else fail(e.line, "unknown key [train] " + k);
        } else if (s == "unlearn") {
            if (k == "method") cfg.unlearn.method = unlearn_method_from_name(e.value);
            else if (k == "num_shards") cfg.unlearn.num_shards = to_int(e);
            else if (k == "ga_steps") cfg.unlearn.ga_steps = to_int(e);
            else if (k == "ga_learning_rate") cfg.unlearn.ga_learning_rate = to_double(e);
            else if (k == "prune_ratio") cfg.unlearn.prune_ratio = to_double(e);
            else if (k == "finetune_epochs") cfg.unlearn.finetune_epochs = to_int(e);
            else if (k == "scrub_max_epochs") cfg.unlearn.scrub_max_epochs = to_int(e);
            else if (k == "scrub_min_epochs") cfg.unlearn.scrub_min_epochs = to_int(e);
            else if (k == "scrub_temperature") cfg.unlearn.scrub_temperature = to_double(e);
            else if (k == "scrub_learning_rate") cfg.unlearn.scrub_learning_rate = to_double(e);
            else fail(e.line, "unknown key [unlearn] " + k);
        } else if (s == "attack") {
            if (k == "variant") cfg.attack = attack_variant_from_name(e.value);
            else if (k == "feature_mode") cfg.mode.kind = feature_kind_from_name(e.value);
            else if (k == "top_k") cfg.mode.top_k = to_int(e);
            else if (k == "decimals") cfg.mode.decimals = to_int(e);
            else if (k == "repetitions") cfg.repetitions = to_int(e);
            else if (k == "ratio") {
                const auto parts = split_list<int>(e, ':', to_int);
                if (parts.size() != 3) fail(e.line, "ratio needs unseen:forget:retain");
                cfg.ratio = {parts[0], parts[1], parts[2]};
            } else if (k == "epochs") cfg.attack_train.epochs = to_int(e);
            else if (k == "batch_size") cfg.attack_train.batch_size = to_int(e);
            else if (k == "learning_rate") cfg.attack_train.learning_rate = to_double(e);
            else if (k == "weight_decay") cfg.attack_train.weight_decay = to_double(e);
            else fail(e.line, "unknown key [attack] " + k);
        } else if (s == "defense") {
            if (k == "kind") cfg.defense = defense_kind_from_name(e.value);
            else if (k == "dropout_rate") cfg.dropout_rate = to_double(e);
            else if (k == "dp_epsilon") cfg.dp_epsilon = to_double(e);
            else if (k == "dp_sigma") cfg.dp_sigma = to_double(e);
            else if (k == "dp_clip_norm") cfg.dp_clip_norm = to_double(e);
            else if (k == "dp_epochs") cfg.dp_epochs = to_int(e);
            else if (k == "dp_batch_size") cfg.dp_batch_size = to_int(e);
            else if (k == "dp_learning_rate") cfg.dp_learning_rate = to_double(e);
            else if (k == "dp_delta") cfg.dp_delta = to_double(e);
            else fail(e.line, "unknown key [defense] " + k);
        } else if (s == "experiment") {
            if (k == "name") cfg.name = e.value;
            else if (k == "seeds") cfg.seeds = split_list<std::uint64_t>(e, ',', to_u64);
            else if (k == "output_dir") cfg.output_dir = e.value;
            else if (k == "fpr_budget") cfg.fpr_budget = to_double(e);
            else if (k == "overfit") cfg.overfit = e.value;
            else if (k == "retain_probe") cfg.retain_probe = to_bool(e);
            else fail(e.line, "unknown key [experiment] " + k);
        } else {
            fail(e.line, "unknown section [" + s + "]");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& ex) {
        fail(e.line, ex.what());
    }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    const std::vector<Entry> entries = tokenize(text);
    ExperimentConfig cfg;
    for (const auto& e : entries)
        if (e.section == "experiment" && e.key == "overfit") cfg.overfit = e.value;
    apply_overfit_preset(cfg);
    // Explicit [train] keys override the preset schedule.
    for (const auto& e : entries) apply_entry(cfg, e);
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "[dataset]\n";
    out << "classes = " << cfg.classes << "\n";
    out << "dim = " << cfg.dim << "\n";
    out << "per_class = " << cfg.per_class << "\n";
    out << "spread = " << cfg.spread << "\n";
    out << "seed = " << cfg.data_seed << "\n";
    out << "target_fraction = " << cfg.target_fraction << "\n";
    out << "\n[split]\n";
    out << "train_fraction = " << cfg.train_fraction << "\n";
    out << "forget_fraction = " << cfg.forget_fraction << "\n";
    out << "\n[model]\n";
    out << "hidden = ";
    for (std::size_t i = 0; i < cfg.hidden.size(); ++i)
        out << (i ? "," : "") << cfg.hidden[i];
    out << "\n";
    out << "activation = " << activation_name(cfg.activation) << "\n";
    out << "\n[train]\n";
    out << "epochs = " << cfg.train.epochs << "\n";
    out << "batch_size = " << cfg.train.batch_size << "\n";
    out << "learning_rate = " << cfg.train.learning_rate << "\n";
    out << "weight_decay = " << cfg.train.weight_decay << "\n";
    out << "optimizer = " << (cfg.train.optimizer == Optimizer::Adam ? "adam" : "sgd") << "\n";
    out << "\n[unlearn]\n";
    out << "method = " << unlearn_method_name(cfg.unlearn.method) << "\n";
    out << "num_shards = " << cfg.unlearn.num_shards << "\n";
    out << "ga_steps = " << cfg.unlearn.ga_steps << "\n";
    out << "ga_learning_rate = " << cfg.unlearn.ga_learning_rate << "\n";
    out << "prune_ratio = " << cfg.unlearn.prune_ratio << "\n";
    out << "finetune_epochs = " << cfg.unlearn.finetune_epochs << "\n";
    out << "scrub_max_epochs = " << cfg.unlearn.scrub_max_epochs << "\n";
    out << "scrub_min_epochs = " << cfg.unlearn.scrub_min_epochs << "\n";
    out << "scrub_temperature = " << cfg.unlearn.scrub_temperature << "\n";
    out << "scrub_learning_rate = " << cfg.unlearn.scrub_learning_rate << "\n";
    out << "\n[attack]\n";
    out << "variant = " << attack_variant_name(cfg.attack) << "\n";
    out << "feature_mode = " << feature_kind_name(cfg.mode.kind) << "\n";
    out << "top_k = " << cfg.mode.top_k << "\n";
    out << "decimals = " << cfg.mode.decimals << "\n";
    out << "repetitions = " << cfg.repetitions << "\n";
    out << "ratio = " << cfg.ratio.unseen << ":" << cfg.ratio.forget << ":" << cfg.ratio.retain
        << "\n";
    out << "epochs = " << cfg.attack_train.epochs << "\n";
    out << "batch_size = " << cfg.attack_train.batch_size << "\n";
    out << "learning_rate = " << cfg.attack_train.learning_rate << "\n";
    out << "weight_decay = " << cfg.attack_train.weight_decay << "\n";
    out << "\n[defense]\n";
    out << "kind = " << defense_kind_name(cfg.defense) << "\n";
    out << "dropout_rate = " << cfg.dropout_rate << "\n";
    out << "dp_epsilon = " << cfg.dp_epsilon << "\n";
    out << "dp_sigma = " << cfg.dp_sigma << "\n";
    out << "dp_clip_norm = " << cfg.dp_clip_norm << "\n";
    out << "dp_epochs = " << cfg.dp_epochs << "\n";
    out << "dp_batch_size = " << cfg.dp_batch_size << "\n";
    out << "dp_learning_rate = " << cfg.dp_learning_rate << "\n";
    out << "dp_delta = " << cfg.dp_delta << "\n";
    out << "\n[experiment]\n";
    out << "name = " << cfg.name << "\n";
    out << "seeds = ";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) out << (i ? "," : "") << cfg.seeds[i];
    out << "\n";
    out << "output_dir = " << cfg.output_dir << "\n";
    out << "fpr_budget = " << cfg.fpr_budget << "\n";
    out << "overfit = custom\n";  // the schedule above is already resolved
    out << "retain_probe = " << (cfg.retain_probe ? "true" : "false") << "\n";
    return out.str();
}

std::string config_digest(const ExperimentConfig& cfg) {
    const std::string text = serialize_config(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = hex[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace unlab
