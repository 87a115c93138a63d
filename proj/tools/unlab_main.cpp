#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "unlab/harness.hpp"

namespace {

namespace fs = std::filesystem;

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw unlab::DataError("cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Each override is section.key=value; appended entries win over the file.
std::string append_overrides(std::string text, const std::vector<std::string>& sets) {
    for (const auto& s : sets) {
        const auto dot = s.find('.');
        const auto eq = s.find('=');
        if (dot == std::string::npos || eq == std::string::npos || dot > eq)
            throw unlab::ConfigError("--set expects section.key=value, got: " + s);
        text += "\n[" + s.substr(0, dot) + "]\n" + s.substr(dot + 1, eq - dot - 1) + " = " +
                s.substr(eq + 1) + "\n";
    }
    return text;
}

unlab::ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& sets,
                                    const std::vector<std::uint64_t>& seed_override,
                                    const std::string& out_override) {
    unlab::ExperimentConfig cfg = unlab::parse_config_text(append_overrides(read_text(path), sets));
    if (!seed_override.empty()) cfg.seeds = seed_override;
    if (!out_override.empty()) cfg.output_dir = out_override;
    return cfg;
}

void print_report_line(const unlab::ExperimentReport& r) {
    std::cout << "seed " << r.seed << ": micro_f1=" << r.attack_eval.micro << " f1(u/f/r)=["
              << r.attack_eval.class_f1[0] << ", " << r.attack_eval.class_f1[1] << ", "
              << r.attack_eval.class_f1[2] << "] train=" << r.utility.train_acc
              << " test=" << r.utility.test_acc << " forget=" << r.utility.forget_acc
              << " retain=" << r.utility.retain_acc << "\n";
}

void print_aggregate(const unlab::AggregateReport& agg) {
    std::cout << "median over " << agg.num_seeds << " seed(s):\n";
    for (const auto& [key, value] : agg.median) std::cout << "  " << key << " = " << value << "\n";
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& sets,
            const std::vector<std::uint64_t>& seeds, const std::string& out) {
    const unlab::ExperimentConfig cfg = load_config(config_path, sets, seeds, out);
    const unlab::ExperimentResult result = unlab::run_experiment(cfg);
    std::cout << "experiment " << cfg.name << " (config " << unlab::config_digest(cfg) << ")\n";
    std::cout << "wrote " << result.output_dir << "\n";
    for (const auto& r : result.reports) print_report_line(r);
    print_aggregate(result.aggregate);
    return 0;
}

int cmd_suite(const std::string& grid_path, const std::string& out,
              const std::vector<std::uint64_t>& seeds) {
    std::vector<unlab::SuiteEntry> entries;
    std::istringstream lines(read_text(grid_path));
    const fs::path grid_dir = fs::path(grid_path).parent_path();
    std::string line;
    while (std::getline(lines, line)) {
        std::istringstream tok(line);
        std::string label;
        if (!(tok >> label) || label.front() == '#') continue;
        std::string config_rel;
        if (!(tok >> config_rel))
            throw unlab::ConfigError("grid line needs: label config-path [overrides]: " + line);
        std::vector<std::string> sets;
        std::string s;
        while (tok >> s) sets.push_back(s);
        fs::path config_path = config_rel;
        if (config_path.is_relative()) config_path = grid_dir / config_path;
        unlab::SuiteEntry entry;
        entry.label = label;
        entry.cfg = load_config(config_path.string(), sets, seeds, "");
        entries.push_back(std::move(entry));
    }
    const auto rows = unlab::run_suite(entries, out);
    int failures = 0;
    for (const auto& row : rows) {
        std::cout << row.label << ": " << row.status << "\n";
        if (row.status != "ok") {
            ++failures;
            continue;
        }
        print_aggregate(row.result.aggregate);
    }
    std::cout << "suite table: " << unlab::resolve_output_dir(out) << "/suite.csv\n";
    return failures == static_cast<int>(rows.size()) && !rows.empty() ? 1 : 0;
}

int cmd_game(const std::string& config_path, const std::vector<std::string>& sets,
             const std::string& adversary, long trials, std::uint64_t seed,
             const std::string& out) {
    const unlab::ExperimentConfig cfg = load_config(config_path, sets, {}, "");
    const unlab::AdversaryKind kind = unlab::adversary_kind_from_name(adversary);
    const unlab::GameResult result = unlab::play_game(cfg, kind, trials, seed);

    nlohmann::json j;
    j["adversary"] = adversary;
    j["trials"] = result.trials;
    j["successes"] = result.successes;
    j["win_rate"] = result.win_rate;
    j["per_class_accuracy"] = {{"unseen", result.per_class_accuracy[0]},
                               {"forget", result.per_class_accuracy[1]},
                               {"retain", result.per_class_accuracy[2]}};
    for (int a = 0; a < 3; ++a)
        for (int p = 0; p < 3; ++p)
            j["confusion"][unlab::kSetNames[static_cast<std::size_t>(a)]]
             [unlab::kSetNames[static_cast<std::size_t>(p)]] =
                 result.confusion.counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(p)];
    if (!out.empty()) {
        const std::string dir = unlab::resolve_output_dir(out);
        fs::create_directories(dir);
        std::ofstream file(dir + "/game.json");
        if (!file) throw unlab::DataError("cannot open for writing: " + dir + "/game.json");
        file << j.dump(2) << "\n";
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_ulira(const std::string& config_path, const std::vector<std::string>& sets, int trials,
              int eval_trials, std::uint64_t seed, const std::string& out) {
    const unlab::ExperimentConfig cfg = load_config(config_path, sets, {}, "");

    const unlab::Dataset universe = unlab::generate_blobs(cfg.classes, cfg.dim, cfg.per_class,
                                                          cfg.spread, cfg.data_seed);
    auto parts = unlab::split_target_shadow(universe, cfg.target_fraction, seed);

    unlab::ShadowPipelineConfig scfg;
    scfg.spec.layer_sizes.push_back(cfg.dim);
    for (int h : cfg.hidden) scfg.spec.layer_sizes.push_back(h);
    scfg.spec.layer_sizes.push_back(cfg.classes);
    scfg.spec.activation = cfg.activation;
    scfg.train = cfg.train;
    scfg.unlearn = cfg.unlearn;
    scfg.train_fraction = cfg.train_fraction;
    scfg.forget_fraction = cfg.forget_fraction;
    scfg.mode = cfg.mode;
    scfg.ratio = cfg.ratio;

    const auto shadow_runner = unlab::make_unlearn_trial_runner(parts.second, scfg);
    const unlab::UliraFit fit = unlab::ulira_fit(shadow_runner, trials, seed);

    const auto target_runner = unlab::make_unlearn_trial_runner(parts.first, scfg);
    unlab::ConfusionMatrix cm;
    long correct = 0;
    for (int t = 0; t < eval_trials; ++t) {
        const auto obs = target_runner(unlab::mix_seed(seed, 0x6576616cULL, static_cast<std::uint64_t>(t)));
        const std::array<std::pair<int, double>, 3> labeled = {
            std::make_pair(unlab::kForget, obs.forget),
            std::make_pair(unlab::kUnseen, obs.unseen),
            std::make_pair(unlab::kRetain, obs.retain)};
        for (const auto& [truth, value] : labeled) {
            const int predicted = unlab::ulira_classify(fit, value);
            cm.counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)]++;
            if (predicted == truth) ++correct;
        }
    }

    const std::string dir =
        unlab::resolve_output_dir(out.empty() ? cfg.output_dir + "/ulira" : out);
    fs::create_directories(dir);
    unlab::ulira_to_json(fit, dir + "/ulira_fit.json");

    nlohmann::json j;
    j["fit_trials"] = trials;
    j["eval_trials"] = eval_trials;
    j["accuracy"] = eval_trials > 0
                        ? static_cast<double>(correct) / static_cast<double>(3 * eval_trials)
                        : 0.0;
    for (int a = 0; a < 3; ++a)
        for (int p = 0; p < 3; ++p)
            j["confusion"][unlab::kSetNames[static_cast<std::size_t>(a)]]
             [unlab::kSetNames[static_cast<std::size_t>(p)]] =
                 cm.counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(p)];
    std::ofstream file(dir + "/ulira_eval.json");
    if (!file) throw unlab::DataError("cannot open for writing: " + dir + "/ulira_eval.json");
    file << j.dump(2) << "\n";
    std::cout << j.dump(2) << "\n";
    std::cout << "wrote " << dir << "\n";
    return 0;
}

int cmd_report(const std::string& dir) {
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("report_seed", 0) == 0 && name.size() > 5 &&
            name.substr(name.size() - 5) == ".json")
            paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw unlab::DataError("no report_seed*.json under " + dir);

    std::vector<unlab::ExperimentReport> reports;
    reports.reserve(paths.size());
    for (const auto& p : paths) reports.push_back(unlab::report_from_json(p));
    const unlab::AggregateReport agg = unlab::aggregate_reports(reports);
    unlab::aggregate_to_json(agg, dir + "/aggregate.json");
    std::cout << "re-rendered " << dir << "/aggregate.json from " << paths.size()
              << " report(s)\n";
    print_aggregate(agg);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"unlab: machine unlearning privacy laboratory"};
    app.require_subcommand(1);

    std::string config_path, grid_path, out, dir, adversary = "attack";
    std::vector<std::string> sets;
    std::vector<std::uint64_t> seeds;
    std::uint64_t seed = 1;
    long trials = 1000;
    int fit_trials = 64;
    int eval_trials = 32;

    auto* run = app.add_subcommand("run", "run one experiment config");
    run->add_option("--config", config_path, "experiment config file")
        ->required()
        ->check(CLI::ExistingFile);
    run->add_option("--set", sets, "override, section.key=value (repeatable)");
    run->add_option("--seed", seeds, "override config seeds (repeatable)");
    run->add_option("--out", out, "override output directory");

    auto* suite = app.add_subcommand("suite", "run a grid file of experiments");
    suite->add_option("--grid", grid_path, "grid file: label config-path [overrides...]")
        ->required()
        ->check(CLI::ExistingFile);
    suite->add_option("--out", out, "suite output directory")->required();
    suite->add_option("--seed", seeds, "override config seeds (repeatable)");

    auto* game = app.add_subcommand("game", "play the membership distinguishing game");
    game->add_option("--config", config_path, "experiment config file")
        ->required()
        ->check(CLI::ExistingFile);
    game->add_option("--set", sets, "override, section.key=value (repeatable)");
    game->add_option("--adversary", adversary, "constant | oracle | attack")
        ->check(CLI::IsMember({"constant", "oracle", "attack"}));
    game->add_option("--trials", trials, "number of game trials")->check(CLI::PositiveNumber);
    game->add_option("--seed", seed, "game seed");
    game->add_option("--out", out, "also write game.json here");

    auto* ulira = app.add_subcommand("ulira", "per-example confidence-shift likelihood attack");
    ulira->add_option("--config", config_path, "experiment config file")
        ->required()
        ->check(CLI::ExistingFile);
    ulira->add_option("--set", sets, "override, section.key=value (repeatable)");
    ulira->add_option("--trials", fit_trials, "shadow trials to fit")->check(CLI::PositiveNumber);
    ulira->add_option("--eval-trials", eval_trials, "target trials to score")
        ->check(CLI::NonNegativeNumber);
    ulira->add_option("--seed", seed, "pipeline seed");
    ulira->add_option("--out", out, "output directory");

    auto* report = app.add_subcommand("report", "re-render aggregates from written reports");
    report->add_option("--dir", dir, "directory holding report_seed*.json")
        ->required()
        ->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        std::cout << std::setprecision(6);
        if (run->parsed()) return cmd_run(config_path, sets, seeds, out);
        if (suite->parsed()) return cmd_suite(grid_path, out, seeds);
        if (game->parsed()) return cmd_game(config_path, sets, adversary, trials, seed, out);
        if (ulira->parsed()) return cmd_ulira(config_path, sets, fit_trials, eval_trials, seed, out);
        if (report->parsed()) return cmd_report(dir);
    } catch (const unlab::StageError& e) {
        std::cerr << "error in stage " << e.stage << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
