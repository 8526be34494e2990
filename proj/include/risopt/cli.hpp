#pragma once

#include <CLI11.hpp>
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "risopt/harness.hpp"
#include "risopt/scenario.hpp"

namespace risopt::cli {

// Exit codes: 0 success, 1 invalid arguments, 2 config error, 3 runtime failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

namespace detail {

inline std::vector<TrialResult> sorted_rows(const ExperimentResult& result) {
    std::vector<TrialResult> rows = result.trials;
    std::sort(rows.begin(), rows.end(), [](const TrialResult& a, const TrialResult& b) {
        return a.method != b.method ? a.method < b.method : a.trial < b.trial;
    });
    return rows;
}

inline std::string format_metric(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", value);
    return buf;
}

} // namespace detail

/// Long-format CSV: header `method,trial,metric_db`, rows sorted by
/// (method, trial).
inline void write_csv(const ExperimentResult& result, std::ostream& out) {
    out << "method,trial,metric_db\n";
    for (const auto& row : detail::sorted_rows(result))
        out << row.method << ',' << row.trial << ',' << detail::format_metric(row.metric_db)
            << '\n';
}

/// JSON mirror of the CSV records, same ordering.
inline void write_json(const ExperimentResult& result, std::ostream& out) {
    nlohmann::ordered_json records = nlohmann::ordered_json::array();
    for (const auto& row : detail::sorted_rows(result)) {
        nlohmann::ordered_json rec;
        rec["method"] = row.method;
        rec["trial"] = row.trial;
        rec["metric_db"] = row.metric_db;
        records.push_back(std::move(rec));
    }
    out << records.dump(2) << '\n';
}

/// Runs the command line (arguments without the program name) against the
/// given output/error streams. Never throws; failures map to exit codes with
/// a one-line diagnostic on `err`.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"RIS-assisted downlink resource allocation experiments"};
    app.require_subcommand(1);

    struct RunFlags {
        std::string config_path;
        int trials = 0;
        std::uint64_t seed = 1;
        std::string out_path;
        std::string format = "csv";
    };
    RunFlags su_flags, mu_flags;
    su_flags.trials = 1000;
    mu_flags.trials = 200;
    std::string validate_config;

    auto add_run_flags = [](CLI::App* cmd, RunFlags& f) {
        cmd->add_option("--config", f.config_path, "scenario config file (defaults when absent)");
        cmd->add_option("--trials", f.trials, "number of Monte Carlo trials")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--seed", f.seed, "random seed")->capture_default_str();
        cmd->add_option("--out", f.out_path, "output file")->required();
        cmd->add_option("--format", f.format, "output format")
            ->check(CLI::IsMember({"csv", "json"}))
            ->capture_default_str();
    };
    CLI::App* su = app.add_subcommand("su", "single-user SNR CDF experiment");
    add_run_flags(su, su_flags);
    CLI::App* mu = app.add_subcommand("mu", "multiuser geometric-mean SINR CDF experiment");
    add_run_flags(mu, mu_flags);
    CLI::App* validate =
        app.add_subcommand("validate", "load a config and echo the effective values");
    validate->add_option("--config", validate_config, "scenario config file");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("risopt");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "risopt: " << e.what() << '\n';
        return kExitUsage;
    }

    auto load = [](const std::string& path) {
        return path.empty() ? ScenarioConfig{} : load_scenario_config_file(path);
    };

    try {
        if (validate->parsed()) {
            const ScenarioConfig cfg = load(validate_config);
            cfg.validate();
            write_scenario_config(cfg, out);
            return kExitOk;
        }

        const bool is_su = su->parsed();
        const RunFlags& flags = is_su ? su_flags : mu_flags;
        const ScenarioConfig cfg = load(flags.config_path);
        const ExperimentResult result =
            is_su ? run_single_user(cfg, flags.trials, flags.seed)
                  : run_multi_user(cfg, flags.trials, flags.seed);

        std::ofstream file(flags.out_path, std::ios::binary);
        if (!file) throw std::runtime_error("cannot open output file '" + flags.out_path + "'");
        if (flags.format == "csv")
            write_csv(result, file);
        else
            write_json(result, file);
        if (!file.good()) throw std::runtime_error("failed writing '" + flags.out_path + "'");
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "risopt: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "risopt: " << e.what() << '\n';
        return kExitRuntime;
    }
}

} // namespace risopt::cli
