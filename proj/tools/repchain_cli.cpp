#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "repchain/repchain.hpp"

namespace fs = std::filesystem;
using namespace repchain;

namespace {

enum Exit { kOk = 0, kConfigError = 2, kStall = 3, kIoError = 4 };

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string default_out_dir() {
    const char* env = std::getenv("REPCHAIN_OUT_DIR");
    return env && *env ? env : "repchain_out";
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write '" + p.string() + "'");
    return f;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

std::vector<std::string> split_values(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto a = item.find_first_not_of(" \t");
        const auto b = item.find_last_not_of(" \t");
        if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
    }
    return out;
}

struct RunArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> samples;
    int workers = 1;
    std::string out = default_out_dir();
    bool trace = false;
    std::string cu_counting;
};

struct SweepArgs {
    std::string config;
    std::string axis, values, axis2, values2;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> samples;
    int workers = 1;
    std::string out = default_out_dir();
};

ScenarioConfig load_with_overrides(const std::string& path, const std::optional<std::uint64_t>& seed,
                                   const std::optional<std::int64_t>& samples, const std::string& cu) {
    ScenarioConfig cfg = load_config(path);
    if (seed) cfg.seed = *seed;
    if (samples) cfg.samples = *samples;
    if (!cu.empty()) {
        try {
            cfg.cu_counting = parse_cu_counting(cu);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    throw_if_invalid(cfg);
    return cfg;
}

int cmd_run(const RunArgs& a) {
    const ScenarioConfig cfg = load_with_overrides(a.config, a.seed, a.samples, a.cu_counting);
    const fs::path dir(a.out);
    ensure_dir(dir);
    RunResult res;
    try {
        res = run_scenario(cfg, a.workers, a.trace);
    } catch (const RunFailure& e) {
        const fs::path partial = dir / "samples.partial.csv";
        auto f = open_out(partial);
        write_samples_csv(f, e.partial(), cfg.seed);
        std::cerr << "error: " << e.what() << "\npartial results: " << partial.string() << "\n";
        return e.stalled() ? kStall : 1;
    }
    {
        auto f = open_out(dir / "samples.csv");
        write_samples_csv(f, res.samples, cfg.seed);
        if (!f) throw IoError("write failed: samples.csv");
    }
    {
        auto f = open_out(dir / "rates.csv");
        write_rates_header(f, res.samples.config_hash, cfg.seed, 0);
        write_rates_row(f, {}, res.report);
        if (!f) throw IoError("write failed: rates.csv");
    }
    if (a.trace) {
        auto f = open_out(dir / "trace.tsv");
        f << res.trace;
        if (!f) throw IoError("write failed: trace.tsv");
    }
    const auto& r = res.report;
    std::cout << cfg.name << ": " << r.samples << " samples, raw " << format_double(r.raw_rate_per_s)
              << " /s, e_x " << format_double(r.e_x_mean) << ", e_z " << format_double(r.e_z_mean) << ", key "
              << format_double(r.key_rate_per_s) << " /s (se " << format_double(r.se_key_rate_per_s) << "), "
              << format_double(r.key_rate_per_cu) << " /channel use" << (r.clamped ? " [clamped]" : "") << "\n";
    return kOk;
}

int cmd_sweep(const SweepArgs& a) {
    const ScenarioConfig cfg = load_with_overrides(a.config, a.seed, a.samples, "");
    const auto& axes = sweep_axes();
    auto check_axis = [&](const std::string& ax) {
        if (std::find(axes.begin(), axes.end(), ax) == axes.end()) throw ConfigError("unknown sweep axis '" + ax + "'");
    };
    check_axis(a.axis);
    if (!a.axis2.empty()) check_axis(a.axis2);
    const auto values = split_values(a.values);
    const auto values2 = split_values(a.values2);
    if (values.empty()) throw ConfigError("--values is empty");
    if (!a.axis2.empty() && values2.empty()) throw ConfigError("--values2 is empty");

    const fs::path dir(a.out);
    ensure_dir(dir);
    auto f = open_out(dir / "rates.csv");
    write_rates_header(f, config_hash(cfg), cfg.seed, a.axis2.empty() ? 1 : 2);
    const auto rows = sweep(cfg, a.axis, values, a.axis2, values2, a.workers);
    for (const auto& row : rows) {
        write_rates_row(f, row.coords, row.report);
        if (!row.report) {
            std::cerr << "warning: point";
            for (const auto& c : row.coords) std::cerr << ' ' << c;
            std::cerr << " failed: " << row.error << "\n";
        }
    }
    if (!f) throw IoError("write failed: rates.csv");
    std::cout << "wrote " << rows.size() << " rows to " << (dir / "rates.csv").string() << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"repchain: event-driven Monte-Carlo simulator for quantum repeater chains"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "simulate one scenario");
    run_cmd->add_option("--config", run.config, "scenario file")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--seed", run.seed, "override the scenario seed");
    run_cmd->add_option("--samples", run.samples, "override the number of deliveries");
    run_cmd->add_option("--workers", run.workers, "parallel workers")->check(CLI::PositiveNumber);
    run_cmd->add_option("--out", run.out, "output directory (default: $REPCHAIN_OUT_DIR or ./repchain_out)");
    run_cmd->add_flag("--trace", run.trace, "write the event trace to trace.tsv");
    run_cmd->add_option("--cu-counting", run.cu_counting, "channel-use counting")
        ->check(CLI::IsMember({"all", "consumed"}));

    SweepArgs sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "sweep one or two parameters");
    sweep_cmd->add_option("--config", sw.config, "scenario template")->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--axis", sw.axis, "distance|t_cut|n_links|epp_steps|f_init|t_dp|p_link|n_mem")->required();
    sweep_cmd->add_option("--values", sw.values, "comma-separated values")->required();
    sweep_cmd->add_option("--axis2", sw.axis2, "second axis");
    sweep_cmd->add_option("--values2", sw.values2, "comma-separated values for the second axis");
    sweep_cmd->add_option("--seed", sw.seed, "override the scenario seed");
    sweep_cmd->add_option("--samples", sw.samples, "override the number of deliveries per point");
    sweep_cmd->add_option("--workers", sw.workers, "parallel workers")->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--out", sw.out, "output directory (default: $REPCHAIN_OUT_DIR or ./repchain_out)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfigError;
    }

    try {
        if (*run_cmd) return cmd_run(run);
        return cmd_sweep(sw);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const SimulationStall& e) {
        std::cerr << "simulation stalled: " << e.what() << "\n";
        return kStall;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIoError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
