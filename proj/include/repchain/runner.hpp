#pragma once

// Seeded run orchestration, parameter sweeps and CSV output.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "repchain/config.hpp"
#include "repchain/events.hpp"
#include "repchain/protocols.hpp"
#include "repchain/random.hpp"
#include "repchain/statistics.hpp"
#include "repchain/world.hpp"

#ifndef REPCHAIN_VERSION
#define REPCHAIN_VERSION "0.0.0"
#endif

namespace repchain {

inline constexpr const char* kVersion = REPCHAIN_VERSION;

/// Runs one independent simulation until `samples` deliveries are recorded.
inline SampleSet run_chunk(const ScenarioConfig& cfg, std::uint64_t seed, std::int64_t samples,
                           std::ostream* trace = nullptr) {
    const ChainLayout layout = build_layout(cfg);
    Rng rng(seed);
    World world(layout.stations, layout.links, layout.options, rng);
    SimQueue queue;
    auto protocol = make_protocol(cfg.protocol);
    const auto target = static_cast<std::size_t>(samples);
    run_loop(world, *protocol, queue, [&](const World& w) { return w.records().size() >= target; }, trace);
    if (!world.audit().balanced()) throw std::logic_error("pair conservation audit failed\n" + world.dump());

    SampleSet out;
    out.records = world.records();
    out.total_sim_time = out.records.empty() ? 0.0 : out.records.back().completion_time;
    for (const auto& r : out.records) out.total_channel_uses += r.channel_uses;
    out.config_hash = config_hash(cfg);
    return out;
}

/// Raised when a chunk fails; carries the merged chunks that finished before
/// the first failing one.
class RunFailure : public std::runtime_error {
public:
    RunFailure(const std::string& what, SampleSet partial, bool stalled)
        : std::runtime_error(what), partial_(std::move(partial)), stalled_(stalled) {}
    const SampleSet& partial() const { return partial_; }
    bool stalled() const { return stalled_; }

private:
    SampleSet partial_;
    bool stalled_;
};

struct RunResult {
    SampleSet samples;
    KeyRateReport report;
    std::string trace;
};

/// Splits the requested samples into chunks of `cfg.chunk_size`. Chunk i is
/// seeded with derive_seed(seed, i) and the chunks are merged in index order,
/// so the result does not depend on how many workers execute them.
inline RunResult run_scenario(const ScenarioConfig& cfg, int workers, bool keep_trace = false) {
    throw_if_invalid(cfg);
    if (workers < 1) throw std::invalid_argument("run_scenario: workers must be >= 1");
    const std::int64_t n_chunks = (cfg.samples + cfg.chunk_size - 1) / cfg.chunk_size;
    std::vector<SampleSet> parts(static_cast<std::size_t>(n_chunks));
    std::vector<std::string> traces(keep_trace ? parts.size() : 0);
    std::vector<std::exception_ptr> errors(parts.size());
    std::atomic<std::int64_t> next{0};
    std::atomic<bool> failed{false};

    auto work = [&] {
        for (;;) {
            const std::int64_t i = next.fetch_add(1);
            if (i >= n_chunks || failed.load()) return;
            const std::int64_t n = std::min(cfg.chunk_size, cfg.samples - i * cfg.chunk_size);
            try {
                std::ostringstream tr;
                parts[i] = run_chunk(cfg, derive_seed(cfg.seed, static_cast<std::uint64_t>(i)), n,
                                     keep_trace ? &tr : nullptr);
                if (keep_trace) traces[i] = tr.str();
            } catch (...) {
                errors[i] = std::current_exception();
                failed.store(true);
            }
        }
    };
    const int n_threads = static_cast<int>(std::min<std::int64_t>(workers, n_chunks));
    if (n_threads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!errors[i]) continue;
        const std::vector<SampleSet> done(parts.begin(), parts.begin() + static_cast<std::ptrdiff_t>(i));
        try {
            std::rethrow_exception(errors[i]);
        } catch (const SimulationStall& e) {
            throw RunFailure(e.what(), merge(done), true);
        } catch (const std::exception& e) {
            throw RunFailure(e.what(), merge(done), false);
        }
    }

    RunResult out;
    out.samples = merge(parts);
    out.report = key_rate(out.samples, cfg.f);
    for (auto& t : traces) out.trace += t;
    return out;
}

// ---- sweeps -------------------------------------------------------------

inline const std::vector<std::string>& sweep_axes() {
    static const std::vector<std::string> axes = {"distance", "t_cut", "n_links", "epp_steps",
                                                  "f_init",   "t_dp",  "p_link",  "n_mem"};
    return axes;
}

/// Applies one sweep coordinate to a copy of the template.
inline ScenarioConfig with_axis(ScenarioConfig cfg, const std::string& axis, const std::string& value) {
    if (axis == "distance") set_config_value(cfg, "scenario", "total_distance_km", value);
    else if (axis == "t_cut") set_config_value(cfg, "station", "t_cut_s", value);
    else if (axis == "n_links") set_config_value(cfg, "scenario", "n_links", value);
    else if (axis == "epp_steps") set_config_value(cfg, "protocol", "epp_steps", value);
    else if (axis == "f_init") set_config_value(cfg, "link", "f_init", value);
    else if (axis == "t_dp") set_config_value(cfg, "station", "t_dp_s", value);
    else if (axis == "p_link") set_config_value(cfg, "link", "p_link", value);
    else if (axis == "n_mem") set_config_value(cfg, "station", "n_mem", value);
    else throw ConfigError("unknown sweep axis '" + axis + "'");
    return cfg;
}

struct SweepRow {
    std::vector<std::string> coords;
    std::optional<KeyRateReport> report;  // empty when the point failed
    std::string error;
};

inline std::vector<SweepRow> sweep(const ScenarioConfig& base, const std::string& axis,
                                   const std::vector<std::string>& values, const std::string& axis2,
                                   const std::vector<std::string>& values2, int workers) {
    std::vector<SweepRow> rows;
    const std::vector<std::string> inner = axis2.empty() ? std::vector<std::string>{""} : values2;
    for (const auto& v : values) {
        for (const auto& v2 : inner) {
            SweepRow row;
            row.coords.push_back(v);
            if (!axis2.empty()) row.coords.push_back(v2);
            try {
                ScenarioConfig cfg = with_axis(base, axis, v);
                if (!axis2.empty()) cfg = with_axis(cfg, axis2, v2);
                row.report = run_scenario(cfg, workers).report;
            } catch (const std::exception& e) {
                row.error = e.what();
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

// ---- CSV ------------------------------------------------------------------

inline void write_provenance(std::ostream& os, std::uint64_t hash, std::uint64_t seed) {
    os << "# config_hash=" << hex64(hash) << "\n# seed=" << seed << "\n# version=" << kVersion << "\n";
}

inline void write_samples_csv(std::ostream& os, const SampleSet& s, std::uint64_t seed) {
    write_provenance(os, s.config_hash, seed);
    os << "index,completion_time_s,e_x,e_z,channel_uses\n";
    for (std::size_t i = 0; i < s.records.size(); ++i) {
        const auto& r = s.records[i];
        os << i << ',' << format_double(r.completion_time) << ',' << format_double(r.e_x) << ','
           << format_double(r.e_z) << ',' << r.channel_uses << '\n';
    }
}

inline void write_rates_header(std::ostream& os, std::uint64_t hash, std::uint64_t seed, int sweep_dims) {
    write_provenance(os, hash, seed);
    if (sweep_dims >= 1) os << "sweep_value,";
    if (sweep_dims >= 2) os << "sweep_value2,";
    os << "raw_rate_per_s,e_x_mean,e_z_mean,key_rate_per_s,key_rate_per_cu,se_key_rate\n";
}

inline void write_rates_row(std::ostream& os, const std::vector<std::string>& coords,
                            const std::optional<KeyRateReport>& r) {
    for (const auto& c : coords) os << c << ',';
    if (!r) {
        os << "nan,nan,nan,nan,nan,nan\n";
        return;
    }
    os << format_double(r->raw_rate_per_s) << ',' << format_double(r->e_x_mean) << ',' << format_double(r->e_z_mean)
       << ',' << format_double(r->key_rate_per_s) << ',' << format_double(r->key_rate_per_cu) << ','
       << format_double(r->se_key_rate_per_s) << '\n';
}

}  // namespace repchain
