#pragma once

// Scenario files: a small INI dialect.
//
//   # comment            ; comment
//   [section]            [section.N] overrides entry N of a per-link or per-station block
//   key = value
//
// Sections: scenario, link, link.N, station, station.N, protocol, output.
// Numbers accept `inf`. Unknown sections or keys are errors.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "repchain/network.hpp"
#include "repchain/protocols.hpp"
#include "repchain/world.hpp"

namespace repchain {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StationConfig {
    StationParams params;
    std::optional<double> t_cut_link_delays;  // cutoff as a multiple of the one-way link delay
};

using Overrides = std::map<int, std::vector<std::pair<std::string, std::string>>>;

struct ScenarioConfig {
    std::string name = "scenario";
    double total_distance_km = 0.0;
    int n_links = 2;
    std::int64_t samples = 1000;
    std::uint64_t seed = 1;
    double f = 1.0;
    std::int64_t chunk_size = 10000;
    LinkConfig link;
    Overrides link_overrides;
    StationConfig station;
    Overrides station_overrides;
    ProtocolSpec protocol;
    ChannelUseCounting cu_counting = ChannelUseCounting::All;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

inline std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace detail

inline double parse_double(const std::string& raw) {
    const std::string s = detail::lower(detail::trim(raw));
    if (s == "inf" || s == "+inf" || s == "infinity") return kInfinity;
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
        throw std::invalid_argument("not a number: '" + raw + "'");
    }
    return v;
}

inline std::int64_t parse_int(const std::string& raw) {
    const std::string s = detail::trim(raw);
    std::int64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
        throw std::invalid_argument("not an integer: '" + raw + "'");
    }
    return v;
}

inline std::uint64_t parse_uint(const std::string& raw) {
    const std::string s = detail::trim(raw);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
        throw std::invalid_argument("not an unsigned integer: '" + raw + "'");
    }
    return v;
}

inline int parse_small_int(const std::string& raw) {
    const std::int64_t v = parse_int(raw);
    if (v < -1'000'000 || v > 1'000'000) throw std::invalid_argument("integer out of range: '" + raw + "'");
    return static_cast<int>(v);
}

inline DarkCountModel parse_dark_count_model(const std::string& s) {
    if (s == "printed") return DarkCountModel::Printed;
    if (s == "two_detector") return DarkCountModel::TwoDetector;
    throw std::invalid_argument("unknown dark_count_model '" + s + "' (printed, two_detector)");
}

inline const char* to_string(DarkCountModel m) { return m == DarkCountModel::Printed ? "printed" : "two_detector"; }

inline ChannelUseCounting parse_cu_counting(const std::string& s) {
    if (s == "all") return ChannelUseCounting::All;
    if (s == "consumed") return ChannelUseCounting::Consumed;
    throw std::invalid_argument("unknown channel-use counting '" + s + "' (all, consumed)");
}

inline const char* to_string(ChannelUseCounting c) { return c == ChannelUseCounting::All ? "all" : "consumed"; }

inline void set_link_key(LinkConfig& c, const std::string& key, const std::string& value) {
    if (key == "p_link") c.p_link = parse_double(value);
    else if (key == "l_att_km") c.l_att_km = parse_double(value);
    else if (key == "f_init") c.f_init = parse_double(value);
    else if (key == "e_m") c.e_m = parse_double(value);
    else if (key == "t_p_s") c.t_p_s = parse_double(value);
    else if (key == "c_m_per_s") c.c_m_per_s = parse_double(value);
    else throw std::invalid_argument("unknown link key '" + key + "'");
}

inline void set_station_key(StationConfig& c, const std::string& key, const std::string& value) {
    if (key == "t_dp_s") c.params.t_dp_s = parse_double(value);
    else if (key == "lambda_bsm") c.params.lambda_bsm = parse_double(value);
    else if (key == "p_d") c.params.p_d = parse_double(value);
    else if (key == "t_cut_s") {
        c.params.t_cut_s = parse_double(value);
        c.t_cut_link_delays.reset();
    } else if (key == "t_cut_link_delays") c.t_cut_link_delays = parse_double(value);
    else if (key == "n_mem") c.params.n_mem = parse_small_int(value);
    else if (key == "dark_count_model") c.params.dark_count_model = parse_dark_count_model(value);
    else throw std::invalid_argument("unknown station key '" + key + "'");
}

/// Sets one key. `section` may carry an index suffix for link and station
/// overrides, e.g. "station.0".
inline void set_config_value(ScenarioConfig& cfg, const std::string& section, const std::string& key,
                             const std::string& value) {
    auto indexed = [&](const std::string& prefix) -> std::optional<int> {
        if (section.rfind(prefix + ".", 0) != 0) return std::nullopt;
        const int idx = parse_small_int(section.substr(prefix.size() + 1));
        if (idx < 0) throw std::invalid_argument("negative index in section [" + section + "]");
        return idx;
    };
    if (section == "scenario") {
        if (key == "name") cfg.name = value;
        else if (key == "total_distance_km") cfg.total_distance_km = parse_double(value);
        else if (key == "n_links") cfg.n_links = parse_small_int(value);
        else if (key == "samples") cfg.samples = parse_int(value);
        else if (key == "seed") cfg.seed = parse_uint(value);
        else if (key == "f") cfg.f = parse_double(value);
        else if (key == "chunk_size") cfg.chunk_size = parse_int(value);
        else throw std::invalid_argument("unknown scenario key '" + key + "'");
    } else if (section == "link") {
        set_link_key(cfg.link, key, value);
    } else if (section == "station") {
        set_station_key(cfg.station, key, value);
    } else if (section == "protocol") {
        if (key == "kind") cfg.protocol.kind = parse_protocol_kind(value);
        else if (key == "epp_steps") cfg.protocol.epp_steps = parse_small_int(value);
        else throw std::invalid_argument("unknown protocol key '" + key + "'");
    } else if (section == "output") {
        if (key == "cu_counting") cfg.cu_counting = parse_cu_counting(value);
        else throw std::invalid_argument("unknown output key '" + key + "'");
    } else if (auto i = indexed("link")) {
        LinkConfig probe;
        set_link_key(probe, key, value);
        cfg.link_overrides[*i].emplace_back(key, value);
    } else if (auto j = indexed("station")) {
        StationConfig probe;
        set_station_key(probe, key, value);
        cfg.station_overrides[*j].emplace_back(key, value);
    } else {
        throw std::invalid_argument("unknown section [" + section + "]");
    }
}

/// Fully resolved chain: per-station and per-link parameters.
struct ChainLayout {
    std::vector<Station> stations;
    std::vector<LinkModel> links;
    WorldOptions options;
};

inline double link_length_km(const ScenarioConfig& cfg) { return cfg.total_distance_km / cfg.n_links; }

inline LinkConfig link_config(const ScenarioConfig& cfg, int l) {
    LinkConfig c = cfg.link;
    if (auto it = cfg.link_overrides.find(l); it != cfg.link_overrides.end())
        for (const auto& [k, v] : it->second) set_link_key(c, k, v);
    return c;
}

inline StationConfig station_config(const ScenarioConfig& cfg, int i) {
    StationConfig c = cfg.station;
    if (auto it = cfg.station_overrides.find(i); it != cfg.station_overrides.end())
        for (const auto& [k, v] : it->second) set_station_key(c, k, v);
    return c;
}

/// Stations sit at equal spacing. Each link's source is at its odd-indexed
/// end; the other end receives the photon.
inline ChainLayout build_layout(const ScenarioConfig& cfg) {
    ChainLayout out;
    const int n = cfg.n_links;
    const double d = link_length_km(cfg);
    out.options.final_round = cfg.protocol.epp_steps;
    out.options.cu_counting = cfg.cu_counting;
    out.options.c_m_per_s = cfg.link.c_m_per_s;
    for (int i = 0; i <= n; ++i) {
        const StationConfig sc = station_config(cfg, i);
        Station s;
        s.id = i;
        s.position_km = i * d;
        s.params = sc.params;
        s.terminal = i == 0 || i == n;
        if (sc.t_cut_link_delays) {
            // Per-link delay of an adjacent link; all links share the spacing.
            const int l = i < n ? i : i - 1;
            s.params.t_cut_s = *sc.t_cut_link_delays * classical_delay(d, link_config(cfg, l).c_m_per_s);
        }
        out.stations.push_back(s);
    }
    for (int l = 0; l < n; ++l) {
        LinkModel m;
        m.length_km = d;
        m.cfg = link_config(cfg, l);
        const bool source_left = l % 2 == 1;
        const Station& src = out.stations[source_left ? l : l + 1];
        const Station& rcv = out.stations[source_left ? l + 1 : l];
        m.source_qubit = source_left ? Qubit::A : Qubit::B;
        m.source_t_dp = src.params.t_dp_s;
        m.receiver_t_dp = rcv.params.t_dp_s;
        m.source_stores = !(src.terminal && cfg.protocol.epp_steps == 0);
        m.receiver_stores = !(rcv.terminal && cfg.protocol.epp_steps == 0);
        m.receiver_p_d = rcv.params.p_d;
        m.dark_count_model = rcv.params.dark_count_model;
        m.finalize();
        out.links.push_back(m);
    }
    return out;
}

/// Every invariant violation, named by field.
inline std::vector<std::string> validate(const ScenarioConfig& cfg) {
    std::vector<std::string> out;
    auto add = [&](const std::vector<std::string>& v) { out.insert(out.end(), v.begin(), v.end()); };
    if (!(cfg.total_distance_km >= 0.0) || !std::isfinite(cfg.total_distance_km))
        out.push_back("scenario.total_distance_km must be finite and >= 0");
    if (cfg.n_links < 1) out.push_back("scenario.n_links must be >= 1");
    if (cfg.samples < 1) out.push_back("scenario.samples must be >= 1");
    if (!(cfg.f >= 1.0) || !std::isfinite(cfg.f)) out.push_back("scenario.f must be finite and >= 1");
    if (cfg.chunk_size < 1) out.push_back("scenario.chunk_size must be >= 1");
    if (cfg.n_links < 1) return out;

    add(cfg.link.violations("link"));
    add(cfg.station.params.violations("station"));
    bool finite_cut = false;
    int min_mem = cfg.station.params.n_mem;
    for (const auto& [i, kv] : cfg.link_overrides)
        if (i >= cfg.n_links) out.push_back("link." + std::to_string(i) + " is beyond the last link");
    for (const auto& [i, kv] : cfg.station_overrides)
        if (i > cfg.n_links) out.push_back("station." + std::to_string(i) + " is beyond the last station");
    for (int l = 0; l < cfg.n_links; ++l) {
        if (cfg.link_overrides.count(l)) add(link_config(cfg, l).violations("link." + std::to_string(l)));
    }
    for (int i = 0; i <= cfg.n_links; ++i) {
        const StationConfig sc = station_config(cfg, i);
        if (cfg.station_overrides.count(i)) add(sc.params.violations("station." + std::to_string(i)));
        if (sc.t_cut_link_delays && !(*sc.t_cut_link_delays >= 0.0))
            out.push_back("station" + (cfg.station_overrides.count(i) ? "." + std::to_string(i) : std::string()) +
                          ".t_cut_link_delays must be >= 0 or inf");
        if (std::isfinite(sc.params.t_cut_s) || (sc.t_cut_link_delays && std::isfinite(*sc.t_cut_link_delays)))
            finite_cut = true;
        min_mem = std::min(min_mem, sc.params.n_mem);
    }
    add(cfg.protocol.violations(cfg.n_links, min_mem, finite_cut));
    if (!out.empty()) return out;

    try {
        const ChainLayout layout = build_layout(cfg);
        for (const auto& l : layout.links) {
            if (!(l.t_trial > 0.0)) {
                out.push_back("trial time is zero: set scenario.total_distance_km > 0 or link.t_p_s > 0");
                break;
            }
        }
    } catch (const std::exception& e) {
        out.push_back(e.what());
    }
    return out;
}

inline void throw_if_invalid(const ScenarioConfig& cfg) {
    const auto v = validate(cfg);
    if (v.empty()) return;
    std::string msg = "invalid scenario '" + cfg.name + "':";
    for (const auto& s : v) msg += "\n  " + s;
    throw ConfigError(msg);
}

inline ScenarioConfig parse_config(std::string_view text, const std::string& source = "<string>") {
    ScenarioConfig cfg;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
        std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where() + "unterminated section header");
            section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            if (section.empty()) throw ConfigError(where() + "empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where() + "expected 'key = value'");
        std::string key = detail::trim(std::string_view(line).substr(0, eq));
        std::string value = detail::trim(std::string_view(line).substr(eq + 1));
        if (const auto hash = value.find(" #"); hash != std::string::npos) value = detail::trim(value.substr(0, hash));
        if (key.empty()) throw ConfigError(where() + "missing key");
        if (section.empty()) throw ConfigError(where() + "key outside of a section");
        try {
            set_config_value(cfg, section, key, value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(where() + e.what());
        }
    }
    throw_if_invalid(cfg);
    return cfg;
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), path);
}

/// Canonical text form. Seed, sample count and chunking are run controls and
/// are left out so that runs of one scenario share a hash.
inline std::string canonical_form(const ScenarioConfig& cfg) {
    std::ostringstream os;
    auto num = [](double v) { return format_double(v); };
    os << "[scenario]\nname=" << cfg.name << "\ntotal_distance_km=" << num(cfg.total_distance_km)
       << "\nn_links=" << cfg.n_links << "\nf=" << num(cfg.f) << "\n";
    const LinkConfig& l = cfg.link;
    os << "[link]\np_link=" << num(l.p_link) << "\nl_att_km=" << num(l.l_att_km) << "\nf_init=" << num(l.f_init)
       << "\ne_m=" << num(l.e_m) << "\nt_p_s=" << num(l.t_p_s) << "\nc_m_per_s=" << num(l.c_m_per_s) << "\n";
    for (const auto& [i, kv] : cfg.link_overrides) {
        os << "[link." << i << "]\n";
        for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
    }
    const StationParams& s = cfg.station.params;
    os << "[station]\nt_dp_s=" << num(s.t_dp_s) << "\nlambda_bsm=" << num(s.lambda_bsm) << "\np_d=" << num(s.p_d)
       << "\nt_cut_s=" << num(s.t_cut_s) << "\nn_mem=" << s.n_mem << "\ndark_count_model=" << to_string(s.dark_count_model)
       << "\n";
    if (cfg.station.t_cut_link_delays) os << "t_cut_link_delays=" << num(*cfg.station.t_cut_link_delays) << "\n";
    for (const auto& [i, kv] : cfg.station_overrides) {
        os << "[station." << i << "]\n";
        for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
    }
    os << "[protocol]\nkind=" << to_string(cfg.protocol.kind) << "\nepp_steps=" << cfg.protocol.epp_steps << "\n";
    os << "[output]\ncu_counting=" << to_string(cfg.cu_counting) << "\n";
    return os.str();
}

/// 64-bit FNV-1a of the canonical form.
inline std::uint64_t config_hash(const ScenarioConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_form(cfg)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    for (int i = 15; i >= 0; --i) {
        buf[i] = "0123456789abcdef"[v & 0xf];
        v >>= 4;
    }
    buf[16] = '\0';
    return buf;
}

}  // namespace repchain
