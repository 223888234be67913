#pragma once

// Link-level physics: fibre loss, trial timing, geometric trial sampling and
// the state of a freshly confirmed elementary pair.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "repchain/quantum.hpp"
#include "repchain/random.hpp"

namespace repchain {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Per-link generation parameters. Lengths in km, times in s, speed in m/s.
struct LinkConfig {
    double p_link = 1.0;
    double l_att_km = 22.0;
    double f_init = 1.0;
    double e_m = 0.0;
    double t_p_s = 0.0;
    double c_m_per_s = 2e8;

    std::vector<std::string> violations(const std::string& prefix = "link") const {
        std::vector<std::string> out;
        auto prob = [&](double v, const char* name) {
            if (!(v >= 0.0 && v <= 1.0)) out.push_back(prefix + "." + name + " must lie in [0, 1]");
        };
        prob(p_link, "p_link");
        prob(f_init, "f_init");
        prob(e_m, "e_m");
        if (!(l_att_km > 0.0)) out.push_back(prefix + ".l_att_km must be positive");
        if (!(t_p_s >= 0.0) || !std::isfinite(t_p_s)) out.push_back(prefix + ".t_p_s must be finite and >= 0");
        if (!(c_m_per_s > 0.0) || !std::isfinite(c_m_per_s)) out.push_back(prefix + ".c_m_per_s must be positive");
        return out;
    }
};

inline double channel_efficiency(double l_km, double l_att_km) {
    if (l_km < 0.0) throw std::invalid_argument("channel_efficiency: negative length");
    return std::exp(-l_km / l_att_km);
}

inline double link_success_prob(const LinkConfig& cfg, double l_km) {
    return cfg.p_link * channel_efficiency(l_km, cfg.l_att_km);
}

/// Preparation plus the photon's trip and the confirmation's return.
inline double trial_time(double d_km, double t_p_s, double c_m_per_s) {
    if (d_km < 0.0) throw std::invalid_argument("trial_time: negative distance");
    return t_p_s + 2.0 * d_km * 1e3 / c_m_per_s;
}

inline double classical_delay(double d_km, double c_m_per_s) {
    if (d_km < 0.0) throw std::invalid_argument("classical_delay: negative distance");
    return d_km * 1e3 / c_m_per_s;
}

/// Trials until the first success, support {1, 2, ...}.
inline std::int64_t sample_trials(double eta_eff, Rng& rng) {
    if (!(eta_eff > 0.0) || eta_eff > 1.0) {
        throw std::invalid_argument("sample_trials: eta_eff must lie in (0, 1]");
    }
    return rng.geometric(eta_eff);
}

/// Everything needed to generate pairs on one link, with derived quantities
/// precomputed.
struct LinkModel {
    double length_km = 0.0;
    LinkConfig cfg;
    Qubit source_qubit = Qubit::A;  // end of the pair that sits at the source station
    double source_t_dp = kInfinity;
    double receiver_t_dp = kInfinity;
    bool source_stores = true;    // source-side qubit held in memory while awaiting confirmation
    bool receiver_stores = true;  // receiver-side qubit held in memory after arrival
    double receiver_p_d = 0.0;
    DarkCountModel dark_count_model = DarkCountModel::Printed;

    double eta = 1.0;
    double eta_eff = 1.0;
    double alpha = 1.0;
    double t_trial = 0.0;

    void finalize() {
        eta = link_success_prob(cfg, length_km);
        const auto dc = dark_count_parameters(eta, receiver_p_d, dark_count_model);
        eta_eff = dc.eta_eff;
        alpha = dc.alpha;
        t_trial = trial_time(length_km, cfg.t_p_s, cfg.c_m_per_s);
    }

    Qubit receiver_qubit() const { return source_qubit == Qubit::A ? Qubit::B : Qubit::A; }
};

/// State of a pair at the moment its confirmation reaches the source.
inline TwoQubitState confirmed_link_state(const LinkModel& link) {
    const Qubit travelling = link.receiver_qubit();
    TwoQubitState s = make_initial_state(link.cfg.f_init);
    s = apply_misalignment(s, travelling, link.cfg.e_m);
    s = apply_dark_count_mix(s, travelling, link.alpha);
    if (link.source_stores) {
        s = apply_dephasing(s, link.source_qubit, link.t_trial, link.source_t_dp);
    }
    if (link.receiver_stores) {
        s = apply_dephasing(s, travelling, 0.5 * link.t_trial, link.receiver_t_dp);
    }
    return s;
}

/// Trials run on a clock of period `t_trial`. An attempt that starts on a
/// clock tick (up to rounding) finishes exactly on tick m + k, so links with
/// equal trial times confirm in the same window with identical timestamps.
inline double clocked_ready_time(double start, std::int64_t k, double t_trial) {
    if (t_trial > 0.0) {
        const double m = std::round(start / t_trial);
        if (std::abs(start - m * t_trial) <= 1e-9 * std::max(start, t_trial)) {
            return (m + static_cast<double>(k)) * t_trial;
        }
    }
    return start + static_cast<double>(k) * t_trial;
}

struct GeneratedPair {
    double ready_time = 0.0;
    TwoQubitState state;
    std::int64_t trials = 0;
};

/// Samples how many trials an attempt starting at `start` needs and returns
/// the confirmed pair. Failed trials leave no trace in the state.
inline GeneratedPair generate_link_pair(const LinkModel& link, double start, Rng& rng) {
    GeneratedPair out;
    out.trials = sample_trials(link.eta_eff, rng);
    out.ready_time = clocked_ready_time(start, out.trials, link.t_trial);
    out.state = confirmed_link_state(link);
    return out;
}

/// Outcome of repeating trials on `n` parallel channels in lock step until at
/// least one channel succeeds.
struct BatchOutcome {
    std::int64_t batches = 0;
    std::vector<int> successful_slots;  // ascending
};

inline double batch_success_prob(int n, double eta_eff) {
    if (n == 1) return eta_eff;
    return -std::expm1(static_cast<double>(n) * std::log1p(-eta_eff));
}

inline BatchOutcome sample_batch(int n, double eta_eff, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_batch: need at least one channel");
    BatchOutcome out;
    const double p_batch = batch_success_prob(n, eta_eff);
    out.batches = rng.geometric(p_batch);
    // First successful slot, conditioned on at least one success.
    int first = 0;
    if (n > 1 && eta_eff < 1.0) {
        const double u = rng.uniform();
        const double j = std::ceil(std::log1p(-u * p_batch) / std::log1p(-eta_eff));
        first = static_cast<int>(std::clamp(j, 1.0, static_cast<double>(n))) - 1;
    }
    out.successful_slots.push_back(first);
    for (int slot = first + 1; slot < n; ++slot) {
        if (rng.bernoulli(eta_eff)) out.successful_slots.push_back(slot);
    }
    return out;
}

}  // namespace repchain
