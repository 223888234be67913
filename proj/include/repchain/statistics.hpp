#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "repchain/quantum.hpp"

namespace repchain {

/// One delivered end-to-end connection.
struct DeliveryRecord {
    double completion_time = 0.0;  // s, when both end stations hold the classical information
    double e_x = 0.0;
    double e_z = 0.0;
    BellCoeffs coeffs;
    std::int64_t channel_uses = 0;
    std::vector<std::int64_t> trials_per_link;
};

/// Time-ordered deliveries from one or more runs of the same scenario.
struct SampleSet {
    std::vector<DeliveryRecord> records;
    double total_sim_time = 0.0;
    std::int64_t total_channel_uses = 0;
    std::uint64_t config_hash = 0;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
};

inline double binary_entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binary_entropy: p must lie in [0, 1]");
    if (p == 0.0 || p == 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

namespace detail {

inline double binary_entropy_slope(double p) {
    const double q = std::clamp(p, 1e-15, 1.0 - 1e-15);
    return std::log2((1.0 - q) / q);
}

}  // namespace detail

/// Asymptotic key-rate estimate. Standard errors come from the delta method
/// with the full sample covariance of (interval or channel uses, e_x, e_z).
struct KeyRateReport {
    std::size_t samples = 0;
    double raw_rate_per_s = 0.0;
    double se_raw_rate_per_s = 0.0;
    double raw_rate_per_cu = 0.0;
    double se_raw_rate_per_cu = 0.0;
    double e_x_mean = 0.0;
    double se_e_x = 0.0;
    double e_z_mean = 0.0;
    double se_e_z = 0.0;
    double key_fraction = 0.0;  // 1 - h(e_x) - f h(e_z), unclamped
    bool clamped = false;       // key_fraction < 0, rates reported as zero
    double key_rate_per_s = 0.0;
    double se_key_rate_per_s = 0.0;
    double key_rate_per_cu = 0.0;
    double se_key_rate_per_cu = 0.0;
};

enum class RateBasis { PerTime, PerChannelUse };

inline double key_rate_value(const KeyRateReport& r, RateBasis basis) {
    return basis == RateBasis::PerTime ? r.key_rate_per_s : r.key_rate_per_cu;
}

inline KeyRateReport key_rate(const SampleSet& samples, double f) {
    if (!(f >= 1.0)) throw std::invalid_argument("key_rate: error-correction inefficiency must be >= 1");
    if (samples.empty()) throw std::invalid_argument("key_rate: empty sample set");

    const std::size_t n = samples.size();
    const double dn = static_cast<double>(n);
    std::vector<double> tau(n), uses(n);
    double prev = 0.0;
    double m_ex = 0.0, m_ez = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = samples.records[i];
        tau[i] = r.completion_time - prev;
        prev = r.completion_time;
        uses[i] = static_cast<double>(r.channel_uses);
        m_ex += r.e_x;
        m_ez += r.e_z;
    }
    m_ex /= dn;
    m_ez /= dn;
    const double m_tau = samples.total_sim_time / dn;
    const double m_uses = static_cast<double>(samples.total_channel_uses) / dn;

    KeyRateReport out;
    out.samples = n;
    out.e_x_mean = m_ex;
    out.e_z_mean = m_ez;
    out.raw_rate_per_s = m_tau > 0.0 ? 1.0 / m_tau : std::numeric_limits<double>::infinity();
    out.raw_rate_per_cu = m_uses > 0.0 ? 1.0 / m_uses : std::numeric_limits<double>::infinity();
    out.key_fraction = 1.0 - binary_entropy(std::clamp(m_ex, 0.0, 1.0)) - f * binary_entropy(std::clamp(m_ez, 0.0, 1.0));
    out.clamped = out.key_fraction < 0.0;
    const double g = std::max(0.0, out.key_fraction);
    out.key_rate_per_s = out.raw_rate_per_s * g;
    out.key_rate_per_cu = out.raw_rate_per_cu * g;

    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (n < 2) {
        out.se_raw_rate_per_s = out.se_raw_rate_per_cu = out.se_e_x = out.se_e_z = nan;
        out.se_key_rate_per_s = out.se_key_rate_per_cu = nan;
        return out;
    }

    // Sample covariance of (denominator, e_x, e_z).
    auto covariance = [&](const std::vector<double>& d, double md) {
        double c[3][3] = {};
        for (std::size_t i = 0; i < n; ++i) {
            const double v[3] = {d[i] - md, samples.records[i].e_x - m_ex, samples.records[i].e_z - m_ez};
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) c[a][b] += v[a] * v[b];
        }
        std::array<std::array<double, 3>, 3> out_c{};
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) out_c[a][b] = c[a][b] / (dn - 1.0);
        return out_c;
    };
    auto delta_se = [&](const std::array<std::array<double, 3>, 3>& c, double md) {
        const double grad[3] = {-out.key_fraction / (md * md), -detail::binary_entropy_slope(m_ex) / md,
                                -f * detail::binary_entropy_slope(m_ez) / md};
        double var = 0.0;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                if (c[a][b] != 0.0) var += grad[a] * c[a][b] * grad[b];
        return std::sqrt(std::max(0.0, var) / dn);
    };

    const auto c_time = covariance(tau, m_tau);
    const auto c_uses = covariance(uses, m_uses);
    out.se_e_x = std::sqrt(c_time[1][1] / dn);
    out.se_e_z = std::sqrt(c_time[2][2] / dn);
    out.se_raw_rate_per_s = std::sqrt(c_time[0][0] / dn) / (m_tau * m_tau);
    out.se_raw_rate_per_cu = std::sqrt(c_uses[0][0] / dn) / (m_uses * m_uses);
    out.se_key_rate_per_s = delta_se(c_time, m_tau);
    out.se_key_rate_per_cu = delta_se(c_uses, m_uses);
    return out;
}

/// Concatenates independent runs of one scenario, shifting completion times
/// so the merged record stream stays time-ordered.
inline SampleSet merge(const std::vector<SampleSet>& sets) {
    SampleSet out;
    bool have_hash = false;
    for (const auto& s : sets) {
        if (s.empty() && s.total_sim_time == 0.0) continue;
        if (!have_hash) {
            out.config_hash = s.config_hash;
            have_hash = true;
        } else if (s.config_hash != out.config_hash) {
            throw std::invalid_argument("merge: sample sets come from different scenarios");
        }
        const double offset = out.total_sim_time;
        for (auto r : s.records) {
            r.completion_time += offset;
            out.records.push_back(std::move(r));
        }
        out.total_sim_time += s.total_sim_time;
        out.total_channel_uses += s.total_channel_uses;
    }
    return out;
}

}  // namespace repchain
