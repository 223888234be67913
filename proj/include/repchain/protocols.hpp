#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "repchain/network.hpp"
#include "repchain/world.hpp"

namespace repchain {

enum class ProtocolKind { TwoLinkSequential, TwoLinkSimultaneous, MultiLinkSwapAsap, MultiMemoryBatch };

inline const char* to_string(ProtocolKind k) {
    switch (k) {
        case ProtocolKind::TwoLinkSequential: return "two_link_sequential";
        case ProtocolKind::TwoLinkSimultaneous: return "two_link_simultaneous";
        case ProtocolKind::MultiLinkSwapAsap: return "multi_link_swap_asap";
        case ProtocolKind::MultiMemoryBatch: return "multi_memory_batch";
    }
    return "?";
}

inline ProtocolKind parse_protocol_kind(const std::string& s) {
    for (auto k : {ProtocolKind::TwoLinkSequential, ProtocolKind::TwoLinkSimultaneous, ProtocolKind::MultiLinkSwapAsap,
                   ProtocolKind::MultiMemoryBatch}) {
        if (s == to_string(k)) return k;
    }
    throw std::invalid_argument("unknown protocol kind '" + s + "'");
}

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

struct ProtocolSpec {
    ProtocolKind kind = ProtocolKind::MultiLinkSwapAsap;
    int epp_steps = 0;

    /// Checks the strategy against the chain it will drive.
    std::vector<std::string> violations(int n_links, int min_n_mem, bool finite_cutoff) const {
        std::vector<std::string> out;
        const bool two_link = kind == ProtocolKind::TwoLinkSequential || kind == ProtocolKind::TwoLinkSimultaneous;
        if (two_link || kind == ProtocolKind::MultiMemoryBatch) {
            if (n_links != 2) out.push_back("protocol." + std::string(to_string(kind)) + " needs n_links = 2");
        } else if (!is_power_of_two(n_links)) {
            out.push_back("scenario.n_links must be a power of two");
        }
        if (epp_steps < 0) {
            out.push_back("protocol.epp_steps must be >= 0");
        } else if (two_link && epp_steps > 2) {
            out.push_back("protocol.epp_steps must be 0, 1 or 2 for two-link protocols");
        } else if (kind == ProtocolKind::MultiLinkSwapAsap && epp_steps > 1) {
            out.push_back("protocol.epp_steps must be 0 or 1 for multi-link protocols");
        } else if (kind == ProtocolKind::MultiMemoryBatch && epp_steps != 0) {
            out.push_back("protocol.epp_steps must be 0 for the batch protocol");
        }
        if (epp_steps >= 0 && epp_steps < 16 && min_n_mem < (1 << epp_steps)) {
            out.push_back("station.n_mem must be >= 2^epp_steps = " + std::to_string(1 << epp_steps));
        }
        if (kind == ProtocolKind::MultiMemoryBatch && finite_cutoff) {
            out.push_back("protocol.multi_memory_batch does not support a cutoff time");
        }
        return out;
    }
};

class Protocol {
public:
    virtual ~Protocol() = default;
    virtual void check(World& world, SimQueue& queue) = 0;
};

/// Swap-as-soon-as-possible chain with optional purification of the
/// elementary pairs. With two links and `sequential` set, the second link
/// only generates while the first holds a finished pair.
class ChainProtocol : public Protocol {
public:
    ChainProtocol(int epp_steps, bool sequential) : epp_steps_(epp_steps), sequential_(sequential) {}

    void check(World& w, SimQueue& q) override {
        w.schedule_ready_deliveries(q);
        generate(w, q);
        purify(w, q);
        swap(w, q);
    }

private:
    bool first_link_ready(const World& w) const {
        for (const auto& [id, p] : w.pairs()) {
            if (p.ends[0].station == 0 && p.ends[1].station == 1 && p.round == epp_steps_ && p.eligible && !p.doomed) {
                return true;
            }
        }
        return false;
    }

    void generate(World& w, SimQueue& q) {
        for (int l = 0; l < w.n_links(); ++l) {
            if (sequential_ && l == 1 && !first_link_ready(w)) {
                w.abort_attempts(1, q);
                continue;
            }
            while (w.can_start_attempt(l)) w.start_attempt(l, q);
        }
    }

    void purify(World& w, SimQueue& q) {
        for (int l = 0; l < w.n_links(); ++l) {
            for (int r = 0; r < epp_steps_; ++r) {
                const auto c = w.link_pairs(l, r);
                for (std::size_t i = 0; i + 1 < c.size(); i += 2) w.schedule_purification(c[i], c[i + 1], q);
            }
        }
    }

    void swap(World& w, SimQueue& q) {
        for (int j = 1; j < w.n_links(); ++j) {
            for (;;) {
                const auto left = w.swap_candidates(j, Side::Left);
                const auto right = w.swap_candidates(j, Side::Right);
                if (left.empty() || right.empty()) break;
                w.schedule_swap(j, left.front(), right.front(), q);
            }
        }
    }

    int epp_steps_;
    bool sequential_;
};

/// Two links with n parallel channels each. All channels of a link fire in
/// lock step until at least one succeeds; the first link goes first, then the
/// second. Successes are paired by ascending slot and swapped, leftovers are
/// discarded, and the cycle restarts.
class BatchProtocol : public Protocol {
public:
    void check(World& w, SimQueue& q) override {
        w.schedule_ready_deliveries(q);
        for (;;) {
            switch (phase_) {
                case Phase::Idle:
                    start_batch(w, 0, q);
                    phase_ = Phase::First;
                    return;
                case Phase::First:
                    if (w.attempts_in_flight(0) > 0) return;
                    start_batch(w, 1, q);
                    phase_ = Phase::Second;
                    return;
                case Phase::Second: {
                    if (w.attempts_in_flight(1) > 0) return;
                    const auto left = w.link_pairs(0, 0);
                    const auto right = w.link_pairs(1, 0);
                    const std::size_t n = std::min(left.size(), right.size());
                    for (std::size_t i = 0; i < n; ++i) w.schedule_swap(1, left[i], right[i], q);
                    for (std::size_t i = n; i < left.size(); ++i) w.schedule_discard_now(left[i], q);
                    for (std::size_t i = n; i < right.size(); ++i) w.schedule_discard_now(right[i], q);
                    phase_ = Phase::Pairing;
                    return;
                }
                case Phase::Pairing:
                    for (const auto& [id, p] : w.pairs()) {
                        if (!w.spans_chain(p)) return;
                    }
                    phase_ = Phase::Idle;
                    break;
            }
        }
    }

private:
    enum class Phase { Idle, First, Second, Pairing };

    void start_batch(World& w, int l, SimQueue& q) {
        const LinkModel& lm = w.link(l);
        const int n = w.station(l).params.n_mem;
        if (w.station(l + 1).params.n_mem != n) throw std::logic_error("batch protocol: unequal memory counts on a link");
        const BatchOutcome b = sample_batch(n, lm.eta_eff, w.rng());
        const double ready = clocked_ready_time(w.now(), b.batches, lm.t_trial);
        for (int slot : b.successful_slots) w.schedule_link_success(l, {slot, slot}, ready, b.batches, q);
        w.add_trials(static_cast<std::int64_t>(n - static_cast<int>(b.successful_slots.size())) * b.batches);
    }

    Phase phase_ = Phase::Idle;
};

inline std::unique_ptr<Protocol> make_protocol(const ProtocolSpec& spec) {
    switch (spec.kind) {
        case ProtocolKind::TwoLinkSequential: return std::make_unique<ChainProtocol>(spec.epp_steps, true);
        case ProtocolKind::TwoLinkSimultaneous:
        case ProtocolKind::MultiLinkSwapAsap: return std::make_unique<ChainProtocol>(spec.epp_steps, false);
        case ProtocolKind::MultiMemoryBatch: return std::make_unique<BatchProtocol>();
    }
    throw std::invalid_argument("unknown protocol kind");
}

}  // namespace repchain
