#pragma once

// Simulation state of one repeater chain: stations with memory slots, the
// live entangled pairs and the resolution rules for every event kind.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "repchain/events.hpp"
#include "repchain/network.hpp"
#include "repchain/quantum.hpp"
#include "repchain/random.hpp"
#include "repchain/statistics.hpp"

namespace repchain {

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

using PairId = std::uint64_t;

enum class EventKind { SourceSuccess, EntanglementSwap, Purification, Discard, Availability };

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::SourceSuccess: return "SourceSuccess";
        case EventKind::EntanglementSwap: return "EntanglementSwap";
        case EventKind::Purification: return "Purification";
        case EventKind::Discard: return "Discard";
        case EventKind::Availability: return "Availability";
    }
    return "?";
}

enum class AvailabilityKind { Eligible, Delivery };

enum class ChannelUseCounting {
    All,       // every trial on every link, including discarded and aborted attempts
    Consumed,  // only the trials that went into the delivered pair
};

struct SimEvent {
    EventKind kind = EventKind::Availability;
    std::vector<int> stations;
    std::vector<PairId> pairs;
    AvailabilityKind availability = AvailabilityKind::Eligible;
    // SourceSuccess only.
    int link = -1;
    std::array<int, 2> slots{-1, -1};
    std::int64_t trials = 0;
    std::optional<TwoQubitState> state;
};

using SimQueue = EventQueue<SimEvent>;

struct StationParams {
    double t_dp_s = kInfinity;
    double lambda_bsm = 1.0;
    double p_d = 0.0;
    double t_cut_s = kInfinity;
    int n_mem = 1;
    DarkCountModel dark_count_model = DarkCountModel::Printed;

    std::vector<std::string> violations(const std::string& prefix = "station") const {
        std::vector<std::string> out;
        if (!(t_dp_s > 0.0)) out.push_back(prefix + ".t_dp_s must be positive");
        if (!(lambda_bsm >= 0.0 && lambda_bsm <= 1.0)) out.push_back(prefix + ".lambda_bsm must lie in [0, 1]");
        if (!(p_d >= 0.0 && p_d <= 1.0)) out.push_back(prefix + ".p_d must lie in [0, 1]");
        if (!(t_cut_s >= 0.0)) out.push_back(prefix + ".t_cut_s must be >= 0 or inf");
        if (n_mem < 1) out.push_back(prefix + ".n_mem must be >= 1");
        return out;
    }
};

struct Station {
    int id = 0;
    double position_km = 0.0;
    StationParams params;
    bool terminal = false;  // end node of the chain: measures its qubits once the pair is final
};

enum class Side { Left = 0, Right = 1 };

struct QubitEnd {
    int station = 0;
    int slot = -1;  // -1 once measured
    double created_at = 0.0;
    double last_update = 0.0;
    bool measured = false;
};

struct InfoSource {
    double time;
    double position_km;
};

struct Pair {
    PairId id = 0;
    TwoQubitState state;
    std::array<QubitEnd, 2> ends;  // A at the left station, B at the right station
    int round = 0;                 // completed purification rounds
    bool eligible = true;
    bool busy = false;
    bool doomed = false;
    bool delivery_scheduled = false;
    bool discard_requested = false;
    std::int64_t trials = 0;
    std::vector<std::int64_t> trials_per_link;
    double known_floor = 0.0;
    std::vector<InfoSource> sources;
    EventId discard_event = kNoEvent;
    EventId pending_event = kNoEvent;

    bool in_memory(int end) const { return !ends[end].measured; }
};

struct ResolutionReport {
    std::vector<PairId> created;
    std::vector<PairId> consumed;
};

struct ConservationAudit {
    std::uint64_t created = 0;
    std::uint64_t swapped = 0;
    std::uint64_t purified = 0;
    std::uint64_t discarded = 0;
    std::uint64_t delivered = 0;
    std::uint64_t live = 0;

    bool balanced() const { return created == swapped + purified + discarded + delivered + live; }
};

struct WorldOptions {
    int final_round = 0;
    ChannelUseCounting cu_counting = ChannelUseCounting::All;
    double c_m_per_s = 2e8;
};

class World {
public:
    World(std::vector<Station> stations, std::vector<LinkModel> links, WorldOptions options, Rng& rng)
        : stations_(std::move(stations)), links_(std::move(links)), opt_(options), rng_(&rng) {
        if (stations_.size() != links_.size() + 1) throw std::invalid_argument("World: need one more station than links");
        if (links_.empty()) throw std::invalid_argument("World: need at least one link");
        slots_.resize(stations_.size());
        for (std::size_t i = 0; i < stations_.size(); ++i) {
            const int n = stations_[i].params.n_mem;
            if (i > 0) slots_[i][0].assign(n, SlotState::Free);
            if (i + 1 < stations_.size()) slots_[i][1].assign(n, SlotState::Free);
        }
    }

    int n_links() const { return static_cast<int>(links_.size()); }
    int n_stations() const { return static_cast<int>(stations_.size()); }
    const Station& station(int i) const { return stations_.at(i); }
    const LinkModel& link(int l) const { return links_.at(l); }
    const WorldOptions& options() const { return opt_; }
    double now() const { return now_; }
    Rng& rng() { return *rng_; }

    const std::map<PairId, Pair>& pairs() const { return pairs_; }
    const Pair& pair(PairId id) const { return pairs_.at(id); }
    bool has_pair(PairId id) const { return pairs_.count(id) > 0; }

    const std::vector<DeliveryRecord>& records() const { return records_; }
    std::int64_t total_trials() const { return total_trials_; }
    double max_storage_time() const { return max_storage_; }
    ConservationAudit audit() const {
        ConservationAudit a = audit_;
        a.live = pairs_.size();
        return a;
    }

    // ---- memory -----------------------------------------------------------

    int free_slots(int station, Side side) const {
        const auto& v = slots_.at(station)[static_cast<int>(side)];
        return static_cast<int>(std::count(v.begin(), v.end(), SlotState::Free));
    }

    int occupied_slots(int station, Side side) const {
        const auto& v = slots_.at(station)[static_cast<int>(side)];
        return static_cast<int>(v.size()) - free_slots(station, side);
    }

    bool can_start_attempt(int l) const {
        return free_slots(l, Side::Right) > 0 && free_slots(l + 1, Side::Left) > 0;
    }

    // ---- link generation --------------------------------------------------

    /// Reserves one slot at each end of link `l` and schedules the confirmed
    /// pair's SourceSuccess after a sampled number of trials.
    EventId start_attempt(int l, SimQueue& q) {
        const LinkModel& lm = links_.at(l);
        const int left_slot = first_free(l, Side::Right);
        const int right_slot = first_free(l + 1, Side::Left);
        if (left_slot < 0 || right_slot < 0) throw std::logic_error("start_attempt: no free memory slot");
        GeneratedPair g = generate_link_pair(lm, now_, *rng_);
        return schedule_source_success(l, {left_slot, right_slot}, now_, g.ready_time, g.trials, std::move(g.state), q);
    }

    /// Schedules a confirmed pair in explicitly chosen slots; used by batch
    /// protocols that sample trial counts themselves.
    EventId schedule_link_success(int l, std::array<int, 2> slots, double ready_time, std::int64_t trials,
                                  SimQueue& q) {
        const auto& left = slots_.at(l)[1];
        const auto& right = slots_.at(l + 1)[0];
        if (slots[0] < 0 || slots[0] >= static_cast<int>(left.size()) || left[slots[0]] != SlotState::Free ||
            slots[1] < 0 || slots[1] >= static_cast<int>(right.size()) || right[slots[1]] != SlotState::Free) {
            throw std::logic_error("schedule_link_success: slot not free");
        }
        return schedule_source_success(l, slots, now_, ready_time, trials, confirmed_link_state(links_.at(l)), q);
    }

    /// Channel uses that produced no pair (failed slots of a batch).
    void add_trials(std::int64_t k) { total_trials_ += k; }

    int attempts_in_flight(int l) const {
        int n = 0;
        for (const auto& [id, a] : attempts_)
            if (a.link == l) ++n;
        return n;
    }

    /// Cancels every in-flight attempt on link `l`. Trials already completed
    /// count as channel uses.
    void abort_attempts(int l, SimQueue& q) {
        for (auto it = attempts_.begin(); it != attempts_.end();) {
            if (it->second.link != l) {
                ++it;
                continue;
            }
            const Attempt& a = it->second;
            const double t_trial = links_[l].t_trial;
            if (t_trial > 0.0) total_trials_ += static_cast<std::int64_t>(std::floor((now_ - a.start) / t_trial));
            slots_[l][1][a.slots[0]] = SlotState::Free;
            slots_[l + 1][0][a.slots[1]] = SlotState::Free;
            q.cancel(it->first);
            it = attempts_.erase(it);
        }
    }

    // ---- candidate queries ------------------------------------------------

    bool usable(const Pair& p) const { return p.eligible && !p.busy && !p.doomed; }

    /// Usable pairs spanning exactly link `l` with the given round, oldest first.
    std::vector<PairId> link_pairs(int l, int round) const {
        std::vector<PairId> out;
        for (const auto& [id, p] : pairs_) {
            if (usable(p) && p.ends[0].station == l && p.ends[1].station == l + 1 && p.round == round) {
                out.push_back(id);
            }
        }
        return out;
    }

    /// Usable pairs with a stored qubit on the given side of `station`.
    std::vector<PairId> swap_candidates(int station, Side side) const {
        std::vector<PairId> out;
        const int end = side == Side::Left ? 1 : 0;
        for (const auto& [id, p] : pairs_) {
            if (!usable(p) || p.ends[end].station != station || !p.in_memory(end)) continue;
            if (p.round != opt_.final_round) continue;
            out.push_back(id);
        }
        return out;
    }

    bool spans_chain(const Pair& p) const { return p.ends[0].station == 0 && p.ends[1].station == n_links(); }

    // ---- scheduling helpers used by protocols --------------------------------

    void schedule_swap(int station, PairId left, PairId right, SimQueue& q) {
        Pair& l = pairs_.at(left);
        Pair& r = pairs_.at(right);
        if (!usable(l) || !usable(r)) throw std::logic_error("schedule_swap: pair not usable");
        if (l.ends[1].station != station || r.ends[0].station != station) {
            throw std::logic_error("schedule_swap: pairs do not meet at station");
        }
        l.busy = r.busy = true;
        SimEvent ev;
        ev.kind = EventKind::EntanglementSwap;
        ev.stations = {station};
        ev.pairs = {left, right};
        q.schedule(now_, std::move(ev), Placement::Front);
    }

    void schedule_purification(PairId kept, PairId measured, SimQueue& q) {
        Pair& k = pairs_.at(kept);
        Pair& m = pairs_.at(measured);
        if (!usable(k) || !usable(m)) throw std::logic_error("schedule_purification: pair not usable");
        if (k.ends[0].station != m.ends[0].station || k.ends[1].station != m.ends[1].station) {
            throw std::logic_error("schedule_purification: pairs do not share stations");
        }
        k.busy = m.busy = true;
        SimEvent ev;
        ev.kind = EventKind::Purification;
        ev.stations = {k.ends[0].station, k.ends[1].station};
        ev.pairs = {kept, measured};
        q.schedule(now_, std::move(ev), Placement::Front);
    }

    /// Discards a pair right away, ahead of other events at this time.
    void schedule_discard_now(PairId id, SimQueue& q) {
        Pair& p = pairs_.at(id);
        if (p.busy) throw std::logic_error("schedule_discard_now: pair is busy");
        p.busy = true;
        p.discard_requested = true;
        if (p.discard_event != kNoEvent) q.cancel(p.discard_event);
        p.discard_event = q.schedule(now_, discard_event_for(p), Placement::Front);
    }

    /// Schedules delivery of every finished end-to-end pair once the last
    /// classical message has reached both end stations.
    void schedule_ready_deliveries(SimQueue& q) {
        for (auto& [id, p] : pairs_) {
            if (!usable(p) || p.delivery_scheduled || !spans_chain(p) || p.round != opt_.final_round) continue;
            if (p.in_memory(0) || p.in_memory(1)) continue;
            const double t = std::max({now_, frame_known(p, stations_.front().position_km),
                                       frame_known(p, stations_.back().position_km)});
            p.busy = true;
            p.delivery_scheduled = true;
            SimEvent ev;
            ev.kind = EventKind::Availability;
            ev.availability = AvailabilityKind::Delivery;
            ev.stations = {0, n_links()};
            ev.pairs = {id};
            p.pending_event = q.schedule(t, std::move(ev), Placement::Back);
        }
    }

    /// Earliest time at which the station at `position_km` can know everything
    /// that determines the pair's current Pauli frame and validity.
    double frame_known(const Pair& p, double position_km) const {
        double t = p.known_floor;
        for (const auto& s : p.sources) {
            t = std::max(t, s.time + classical_delay(std::abs(s.position_km - position_km), opt_.c_m_per_s));
        }
        return t;
    }

    // ---- lazy noise -------------------------------------------------------

    /// Brings one stored qubit's dephasing up to `t`.
    void touch(Pair& p, int end, double t) {
        QubitEnd& q = p.ends[end];
        if (q.measured) return;
        if (t < q.last_update) throw std::invalid_argument("touch: time moves backwards");
        const double t_dp = stations_[q.station].params.t_dp_s;
        if (t > q.last_update && std::isfinite(t_dp)) {
            p.state = apply_dephasing(p.state, end == 0 ? Qubit::A : Qubit::B, t - q.last_update, t_dp);
        }
        q.last_update = t;
    }

    // ---- event resolution -------------------------------------------------

    ResolutionReport resolve(const Event<SimEvent>& ev, SimQueue& q) {
        if (ev.time < now_) throw std::logic_error("World::resolve: clock moves backwards");
        now_ = ev.time;
        ResolutionReport rep;
        switch (ev.payload.kind) {
            case EventKind::SourceSuccess: resolve_source(ev, q, rep); break;
            case EventKind::EntanglementSwap: resolve_swap(ev, q, rep); break;
            case EventKind::Purification: resolve_purification(ev, q, rep); break;
            case EventKind::Discard: resolve_discard(ev, q, rep); break;
            case EventKind::Availability: resolve_availability(ev, q, rep); break;
        }
        return rep;
    }

    std::string trace_line(const Event<SimEvent>& ev) const {
        std::string s = format_double(ev.time);
        s += '\t';
        s += to_string(ev.payload.kind);
        s += '\t';
        for (std::size_t i = 0; i < ev.payload.stations.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(ev.payload.stations[i]);
        }
        s += '\t';
        if (ev.payload.kind == EventKind::SourceSuccess) {
            s += std::to_string(next_pair_id_);
        } else {
            for (std::size_t i = 0; i < ev.payload.pairs.size(); ++i) {
                if (i) s += ',';
                s += std::to_string(ev.payload.pairs[i]);
            }
        }
        return s;
    }

    std::string dump() const {
        std::ostringstream os;
        os << "world at t=" << format_double(now_) << " s, " << pairs_.size() << " live pairs, "
           << attempts_.size() << " attempts in flight, " << records_.size() << " deliveries\n";
        for (int i = 0; i < n_stations(); ++i) {
            os << "  station " << i << " @" << format_double(stations_[i].position_km) << " km";
            if (i > 0) os << " left " << occupied_slots(i, Side::Left) << "/" << slots_[i][0].size();
            if (i < n_links()) os << " right " << occupied_slots(i, Side::Right) << "/" << slots_[i][1].size();
            os << '\n';
        }
        for (const auto& [id, p] : pairs_) {
            os << "  pair " << id << " " << p.ends[0].station << "-" << p.ends[1].station << " round " << p.round
               << (p.eligible ? " eligible" : "") << (p.busy ? " busy" : "") << (p.doomed ? " doomed" : "")
               << (p.in_memory(0) ? "" : " A-measured") << (p.in_memory(1) ? "" : " B-measured") << '\n';
        }
        return os.str();
    }

private:
    enum class SlotState { Free, Reserved, Occupied };

    struct Attempt {
        int link;
        std::array<int, 2> slots;
        double start;
    };

    int first_free(int station, Side side) const {
        const auto& v = slots_[station][static_cast<int>(side)];
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i] == SlotState::Free) return static_cast<int>(i);
        return -1;
    }

    EventId schedule_source_success(int l, std::array<int, 2> slots, double start, double ready, std::int64_t trials,
                                    TwoQubitState state, SimQueue& q) {
        slots_[l][1][slots[0]] = SlotState::Reserved;
        slots_[l + 1][0][slots[1]] = SlotState::Reserved;
        SimEvent ev;
        ev.kind = EventKind::SourceSuccess;
        ev.stations = {l, l + 1};
        ev.link = l;
        ev.slots = slots;
        ev.trials = trials;
        ev.state = std::move(state);
        const EventId id = q.schedule(ready, std::move(ev), Placement::Back);
        attempts_.emplace(id, Attempt{l, slots, start});
        return id;
    }

    SimEvent discard_event_for(const Pair& p) const {
        SimEvent ev;
        ev.kind = EventKind::Discard;
        ev.stations = {p.ends[0].station, p.ends[1].station};
        ev.pairs = {p.id};
        return ev;
    }

    void refresh_discard(Pair& p, SimQueue& q) {
        if (p.discard_event != kNoEvent) {
            q.cancel(p.discard_event);
            p.discard_event = kNoEvent;
        }
        double deadline = kInfinity;
        for (int e = 0; e < 2; ++e) {
            if (!p.in_memory(e)) continue;
            deadline = std::min(deadline, p.ends[e].created_at + stations_[p.ends[e].station].params.t_cut_s);
        }
        if (std::isfinite(deadline)) {
            p.discard_event = q.schedule(std::max(deadline, now_), discard_event_for(p), Placement::Back);
        }
    }

    void release(Pair& p, int end) {
        QubitEnd& e = p.ends[end];
        if (e.slot < 0) return;
        max_storage_ = std::max(max_storage_, now_ - e.created_at);
        slots_[e.station][end == 0 ? 1 : 0][e.slot] = SlotState::Free;
        e.slot = -1;
    }

    /// Measures a terminal qubit: its state is frozen and its memory freed.
    void measure(Pair& p, int end) {
        if (p.ends[end].measured) return;
        touch(p, end, now_);
        release(p, end);
        p.ends[end].measured = true;
    }

    void measure_terminal_ends(Pair& p) {
        if (p.round != opt_.final_round) return;
        for (int e = 0; e < 2; ++e)
            if (stations_[p.ends[e].station].terminal) measure(p, e);
    }

    void remove_pair(PairId id, SimQueue& q) {
        Pair& p = pairs_.at(id);
        release(p, 0);
        release(p, 1);
        if (p.discard_event != kNoEvent) q.cancel(p.discard_event);
        if (p.pending_event != kNoEvent) q.cancel(p.pending_event);
        pairs_.erase(id);
    }

    Pair& live_pair(PairId id, const char* what) {
        auto it = pairs_.find(id);
        if (it == pairs_.end()) throw std::logic_error(std::string(what) + ": pair " + std::to_string(id) + " is gone");
        return it->second;
    }

    void resolve_source(const Event<SimEvent>& ev, SimQueue& q, ResolutionReport& rep) {
        const SimEvent& e = ev.payload;
        attempts_.erase(ev.id);
        const int l = e.link;
        slots_[l][1][e.slots[0]] = SlotState::Occupied;
        slots_[l + 1][0][e.slots[1]] = SlotState::Occupied;
        total_trials_ += e.trials;

        Pair p;
        p.id = next_pair_id_++;
        p.state = *e.state;
        for (int end = 0; end < 2; ++end) {
            p.ends[end].station = l + end;
            p.ends[end].slot = e.slots[end];
            p.ends[end].created_at = now_;
            p.ends[end].last_update = now_;
        }
        p.trials = e.trials;
        p.trials_per_link.assign(links_.size(), 0);
        p.trials_per_link[l] = e.trials;
        p.known_floor = now_;
        ++audit_.created;
        rep.created.push_back(p.id);
        auto [it, ok] = pairs_.emplace(p.id, std::move(p));
        measure_terminal_ends(it->second);
        refresh_discard(it->second, q);
    }

    void resolve_swap(const Event<SimEvent>& ev, SimQueue& q, ResolutionReport& rep) {
        const int j = ev.payload.stations.at(0);
        Pair& l = live_pair(ev.payload.pairs.at(0), "swap");
        Pair& r = live_pair(ev.payload.pairs.at(1), "swap");
        for (int e = 0; e < 2; ++e) {
            touch(l, e, now_);
            touch(r, e, now_);
        }
        Pair m;
        m.id = next_pair_id_++;
        m.state = bell_swap(l.state, r.state, stations_[j].params.lambda_bsm, *rng_);
        m.ends = {l.ends[0], r.ends[1]};
        m.round = opt_.final_round;
        m.trials = l.trials + r.trials;
        m.trials_per_link.resize(links_.size());
        for (std::size_t i = 0; i < links_.size(); ++i) m.trials_per_link[i] = l.trials_per_link[i] + r.trials_per_link[i];
        m.known_floor = std::max(l.known_floor, r.known_floor);
        m.sources = l.sources;
        m.sources.insert(m.sources.end(), r.sources.begin(), r.sources.end());
        m.sources.push_back({now_, stations_[j].position_km});
        // The outer qubits change owner; only the inner ones are freed.
        l.ends[0].slot = -1;
        r.ends[1].slot = -1;
        release(l, 1);
        release(r, 0);
        const PairId lid = l.id, rid = r.id;
        remove_pair(lid, q);
        remove_pair(rid, q);
        audit_.swapped += 2;
        ++audit_.created;
        rep.consumed = {lid, rid};
        rep.created.push_back(m.id);
        auto [it, ok] = pairs_.emplace(m.id, std::move(m));
        measure_terminal_ends(it->second);
        refresh_discard(it->second, q);
    }

    void resolve_purification(const Event<SimEvent>& ev, SimQueue& q, ResolutionReport& rep) {
        Pair& k = live_pair(ev.payload.pairs.at(0), "purification");
        Pair& m = live_pair(ev.payload.pairs.at(1), "purification");
        for (int e = 0; e < 2; ++e) {
            touch(k, e, now_);
            touch(m, e, now_);
        }
        const PurificationOutcome out = dejmps_purify(k.state, m.state, *rng_);
        if (out.success) k.state = out.post_state;
        k.doomed = !out.success;
        ++k.round;
        k.busy = false;
        k.eligible = false;
        k.trials += m.trials;
        for (std::size_t i = 0; i < links_.size(); ++i) k.trials_per_link[i] += m.trials_per_link[i];
        k.known_floor = std::max(k.known_floor, m.known_floor);
        k.sources.insert(k.sources.end(), m.sources.begin(), m.sources.end());
        const double x0 = stations_[k.ends[0].station].position_km;
        const double x1 = stations_[k.ends[1].station].position_km;
        k.sources.push_back({now_, x0});
        k.sources.push_back({now_, x1});
        const PairId mid = m.id;
        remove_pair(mid, q);
        ++audit_.purified;
        rep.consumed.push_back(mid);
        measure_terminal_ends(k);
        refresh_discard(k, q);

        SimEvent note;
        note.kind = EventKind::Availability;
        note.availability = AvailabilityKind::Eligible;
        note.stations = {k.ends[0].station, k.ends[1].station};
        note.pairs = {k.id};
        k.pending_event = q.schedule(now_ + classical_delay(x1 - x0, opt_.c_m_per_s), std::move(note), Placement::Back);
    }

    void resolve_discard(const Event<SimEvent>& ev, SimQueue& q, ResolutionReport& rep) {
        const PairId id = ev.payload.pairs.at(0);
        Pair& p = live_pair(id, "discard");
        p.discard_event = kNoEvent;
        if (p.busy && !p.discard_requested) throw std::logic_error("discard: pair is in use");
        for (int e = 0; e < 2; ++e) touch(p, e, now_);
        remove_pair(id, q);
        ++audit_.discarded;
        rep.consumed.push_back(id);
    }

    void resolve_availability(const Event<SimEvent>& ev, SimQueue& q, ResolutionReport& rep) {
        const PairId id = ev.payload.pairs.at(0);
        Pair& p = live_pair(id, "availability");
        p.pending_event = kNoEvent;
        if (ev.payload.availability == AvailabilityKind::Eligible) {
            if (p.doomed) {
                remove_pair(id, q);
                ++audit_.discarded;
                rep.consumed.push_back(id);
            } else {
                p.eligible = true;
            }
            return;
        }
        DeliveryRecord r;
        r.completion_time = now_;
        const ErrorRates er = error_rates(p.state);
        r.e_x = er.e_x;
        r.e_z = er.e_z;
        r.coeffs = bell_diagonal_coeffs(p.state);
        if (opt_.cu_counting == ChannelUseCounting::All) {
            r.channel_uses = total_trials_ - trials_at_last_delivery_;
            trials_at_last_delivery_ = total_trials_;
        } else {
            r.channel_uses = p.trials;
        }
        r.trials_per_link = p.trials_per_link;
        records_.push_back(std::move(r));
        remove_pair(id, q);
        ++audit_.delivered;
        rep.consumed.push_back(id);
    }

    std::vector<Station> stations_;
    std::vector<LinkModel> links_;
    WorldOptions opt_;
    Rng* rng_;
    std::vector<std::array<std::vector<SlotState>, 2>> slots_;
    std::map<PairId, Pair> pairs_;
    std::map<EventId, Attempt> attempts_;
    std::vector<DeliveryRecord> records_;
    ConservationAudit audit_;
    PairId next_pair_id_ = 1;
    double now_ = 0.0;
    std::int64_t total_trials_ = 0;
    std::int64_t trials_at_last_delivery_ = 0;
    double max_storage_ = 0.0;
};

}  // namespace repchain
