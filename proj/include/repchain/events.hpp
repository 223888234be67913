#pragma once

// Time-ordered event queue and the resolve/check loop that drives a
// simulation. The queue is generic over the event payload so protocols and
// tests can bring their own event types.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace repchain {

using EventId = std::uint64_t;
inline constexpr EventId kNoEvent = 0;

enum class Placement {
    Front,  // ahead of everything already queued for the same timestamp
    Back,
};

/// Raised when the queue runs dry before the stop condition is met.
class SimulationStall : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <class Payload>
struct Event {
    EventId id = kNoEvent;
    double time = 0.0;
    Payload payload{};
};

/// Events ordered by (time, placement class, scheduling sequence). Cancelled
/// events are tombstoned and skipped when they reach the head.
template <class Payload>
class EventQueue {
public:
    EventId schedule(double time, Payload payload, Placement placement = Placement::Back) {
        if (!(time >= now_)) {
            throw std::invalid_argument("cannot schedule an event before the current time");
        }
        const EventId id = next_id_++;
        heap_.push(Key{time, placement == Placement::Front ? 0 : 1, seq_++, id});
        live_.emplace(id, Event<Payload>{id, time, std::move(payload)});
        return id;
    }

    /// Marks an event as cancelled. Unknown ids are ignored and counted.
    void cancel(EventId id) {
        if (live_.erase(id) > 0) {
            cancelled_.insert(id);
        } else if (!cancelled_.count(id)) {
            ++unknown_cancels_;
        }
    }

    bool contains(EventId id) const { return live_.count(id) > 0; }

    bool empty() const { return live_.empty(); }
    std::size_t size() const { return live_.size(); }

    double now() const { return now_; }

    /// Removes and returns the next live event, advancing the clock to its time.
    std::optional<Event<Payload>> pop() {
        while (!heap_.empty()) {
            const Key key = heap_.top();
            heap_.pop();
            auto it = live_.find(key.id);
            if (it == live_.end()) {
                cancelled_.erase(key.id);
                continue;
            }
            Event<Payload> ev = std::move(it->second);
            live_.erase(it);
            if (ev.time < now_) {
                throw std::logic_error("event queue clock would move backwards");
            }
            now_ = ev.time;
            return ev;
        }
        return std::nullopt;
    }

    /// Time of the next live event, if any.
    std::optional<double> peek_time() {
        while (!heap_.empty() && !live_.count(heap_.top().id)) {
            cancelled_.erase(heap_.top().id);
            heap_.pop();
        }
        if (heap_.empty()) return std::nullopt;
        return heap_.top().time;
    }

    std::size_t unknown_cancels() const { return unknown_cancels_; }

    /// Live events in resolution order; for diagnostics only.
    std::vector<Event<Payload>> snapshot() const {
        auto copy = heap_;
        std::vector<Event<Payload>> out;
        while (!copy.empty()) {
            auto it = live_.find(copy.top().id);
            if (it != live_.end()) out.push_back(it->second);
            copy.pop();
        }
        return out;
    }

private:
    struct Key {
        double time;
        int placement;
        std::uint64_t seq;
        EventId id;
        bool operator>(const Key& o) const {
            if (time != o.time) return time > o.time;
            if (placement != o.placement) return placement > o.placement;
            return seq > o.seq;
        }
    };

    std::priority_queue<Key, std::vector<Key>, std::greater<Key>> heap_;
    std::unordered_map<EventId, Event<Payload>> live_;
    std::unordered_set<EventId> cancelled_;
    double now_ = 0.0;
    EventId next_id_ = 1;
    std::uint64_t seq_ = 0;
    std::size_t unknown_cancels_ = 0;
};

/// Pops the next event and lets the world apply it. Returns whatever the
/// world reports about the resolution.
template <class World, class Payload>
auto resolve_next(World& world, EventQueue<Payload>& queue) {
    auto ev = queue.pop();
    if (!ev) {
        throw SimulationStall("event queue is empty");
    }
    return world.resolve(*ev, queue);
}

/// Alternates protocol checks and event resolution until `stop(world)` holds.
///
/// The protocol is consulted once before the first resolution and exactly once
/// after every resolution. If the queue is empty while the stop condition is
/// still false, the simulation cannot make progress and SimulationStall is
/// raised with the world's diagnostic dump. When `trace` is set, one line per
/// resolved event is written using `world.trace_line(event)`.
template <class World, class Protocol, class Payload, class Stop>
void run_loop(World& world, Protocol& protocol, EventQueue<Payload>& queue, Stop&& stop,
              std::ostream* trace = nullptr) {
    protocol.check(world, queue);
    double last_time = queue.now();
    while (!stop(world)) {
        auto ev = queue.pop();
        if (!ev) {
            throw SimulationStall("simulation stalled at t=" + std::to_string(queue.now()) +
                                  " s with no pending events\n" + world.dump());
        }
        if (ev->time < last_time) {
            throw std::logic_error("resolved events out of time order");
        }
        last_time = ev->time;
        if (trace) {
            *trace << world.trace_line(*ev) << '\n';
        }
        world.resolve(*ev, queue);
        protocol.check(world, queue);
    }
}

}  // namespace repchain
