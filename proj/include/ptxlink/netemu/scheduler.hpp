#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace ptxlink::netemu {

/// Simulated time in integer microseconds since scenario start.
using Micros = std::int64_t;

inline constexpr Micros kMicrosPerMs = 1'000;
inline constexpr Micros kMicrosPerSecond = 1'000'000;

inline Micros from_ms(double ms) { return static_cast<Micros>(std::llround(ms * 1000.0)); }
inline Micros from_seconds(double s) { return static_cast<Micros>(std::llround(s * 1e6)); }
inline double to_ms(Micros us) { return static_cast<double>(us) / 1000.0; }
inline double to_seconds(Micros us) { return static_cast<double>(us) / 1e6; }

class SchedulingInPast : public std::logic_error {
public:
    SchedulingInPast(Micros at, Micros now);
};

/// The single virtual clock of an engine. Only the scheduler advances it.
class SimClock {
public:
    Micros now() const noexcept { return now_; }

private:
    friend class Scheduler;
    Micros now_ = 0;
};

using EventId = std::uint64_t;

struct ExecutedEvent {
    Micros at;
    EventId id;
    std::string label;

    bool operator==(const ExecutedEvent&) const = default;
};

/// Discrete-event scheduler. Events with equal timestamps run in insertion
/// order. Callbacks may schedule further events, including at `now()`.
class Scheduler {
public:
    using Callback = std::function<void()>;

    EventId schedule(Micros at, Callback cb, std::string label = {});
    EventId schedule_after(Micros delay, Callback cb, std::string label = {});

    /// Returns false when the event already ran or was cancelled.
    bool cancel(EventId id);

    /// Executes the earliest pending event. Returns false when idle.
    bool step();
    std::size_t run();
    /// Runs every event with timestamp <= t, then moves the clock to t.
    std::size_t run_until(Micros t);
    /// Steps while `keep_going()` holds and events remain.
    std::size_t run_while(const std::function<bool()>& keep_going);

    Micros now() const noexcept { return clock_.now(); }
    const SimClock& clock() const noexcept { return clock_; }
    bool idle() const noexcept { return callbacks_.empty(); }
    std::size_t pending() const noexcept { return callbacks_.size(); }
    std::optional<Micros> next_event_time();

    void record_trace(bool on) { tracing_ = on; }
    const std::vector<ExecutedEvent>& trace() const noexcept { return trace_; }

private:
    struct Entry {
        Micros at;
        EventId id;
        bool operator>(const Entry& o) const { return at != o.at ? at > o.at : id > o.id; }
    };
    struct Pending {
        Callback cb;
        std::string label;
    };

    void drop_cancelled();

    SimClock clock_;
    EventId next_id_ = 0;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue_;
    std::unordered_map<EventId, Pending> callbacks_;
    bool tracing_ = false;
    std::vector<ExecutedEvent> trace_;
};

}  // namespace ptxlink::netemu
