#include "ptxlink/netemu/scheduler.hpp"

#include <utility>

namespace ptxlink::netemu {

SchedulingInPast::SchedulingInPast(Micros at, Micros now)
    : std::logic_error("event scheduled at " + std::to_string(at) + " us, clock is already at " +
                       std::to_string(now) + " us") {}

EventId Scheduler::schedule(Micros at, Callback cb, std::string label) {
    if (at < clock_.now_) {
        throw SchedulingInPast(at, clock_.now_);
    }
    const EventId id = next_id_++;
    queue_.push({at, id});
    callbacks_.emplace(id, Pending{std::move(cb), std::move(label)});
    return id;
}

EventId Scheduler::schedule_after(Micros delay, Callback cb, std::string label) {
    return schedule(clock_.now_ + delay, std::move(cb), std::move(label));
}

bool Scheduler::cancel(EventId id) { return callbacks_.erase(id) > 0; }

void Scheduler::drop_cancelled() {
    while (!queue_.empty() && !callbacks_.contains(queue_.top().id)) {
        queue_.pop();
    }
}

std::optional<Micros> Scheduler::next_event_time() {
    drop_cancelled();
    if (queue_.empty()) {
        return std::nullopt;
    }
    return queue_.top().at;
}

bool Scheduler::step() {
    drop_cancelled();
    if (queue_.empty()) {
        return false;
    }
    const Entry e = queue_.top();
    queue_.pop();
    auto node = callbacks_.extract(e.id);
    clock_.now_ = e.at;
    if (tracing_) {
        trace_.push_back({e.at, e.id, node.mapped().label});
    }
    node.mapped().cb();
    return true;
}

std::size_t Scheduler::run() {
    std::size_t n = 0;
    while (step()) {
        ++n;
    }
    return n;
}

std::size_t Scheduler::run_until(Micros t) {
    std::size_t n = 0;
    for (auto next = next_event_time(); next && *next <= t; next = next_event_time()) {
        step();
        ++n;
    }
    if (t > clock_.now_) {
        clock_.now_ = t;
    }
    return n;
}

std::size_t Scheduler::run_while(const std::function<bool()>& keep_going) {
    std::size_t n = 0;
    while (keep_going() && step()) {
        ++n;
    }
    return n;
}

}  // namespace ptxlink::netemu
