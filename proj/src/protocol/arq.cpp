#include "ptxlink/protocol/arq.hpp"

#include <algorithm>
#include <cmath>

namespace ptxlink::protocol {

std::string_view to_string(AttemptStatus s) {
    switch (s) {
        case AttemptStatus::in_flight: return "in_flight";
        case AttemptStatus::acked: return "acked";
        case AttemptStatus::lost: return "lost";
        case AttemptStatus::corrupted: return "corrupted";
    }
    return "unknown";
}

DeliveryFailed::DeliveryFailed(std::uint32_t seq, std::uint16_t attempts)
    : std::runtime_error("seq " + std::to_string(seq) + " undelivered after " + std::to_string(attempts) +
                         " attempts"),
      seq_(seq),
      attempts_(attempts) {}

// --- sender -----------------------------------------------------------------

ArqSender::ArqSender(netemu::Scheduler& scheduler, ArqConfig config, TransmitFn transmit)
    : scheduler_(scheduler),
      config_(config),
      transmit_(std::move(transmit)),
      srtt_us_(static_cast<double>(config.initial_rtt_us > 0 ? config.initial_rtt_us : 100'000)) {
    if (config_.window == 0) {
        throw std::invalid_argument("ARQ window must be at least 1");
    }
}

Micros ArqSender::current_timeout() const {
    if (config_.timeout_us > 0) {
        return config_.timeout_us;
    }
    return std::max(config_.min_timeout_us, static_cast<Micros>(std::llround(config_.timeout_factor * srtt_us_)));
}

std::uint32_t ArqSender::send(MsgType type, Bytes payload, DoneFn done) {
    if (closed_) {
        throw std::logic_error("send on a closed ARQ sender");
    }
    if (type == MsgType::ack && payload.empty()) {
        throw std::invalid_argument("empty ACK frames are reserved for transport acknowledgements");
    }
    if (payload.size() > kMaxPayload) {
        throw PayloadTooLarge(payload.size());
    }
    const std::uint32_t seq = next_seq_++;
    queue_.push_back({seq, type, std::move(payload), std::move(done)});
    pump();
    return seq;
}

void ArqSender::uncork() {
    corked_ = false;
    pump();
}

void ArqSender::pump() {
    if (closed_ || corked_ || stalled()) {
        return;
    }
    std::vector<std::uint32_t> burst;
    while (!queue_.empty() && outstanding_.size() < config_.window) {
        Queued q = std::move(queue_.front());
        queue_.pop_front();
        outstanding_.emplace(q.seq, Outstanding{q.type, std::move(q.payload), std::move(q.done), 0, 0, false, 0, std::nullopt});
        burst.push_back(q.seq);
    }
    if (!burst.empty()) {
        transmit(std::move(burst));
    }
}

void ArqSender::transmit(std::vector<std::uint32_t> seqs) {
    const Micros now = scheduler_.now();
    std::vector<OutgoingFrame> frames;
    frames.reserve(seqs.size());
    for (const auto seq : seqs) {
        auto& o = outstanding_.at(seq);
        ++o.round_attempts;
        ++o.total_attempts;
        const std::uint16_t flags = o.total_attempts > 1 ? kFlagRetransmission : 0;
        OutgoingFrame f;
        f.seq = seq;
        f.attempt = o.total_attempts;
        f.type = o.type;
        f.log_index = tx_log_.size();
        f.wire = encode_frame(o.type, seq, static_cast<std::uint64_t>(now), o.payload, flags);
        tx_log_.push_back({seq, o.total_attempts, now, AttemptStatus::in_flight, std::nullopt});
        frames.push_back(std::move(f));
    }
    const std::vector<Micros> completes = transmit_(std::move(frames), now);
    const Micros rto = current_timeout();
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto seq = seqs[i];
        auto it = outstanding_.find(seq);
        if (it == outstanding_.end()) {
            continue;  // acknowledged synchronously by a zero-delay path
        }
        auto& o = it->second;
        o.last_tx_complete = i < completes.size() ? completes[i] : now;
        const std::uint16_t attempt = o.total_attempts;
        o.timer = scheduler_.schedule(
            o.last_tx_complete + rto, [this, seq, attempt] { on_timeout(seq, attempt); }, "arq-timeout");
    }
}

void ArqSender::on_timeout(std::uint32_t seq, std::uint16_t attempt) {
    auto it = outstanding_.find(seq);
    if (closed_ || it == outstanding_.end() || it->second.total_attempts != attempt) {
        return;
    }
    auto& o = it->second;
    o.timer.reset();
    if (o.round_attempts <= config_.max_retries) {
        transmit({seq});
        return;
    }
    o.failed = true;
    ++failed_count_;
    if (o.done) {
        o.done(SendResult{seq, false, scheduler_.now(), o.round_attempts});
    }
}

void ArqSender::on_ack(std::uint32_t seq) {
    auto it = outstanding_.find(seq);
    if (it == outstanding_.end()) {
        return;  // duplicate ACK
    }
    Outstanding o = std::move(it->second);
    outstanding_.erase(it);
    if (o.timer) {
        scheduler_.cancel(*o.timer);
    }
    if (o.failed) {
        --failed_count_;
    }
    const Micros now = scheduler_.now();
    // Karn: only unambiguous samples update the estimate.
    if (o.total_attempts == 1) {
        const double sample = static_cast<double>(now - o.last_tx_complete);
        srtt_us_ = (1.0 - config_.rtt_alpha) * srtt_us_ + config_.rtt_alpha * sample;
    }
    if (o.done) {
        o.done(SendResult{seq, true, now, o.round_attempts});
    }
    pump();
}

void ArqSender::resume() {
    if (closed_) {
        return;
    }
    std::vector<std::uint32_t> retry;
    for (auto& [seq, o] : outstanding_) {
        if (o.failed) {
            o.failed = false;
            o.round_attempts = 0;
            retry.push_back(seq);
        }
    }
    failed_count_ = 0;
    if (!retry.empty()) {
        transmit(std::move(retry));
    }
    pump();
}

void ArqSender::close() {
    closed_ = true;
    for (auto& [_, o] : outstanding_) {
        if (o.timer) {
            scheduler_.cancel(*o.timer);
            o.timer.reset();
        }
    }
    queue_.clear();
}

void ArqSender::resolve_attempt(std::size_t log_index, AttemptStatus status, Micros at) {
    auto& rec = tx_log_.at(log_index);
    if (rec.status != AttemptStatus::in_flight) {
        throw std::logic_error("attempt resolved twice");
    }
    rec.status = status;
    rec.resolved_at = at;
}

// --- receiver ---------------------------------------------------------------

bool is_transport_ack(const Frame& f) { return f.type == MsgType::ack && f.payload.empty(); }

Bytes encode_transport_ack(std::uint32_t seq, Micros now) {
    return encode_frame(MsgType::ack, seq, static_cast<std::uint64_t>(now), {});
}

ArqReceiver::ArqReceiver(netemu::Scheduler& scheduler, AckFn ack, DeliverFn deliver)
    : scheduler_(scheduler), ack_(std::move(ack)), deliver_(std::move(deliver)) {}

ArqReceiver::Arrival ArqReceiver::on_wire(std::span<const std::uint8_t> wire) {
    const Micros now = scheduler_.now();
    Arrival a;
    DecodedFrame d;
    try {
        d = decode_frame(wire);
    } catch (const DecodeError&) {
        rx_log_.push_back({std::nullopt, now, false, false});
        return a;
    }
    a.seq = d.frame.seq;
    if (d.crc_failed) {
        rx_log_.push_back({d.frame.seq, now, false, false});
        return a;
    }
    a.intact = true;
    const std::uint32_t seq = d.frame.seq;
    a.duplicate = seq < next_expected_ || buffered_.contains(seq);
    rx_log_.push_back({seq, now, true, a.duplicate});
    if (ack_) {
        ack_(encode_transport_ack(seq, now));
    }
    if (a.duplicate) {
        return a;
    }
    buffered_.emplace(seq, std::move(d.frame));
    for (auto it = buffered_.find(next_expected_); it != buffered_.end(); it = buffered_.find(next_expected_)) {
        Frame f = std::move(it->second);
        buffered_.erase(it);
        ++next_expected_;
        ++delivered_;
        if (deliver_) {
            deliver_(f);
        }
    }
    return a;
}

// --- channel ----------------------------------------------------------------

ArqChannel::ArqChannel(netemu::Scheduler& scheduler, netemu::LinkPath forward, netemu::LinkPath reverse,
                       ArqConfig config, std::string label, ArqReceiver::DeliverFn deliver, netemu::TraceLog* trace)
    : scheduler_(scheduler),
      forward_(std::move(forward)),
      reverse_(std::move(reverse)),
      label_(std::move(label)),
      trace_(trace) {
    if (config.initial_rtt_us == 0) {
        const double rtt = forward_.median_delay_us(kFrameOverhead + 64) + reverse_.median_delay_us(kFrameOverhead);
        config.initial_rtt_us = std::max<Micros>(1, static_cast<Micros>(std::llround(rtt)));
    }
    sender_ = std::make_unique<ArqSender>(
        scheduler_, config, [this](std::vector<OutgoingFrame>&& f, Micros now) { return transmit_data(std::move(f), now); });
    receiver_ = std::make_unique<ArqReceiver>(
        scheduler_, [this](Bytes ack) { transmit_ack(std::move(ack)); }, std::move(deliver));
}

std::uint32_t ArqChannel::send_reliable(MsgType type, Bytes payload, ArqSender::DoneFn done) {
    return sender_->send(type, std::move(payload), std::move(done));
}

SendResult ArqChannel::send_and_wait(MsgType type, Bytes payload) {
    std::optional<SendResult> result;
    sender_->send(type, std::move(payload), [&result](const SendResult& r) {
        if (!result) result = r;
    });
    scheduler_.run_while([&result] { return !result.has_value(); });
    if (!result) throw std::logic_error("scheduler ran dry before the send resolved");
    if (!result->delivered) throw DeliveryFailed(result->seq, result->attempts);
    return *result;
}

std::vector<Micros> ArqChannel::transmit_data(std::vector<OutgoingFrame>&& frames, Micros now) {
    std::vector<netemu::Bytes> wires;
    wires.reserve(frames.size());
    for (auto& f : frames) {
        wires.push_back(std::move(f.wire));
    }
    std::vector<std::size_t> sizes;
    sizes.reserve(wires.size());
    for (const auto& w : wires) sizes.push_back(w.size());

    auto txs = forward_.transmit_burst(std::move(wires), now);
    std::vector<Micros> completes;
    completes.reserve(txs.size());
    for (std::size_t i = 0; i < txs.size(); ++i) {
        auto& tx = txs[i];
        const auto& f = frames[i];
        completes.push_back(tx.tx_complete);
        if (trace_) {
            trace_->append({label_, static_cast<std::uint8_t>(f.type), f.seq, f.attempt, sizes[i], tx.outcome});
        }
        if (observer_) observer_(AttemptStatus::in_flight);
        if (tx.outcome.status == netemu::DeliveryStatus::lost) {
            sender_->resolve_attempt(f.log_index, AttemptStatus::lost, now);
            if (observer_) observer_(AttemptStatus::lost);
            continue;
        }
        const std::size_t idx = f.log_index;
        scheduler_.schedule(
            *tx.outcome.deliver_time,
            [this, idx, bytes = std::move(tx.bytes)] {
                const auto arrival = receiver_->on_wire(bytes);
                const auto status = arrival.intact ? AttemptStatus::acked : AttemptStatus::corrupted;
                sender_->resolve_attempt(idx, status, scheduler_.now());
                if (observer_) observer_(status);
            },
            "arq-data");
    }
    return completes;
}

void ArqChannel::transmit_ack(Bytes wire) {
    const Micros now = scheduler_.now();
    const std::uint32_t seq = decode_frame(wire).frame.seq;
    const std::size_t size = wire.size();
    auto tx = reverse_.transmit(std::move(wire), now);
    if (trace_) {
        trace_->append({label_, static_cast<std::uint8_t>(MsgType::ack), seq, 0, size, tx.outcome});
    }
    if (tx.outcome.status == netemu::DeliveryStatus::lost) {
        return;
    }
    scheduler_.schedule(
        *tx.outcome.deliver_time,
        [this, bytes = std::move(tx.bytes)] {
            try {
                const auto d = decode_frame(bytes);
                if (!d.crc_failed && is_transport_ack(d.frame)) {
                    sender_->on_ack(d.frame.seq);
                }
            } catch (const DecodeError&) {
            }
        },
        "arq-ack");
}

}  // namespace ptxlink::protocol
