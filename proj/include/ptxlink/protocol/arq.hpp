#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ptxlink/netemu/link.hpp"
#include "ptxlink/netemu/scheduler.hpp"
#include "ptxlink/netemu/trace.hpp"
#include "ptxlink/protocol/frame.hpp"

namespace ptxlink::protocol {

using netemu::Micros;

struct ArqConfig {
    /// Outstanding frames allowed; 1 is stop-and-wait.
    std::uint16_t window = 1;
    /// Fixed retransmission timeout; 0 selects the adaptive timeout
    /// (timeout_factor x smoothed round trip, EWMA with rtt_alpha).
    Micros timeout_us = 0;
    std::uint8_t max_retries = 3;
    double rtt_alpha = 0.125;
    double timeout_factor = 3.0;
    /// Round-trip estimate before the first sample; 0 lets ArqChannel derive
    /// it from the path medians.
    Micros initial_rtt_us = 0;
    Micros min_timeout_us = 1'000;
};

/// Fate of one transmission attempt of a data frame. `acked` means the
/// receiver got the attempt intact (and acknowledged it).
enum class AttemptStatus { in_flight, acked, lost, corrupted };

std::string_view to_string(AttemptStatus s);

struct AttemptRecord {
    std::uint32_t seq = 0;
    std::uint16_t attempt = 0;
    Micros send_time = 0;
    AttemptStatus status = AttemptStatus::in_flight;
    std::optional<Micros> resolved_at;
};

struct ReceiveRecord {
    std::optional<std::uint32_t> seq;
    Micros at = 0;
    bool intact = false;
    bool duplicate = false;
};

/// Outcome of one retry round for a sequence number.
struct SendResult {
    std::uint32_t seq = 0;
    bool delivered = false;
    Micros at = 0;
    /// Attempts made in this round (resets on resume()).
    std::uint16_t attempts = 0;
};

class DeliveryFailed : public std::runtime_error {
public:
    DeliveryFailed(std::uint32_t seq, std::uint16_t attempts);
    std::uint32_t seq() const noexcept { return seq_; }
    std::uint16_t attempts() const noexcept { return attempts_; }

private:
    std::uint32_t seq_;
    std::uint16_t attempts_;
};

struct OutgoingFrame {
    std::uint32_t seq = 0;
    std::uint16_t attempt = 0;
    MsgType type = MsgType::telemetry;
    std::size_t log_index = 0;
    Bytes wire;
};

/// Selective-repeat sender. With window 1 it degenerates to stop-and-wait.
///
/// A sequence number that exhausts max_retries stalls the sender: nothing
/// new is sent until resume(), which retries the failed numbers with a
/// fresh budget. Late acknowledgements for a failed number still complete
/// it (the done callback then fires a second time, with delivered = true).
class ArqSender {
public:
    /// Puts a burst on the network; returns when each frame finished
    /// serialization (timers start from there).
    using TransmitFn = std::function<std::vector<Micros>(std::vector<OutgoingFrame>&&, Micros now)>;
    using DoneFn = std::function<void(const SendResult&)>;

    ArqSender(netemu::Scheduler& scheduler, ArqConfig config, TransmitFn transmit);
    ArqSender(const ArqSender&) = delete;
    ArqSender& operator=(const ArqSender&) = delete;

    std::uint32_t send(MsgType type, Bytes payload, DoneFn done = {});
    /// An intact transport ACK for `seq` arrived.
    void on_ack(std::uint32_t seq);
    void resume();
    /// While corked, sends only queue; uncork() puts everything queued on the
    /// wire as one burst.
    void cork() noexcept { corked_ = true; }
    void uncork();
    /// Cancels timers and drops queued frames; outstanding frames are left
    /// unresolved.
    void close();

    bool stalled() const noexcept { return failed_count_ > 0; }
    bool idle() const noexcept { return queue_.empty() && outstanding_.empty(); }
    std::size_t outstanding() const noexcept { return outstanding_.size(); }
    std::size_t queued() const noexcept { return queue_.size(); }
    Micros current_timeout() const;
    double smoothed_rtt_us() const noexcept { return srtt_us_; }
    const ArqConfig& config() const noexcept { return config_; }

    const std::vector<AttemptRecord>& tx_log() const noexcept { return tx_log_; }
    /// Accounting hook used by the network glue once an attempt's fate is known.
    void resolve_attempt(std::size_t log_index, AttemptStatus status, Micros at);

private:
    struct Queued {
        std::uint32_t seq;
        MsgType type;
        Bytes payload;
        DoneFn done;
    };
    struct Outstanding {
        MsgType type;
        Bytes payload;
        DoneFn done;
        std::uint16_t round_attempts = 0;
        std::uint16_t total_attempts = 0;
        bool failed = false;
        Micros last_tx_complete = 0;
        std::optional<netemu::EventId> timer;
    };

    void pump();
    void transmit(std::vector<std::uint32_t> seqs);
    void on_timeout(std::uint32_t seq, std::uint16_t attempt);

    netemu::Scheduler& scheduler_;
    ArqConfig config_;
    TransmitFn transmit_;
    std::uint32_t next_seq_ = 0;
    std::deque<Queued> queue_;
    std::map<std::uint32_t, Outstanding> outstanding_;
    std::size_t failed_count_ = 0;
    double srtt_us_;
    bool closed_ = false;
    bool corked_ = false;
    std::vector<AttemptRecord> tx_log_;
};

/// Selective-repeat receiver: acknowledges every intact data frame and
/// delivers each sequence number once, in order.
class ArqReceiver {
public:
    using AckFn = std::function<void(Bytes ack_wire)>;
    using DeliverFn = std::function<void(const Frame&)>;

    struct Arrival {
        std::optional<std::uint32_t> seq;
        bool intact = false;
        bool duplicate = false;
    };

    ArqReceiver(netemu::Scheduler& scheduler, AckFn ack, DeliverFn deliver);

    Arrival on_wire(std::span<const std::uint8_t> wire);
    void on_deliver(DeliverFn deliver) { deliver_ = std::move(deliver); }

    std::uint32_t next_expected() const noexcept { return next_expected_; }
    std::size_t delivered() const noexcept { return delivered_; }
    const std::vector<ReceiveRecord>& rx_log() const noexcept { return rx_log_; }

private:
    netemu::Scheduler& scheduler_;
    AckFn ack_;
    DeliverFn deliver_;
    std::uint32_t next_expected_ = 0;
    std::size_t delivered_ = 0;
    std::map<std::uint32_t, Frame> buffered_;
    std::vector<ReceiveRecord> rx_log_;
};

/// Transport acknowledgement: an ACK frame with an empty payload.
bool is_transport_ack(const Frame& f);
Bytes encode_transport_ack(std::uint32_t seq, Micros now);

/// Sender and receiver joined over a forward and a reverse link path inside
/// one scheduler. Each attempt and each ACK is appended to `trace` when set.
class ArqChannel {
public:
    ArqChannel(netemu::Scheduler& scheduler, netemu::LinkPath forward, netemu::LinkPath reverse, ArqConfig config,
               std::string label, ArqReceiver::DeliverFn deliver, netemu::TraceLog* trace = nullptr);
    ArqChannel(const ArqChannel&) = delete;
    ArqChannel& operator=(const ArqChannel&) = delete;

    std::uint32_t send_reliable(MsgType type, Bytes payload, ArqSender::DoneFn done = {});
    /// Sends one frame and runs the scheduler until it resolves; throws
    /// DeliveryFailed once max_retries retransmissions went unacknowledged.
    SendResult send_and_wait(MsgType type, Bytes payload);

    /// Called with in_flight when a data attempt goes on the wire and again
    /// with its final status once known.
    using AttemptObserver = std::function<void(AttemptStatus)>;
    void observe_attempts(AttemptObserver o) { observer_ = std::move(o); }
    void on_deliver(ArqReceiver::DeliverFn deliver) { receiver_->on_deliver(std::move(deliver)); }

    ArqSender& sender() noexcept { return *sender_; }
    const ArqSender& sender() const noexcept { return *sender_; }
    ArqReceiver& receiver() noexcept { return *receiver_; }
    const ArqReceiver& receiver() const noexcept { return *receiver_; }
    const std::string& label() const noexcept { return label_; }

private:
    std::vector<Micros> transmit_data(std::vector<OutgoingFrame>&& frames, Micros now);
    void transmit_ack(Bytes wire);

    netemu::Scheduler& scheduler_;
    netemu::LinkPath forward_;
    netemu::LinkPath reverse_;
    std::string label_;
    netemu::TraceLog* trace_;
    AttemptObserver observer_;
    std::unique_ptr<ArqSender> sender_;
    std::unique_ptr<ArqReceiver> receiver_;
};

}  // namespace ptxlink::protocol
