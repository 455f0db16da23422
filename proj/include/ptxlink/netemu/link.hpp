#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ptxlink/netemu/rng.hpp"
#include "ptxlink/netemu/scheduler.hpp"

namespace ptxlink::netemu {

using Bytes = std::vector<std::uint8_t>;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DelayFamily { lognormal, normal, constant };

/// A positive delay distribution described by its median and the ratio of
/// its interquartile range to that median. Zero dispersion is deterministic.
struct DelayDistribution {
    DelayFamily family = DelayFamily::lognormal;
    double median_us = 0.0;
    double iqr_ratio = 0.0;

    double sample(Rng& rng) const;
    bool deterministic() const noexcept { return family == DelayFamily::constant || iqr_ratio == 0.0; }
};

/// Physical medium of a hop; topology rules are phrased in terms of it.
enum class Medium { cellular, microwave, satellite, wired, lan };

std::string_view to_string(Medium m);
Medium medium_from_string(std::string_view s);
std::string_view to_string(DelayFamily f);
DelayFamily delay_family_from_string(std::string_view s);

struct LinkProfile {
    std::string name;
    Medium medium = Medium::cellular;
    DelayDistribution base_delay;
    double per_byte_us = 0.0;
    double loss_prob = 0.0;
    double corrupt_prob = 0.0;
    std::string jitter_seed_domain;
    bool uncalibrated = false;

    void validate() const;
    /// Same profile with every delay component multiplied by `factor`.
    LinkProfile scaled(double factor) const;
    /// One-way delay a frame of `bytes` would see at the median base delay.
    double median_delay_us(std::size_t bytes) const { return base_delay.median_us + per_byte_us * double(bytes); }
};

/// Base-delay sample plus the per-byte serialization term; always >= 1 us.
Micros sample_delay(const LinkProfile& profile, std::size_t size, Rng& rng);

enum class DeliveryStatus { delivered, lost, corrupted };

std::string_view to_string(DeliveryStatus s);
DeliveryStatus delivery_status_from_string(std::string_view s);

struct DeliveryOutcome {
    DeliveryStatus status = DeliveryStatus::lost;
    Micros send_time = 0;
    std::optional<Micros> deliver_time;

    bool operator==(const DeliveryOutcome&) const = default;
};

/// One frame after crossing a link or path. `bytes` carries a flipped bit
/// when the outcome is corrupted. `tx_complete` is when the sender finished
/// putting the frame on the wire (start of its burst plus serialization).
struct Transmission {
    DeliveryOutcome outcome;
    Bytes bytes;
    Micros tx_complete = 0;
};

/// Frames sent back to back share one base-delay sample; serialization
/// accumulates across the burst; loss and corruption are drawn per frame.
std::vector<Transmission> transmit_burst(std::vector<Bytes> frames, const LinkProfile& link, Micros send_time,
                                         Rng& rng);

Transmission transmit(Bytes frame, const LinkProfile& link, Micros send_time, Rng& rng);
inline Transmission transmit(Bytes frame, const LinkProfile& link, const SimClock& clock, Rng& rng) {
    return transmit(std::move(frame), link, clock.now(), rng);
}

/// Flips one bit in the payload/trailer region of an encoded frame so that
/// the header still parses but the CRC check fails.
void flip_payload_bit(Bytes& frame, Rng& rng);

/// A link instance inside an engine: profile, private random stream and
/// scheduled outage windows during which every frame is lost.
class Link {
public:
    Link(LinkProfile profile, std::uint64_t scenario_seed);

    const LinkProfile& profile() const noexcept { return profile_; }
    void add_outage(Micros from, Micros to);
    bool down_at(Micros t) const;

    std::vector<Transmission> transmit_burst(std::vector<Bytes> frames, Micros send_time);

private:
    friend class LinkPath;
    LinkProfile profile_;
    Rng rng_;
    std::vector<std::pair<Micros, Micros>> outages_;
};

/// Ordered hops between two endpoints. Intermediate nodes only forward.
/// The slowest hop bounds pipelined serialization of a burst.
class LinkPath {
public:
    LinkPath() = default;
    explicit LinkPath(std::vector<Link*> hops, Micros per_hop_forwarding_us = 0);

    std::vector<Transmission> transmit_burst(std::vector<Bytes> frames, Micros send_time);
    Transmission transmit(Bytes frame, Micros send_time);

    bool empty() const noexcept { return hops_.empty(); }
    const std::vector<Link*>& hops() const noexcept { return hops_; }
    /// Median one-way delay of a frame of `bytes` across all hops.
    double median_delay_us(std::size_t bytes) const;

private:
    std::vector<Link*> hops_;
    Micros forwarding_us_ = 0;
};

}  // namespace ptxlink::netemu
