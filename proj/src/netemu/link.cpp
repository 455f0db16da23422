#include "ptxlink/netemu/link.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ptxlink::netemu {

namespace {

// Third quartile of the standard normal.
constexpr double kZ75 = 0.6744897501960817;

constexpr std::size_t kFrameHeaderBytes = 24;

struct HopRef {
    const LinkProfile* profile;
    Rng* rng;
    const std::vector<std::pair<Micros, Micros>>* outages;
};

bool in_outage(const std::vector<std::pair<Micros, Micros>>* outages, Micros t) {
    if (outages == nullptr) {
        return false;
    }
    return std::any_of(outages->begin(), outages->end(),
                       [t](const auto& w) { return t >= w.first && t < w.second; });
}

std::vector<Transmission> burst_over(std::span<const HopRef> hops, Micros forwarding_us, std::vector<Bytes> frames,
                                     Micros send_time) {
    std::vector<double> bases;
    bases.reserve(hops.size());
    double pb_max = 0.0;
    double pb_sum = 0.0;
    for (const auto& hop : hops) {
        const auto& d = hop.profile->base_delay;
        bases.push_back(d.deterministic() ? d.median_us : d.sample(*hop.rng));
        pb_max = std::max(pb_max, hop.profile->per_byte_us);
        pb_sum += hop.profile->per_byte_us;
    }

    std::vector<Transmission> out;
    out.reserve(frames.size());
    double cumulative = 0.0;
    for (auto& frame : frames) {
        const double size = static_cast<double>(frame.size());
        const double queued = pb_max * cumulative;
        cumulative += size;

        Transmission tx;
        tx.tx_complete = send_time + static_cast<Micros>(std::llround(pb_max * cumulative));
        tx.outcome.send_time = send_time;

        double delay = pb_max * cumulative + (pb_sum - pb_max) * size;
        double enter = static_cast<double>(send_time) + queued;
        DeliveryStatus status = DeliveryStatus::delivered;
        for (std::size_t k = 0; k < hops.size(); ++k) {
            const auto& p = *hops[k].profile;
            if (in_outage(hops[k].outages, static_cast<Micros>(enter))) {
                status = DeliveryStatus::lost;
                break;
            }
            const double u = uniform01(*hops[k].rng);
            if (u < p.loss_prob) {
                status = DeliveryStatus::lost;
                break;
            }
            if (u < p.loss_prob + p.corrupt_prob && status == DeliveryStatus::delivered) {
                status = DeliveryStatus::corrupted;
                flip_payload_bit(frame, *hops[k].rng);
            }
            delay += bases[k];
            enter += bases[k] + static_cast<double>(forwarding_us) + p.per_byte_us * size;
        }
        delay += static_cast<double>(forwarding_us) * static_cast<double>(hops.size() > 0 ? hops.size() - 1 : 0);

        tx.outcome.status = status;
        if (status != DeliveryStatus::lost) {
            tx.outcome.deliver_time = send_time + std::max<Micros>(1, static_cast<Micros>(std::llround(delay)));
            tx.bytes = std::move(frame);
        }
        out.push_back(std::move(tx));
    }
    return out;
}

}  // namespace

double DelayDistribution::sample(Rng& rng) const {
    if (deterministic()) {
        return median_us;
    }
    std::normal_distribution<double> z(0.0, 1.0);
    switch (family) {
        case DelayFamily::lognormal: {
            const double sigma = std::asinh(iqr_ratio / 2.0) / kZ75;
            return median_us * std::exp(sigma * z(rng));
        }
        case DelayFamily::normal:
            return median_us + z(rng) * iqr_ratio * median_us / (2.0 * kZ75);
        case DelayFamily::constant:
            break;
    }
    return median_us;
}

std::string_view to_string(Medium m) {
    switch (m) {
        case Medium::cellular: return "cellular";
        case Medium::microwave: return "microwave";
        case Medium::satellite: return "satellite";
        case Medium::wired: return "wired";
        case Medium::lan: return "lan";
    }
    return "unknown";
}

Medium medium_from_string(std::string_view s) {
    if (s == "cellular") return Medium::cellular;
    if (s == "microwave") return Medium::microwave;
    if (s == "satellite") return Medium::satellite;
    if (s == "wired") return Medium::wired;
    if (s == "lan") return Medium::lan;
    throw ConfigError("unknown medium '" + std::string(s) + "'");
}

std::string_view to_string(DelayFamily f) {
    switch (f) {
        case DelayFamily::lognormal: return "lognormal";
        case DelayFamily::normal: return "normal";
        case DelayFamily::constant: return "constant";
    }
    return "unknown";
}

DelayFamily delay_family_from_string(std::string_view s) {
    if (s == "lognormal") return DelayFamily::lognormal;
    if (s == "normal") return DelayFamily::normal;
    if (s == "constant") return DelayFamily::constant;
    throw ConfigError("unknown delay family '" + std::string(s) + "'");
}

std::string_view to_string(DeliveryStatus s) {
    switch (s) {
        case DeliveryStatus::delivered: return "delivered";
        case DeliveryStatus::lost: return "lost";
        case DeliveryStatus::corrupted: return "corrupted";
    }
    return "unknown";
}

DeliveryStatus delivery_status_from_string(std::string_view s) {
    if (s == "delivered") return DeliveryStatus::delivered;
    if (s == "lost") return DeliveryStatus::lost;
    if (s == "corrupted") return DeliveryStatus::corrupted;
    throw ConfigError("unknown delivery status '" + std::string(s) + "'");
}

void LinkProfile::validate() const {
    auto fail = [this](const std::string& what) { throw ConfigError("link profile '" + name + "': " + what); };
    if (!(loss_prob >= 0.0 && loss_prob <= 1.0)) fail("loss_prob outside [0,1]");
    if (!(corrupt_prob >= 0.0 && corrupt_prob <= 1.0)) fail("corrupt_prob outside [0,1]");
    if (loss_prob + corrupt_prob > 1.0 + 1e-12) fail("loss_prob + corrupt_prob exceeds 1");
    if (!(base_delay.median_us > 0.0) || !std::isfinite(base_delay.median_us)) fail("median delay must be positive");
    if (!(base_delay.iqr_ratio >= 0.0) || !std::isfinite(base_delay.iqr_ratio)) fail("iqr_ratio must be >= 0");
    if (!(per_byte_us >= 0.0) || !std::isfinite(per_byte_us)) fail("per_byte_us must be >= 0");
}

LinkProfile LinkProfile::scaled(double factor) const {
    LinkProfile p = *this;
    p.base_delay.median_us *= factor;
    p.per_byte_us *= factor;
    return p;
}

Micros sample_delay(const LinkProfile& profile, std::size_t size, Rng& rng) {
    const double base = profile.base_delay.deterministic() ? profile.base_delay.median_us
                                                           : profile.base_delay.sample(rng);
    const double total = base + profile.per_byte_us * static_cast<double>(size);
    return std::max<Micros>(1, static_cast<Micros>(std::llround(total)));
}

void flip_payload_bit(Bytes& frame, Rng& rng) {
    if (frame.empty()) {
        return;
    }
    const std::size_t first = frame.size() > kFrameHeaderBytes ? kFrameHeaderBytes : 0;
    const std::size_t bits = (frame.size() - first) * 8;
    const std::size_t bit = std::uniform_int_distribution<std::size_t>(0, bits - 1)(rng);
    frame[first + bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
}

std::vector<Transmission> transmit_burst(std::vector<Bytes> frames, const LinkProfile& link, Micros send_time,
                                         Rng& rng) {
    const HopRef hop{&link, &rng, nullptr};
    return burst_over(std::span(&hop, 1), 0, std::move(frames), send_time);
}

Transmission transmit(Bytes frame, const LinkProfile& link, Micros send_time, Rng& rng) {
    std::vector<Bytes> one;
    one.push_back(std::move(frame));
    return std::move(transmit_burst(std::move(one), link, send_time, rng).front());
}

Link::Link(LinkProfile profile, std::uint64_t scenario_seed)
    : profile_(std::move(profile)),
      rng_(make_stream(scenario_seed,
                       profile_.jitter_seed_domain.empty() ? profile_.name : profile_.jitter_seed_domain)) {
    profile_.validate();
}

void Link::add_outage(Micros from, Micros to) {
    if (to <= from) {
        throw std::invalid_argument("outage window must have positive length");
    }
    outages_.emplace_back(from, to);
}

bool Link::down_at(Micros t) const { return in_outage(&outages_, t); }

std::vector<Transmission> Link::transmit_burst(std::vector<Bytes> frames, Micros send_time) {
    const HopRef hop{&profile_, &rng_, &outages_};
    return burst_over(std::span(&hop, 1), 0, std::move(frames), send_time);
}

LinkPath::LinkPath(std::vector<Link*> hops, Micros per_hop_forwarding_us)
    : hops_(std::move(hops)), forwarding_us_(per_hop_forwarding_us) {}

std::vector<Transmission> LinkPath::transmit_burst(std::vector<Bytes> frames, Micros send_time) {
    std::vector<HopRef> refs;
    refs.reserve(hops_.size());
    for (Link* l : hops_) {
        refs.push_back({&l->profile_, &l->rng_, &l->outages_});
    }
    return burst_over(refs, forwarding_us_, std::move(frames), send_time);
}

Transmission LinkPath::transmit(Bytes frame, Micros send_time) {
    std::vector<Bytes> one;
    one.push_back(std::move(frame));
    return std::move(transmit_burst(std::move(one), send_time).front());
}

double LinkPath::median_delay_us(std::size_t bytes) const {
    double total = 0.0;
    for (const Link* l : hops_) {
        total += l->profile().median_delay_us(bytes);
    }
    return total + static_cast<double>(forwarding_us_) * static_cast<double>(hops_.empty() ? 0 : hops_.size() - 1);
}

}  // namespace ptxlink::netemu
