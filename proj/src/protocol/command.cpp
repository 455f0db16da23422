#include "ptxlink/protocol/command.hpp"

#include <cmath>

namespace ptxlink::protocol {

std::string_view to_string(Gait g) {
    switch (g) {
        case Gait::idle: return "idle";
        case Gait::walk: return "walk";
        case Gait::run: return "run";
        case Gait::stairs: return "stairs";
    }
    return "unknown";
}

Gait gait_from_string(std::string_view s) {
    if (s == "idle") return Gait::idle;
    if (s == "walk") return Gait::walk;
    if (s == "run") return Gait::run;
    if (s == "stairs") return Gait::stairs;
    throw InvalidCommand("unknown gait '" + std::string(s) + "'");
}

void validate(const CommandMessage& cmd, const CommandCaps& caps) {
    if (static_cast<std::uint8_t>(cmd.gait) > 3) throw InvalidCommand("unknown gait value");
    if (!std::isfinite(cmd.vx) || std::abs(cmd.vx) > caps.max_vx) throw InvalidCommand("vx outside cap");
    if (!std::isfinite(cmd.vy) || std::abs(cmd.vy) > caps.max_vy) throw InvalidCommand("vy outside cap");
    if (!std::isfinite(cmd.yaw_rate) || std::abs(cmd.yaw_rate) > caps.max_yaw_rate)
        throw InvalidCommand("yaw_rate outside cap");
    if (cmd.duration_ms > caps.max_duration_ms) throw InvalidCommand("duration_ms outside cap");
}

Bytes encode_command(const CommandMessage& cmd) {
    Bytes out;
    out.reserve(kCommandBodySize);
    ByteWriter w(out);
    w.u8(static_cast<std::uint8_t>(cmd.gait));
    w.f64(cmd.vx);
    w.f64(cmd.vy);
    w.f64(cmd.yaw_rate);
    w.u32(cmd.duration_ms);
    return out;
}

CommandMessage decode_command(std::span<const std::uint8_t> body) {
    ByteReader r(body);
    CommandMessage c;
    const auto g = r.u8();
    if (g > 3) throw InvalidCommand("unknown gait value " + std::to_string(g));
    c.gait = static_cast<Gait>(g);
    c.vx = r.f64();
    c.vy = r.f64();
    c.yaw_rate = r.f64();
    c.duration_ms = r.u32();
    return c;
}

}  // namespace ptxlink::protocol
