#pragma once

#include <cstdint>
#include <stdexcept>
#include <string_view>

#include "ptxlink/protocol/bytes.hpp"

namespace ptxlink::protocol {

enum class Gait : std::uint8_t { idle = 0, walk = 1, run = 2, stairs = 3 };

std::string_view to_string(Gait g);
Gait gait_from_string(std::string_view s);

struct CommandCaps {
    double max_vx = 1.5;
    double max_vy = 0.8;
    double max_yaw_rate = 2.0;
    std::uint32_t max_duration_ms = 5000;
};

/// High-level teleoperation command: gait plus body-frame velocities held
/// for `duration_ms`.
struct CommandMessage {
    Gait gait = Gait::walk;
    double vx = 0.0;
    double vy = 0.0;
    double yaw_rate = 0.0;
    std::uint32_t duration_ms = 0;

    bool operator==(const CommandMessage&) const = default;
};

class InvalidCommand : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

void validate(const CommandMessage& cmd, const CommandCaps& caps = {});

inline constexpr std::size_t kCommandBodySize = 1 + 3 * 8 + 4;

Bytes encode_command(const CommandMessage& cmd);
CommandMessage decode_command(std::span<const std::uint8_t> body);

}  // namespace ptxlink::protocol
