#pragma once

#include <string>
#include <string_view>

#include "ptxlink/netemu/rng.hpp"

namespace ptxlink::netemu {

enum class DeploymentKind { function, container, orchestrated };

std::string_view to_string(DeploymentKind k);

/// Server-side processing model for one deployment strategy.
///
/// Processing time is log-normal with the given mean and IQR ratio,
/// clamped below at `kMinProcessingMs`. `transfer_scale` multiplies the
/// network delay of runs executed under this deployment (the measured
/// transfer medians differ per deployment run even though processing does
/// not).
struct DeploymentProfile {
    std::string name;
    DeploymentKind kind = DeploymentKind::orchestrated;
    double mean_ms = 246.0;
    double iqr_ratio = 0.05;
    double transfer_scale = 1.0;

    void validate() const;
};

inline constexpr double kMinProcessingMs = 1.0;

/// One processing-time draw in milliseconds; always >= kMinProcessingMs.
double sample_processing(const DeploymentProfile& profile, Rng& rng);

}  // namespace ptxlink::netemu
