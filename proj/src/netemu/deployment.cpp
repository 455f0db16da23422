#include "ptxlink/netemu/deployment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ptxlink/netemu/link.hpp"

namespace ptxlink::netemu {

std::string_view to_string(DeploymentKind k) {
    switch (k) {
        case DeploymentKind::function: return "function";
        case DeploymentKind::container: return "container";
        case DeploymentKind::orchestrated: return "orchestrated";
    }
    return "unknown";
}

void DeploymentProfile::validate() const {
    if (!(mean_ms > 0.0) || !std::isfinite(mean_ms)) {
        throw ConfigError("deployment '" + name + "': mean_ms must be positive");
    }
    if (!(iqr_ratio >= 0.0) || !std::isfinite(iqr_ratio)) {
        throw ConfigError("deployment '" + name + "': iqr_ratio must be >= 0");
    }
    if (!(transfer_scale > 0.0) || !std::isfinite(transfer_scale)) {
        throw ConfigError("deployment '" + name + "': transfer_scale must be positive");
    }
}

double sample_processing(const DeploymentProfile& profile, Rng& rng) {
    if (profile.iqr_ratio == 0.0) {
        return std::max(kMinProcessingMs, profile.mean_ms);
    }
    // Log-normal with the requested mean: mu = ln(mean) - sigma^2 / 2.
    const double sigma = std::asinh(profile.iqr_ratio / 2.0) / 0.6744897501960817;
    const double mu = std::log(profile.mean_ms) - 0.5 * sigma * sigma;
    std::normal_distribution<double> z(0.0, 1.0);
    return std::max(kMinProcessingMs, std::exp(mu + sigma * z(rng)));
}

}  // namespace ptxlink::netemu
