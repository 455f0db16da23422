#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptxlink/netemu/deployment.hpp"
#include "ptxlink/netemu/link.hpp"

namespace ptxlink::netemu {

/// Lower-cases and maps '-' to '_' so "5G-SA" and "5g_sa" name the same profile.
std::string normalize_name(std::string_view name);

/// Named link profiles. Starts from the built-in calibrated set; a config
/// document may override individual fields or add new profiles.
class ProfileSet {
public:
    static ProfileSet builtin();

    const LinkProfile& at(std::string_view name) const;
    bool contains(std::string_view name) const;
    void put(LinkProfile profile);
    std::vector<std::string> names() const;

    /// Applies `{name: {median_ms, iqr_ratio, per_byte_us, loss_prob, corrupt_prob, uncalibrated?, family?, medium?}}`.
    void merge_json(const nlohmann::json& profiles);

private:
    std::map<std::string, LinkProfile, std::less<>> profiles_;
};

class DeploymentSet {
public:
    static DeploymentSet builtin();

    /// Accepts the canonical names and the labels used for the measured
    /// runs ("docker", "kubernetes", ...).
    const DeploymentProfile& at(std::string_view name) const;
    bool contains(std::string_view name) const;
    void put(DeploymentProfile profile);
    std::vector<std::string> names() const;

    void merge_json(const nlohmann::json& deployments);

private:
    std::map<std::string, DeploymentProfile, std::less<>> deployments_;
};

std::string canonical_deployment_name(std::string_view name);

/// Reference transfer used to calibrate the built-in cellular profiles.
inline constexpr std::size_t kReferenceImageBytes = 222'800;

/// Round-trip medians the built-in cellular profiles are calibrated to, in ms.
struct CalibrationTarget {
    std::string_view profile;
    double transfer_median_ms;
};
inline constexpr CalibrationTarget kCalibrationTargets[] = {
    {"lte", 150.0},
    {"5g_nsa", 240.0},
    {"5g_sa", 70.0},
};

nlohmann::json to_json(const LinkProfile& p);
nlohmann::json to_json(const DeploymentProfile& d);

}  // namespace ptxlink::netemu
