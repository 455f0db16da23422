#include "ptxlink/netemu/config.hpp"

#include <algorithm>
#include <cctype>

namespace ptxlink::netemu {

namespace {

LinkProfile make_profile(std::string name, Medium medium, double median_ms, double iqr_ratio, double per_byte_us,
                         bool uncalibrated = false) {
    LinkProfile p;
    p.name = name;
    p.medium = medium;
    p.base_delay = {DelayFamily::lognormal, median_ms * 1000.0, iqr_ratio};
    p.per_byte_us = per_byte_us;
    p.jitter_seed_domain = std::move(name);
    p.uncalibrated = uncalibrated;
    return p;
}

Medium default_medium(std::string_view name) {
    if (name.find("microwave") != std::string_view::npos) return Medium::microwave;
    if (name.find("sat") != std::string_view::npos) return Medium::satellite;
    if (name.find("wired") != std::string_view::npos || name.find("fiber") != std::string_view::npos)
        return Medium::wired;
    if (name.find("lan") != std::string_view::npos) return Medium::lan;
    return Medium::cellular;
}

}  // namespace

std::string normalize_name(std::string_view name) {
    std::string out;
    out.reserve(name.size());
    for (const char c : name) {
        out.push_back(c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

ProfileSet ProfileSet::builtin() {
    ProfileSet s;
    // Cellular profiles: base + per-byte split so that a 222.8 kB request
    // plus a small response round-trips at 150 / 240 / 70 ms median.
    s.put(make_profile("lte", Medium::cellular, 54.0, 0.30, 0.178));
    s.put(make_profile("5g_nsa", Medium::cellular, 98.4, 0.30, 0.180));
    s.put(make_profile("5g_sa", Medium::cellular, 29.6, 0.20, 0.046));
    // Backhaul and local hops have no measured reference.
    s.put(make_profile("microwave", Medium::microwave, 5.0, 0.10, 0.08, true));
    s.put(make_profile("satellite", Medium::satellite, 270.0, 0.10, 0.40, true));
    s.put(make_profile("wired_shore", Medium::wired, 2.0, 0.10, 0.008, true));
    s.put(make_profile("lan", Medium::lan, 0.2, 0.10, 0.008, true));
    return s;
}

const LinkProfile& ProfileSet::at(std::string_view name) const {
    const auto it = profiles_.find(normalize_name(name));
    if (it == profiles_.end()) {
        throw ConfigError("unknown link profile '" + std::string(name) + "'");
    }
    return it->second;
}

bool ProfileSet::contains(std::string_view name) const { return profiles_.contains(normalize_name(name)); }

void ProfileSet::put(LinkProfile profile) {
    profile.validate();
    auto key = normalize_name(profile.name);
    profiles_.insert_or_assign(std::move(key), std::move(profile));
}

std::vector<std::string> ProfileSet::names() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : profiles_) out.push_back(k);
    return out;
}

void ProfileSet::merge_json(const nlohmann::json& profiles) {
    if (!profiles.is_object()) {
        throw ConfigError("'profiles' must be an object keyed by profile name");
    }
    for (const auto& [raw_name, body] : profiles.items()) {
        const std::string name = normalize_name(raw_name);
        LinkProfile p;
        if (contains(name)) {
            p = at(name);
        } else {
            p.name = name;
            p.jitter_seed_domain = name;
            p.medium = default_medium(name);
            if (!body.contains("median_ms")) {
                throw ConfigError("new profile '" + name + "' needs median_ms");
            }
        }
        try {
            if (body.contains("median_ms")) p.base_delay.median_us = body.at("median_ms").get<double>() * 1000.0;
            if (body.contains("iqr_ratio")) p.base_delay.iqr_ratio = body.at("iqr_ratio").get<double>();
            if (body.contains("family")) p.base_delay.family = delay_family_from_string(body.at("family").get<std::string>());
            if (body.contains("per_byte_us")) p.per_byte_us = body.at("per_byte_us").get<double>();
            if (body.contains("loss_prob")) p.loss_prob = body.at("loss_prob").get<double>();
            if (body.contains("corrupt_prob")) p.corrupt_prob = body.at("corrupt_prob").get<double>();
            if (body.contains("uncalibrated")) p.uncalibrated = body.at("uncalibrated").get<bool>();
            if (body.contains("medium")) p.medium = medium_from_string(body.at("medium").get<std::string>());
            if (body.contains("jitter_seed_domain"))
                p.jitter_seed_domain = body.at("jitter_seed_domain").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("profile '" + name + "': " + e.what());
        }
        put(std::move(p));
    }
}

std::string canonical_deployment_name(std::string_view name) {
    const std::string n = normalize_name(name);
    if (n == "function" || n == "conventional" || n == "conventional_function" || n == "5g_nsa_function")
        return "function";
    if (n == "container" || n == "containerized" || n == "docker" || n == "5g_nsa_docker") return "container";
    if (n == "orchestrated" || n == "container_orchestrated" || n == "kubernetes" || n == "k8s" ||
        n == "5g_nsa_kubernetes")
        return "orchestrated";
    return n;
}

DeploymentSet DeploymentSet::builtin() {
    DeploymentSet s;
    s.put({"function", DeploymentKind::function, 245.0, 0.05, 230.0 / 240.0});
    s.put({"container", DeploymentKind::container, 247.0, 0.05, 310.0 / 240.0});
    s.put({"orchestrated", DeploymentKind::orchestrated, 246.0, 0.05, 1.0});
    return s;
}

const DeploymentProfile& DeploymentSet::at(std::string_view name) const {
    const auto it = deployments_.find(canonical_deployment_name(name));
    if (it == deployments_.end()) {
        throw ConfigError("unknown deployment '" + std::string(name) + "'");
    }
    return it->second;
}

bool DeploymentSet::contains(std::string_view name) const {
    return deployments_.contains(canonical_deployment_name(name));
}

void DeploymentSet::put(DeploymentProfile profile) {
    profile.validate();
    auto key = canonical_deployment_name(profile.name);
    deployments_.insert_or_assign(std::move(key), std::move(profile));
}

std::vector<std::string> DeploymentSet::names() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : deployments_) out.push_back(k);
    return out;
}

void DeploymentSet::merge_json(const nlohmann::json& deployments) {
    if (!deployments.is_object()) {
        throw ConfigError("'deployments' must be an object keyed by deployment name");
    }
    for (const auto& [raw_name, body] : deployments.items()) {
        const std::string name = canonical_deployment_name(raw_name);
        DeploymentProfile d;
        if (contains(name)) {
            d = at(name);
        } else {
            d.name = name;
            d.kind = DeploymentKind::orchestrated;
        }
        try {
            if (body.contains("mean_ms")) d.mean_ms = body.at("mean_ms").get<double>();
            if (body.contains("iqr_ratio")) d.iqr_ratio = body.at("iqr_ratio").get<double>();
            if (body.contains("transfer_scale")) d.transfer_scale = body.at("transfer_scale").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("deployment '" + name + "': " + e.what());
        }
        put(std::move(d));
    }
}

nlohmann::json to_json(const LinkProfile& p) {
    nlohmann::json j = nlohmann::json::object();
    j["name"] = p.name;
    j["medium"] = std::string(to_string(p.medium));
    j["family"] = std::string(to_string(p.base_delay.family));
    j["median_ms"] = p.base_delay.median_us / 1000.0;
    j["iqr_ratio"] = p.base_delay.iqr_ratio;
    j["per_byte_us"] = p.per_byte_us;
    j["loss_prob"] = p.loss_prob;
    j["corrupt_prob"] = p.corrupt_prob;
    j["uncalibrated"] = p.uncalibrated;
    return j;
}

nlohmann::json to_json(const DeploymentProfile& d) {
    nlohmann::json j = nlohmann::json::object();
    j["name"] = d.name;
    j["kind"] = std::string(to_string(d.kind));
    j["mean_ms"] = d.mean_ms;
    j["iqr_ratio"] = d.iqr_ratio;
    j["transfer_scale"] = d.transfer_scale;
    return j;
}

}  // namespace ptxlink::netemu
