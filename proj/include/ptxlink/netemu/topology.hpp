#pragma once

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptxlink/netemu/config.hpp"
#include "ptxlink/netemu/link.hpp"

namespace ptxlink::netemu {

/// Production setups: centralized/decentralized electrolysis, on-/off-grid.
enum class SetupId { setup1 = 1, setup2 = 2, setup3 = 3, setup4 = 4, custom = 0 };

class UnknownPreset : public std::invalid_argument {
public:
    explicit UnknownPreset(const std::string& what)
        : std::invalid_argument("unknown topology preset '" + what + "'") {}
};

SetupId setup_from_string(std::string_view s);
std::string_view to_string(SetupId s);
bool is_off_grid(SetupId s);

enum class NodeRole { robot, platform_edge, aggregation, jump_host, shore_cloud, control_room, turbine };

/// Network zones: the platform is reachable from shore only through the
/// boundary (jump host).
enum class Zone { platform, boundary, shore };

std::string_view to_string(NodeRole r);
NodeRole node_role_from_string(std::string_view s);
Zone zone_of(NodeRole r);

struct Node {
    std::string id;
    NodeRole role;
};

struct TopologyLink {
    std::string a;
    std::string b;
    LinkProfile profile;

    bool touches(std::string_view n) const { return a == n || b == n; }
    const std::string& other(std::string_view n) const { return a == n ? b : a; }
};

/// One directed step of a route.
struct RouteHop {
    const TopologyLink* link;
    std::string from;
    std::string to;
};

struct TopologyOptions {
    std::string local_network = "5g_sa";
    std::string campus_network = "5g_sa";
    int turbines = 3;
};

class Topology {
public:
    SetupId preset = SetupId::custom;
    std::vector<Node> nodes;
    std::vector<TopologyLink> links;

    bool has_node(std::string_view id) const;
    const Node& node(std::string_view id) const;
    std::vector<const TopologyLink*> links_of(std::string_view id) const;
    std::vector<const Node*> nodes_with_role(NodeRole role) const;

    bool connected() const;
    /// Minimum median-delay route; links whose medium is in `avoid` are skipped.
    std::optional<std::vector<RouteHop>> route(std::string_view from, std::string_view to,
                                               const std::set<Medium>& avoid = {}) const;
    /// Media of links joining a platform/boundary node to a shore node.
    std::set<Medium> shore_media() const;

    /// Throws ConfigError when a structural invariant is violated.
    void validate() const;

    nlohmann::json to_json() const;
};

Topology build_topology(SetupId preset, const ProfileSet& profiles = ProfileSet::builtin(),
                        const TopologyOptions& options = {});
Topology build_topology(std::string_view preset, const ProfileSet& profiles = ProfileSet::builtin(),
                        const TopologyOptions& options = {});

/// `{preset, turbines?, local_network?}` or `{nodes: [{id, role}], links: [{a, b, profile}]}`.
Topology topology_from_json(const nlohmann::json& j, const ProfileSet& profiles);

}  // namespace ptxlink::netemu
