#include "ptxlink/netemu/topology.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <queue>

namespace ptxlink::netemu {

SetupId setup_from_string(std::string_view s) {
    const std::string n = normalize_name(s);
    if (n == "setup1" || n == "setup_1" || n == "1") return SetupId::setup1;
    if (n == "setup2" || n == "setup_2" || n == "2") return SetupId::setup2;
    if (n == "setup3" || n == "setup_3" || n == "3") return SetupId::setup3;
    if (n == "setup4" || n == "setup_4" || n == "4") return SetupId::setup4;
    throw UnknownPreset(std::string(s));
}

std::string_view to_string(SetupId s) {
    switch (s) {
        case SetupId::setup1: return "setup1";
        case SetupId::setup2: return "setup2";
        case SetupId::setup3: return "setup3";
        case SetupId::setup4: return "setup4";
        case SetupId::custom: return "custom";
    }
    return "custom";
}

bool is_off_grid(SetupId s) { return s == SetupId::setup3 || s == SetupId::setup4; }

std::string_view to_string(NodeRole r) {
    switch (r) {
        case NodeRole::robot: return "robot";
        case NodeRole::platform_edge: return "platform_edge";
        case NodeRole::aggregation: return "aggregation";
        case NodeRole::jump_host: return "jump_host";
        case NodeRole::shore_cloud: return "shore_cloud";
        case NodeRole::control_room: return "control_room";
        case NodeRole::turbine: return "turbine_node";
    }
    return "unknown";
}

NodeRole node_role_from_string(std::string_view s) {
    const std::string n = normalize_name(s);
    if (n == "robot") return NodeRole::robot;
    if (n == "platform_edge") return NodeRole::platform_edge;
    if (n == "aggregation") return NodeRole::aggregation;
    if (n == "jump_host") return NodeRole::jump_host;
    if (n == "shore_cloud") return NodeRole::shore_cloud;
    if (n == "control_room") return NodeRole::control_room;
    if (n == "turbine" || n == "turbine_node") return NodeRole::turbine;
    throw ConfigError("unknown node role '" + std::string(s) + "'");
}

Zone zone_of(NodeRole r) {
    switch (r) {
        case NodeRole::jump_host: return Zone::boundary;
        case NodeRole::shore_cloud:
        case NodeRole::control_room: return Zone::shore;
        default: return Zone::platform;
    }
}

bool Topology::has_node(std::string_view id) const {
    return std::any_of(nodes.begin(), nodes.end(), [&](const Node& n) { return n.id == id; });
}

const Node& Topology::node(std::string_view id) const {
    const auto it = std::find_if(nodes.begin(), nodes.end(), [&](const Node& n) { return n.id == id; });
    if (it == nodes.end()) {
        throw ConfigError("no node '" + std::string(id) + "' in topology");
    }
    return *it;
}

std::vector<const TopologyLink*> Topology::links_of(std::string_view id) const {
    std::vector<const TopologyLink*> out;
    for (const auto& l : links) {
        if (l.touches(id)) out.push_back(&l);
    }
    return out;
}

std::vector<const Node*> Topology::nodes_with_role(NodeRole role) const {
    std::vector<const Node*> out;
    for (const auto& n : nodes) {
        if (n.role == role) out.push_back(&n);
    }
    return out;
}

bool Topology::connected() const {
    if (nodes.empty()) return true;
    std::set<std::string> seen{nodes.front().id};
    std::vector<std::string> stack{nodes.front().id};
    while (!stack.empty()) {
        const std::string cur = stack.back();
        stack.pop_back();
        for (const auto* l : links_of(cur)) {
            if (seen.insert(l->other(cur)).second) stack.push_back(l->other(cur));
        }
    }
    return seen.size() == nodes.size();
}

std::optional<std::vector<RouteHop>> Topology::route(std::string_view from, std::string_view to,
                                                     const std::set<Medium>& avoid) const {
    node(from);
    node(to);
    // Dijkstra over median one-way delay of a small frame; ties resolve to
    // the earlier-declared link.
    std::map<std::string, double, std::less<>> dist;
    std::map<std::string, std::pair<std::string, const TopologyLink*>, std::less<>> prev;
    using Item = std::pair<double, std::string>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[std::string(from)] = 0.0;
    pq.emplace(0.0, std::string(from));
    while (!pq.empty()) {
        auto [d, cur] = pq.top();
        pq.pop();
        if (d > dist[cur]) continue;
        if (cur == to) break;
        for (const auto* l : links_of(cur)) {
            if (avoid.contains(l->profile.medium)) continue;
            const std::string& nxt = l->other(cur);
            const double nd = d + l->profile.median_delay_us(64);
            const auto it = dist.find(nxt);
            if (it == dist.end() || nd < it->second) {
                dist[nxt] = nd;
                prev[nxt] = {cur, l};
                pq.emplace(nd, nxt);
            }
        }
    }
    if (!dist.contains(to)) return std::nullopt;
    std::vector<RouteHop> hops;
    for (std::string cur(to); cur != from;) {
        const auto& [p, l] = prev.at(cur);
        hops.push_back({l, p, cur});
        cur = p;
    }
    std::reverse(hops.begin(), hops.end());
    return hops;
}

std::set<Medium> Topology::shore_media() const {
    std::set<Medium> out;
    for (const auto& l : links) {
        const Zone za = zone_of(node(l.a).role);
        const Zone zb = zone_of(node(l.b).role);
        if ((za == Zone::shore) != (zb == Zone::shore)) out.insert(l.profile.medium);
    }
    return out;
}

void Topology::validate() const {
    std::set<std::string> ids;
    for (const auto& n : nodes) {
        if (!ids.insert(n.id).second) throw ConfigError("duplicate node id '" + n.id + "'");
    }
    for (const auto& l : links) {
        if (!ids.contains(l.a) || !ids.contains(l.b)) {
            throw ConfigError("link " + l.a + "<->" + l.b + " references an undeclared node");
        }
        const Zone za = zone_of(node(l.a).role);
        const Zone zb = zone_of(node(l.b).role);
        if ((za == Zone::platform && zb == Zone::shore) || (za == Zone::shore && zb == Zone::platform)) {
            throw ConfigError("link " + l.a + "<->" + l.b + " bypasses the jump host zone boundary");
        }
    }
    if (!connected()) throw ConfigError("topology is not connected");
    if (is_off_grid(preset)) {
        for (const Medium m : shore_media()) {
            if (m != Medium::microwave && m != Medium::satellite) {
                throw ConfigError("off-grid preset has a " + std::string(to_string(m)) + " shore link");
            }
        }
    }
    if (preset == SetupId::setup2 || preset == SetupId::setup4) {
        const auto turbines = nodes_with_role(NodeRole::turbine);
        if (turbines.size() < 2) throw ConfigError("decentralized preset needs at least two turbine nodes");
        for (const auto* t : turbines) {
            const auto ls = links_of(t->id);
            if (ls.size() != 1 || node(ls.front()->other(t->id)).role != NodeRole::platform_edge) {
                throw ConfigError("turbine '" + t->id + "' must have exactly one campus link to platform_edge");
            }
        }
    }
}

nlohmann::json Topology::to_json() const {
    nlohmann::json j;
    j["preset"] = std::string(to_string(preset));
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : nodes) j["nodes"].push_back({{"id", n.id}, {"role", std::string(to_string(n.role))}});
    j["links"] = nlohmann::json::array();
    for (const auto& l : links) {
        j["links"].push_back({{"a", l.a}, {"b", l.b}, {"profile", l.profile.name},
                              {"medium", std::string(to_string(l.profile.medium))}});
    }
    return j;
}

Topology build_topology(SetupId preset, const ProfileSet& profiles, const TopologyOptions& options) {
    if (preset == SetupId::custom) throw UnknownPreset("custom");
    Topology t;
    t.preset = preset;
    t.nodes = {{"robot", NodeRole::robot},          {"platform_edge", NodeRole::platform_edge},
               {"aggregation", NodeRole::aggregation}, {"jump_host", NodeRole::jump_host},
               {"shore_cloud", NodeRole::shore_cloud}, {"control_room", NodeRole::control_room}};
    t.links.push_back({"robot", "platform_edge", profiles.at(options.local_network)});
    t.links.push_back({"platform_edge", "aggregation", profiles.at("lan")});
    t.links.push_back({"platform_edge", "jump_host", profiles.at("lan")});

    if (is_off_grid(preset)) {
        for (const char* shore : {"shore_cloud", "control_room"}) {
            t.links.push_back({"jump_host", shore, profiles.at("microwave")});
            t.links.push_back({"jump_host", shore, profiles.at("satellite")});
        }
    } else {
        t.links.push_back({"jump_host", "shore_cloud", profiles.at("wired_shore")});
        t.links.push_back({"shore_cloud", "control_room", profiles.at("wired_shore")});
    }

    if (preset == SetupId::setup2 || preset == SetupId::setup4) {
        if (options.turbines < 2) throw ConfigError("decentralized presets need at least two turbines");
        for (int i = 1; i <= options.turbines; ++i) {
            const std::string id = "turbine_" + std::to_string(i);
            t.nodes.push_back({id, NodeRole::turbine});
            t.links.push_back({id, "platform_edge", profiles.at(options.campus_network)});
        }
    }
    t.validate();
    return t;
}

Topology build_topology(std::string_view preset, const ProfileSet& profiles, const TopologyOptions& options) {
    return build_topology(setup_from_string(preset), profiles, options);
}

Topology topology_from_json(const nlohmann::json& j, const ProfileSet& profiles) {
    try {
        if (j.contains("preset")) {
            TopologyOptions opt;
            if (j.contains("turbines")) opt.turbines = j.at("turbines").get<int>();
            if (j.contains("local_network")) opt.local_network = j.at("local_network").get<std::string>();
            if (j.contains("campus_network")) opt.campus_network = j.at("campus_network").get<std::string>();
            return build_topology(j.at("preset").get<std::string>(), profiles, opt);
        }
        Topology t;
        for (const auto& n : j.at("nodes")) {
            t.nodes.push_back({n.at("id").get<std::string>(), node_role_from_string(n.at("role").get<std::string>())});
        }
        for (const auto& l : j.at("links")) {
            t.links.push_back({l.at("a").get<std::string>(), l.at("b").get<std::string>(),
                               profiles.at(l.at("profile").get<std::string>())});
        }
        t.validate();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("topology: ") + e.what());
    }
}

}  // namespace ptxlink::netemu
