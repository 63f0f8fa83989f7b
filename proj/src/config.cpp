#include "tilert/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "tilert/errors.hpp"

namespace tilert {

namespace {

std::size_t line_of(const YAML::Node& n) { return static_cast<std::size_t>(n.Mark().line + 1); }

double number(const YAML::Node& n, const std::string& key) {
    if (!n.IsScalar()) throw ConfigError(key + " must be a number", line_of(n));
    double v = 0.0;
    try {
        v = n.as<double>();
    } catch (const YAML::Exception&) {
        throw ConfigError(key + " must be a number, got '" + n.Scalar() + "'", line_of(n));
    }
    if (!std::isfinite(v)) throw ConfigError(key + " must be finite", line_of(n));
    if (v < 0.0) throw ConfigError(key + " must not be negative", line_of(n));
    return v;
}

std::uint64_t whole(const YAML::Node& n, const std::string& key) {
    const double v = number(n, key);
    if (v != std::floor(v) || v > 1.8e19) throw ConfigError(key + " must be a whole number", line_of(n));
    return static_cast<std::uint64_t>(v);
}

DeviceDesc parse_device(const YAML::Node& n) {
    if (!n.IsMap()) throw ConfigError("each device must be a mapping", line_of(n));
    static const std::set<std::string> known{"id", "kind", "speed", "arena_capacity", "peer_group"};
    for (const auto& kv : n) {
        const auto key = kv.first.as<std::string>();
        if (!known.count(key)) throw ConfigError("unknown device field '" + key + "'", line_of(kv.first));
    }
    if (!n["id"]) throw ConfigError("device without an id", line_of(n));
    if (!n["kind"]) throw ConfigError("device without a kind", line_of(n));

    DeviceDesc d;
    const auto id = whole(n["id"], "id");
    if (id >= host_endpoint) throw ConfigError("device id out of range", line_of(n["id"]));
    d.id = static_cast<DeviceId>(id);

    const auto kind = n["kind"].as<std::string>();
    if (kind == "accelerator") {
        d.kind = DeviceKind::accelerator;
    } else if (kind == "host_compute") {
        d.kind = DeviceKind::host_compute;
    } else {
        throw ConfigError("unknown device kind '" + kind + "'", line_of(n["kind"]));
    }
    if (n["speed"]) d.speed = number(n["speed"], "speed");
    if (d.kind == DeviceKind::accelerator) {
        if (!n["arena_capacity"]) throw ConfigError("accelerator without arena_capacity", line_of(n));
        d.arena_capacity = whole(n["arena_capacity"], "arena_capacity");
        if (d.speed == 0.0) throw ConfigError("accelerator speed must be positive", line_of(n));
        if (d.arena_capacity == 0) throw ConfigError("arena_capacity must be positive", line_of(n["arena_capacity"]));
        if (n["peer_group"]) {
            d.peer_group = static_cast<std::uint32_t>(whole(n["peer_group"], "peer_group"));
        }
    } else if (n["peer_group"]) {
        throw ConfigError("host_compute devices take no peer_group", line_of(n["peer_group"]));
    }
    return d;
}

}  // namespace

Topology parse_topology(std::string_view text) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(text));
    } catch (const YAML::ParserException& e) {
        throw ConfigError(e.msg, static_cast<std::size_t>(e.mark.line + 1));
    }
    if (!root.IsMap()) throw ConfigError("topology must be a mapping", root.IsNull() ? 0 : line_of(root));

    static const std::set<std::string> known{"host_device_bandwidth", "peer_bandwidth", "devices"};
    for (const auto& kv : root) {
        const auto key = kv.first.as<std::string>();
        if (!known.count(key)) throw ConfigError("unknown field '" + key + "'", line_of(kv.first));
    }

    Topology t;
    if (root["host_device_bandwidth"]) {
        t.host_device_bandwidth = number(root["host_device_bandwidth"], "host_device_bandwidth");
        if (t.host_device_bandwidth == 0.0) {
            throw ConfigError("host_device_bandwidth must be positive", line_of(root["host_device_bandwidth"]));
        }
    }
    if (root["peer_bandwidth"]) {
        t.peer_bandwidth = number(root["peer_bandwidth"], "peer_bandwidth");
        if (t.peer_bandwidth == 0.0) {
            throw ConfigError("peer_bandwidth must be positive", line_of(root["peer_bandwidth"]));
        }
    }
    const YAML::Node devices = root["devices"];
    if (!devices) throw ConfigError("missing devices list", line_of(root));
    if (!devices.IsSequence()) throw ConfigError("devices must be a list", line_of(devices));
    if (devices.size() == 0) throw ConfigError("device list is empty", line_of(devices));

    std::set<DeviceId> ids;
    for (const auto& n : devices) {
        DeviceDesc d = parse_device(n);
        if (!ids.insert(d.id).second) {
            throw ConfigError("duplicate device id " + std::to_string(d.id), line_of(n["id"]));
        }
        t.devices.push_back(d);
    }
    try {
        t.validate();
    } catch (const InvalidTopology& e) {
        throw ConfigError(e.what(), 0);
    }
    return t;
}

Topology load_topology(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open topology file '" + path + "'", 0);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_topology(ss.str());
}

Topology default_topology() {
    Topology t;
    t.devices.push_back(DeviceDesc{0, DeviceKind::accelerator, 1e12, std::size_t{4} << 30, 0});
    return t;
}

}  // namespace tilert
