#pragma once

#include <string>
#include <string_view>

#include "tilert/devices.hpp"

namespace tilert {

/// Parse a YAML topology document. Throws ConfigError carrying the 1-based
/// line of the offending node.
///
///     host_device_bandwidth: 6.54e9   # optional, bytes/s
///     peer_bandwidth: 7.8e9           # optional, bytes/s
///     devices:
///       - id: 0
///         kind: accelerator           # or host_compute
///         speed: 1.2e12               # flops/s, default 1e12
///         arena_capacity: 4294967296  # bytes, accelerators only
///         peer_group: 0               # optional
Topology parse_topology(std::string_view text);

/// Read and parse a topology file. A missing file is a ConfigError.
Topology load_topology(const std::string& path);

/// One accelerator with a 4 GiB arena and default link speeds.
Topology default_topology();

}  // namespace tilert
