#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "expected.hpp"
#include "tilert/devices.hpp"
#include "tilert/scheduler.hpp"
#include "tilert/workload.hpp"

namespace support {

inline std::size_t tile_bytes(std::size_t t) { return t * t * sizeof(double); }

inline tilert::DeviceDesc accelerator(tilert::DeviceId id, double speed, std::size_t arena_bytes,
                                      std::optional<std::uint32_t> group = 0) {
    return {id, tilert::DeviceKind::accelerator, speed, arena_bytes, group};
}

inline tilert::DeviceDesc host(tilert::DeviceId id, double speed) {
    return {id, tilert::DeviceKind::host_compute, speed, 0, std::nullopt};
}

/// `count` equal accelerators in one peer group with room for `tiles` tiles.
inline tilert::Topology accelerators(std::size_t count, std::size_t t, std::size_t tiles = 64,
                                     double speed = 1e12) {
    tilert::Topology topo;
    for (std::size_t i = 0; i < count; ++i) {
        topo.devices.push_back(accelerator(static_cast<tilert::DeviceId>(i), speed, tiles * tile_bytes(t)));
    }
    return topo;
}

struct Outcome {
    tilert::RunResult result;
    double error = 0.0;
};

/// Run the problem on the fabric and compare its output with the oracle.
inline Outcome run_checked(tilert::Problem p, const tilert::Topology& topo, const tilert::RunOptions& opts = {}) {
    const auto want = oracle::expected_output(p);
    tilert::RoutinePlan plan(p.call());
    Outcome o{tilert::run_plan(plan, topo, opts), 0.0};
    o.error = oracle::rel_error(oracle::from_host(p.output()), want);
    return o;
}

inline tilert::ProblemSpec gemm_spec(std::size_t n, std::size_t t) {
    tilert::ProblemSpec s;
    s.routine = tilert::Routine::gemm;
    s.m = s.n = s.k = n;
    s.tile_size = t;
    s.beta = 0.0;
    return s;
}

}  // namespace support
