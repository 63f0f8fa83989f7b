#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace tilert {

using DeviceId = std::uint32_t;

/// Endpoint id standing for host RAM in transfers.
inline constexpr DeviceId host_endpoint = std::numeric_limits<DeviceId>::max();

/// Measured average DMA throughput, bytes per second.
inline constexpr double default_host_bandwidth = 6.54e9;
inline constexpr double default_peer_bandwidth = 7.8e9;

inline constexpr std::size_t streams_per_accelerator = 4;

enum class DeviceKind { accelerator, host_compute };

struct DeviceDesc {
    DeviceId id = 0;
    DeviceKind kind = DeviceKind::accelerator;
    double speed = 1e12;  ///< flops per simulated second
    std::size_t arena_capacity = 0;
    /// Devices sharing a group may copy tiles directly. Absent on host_compute
    /// devices; an accelerator without one forms a group by itself.
    std::optional<std::uint32_t> peer_group;
};

struct Topology {
    std::vector<DeviceDesc> devices;
    double host_device_bandwidth = default_host_bandwidth;
    double peer_bandwidth = default_peer_bandwidth;

    /// Throws InvalidTopology on duplicate ids, bad values or an empty list.
    void validate() const;
    const DeviceDesc& device(DeviceId id) const;
    std::size_t index_of(DeviceId id) const;
    bool same_peer_group(DeviceId a, DeviceId b) const;
    /// Bandwidth of the link between two endpoints; throws InvalidTopology
    /// when none exists.
    double link_bandwidth(DeviceId src, DeviceId dst) const;
};

enum class TraceEvent { h2d, d2h, d2d, kernel, sync };

std::string_view to_string(TraceEvent e) noexcept;

struct TraceRecord {
    double time_start = 0.0;
    double time_end = 0.0;
    DeviceId device = 0;
    int stream = -1;
    TraceEvent event = TraceEvent::kernel;
    std::uint64_t bytes_or_flops = 0;
    std::int64_t task_id = -1;
    std::int64_t k = -1;
};

/// What an operation belongs to, for the trace.
struct TraceTag {
    std::int64_t task_id = -1;
    std::int64_t k = -1;
};

struct DeviceMetrics {
    DeviceId device_id = 0;
    double compt_seconds = 0.0;
    double comm_unoverlapped_seconds = 0.0;
    double other_seconds = 0.0;
    double elapsed_seconds = 0.0;
    std::uint64_t h2d_bytes = 0;
    std::uint64_t d2h_bytes = 0;
    std::uint64_t d2d_in_bytes = 0;
    std::uint64_t d2d_out_bytes = 0;
    std::uint64_t tasks_completed = 0;
    std::uint64_t flops = 0;
    std::uint64_t l1_hits = 0;
    std::uint64_t l2_hits = 0;
    std::uint64_t host_fetches = 0;
    std::uint64_t evictions = 0;
    std::uint64_t arena_reservations = 0;
};

struct Metrics {
    double makespan = 0.0;
    std::uint64_t l1_hits = 0;
    std::uint64_t l2_hits = 0;
    std::uint64_t host_fetches = 0;
    std::vector<DeviceMetrics> devices;

    const DeviceMetrics& device(DeviceId id) const;
    std::uint64_t total_h2d_bytes() const;
    std::uint64_t total_d2h_bytes() const;
    std::uint64_t total_d2d_bytes() const;
};

/// Deterministic JSON rendering of every Metrics field.
std::string metrics_to_json(const Metrics& m);
Metrics metrics_from_json(std::string_view text);

void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& trace);

/// Simulated time for every device: one compute engine, one DMA engine and a
/// set of in-order streams multiplexed onto them.
///
/// A transfer runs on the DMA engine of the accelerator it serves: the
/// destination for host-to-device and device-to-device copies, the source for
/// write-backs. Every engine is only ever advanced by the worker that owns
/// its device, so the clock needs no locking apart from the peer-side
/// device-to-device byte counter.
class SimClock {
public:
    explicit SimClock(const Topology& topology, bool record_trace = false);

    /// Returns the completion time. Zero-byte transfers cost nothing and leave
    /// every counter untouched.
    double schedule_transfer(DeviceId src, DeviceId dst, std::uint64_t bytes, std::size_t stream,
                             double earliest = 0.0, TraceTag tag = {});

    /// Returns the completion time. Kernels on one device never overlap.
    double schedule_kernel(DeviceId device, std::uint64_t flops, std::size_t stream, double earliest = 0.0,
                           TraceTag tag = {});

    /// Completion of the last operation on `stream` / on any stream.
    double stream_done(DeviceId device, std::size_t stream) const;
    double device_done(DeviceId device) const;

    /// Blocks the device's issuing thread until all its streams drain and
    /// returns that time. `host_time` is when the thread started waiting.
    double synchronize(DeviceId device, double host_time);

    std::size_t stream_count(DeviceId device) const;

    /// COMPT/COMM/OTHER split and byte counters. Cache counters and task
    /// counts are left for the caller to fill.
    Metrics finalize() const;

    /// Events of all devices ordered by (start, device, end).
    std::vector<TraceRecord> trace() const;

private:
    struct Interval {
        double start;
        double end;
    };

    struct Engine {
        DeviceDesc desc;
        double compute_busy_until = 0.0;
        double dma_busy_until = 0.0;
        std::vector<double> streams;
        std::vector<Interval> kernels;
        std::vector<Interval> transfers;
        double compt = 0.0;
        std::uint64_t flops = 0;
        std::uint64_t h2d = 0;
        std::uint64_t d2h = 0;
        std::uint64_t d2d_in = 0;
        std::unique_ptr<std::atomic<std::uint64_t>> d2d_out = std::make_unique<std::atomic<std::uint64_t>>(0);
        std::vector<TraceRecord> events;
    };

    Engine& engine(DeviceId id);
    const Engine& engine(DeviceId id) const;

    Topology topology_;
    bool record_trace_;
    std::vector<Engine> engines_;
};

}  // namespace tilert
