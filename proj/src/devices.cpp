#include "tilert/devices.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <string>

#include "json.hpp"
#include "tilert/errors.hpp"

namespace tilert {

void Topology::validate() const {
    if (devices.empty()) throw InvalidTopology("topology has no devices");
    if (!(host_device_bandwidth > 0.0)) throw InvalidTopology("host_device_bandwidth must be positive");
    if (!(peer_bandwidth > 0.0)) throw InvalidTopology("peer_bandwidth must be positive");
    std::set<DeviceId> seen;
    for (const auto& d : devices) {
        if (d.id == host_endpoint) throw InvalidTopology("device id " + std::to_string(d.id) + " is reserved");
        if (!seen.insert(d.id).second) throw InvalidTopology("duplicate device id " + std::to_string(d.id));
        if (d.kind == DeviceKind::accelerator) {
            if (!(d.speed > 0.0)) {
                throw InvalidTopology("accelerator " + std::to_string(d.id) + " needs a positive speed");
            }
            if (d.arena_capacity == 0) {
                throw InvalidTopology("accelerator " + std::to_string(d.id) + " needs an arena capacity");
            }
        } else if (d.speed < 0.0) {
            throw InvalidTopology("host device " + std::to_string(d.id) + " has a negative speed");
        }
    }
}

std::size_t Topology::index_of(DeviceId id) const {
    for (std::size_t i = 0; i < devices.size(); ++i) {
        if (devices[i].id == id) return i;
    }
    throw InvalidTopology("unknown device " + std::to_string(id));
}

const DeviceDesc& Topology::device(DeviceId id) const { return devices[index_of(id)]; }

bool Topology::same_peer_group(DeviceId a, DeviceId b) const {
    if (a == b) return false;
    const auto& da = device(a);
    const auto& db = device(b);
    if (da.kind != DeviceKind::accelerator || db.kind != DeviceKind::accelerator) return false;
    return da.peer_group && db.peer_group && *da.peer_group == *db.peer_group;
}

double Topology::link_bandwidth(DeviceId src, DeviceId dst) const {
    if (src == dst) throw InvalidTopology("transfer from a device to itself");
    if (src == host_endpoint || dst == host_endpoint) {
        const DeviceId dev = src == host_endpoint ? dst : src;
        if (device(dev).kind != DeviceKind::accelerator) {
            throw InvalidTopology("device " + std::to_string(dev) + " has no host link");
        }
        return host_device_bandwidth;
    }
    if (!same_peer_group(src, dst)) {
        throw InvalidTopology("no peer link between devices " + std::to_string(src) + " and " +
                              std::to_string(dst));
    }
    return peer_bandwidth;
}

std::string_view to_string(TraceEvent e) noexcept {
    switch (e) {
        case TraceEvent::h2d: return "H2D";
        case TraceEvent::d2h: return "D2H";
        case TraceEvent::d2d: return "D2D";
        case TraceEvent::kernel: return "KERNEL";
        case TraceEvent::sync: return "SYNC";
    }
    return "?";
}

const DeviceMetrics& Metrics::device(DeviceId id) const {
    for (const auto& d : devices) {
        if (d.device_id == id) return d;
    }
    throw InvalidArgument("no metrics for device " + std::to_string(id));
}

std::uint64_t Metrics::total_h2d_bytes() const {
    std::uint64_t s = 0;
    for (const auto& d : devices) s += d.h2d_bytes;
    return s;
}

std::uint64_t Metrics::total_d2h_bytes() const {
    std::uint64_t s = 0;
    for (const auto& d : devices) s += d.d2h_bytes;
    return s;
}

std::uint64_t Metrics::total_d2d_bytes() const {
    std::uint64_t s = 0;
    for (const auto& d : devices) s += d.d2d_in_bytes;
    return s;
}

namespace {

using nlohmann::ordered_json;

ordered_json device_json(const DeviceMetrics& d) {
    ordered_json j;
    j["device_id"] = d.device_id;
    j["compt_seconds"] = d.compt_seconds;
    j["comm_unoverlapped_seconds"] = d.comm_unoverlapped_seconds;
    j["other_seconds"] = d.other_seconds;
    j["elapsed_seconds"] = d.elapsed_seconds;
    j["h2d_bytes"] = d.h2d_bytes;
    j["d2h_bytes"] = d.d2h_bytes;
    j["d2d_in_bytes"] = d.d2d_in_bytes;
    j["d2d_out_bytes"] = d.d2d_out_bytes;
    j["tasks_completed"] = d.tasks_completed;
    j["flops"] = d.flops;
    j["l1_hits"] = d.l1_hits;
    j["l2_hits"] = d.l2_hits;
    j["host_fetches"] = d.host_fetches;
    j["evictions"] = d.evictions;
    j["arena_reservations"] = d.arena_reservations;
    return j;
}

}  // namespace

std::string metrics_to_json(const Metrics& m) {
    ordered_json j;
    j["makespan"] = m.makespan;
    j["l1_hits"] = m.l1_hits;
    j["l2_hits"] = m.l2_hits;
    j["host_fetches"] = m.host_fetches;
    j["devices"] = ordered_json::array();
    for (const auto& d : m.devices) j["devices"].push_back(device_json(d));
    return j.dump(2) + "\n";
}

Metrics metrics_from_json(std::string_view text) {
    const auto j = nlohmann::json::parse(text);
    Metrics m;
    m.makespan = j.at("makespan").get<double>();
    m.l1_hits = j.at("l1_hits").get<std::uint64_t>();
    m.l2_hits = j.at("l2_hits").get<std::uint64_t>();
    m.host_fetches = j.at("host_fetches").get<std::uint64_t>();
    for (const auto& dj : j.at("devices")) {
        DeviceMetrics d;
        d.device_id = dj.at("device_id").get<DeviceId>();
        d.compt_seconds = dj.at("compt_seconds").get<double>();
        d.comm_unoverlapped_seconds = dj.at("comm_unoverlapped_seconds").get<double>();
        d.other_seconds = dj.at("other_seconds").get<double>();
        d.elapsed_seconds = dj.at("elapsed_seconds").get<double>();
        d.h2d_bytes = dj.at("h2d_bytes").get<std::uint64_t>();
        d.d2h_bytes = dj.at("d2h_bytes").get<std::uint64_t>();
        d.d2d_in_bytes = dj.at("d2d_in_bytes").get<std::uint64_t>();
        d.d2d_out_bytes = dj.at("d2d_out_bytes").get<std::uint64_t>();
        d.tasks_completed = dj.at("tasks_completed").get<std::uint64_t>();
        d.flops = dj.at("flops").get<std::uint64_t>();
        d.l1_hits = dj.at("l1_hits").get<std::uint64_t>();
        d.l2_hits = dj.at("l2_hits").get<std::uint64_t>();
        d.host_fetches = dj.at("host_fetches").get<std::uint64_t>();
        d.evictions = dj.at("evictions").get<std::uint64_t>();
        d.arena_reservations = dj.at("arena_reservations").get<std::uint64_t>();
        m.devices.push_back(d);
    }
    return m;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& trace) {
    os << "time_start,time_end,device,stream,event,bytes_or_flops,task_id,k\n";
    const auto flags = os.flags();
    const auto precision = os.precision();
    os << std::setprecision(17);
    for (const auto& r : trace) {
        os << r.time_start << ',' << r.time_end << ',' << r.device << ',' << r.stream << ',' << to_string(r.event)
           << ',' << r.bytes_or_flops << ',' << r.task_id << ',' << r.k << '\n';
    }
    os.flags(flags);
    os.precision(precision);
}

SimClock::SimClock(const Topology& topology, bool record_trace) : topology_(topology), record_trace_(record_trace) {
    topology_.validate();
    engines_.reserve(topology_.devices.size());
    for (const auto& d : topology_.devices) {
        Engine e;
        e.desc = d;
        e.streams.assign(d.kind == DeviceKind::accelerator ? streams_per_accelerator : 1, 0.0);
        engines_.push_back(std::move(e));
    }
}

SimClock::Engine& SimClock::engine(DeviceId id) { return engines_[topology_.index_of(id)]; }

const SimClock::Engine& SimClock::engine(DeviceId id) const { return engines_[topology_.index_of(id)]; }

std::size_t SimClock::stream_count(DeviceId device) const { return engine(device).streams.size(); }

double SimClock::schedule_transfer(DeviceId src, DeviceId dst, std::uint64_t bytes, std::size_t stream,
                                   double earliest, TraceTag tag) {
    const double bw = topology_.link_bandwidth(src, dst);
    TraceEvent kind = TraceEvent::d2d;
    if (src == host_endpoint) kind = TraceEvent::h2d;
    if (dst == host_endpoint) kind = TraceEvent::d2h;
    Engine& e = engine(kind == TraceEvent::d2h ? src : dst);
    if (stream >= e.streams.size()) throw InvalidArgument("stream index out of range");
    double& lane = e.streams[stream];
    const double start = std::max({e.dma_busy_until, lane, earliest});
    if (bytes == 0) return start;

    const double end = start + static_cast<double>(bytes) / bw;
    e.dma_busy_until = end;
    lane = end;
    e.transfers.push_back({start, end});
    switch (kind) {
        case TraceEvent::h2d: e.h2d += bytes; break;
        case TraceEvent::d2h: e.d2h += bytes; break;
        default:
            e.d2d_in += bytes;
            engine(src).d2d_out->fetch_add(bytes, std::memory_order_relaxed);
            break;
    }
    if (record_trace_) {
        e.events.push_back({start, end, e.desc.id, static_cast<int>(stream), kind, bytes, tag.task_id, tag.k});
    }
    return end;
}

double SimClock::schedule_kernel(DeviceId device, std::uint64_t flops, std::size_t stream, double earliest,
                                 TraceTag tag) {
    Engine& e = engine(device);
    if (!(e.desc.speed > 0.0)) {
        throw InvalidArgument("device " + std::to_string(device) + " cannot run kernels at speed 0");
    }
    if (stream >= e.streams.size()) throw InvalidArgument("stream index out of range");
    double& lane = e.streams[stream];
    const double start = std::max({e.compute_busy_until, lane, earliest});
    const double duration = static_cast<double>(flops) / e.desc.speed;
    const double end = start + duration;
    e.compute_busy_until = end;
    lane = end;
    e.kernels.push_back({start, end});
    e.compt += duration;
    e.flops += flops;
    if (record_trace_) {
        const int s = e.desc.kind == DeviceKind::accelerator ? static_cast<int>(stream) : -1;
        e.events.push_back({start, end, device, s, TraceEvent::kernel, flops, tag.task_id, tag.k});
    }
    return end;
}

double SimClock::stream_done(DeviceId device, std::size_t stream) const {
    const Engine& e = engine(device);
    if (stream >= e.streams.size()) throw InvalidArgument("stream index out of range");
    return e.streams[stream];
}

double SimClock::device_done(DeviceId device) const {
    const Engine& e = engine(device);
    return *std::max_element(e.streams.begin(), e.streams.end());
}

double SimClock::synchronize(DeviceId device, double host_time) {
    Engine& e = engine(device);
    const double done = std::max(host_time, device_done(device));
    if (record_trace_ && e.desc.kind == DeviceKind::accelerator) {
        e.events.push_back({host_time, done, device, -1, TraceEvent::sync, 0, -1, -1});
    }
    return done;
}

namespace {

// Length of the union of intervals that are sorted by start.
template <typename Interval>
double union_length(const std::vector<Interval>& v) {
    double total = 0.0;
    double cur_start = 0.0;
    double cur_end = -1.0;
    bool open = false;
    for (const auto& iv : v) {
        if (!open || iv.start > cur_end) {
            if (open) total += cur_end - cur_start;
            cur_start = iv.start;
            cur_end = iv.end;
            open = true;
        } else {
            cur_end = std::max(cur_end, iv.end);
        }
    }
    if (open) total += cur_end - cur_start;
    return total;
}

}  // namespace

Metrics SimClock::finalize() const {
    Metrics m;
    for (const auto& e : engines_) {
        DeviceMetrics d;
        d.device_id = e.desc.id;
        d.compt_seconds = e.compt;
        d.flops = e.flops;
        d.h2d_bytes = e.h2d;
        d.d2h_bytes = e.d2h;
        d.d2d_in_bytes = e.d2d_in;
        d.d2d_out_bytes = e.d2d_out->load(std::memory_order_relaxed);

        double elapsed = 0.0;
        for (const auto& iv : e.kernels) elapsed = std::max(elapsed, iv.end);
        for (const auto& iv : e.transfers) elapsed = std::max(elapsed, iv.end);
        d.elapsed_seconds = elapsed;

        // Time with a transfer in flight and no kernel running.
        auto kernels = e.kernels;
        auto transfers = e.transfers;
        auto by_start = [](const Interval& a, const Interval& b) { return a.start < b.start; };
        std::sort(kernels.begin(), kernels.end(), by_start);
        std::sort(transfers.begin(), transfers.end(), by_start);
        std::vector<Interval> both = kernels;
        both.insert(both.end(), transfers.begin(), transfers.end());
        std::sort(both.begin(), both.end(), by_start);
        const double comm = union_length(both) - union_length(kernels);
        d.comm_unoverlapped_seconds = std::max(0.0, comm);
        d.other_seconds = std::max(0.0, d.elapsed_seconds - d.compt_seconds - d.comm_unoverlapped_seconds);

        m.makespan = std::max(m.makespan, elapsed);
        m.devices.push_back(d);
    }
    return m;
}

std::vector<TraceRecord> SimClock::trace() const {
    std::vector<TraceRecord> all;
    for (const auto& e : engines_) all.insert(all.end(), e.events.begin(), e.events.end());
    std::stable_sort(all.begin(), all.end(), [](const TraceRecord& a, const TraceRecord& b) {
        if (a.time_start != b.time_start) return a.time_start < b.time_start;
        if (a.device != b.device) return a.device < b.device;
        return a.time_end < b.time_end;
    });
    return all;
}

}  // namespace tilert
