#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tilert/devices.hpp"
#include "tilert/memory.hpp"
#include "tilert/tiling.hpp"

namespace tilert {

struct LruBlock {
    TileKey key;
    std::size_t offset = 0;
    std::size_t bytes = 0;
    int reader = 0;
    /// Simulated time at which the block's content has fully arrived.
    double ready_time = 0.0;
    /// End of the latest peer copy that reads this block.
    double copy_until = 0.0;
};

/// Recency list of one device's cached input tiles (front = most recent).
///
/// Eviction walks from the tail and takes the first block nobody is reading,
/// so a pinned tail is skipped rather than waited on.
class AlruCache {
public:
    explicit AlruCache(DeviceId device) : device_(device) {}

    DeviceId device() const noexcept { return device_; }
    std::size_t size() const noexcept { return map_.size(); }
    bool empty() const noexcept { return map_.empty(); }

    LruBlock* find(const TileKey& key);
    const LruBlock* find(const TileKey& key) const;

    /// Moves the block to the front and returns it, or nullptr on a miss.
    LruBlock* touch(const TileKey& key);

    /// Inserts a new reader-free block at the front. Throws InvalidArgument
    /// when the key is already present.
    LruBlock& enqueue(const TileKey& key, std::size_t offset, std::size_t bytes);

    /// Removes and returns the tail-most block with no readers; nullopt when
    /// every block is pinned (or the list is empty).
    std::optional<LruBlock> dequeue();

    void acquire(const TileKey& key);
    /// Throws InternalError when the count would drop below zero.
    void release(const TileKey& key);

    /// Keys from front to back.
    std::vector<TileKey> order() const;
    const std::list<LruBlock>& blocks() const noexcept { return list_; }

private:
    DeviceId device_;
    std::list<LruBlock> list_;
    std::unordered_map<TileKey, std::list<LruBlock>::iterator, TileKeyHash> map_;
};

enum class MesiState { modified, exclusive, shared, invalid };

std::string_view to_string(MesiState s) noexcept;

/// Which devices hold a copy of each host tile.
///
/// State is a function of the holder count (none: I, one: E, several: S).
/// M exists only inside write_back, which passes through it on the way to I.
class CoherenceDirectory {
public:
    struct Entry {
        MesiState state = MesiState::invalid;
        std::vector<DeviceId> holders;  ///< ascending

        friend bool operator==(const Entry&, const Entry&) = default;
    };

    /// Throws InternalError on a duplicate holder.
    void add_holder(const TileKey& key, DeviceId device);
    /// Throws InternalError when the device is not a holder.
    void remove_holder(const TileKey& key, DeviceId device);

    /// Output tile finished on a device: M, then I once the host copy is
    /// current. Throws InternalError if anyone caches the tile.
    void write_back(const TileKey& key);

    MesiState state(const TileKey& key) const;
    std::vector<DeviceId> holders(const TileKey& key) const;

    /// Only keys with at least one holder are kept.
    const std::map<TileKey, Entry>& entries() const noexcept { return entries_; }

    /// Count of each observed (from, to) transition.
    const std::map<std::pair<MesiState, MesiState>, std::uint64_t>& transitions() const noexcept {
        return transitions_;
    }

    /// Throws InternalError if any entry's state disagrees with its holders.
    void check_invariants() const;

private:
    void note(MesiState from, MesiState to) { ++transitions_[{from, to}]; }

    std::map<TileKey, Entry> entries_;
    std::map<std::pair<MesiState, MesiState>, std::uint64_t> transitions_;
};

enum class FetchOutcome { l1_hit, l2_hit, host_fetch };

std::string_view to_string(FetchOutcome o) noexcept;

/// Residency of a tile as seen from one device, for task priorities.
enum class Residency { none = 0, peer = 1, local = 2 };

struct CacheOptions {
    bool l1_enabled = true;
    bool l2_enabled = true;
};

/// Handed to the fetch callback when a tile has to be moved in.
struct FetchRequest {
    DeviceId device = 0;
    TileKey key;
    FetchOutcome outcome = FetchOutcome::host_fetch;
    std::optional<DeviceId> source;  ///< set for l2_hit
    double source_ready = 0.0;
    std::size_t bytes = 0;
    std::span<double> buffer;  ///< already filled for l2_hit
    /// The segment may still be read by an outgoing peer copy of an evicted
    /// tile until this time.
    double not_before = 0.0;
};

/// Fills the buffer on a host fetch, schedules the transfer and returns the
/// time the tile is ready on the device.
using FetchFn = std::function<double(const FetchRequest&)>;

struct TranslateResult {
    /// False when no space could be freed without a synchronization point.
    bool ok = false;
    std::size_t offset = 0;
    FetchOutcome outcome = FetchOutcome::host_fetch;
    std::optional<DeviceId> source;
    double ready_time = 0.0;
    std::span<double> buffer;
    /// Uncached scratch copy (L1 disabled); release it with free_segment.
    bool scratch = false;
};

struct CacheCounters {
    std::uint64_t l1_hits = 0;
    std::uint64_t l2_hits = 0;
    std::uint64_t host_fetches = 0;
    std::uint64_t evictions = 0;
};

/// Per-device ALRU caches and arenas plus the shared directory.
///
/// A peer copy does not raise the source block's reader count. Evicting the
/// source instead raises the device's reuse floor to the copy's end, so the
/// freed memory is not overwritten while the copy is still in flight.
///
/// Device memory is backed by one host buffer per arena segment, so kernels
/// operate on real copies of the tiles. Every public call takes one mutex,
/// which makes the structure safe to share between device workers.
class TileCache {
public:
    TileCache(const Topology& topology, CacheOptions options = {});

    /// Look the tile up on `device`, pulling it in from a peer or the host on
    /// a miss. With `acquire` the block's reader count is raised before the
    /// lock is dropped.
    TranslateResult translate(DeviceId device, const TileKey& key, std::size_t bytes, const FetchFn& fetch,
                              bool acquire = true);

    void reader_acquire(DeviceId device, const TileKey& key);
    void reader_release(DeviceId device, const TileKey& key);

    /// Arena space for an output tile, evicting idle cached tiles as needed.
    /// nullopt when everything left is pinned.
    std::optional<std::size_t> allocate_output(DeviceId device, std::size_t bytes);
    void free_segment(DeviceId device, std::size_t offset);
    std::span<double> buffer(DeviceId device, std::size_t offset);

    /// Earliest time newly allocated memory on the device may be written:
    /// the end of the last peer copy out of any block evicted so far.
    double reuse_floor(DeviceId device) const;

    /// Marks the output tile written back to the host (M then I).
    void output_write_back(const TileKey& key);

    Residency residency(DeviceId device, const TileKey& key) const;

    /// Evicts one idle block from the device (test hook for the fuzzer).
    std::optional<TileKey> evict_one(DeviceId device);

    CacheCounters counters(DeviceId device) const;
    std::size_t arena_reservations(DeviceId device) const;
    std::size_t arena_used(DeviceId device) const;
    std::vector<TileKey> lru_order(DeviceId device) const;
    std::optional<LruBlock> block(DeviceId device, const TileKey& key) const;
    CoherenceDirectory::Entry directory_entry(const TileKey& key) const;
    std::map<std::pair<MesiState, MesiState>, std::uint64_t> directory_transitions() const;
    const CacheOptions& options() const noexcept { return options_; }

    /// Rebuilds the directory from the ALRUs and compares; also checks every
    /// arena and the directory's own invariants. Throws InternalError.
    void check_consistency() const;

private:
    struct DeviceCache {
        DeviceDesc desc;
        AlruCache alru;
        Arena arena;
        std::unordered_map<std::size_t, std::vector<double>> segments;
        CacheCounters counters;
        double reuse_floor = 0.0;
    };

    DeviceCache& dev(DeviceId id);
    const DeviceCache& dev(DeviceId id) const;

    std::optional<std::size_t> allocate_locked(DeviceCache& d, std::size_t bytes);
    bool evict_locked(DeviceCache& d);
    std::optional<DeviceId> peer_holder_locked(DeviceId device, const TileKey& key) const;

    Topology topology_;
    CacheOptions options_;
    std::vector<DeviceCache> devices_;
    std::unordered_map<DeviceId, std::size_t> index_;
    CoherenceDirectory directory_;
    mutable std::mutex mutex_;
};

}  // namespace tilert
