#include "tilert/cache.hpp"

#include <algorithm>
#include <string>

#include "tilert/errors.hpp"

namespace tilert {

namespace {

std::string describe(const TileKey& k) {
    return "tile(" + std::to_string(k.matrix) + "," + std::to_string(k.row) + "," + std::to_string(k.col) + ")";
}

MesiState state_for(std::size_t holders) {
    if (holders == 0) return MesiState::invalid;
    return holders == 1 ? MesiState::exclusive : MesiState::shared;
}

}  // namespace

LruBlock* AlruCache::find(const TileKey& key) {
    auto it = map_.find(key);
    return it == map_.end() ? nullptr : &*it->second;
}

const LruBlock* AlruCache::find(const TileKey& key) const {
    auto it = map_.find(key);
    return it == map_.end() ? nullptr : &*it->second;
}

LruBlock* AlruCache::touch(const TileKey& key) {
    auto it = map_.find(key);
    if (it == map_.end()) return nullptr;
    list_.splice(list_.begin(), list_, it->second);
    return &*it->second;
}

LruBlock& AlruCache::enqueue(const TileKey& key, std::size_t offset, std::size_t bytes) {
    if (map_.count(key)) {
        throw InvalidArgument("alru enqueue: " + describe(key) + " already cached on device " +
                              std::to_string(device_));
    }
    list_.push_front(LruBlock{key, offset, bytes, 0, 0.0});
    map_.emplace(key, list_.begin());
    return list_.front();
}

std::optional<LruBlock> AlruCache::dequeue() {
    for (auto it = list_.rbegin(); it != list_.rend(); ++it) {
        if (it->reader < 0) {
            throw InternalError("alru: negative reader on " + describe(it->key));
        }
        if (it->reader == 0) {
            LruBlock victim = *it;
            map_.erase(victim.key);
            list_.erase(std::next(it).base());
            return victim;
        }
    }
    return std::nullopt;
}

void AlruCache::acquire(const TileKey& key) {
    LruBlock* b = find(key);
    if (!b) throw InternalError("reader acquire on uncached " + describe(key));
    ++b->reader;
}

void AlruCache::release(const TileKey& key) {
    LruBlock* b = find(key);
    if (!b) throw InternalError("reader release on uncached " + describe(key));
    if (b->reader <= 0) throw InternalError("reader underflow on " + describe(key));
    --b->reader;
}

std::vector<TileKey> AlruCache::order() const {
    std::vector<TileKey> keys;
    keys.reserve(list_.size());
    for (const auto& b : list_) keys.push_back(b.key);
    return keys;
}

std::string_view to_string(MesiState s) noexcept {
    switch (s) {
        case MesiState::modified: return "M";
        case MesiState::exclusive: return "E";
        case MesiState::shared: return "S";
        case MesiState::invalid: return "I";
    }
    return "?";
}

void CoherenceDirectory::add_holder(const TileKey& key, DeviceId device) {
    Entry& e = entries_[key];
    auto pos = std::lower_bound(e.holders.begin(), e.holders.end(), device);
    if (pos != e.holders.end() && *pos == device) {
        throw InternalError("directory: device " + std::to_string(device) + " already holds " + describe(key));
    }
    e.holders.insert(pos, device);
    const MesiState next = state_for(e.holders.size());
    note(e.state, next);
    e.state = next;
}

void CoherenceDirectory::remove_holder(const TileKey& key, DeviceId device) {
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        throw InternalError("directory: " + describe(key) + " has no holders");
    }
    Entry& e = it->second;
    auto pos = std::find(e.holders.begin(), e.holders.end(), device);
    if (pos == e.holders.end()) {
        throw InternalError("directory: device " + std::to_string(device) + " does not hold " + describe(key));
    }
    e.holders.erase(pos);
    const MesiState next = state_for(e.holders.size());
    note(e.state, next);
    if (e.holders.empty()) {
        entries_.erase(it);
    } else {
        e.state = next;
    }
}

void CoherenceDirectory::write_back(const TileKey& key) {
    if (entries_.count(key)) {
        throw InternalError("directory: output " + describe(key) + " is cached at write-back");
    }
    note(MesiState::invalid, MesiState::modified);
    note(MesiState::modified, MesiState::invalid);
}

MesiState CoherenceDirectory::state(const TileKey& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? MesiState::invalid : it->second.state;
}

std::vector<DeviceId> CoherenceDirectory::holders(const TileKey& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? std::vector<DeviceId>{} : it->second.holders;
}

void CoherenceDirectory::check_invariants() const {
    for (const auto& [key, e] : entries_) {
        if (e.state == MesiState::modified) {
            throw InternalError("directory: " + describe(key) + " observed in M");
        }
        if (e.holders.empty() || e.state != state_for(e.holders.size())) {
            throw InternalError("directory: state of " + describe(key) + " disagrees with its holders");
        }
        if (std::adjacent_find(e.holders.begin(), e.holders.end(),
                               [](DeviceId a, DeviceId b) { return a >= b; }) != e.holders.end()) {
            throw InternalError("directory: holders of " + describe(key) + " not strictly ascending");
        }
    }
}

std::string_view to_string(FetchOutcome o) noexcept {
    switch (o) {
        case FetchOutcome::l1_hit: return "l1_hit";
        case FetchOutcome::l2_hit: return "l2_hit";
        case FetchOutcome::host_fetch: return "host_fetch";
    }
    return "?";
}

TileCache::TileCache(const Topology& topology, CacheOptions options) : topology_(topology), options_(options) {
    for (const auto& d : topology_.devices) {
        if (d.kind != DeviceKind::accelerator) continue;
        index_.emplace(d.id, devices_.size());
        devices_.push_back(DeviceCache{d, AlruCache(d.id), Arena(d.arena_capacity), {}, {}});
    }
}

TileCache::DeviceCache& TileCache::dev(DeviceId id) {
    auto it = index_.find(id);
    if (it == index_.end()) throw InvalidArgument("no cache for device " + std::to_string(id));
    return devices_[it->second];
}

const TileCache::DeviceCache& TileCache::dev(DeviceId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw InvalidArgument("no cache for device " + std::to_string(id));
    return devices_[it->second];
}

bool TileCache::evict_locked(DeviceCache& d) {
    auto victim = d.alru.dequeue();
    if (!victim) return false;
    if (victim->reader != 0) {
        throw InternalError("evicted a pinned block " + describe(victim->key));
    }
    d.arena.free(victim->offset);
    d.segments.erase(victim->offset);
    d.reuse_floor = std::max(d.reuse_floor, victim->copy_until);
    directory_.remove_holder(victim->key, d.desc.id);
    ++d.counters.evictions;
    return true;
}

std::optional<std::size_t> TileCache::allocate_locked(DeviceCache& d, std::size_t bytes) {
    if (bytes > d.arena.capacity()) {
        throw CapacityDeadlock("tile of " + std::to_string(bytes) + " bytes exceeds the arena of device " +
                               std::to_string(d.desc.id));
    }
    for (;;) {
        if (auto off = d.arena.allocate(bytes)) {
            d.segments[*off].assign(bytes / sizeof(double), 0.0);
            return off;
        }
        if (!evict_locked(d)) return std::nullopt;
    }
}

std::optional<DeviceId> TileCache::peer_holder_locked(DeviceId device, const TileKey& key) const {
    auto it = directory_.entries().find(key);
    if (it == directory_.entries().end()) return std::nullopt;
    for (DeviceId h : it->second.holders) {
        if (h != device && topology_.same_peer_group(device, h)) return h;
    }
    return std::nullopt;
}

TranslateResult TileCache::translate(DeviceId device, const TileKey& key, std::size_t bytes, const FetchFn& fetch,
                                     bool acquire) {
    std::lock_guard lock(mutex_);
    DeviceCache& d = dev(device);
    TranslateResult res;

    if (!options_.l1_enabled) {
        auto off = allocate_locked(d, bytes);
        if (!off) return res;
        res.ok = true;
        res.offset = *off;
        res.scratch = true;
        res.buffer = d.segments[*off];
        res.ready_time = fetch(
            FetchRequest{device, key, FetchOutcome::host_fetch, std::nullopt, 0.0, bytes, res.buffer, d.reuse_floor});
        ++d.counters.host_fetches;
        return res;
    }

    if (LruBlock* hit = d.alru.touch(key)) {
        if (acquire) ++hit->reader;
        ++d.counters.l1_hits;
        res.ok = true;
        res.offset = hit->offset;
        res.outcome = FetchOutcome::l1_hit;
        res.ready_time = hit->ready_time;
        res.buffer = d.segments[hit->offset];
        return res;
    }

    auto off = allocate_locked(d, bytes);
    if (!off) return res;
    res.ok = true;
    res.offset = *off;
    res.buffer = d.segments[*off];

    FetchRequest req{device, key, FetchOutcome::host_fetch, std::nullopt, 0.0, bytes, res.buffer};
    LruBlock* source = nullptr;
    if (options_.l2_enabled) {
        if (auto src = peer_holder_locked(device, key)) {
            DeviceCache& s = dev(*src);
            source = s.alru.find(key);
            const auto& from = s.segments.at(source->offset);
            std::copy(from.begin(), from.end(), res.buffer.begin());
            req.outcome = FetchOutcome::l2_hit;
            req.source = src;
            req.source_ready = source->ready_time;
        }
    }
    req.not_before = d.reuse_floor;
    res.outcome = req.outcome;
    res.source = req.source;
    res.ready_time = fetch(req);
    if (source) source->copy_until = std::max(source->copy_until, res.ready_time);
    if (res.outcome == FetchOutcome::l2_hit) {
        ++d.counters.l2_hits;
    } else {
        ++d.counters.host_fetches;
    }

    LruBlock& blk = d.alru.enqueue(key, *off, bytes);
    blk.ready_time = res.ready_time;
    if (acquire) ++blk.reader;
    directory_.add_holder(key, device);
    return res;
}

void TileCache::reader_acquire(DeviceId device, const TileKey& key) {
    std::lock_guard lock(mutex_);
    dev(device).alru.acquire(key);
}

void TileCache::reader_release(DeviceId device, const TileKey& key) {
    std::lock_guard lock(mutex_);
    dev(device).alru.release(key);
}

std::optional<std::size_t> TileCache::allocate_output(DeviceId device, std::size_t bytes) {
    std::lock_guard lock(mutex_);
    return allocate_locked(dev(device), bytes);
}

void TileCache::free_segment(DeviceId device, std::size_t offset) {
    std::lock_guard lock(mutex_);
    DeviceCache& d = dev(device);
    d.arena.free(offset);
    d.segments.erase(offset);
}

std::span<double> TileCache::buffer(DeviceId device, std::size_t offset) {
    std::lock_guard lock(mutex_);
    DeviceCache& d = dev(device);
    auto it = d.segments.find(offset);
    if (it == d.segments.end()) {
        throw InvalidArgument("no segment at offset " + std::to_string(offset) + " on device " +
                              std::to_string(device));
    }
    return it->second;
}

double TileCache::reuse_floor(DeviceId device) const {
    std::lock_guard lock(mutex_);
    return dev(device).reuse_floor;
}

void TileCache::output_write_back(const TileKey& key) {
    std::lock_guard lock(mutex_);
    directory_.write_back(key);
}

Residency TileCache::residency(DeviceId device, const TileKey& key) const {
    std::lock_guard lock(mutex_);
    if (!options_.l1_enabled) return Residency::none;
    if (dev(device).alru.find(key)) return Residency::local;
    return peer_holder_locked(device, key) ? Residency::peer : Residency::none;
}

std::optional<TileKey> TileCache::evict_one(DeviceId device) {
    std::lock_guard lock(mutex_);
    DeviceCache& d = dev(device);
    auto victim = d.alru.dequeue();
    if (!victim) return std::nullopt;
    d.arena.free(victim->offset);
    d.segments.erase(victim->offset);
    d.reuse_floor = std::max(d.reuse_floor, victim->copy_until);
    directory_.remove_holder(victim->key, device);
    ++d.counters.evictions;
    return victim->key;
}

CacheCounters TileCache::counters(DeviceId device) const {
    std::lock_guard lock(mutex_);
    return dev(device).counters;
}

std::size_t TileCache::arena_reservations(DeviceId device) const {
    std::lock_guard lock(mutex_);
    return dev(device).arena.reservations();
}

std::size_t TileCache::arena_used(DeviceId device) const {
    std::lock_guard lock(mutex_);
    return dev(device).arena.used();
}

std::vector<TileKey> TileCache::lru_order(DeviceId device) const {
    std::lock_guard lock(mutex_);
    return dev(device).alru.order();
}

std::optional<LruBlock> TileCache::block(DeviceId device, const TileKey& key) const {
    std::lock_guard lock(mutex_);
    const LruBlock* b = dev(device).alru.find(key);
    return b ? std::optional<LruBlock>(*b) : std::nullopt;
}

CoherenceDirectory::Entry TileCache::directory_entry(const TileKey& key) const {
    std::lock_guard lock(mutex_);
    auto it = directory_.entries().find(key);
    return it == directory_.entries().end() ? CoherenceDirectory::Entry{} : it->second;
}

std::map<std::pair<MesiState, MesiState>, std::uint64_t> TileCache::directory_transitions() const {
    std::lock_guard lock(mutex_);
    return directory_.transitions();
}

void TileCache::check_consistency() const {
    std::lock_guard lock(mutex_);
    directory_.check_invariants();
    std::map<TileKey, CoherenceDirectory::Entry> rebuilt;
    for (const auto& d : devices_) {
        d.arena.check_invariants();
        std::size_t cached_bytes = 0;
        for (const auto& b : d.alru.blocks()) {
            if (b.reader < 0) throw InternalError("negative reader on " + describe(b.key));
            if (!d.segments.count(b.offset)) {
                throw InternalError("cached " + describe(b.key) + " has no backing segment");
            }
            auto& e = rebuilt[b.key];
            e.holders.push_back(d.desc.id);
            cached_bytes += b.bytes;
        }
        if (d.alru.size() != d.alru.blocks().size()) {
            throw InternalError("alru list and map sizes differ on device " + std::to_string(d.desc.id));
        }
        if (cached_bytes > d.arena.used()) {
            throw InternalError("cached bytes exceed arena usage on device " + std::to_string(d.desc.id));
        }
    }
    for (auto& [key, e] : rebuilt) {
        std::sort(e.holders.begin(), e.holders.end());
        e.state = state_for(e.holders.size());
    }
    if (rebuilt != directory_.entries()) {
        throw InternalError("directory differs from the state rebuilt from the ALRUs");
    }
}

}  // namespace tilert
