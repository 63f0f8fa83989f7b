#include "tilert/memory.hpp"

#include <string>

#include "tilert/errors.hpp"

namespace tilert {

Arena::Arena(std::size_t capacity, std::size_t alignment) : alignment_(alignment) {
    if (alignment == 0) {
        throw InvalidArgument("arena alignment must be positive");
    }
    capacity_ = capacity / alignment * alignment;
    if (capacity_ == 0) {
        throw InvalidArgument("arena capacity below one aligned unit");
    }
    meta_.emplace(0, Segment{0, capacity_, false});
    empty_.insert(0);
    ++reservations_;
}

std::optional<std::size_t> Arena::allocate(std::size_t size) {
    if (size == 0) {
        throw InvalidArgument("arena allocation of zero bytes");
    }
    const std::size_t need = (size + alignment_ - 1) / alignment_ * alignment_;
    for (std::size_t off : empty_) {
        auto it = meta_.find(off);
        Segment& seg = it->second;
        if (seg.length < need) {
            continue;
        }
        empty_.erase(off);
        if (seg.length > need) {
            const std::size_t rest = off + need;
            meta_.emplace_hint(std::next(it), rest, Segment{rest, seg.length - need, false});
            empty_.insert(rest);
            seg.length = need;
        }
        seg.occupied = true;
        occupied_.emplace(off, it);
        used_ += need;
        return off;
    }
    return std::nullopt;
}

void Arena::free(std::size_t offset) {
    auto found = occupied_.find(offset);
    if (found == occupied_.end()) {
        throw InvalidFree("arena free of unknown offset " + std::to_string(offset));
    }
    auto it = found->second;
    occupied_.erase(found);
    it->second.occupied = false;
    used_ -= it->second.length;

    if (it != meta_.begin()) {
        auto prev = std::prev(it);
        if (!prev->second.occupied) {
            prev->second.length += it->second.length;
            meta_.erase(it);
            it = prev;
            empty_.erase(it->first);
        }
    }
    auto next = std::next(it);
    if (next != meta_.end() && !next->second.occupied) {
        it->second.length += next->second.length;
        empty_.erase(next->first);
        meta_.erase(next);
    }
    empty_.insert(it->first);
}

std::vector<Arena::Segment> Arena::segments() const {
    std::vector<Segment> out;
    out.reserve(meta_.size());
    for (const auto& [off, seg] : meta_) {
        out.push_back(seg);
    }
    return out;
}

void Arena::check_invariants() const {
    auto fail = [](const std::string& what) { throw InternalError("arena invariant: " + what); };
    std::size_t expect = 0;
    std::size_t used = 0;
    bool prev_free = false;
    std::size_t free_count = 0;
    for (const auto& [off, seg] : meta_) {
        if (off != seg.offset) fail("key/offset mismatch at " + std::to_string(off));
        if (off != expect) fail("gap or overlap at " + std::to_string(off));
        if (seg.length == 0) fail("empty segment at " + std::to_string(off));
        if (seg.occupied) {
            auto o = occupied_.find(off);
            if (o == occupied_.end() || o->second->first != off) fail("occupied segment not indexed");
            if (empty_.count(off)) fail("occupied segment in empty list");
            used += seg.length;
            prev_free = false;
        } else {
            if (prev_free) fail("adjacent free segments at " + std::to_string(off));
            if (!empty_.count(off)) fail("free segment missing from empty list");
            ++free_count;
            prev_free = true;
        }
        expect = off + seg.length;
    }
    if (expect != capacity_) fail("segments do not cover the capacity");
    if (free_count != empty_.size()) fail("stale entries in empty list");
    if (used != used_) fail("used byte count drifted");
    std::size_t occupied = 0;
    for (const auto& [off, seg] : meta_) occupied += seg.occupied ? 1 : 0;
    if (occupied != occupied_.size()) fail("stale entries in occupied index");
}

}  // namespace tilert
