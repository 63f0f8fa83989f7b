#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

namespace tilert {

/// First-fit heap over one preallocated device region.
///
/// Three structures mirror each other: the metadata list of all segments in
/// address order, the empty list of free segments (also address order), and
/// a hash index from offset to occupied segment. Frees coalesce with both
/// neighbours, so no two free segments are ever adjacent.
class Arena {
public:
    static constexpr std::size_t default_alignment = 64;

    struct Segment {
        std::size_t offset = 0;
        std::size_t length = 0;
        bool occupied = false;

        friend bool operator==(const Segment&, const Segment&) = default;
    };

    explicit Arena(std::size_t capacity, std::size_t alignment = default_alignment);

    /// Offset of the first free segment (address order) that fits, or nullopt
    /// when none does. Sizes are rounded up to the alignment.
    std::optional<std::size_t> allocate(std::size_t size);

    /// Throws InvalidFree unless `offset` starts an occupied segment.
    void free(std::size_t offset);

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t alignment() const noexcept { return alignment_; }
    std::size_t used() const noexcept { return used_; }
    std::size_t occupied_count() const noexcept { return occupied_.size(); }

    /// Underlying capacity reservations made so far (one, at construction).
    std::size_t reservations() const noexcept { return reservations_; }

    std::vector<Segment> segments() const;
    std::vector<std::size_t> empty_list() const { return {empty_.begin(), empty_.end()}; }

    /// Throws InternalError describing the first broken invariant.
    void check_invariants() const;

private:
    using MetaList = std::map<std::size_t, Segment>;

    std::size_t capacity_;
    std::size_t alignment_;
    std::size_t used_ = 0;
    std::size_t reservations_ = 0;
    MetaList meta_;
    std::set<std::size_t> empty_;
    std::unordered_map<std::size_t, MetaList::iterator> occupied_;
};

}  // namespace tilert
