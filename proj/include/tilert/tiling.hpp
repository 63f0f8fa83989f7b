#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace tilert {

using MatrixId = std::uint32_t;

/// A host-resident column-major matrix of doubles.
///
/// `storage` may be left empty to describe a shape only (planning and flop
/// accounting); any attempt to touch elements of such a descriptor throws.
struct MatrixDesc {
    MatrixId id = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t leading_dim = 0;
    std::span<double> storage;
    std::size_t base_offset = 0;

    bool bound() const noexcept { return !storage.empty(); }

    double& at(std::size_t r, std::size_t c) const {
        return storage[base_offset + r + c * leading_dim];
    }
};

/// Validates the descriptor invariants and returns it unchanged.
MatrixDesc make_matrix_desc(MatrixId id, std::size_t rows, std::size_t cols,
                            std::size_t leading_dim, std::span<double> storage,
                            std::size_t base_offset = 0);

/// Owning host matrix, convenient for tests and the CLI.
class HostMatrix {
public:
    HostMatrix() = default;
    HostMatrix(MatrixId id, std::size_t rows, std::size_t cols, double fill = 0.0)
        : id_(id), rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    MatrixId id() const noexcept { return id_; }
    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r + c * rows_]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r + c * rows_]; }

    MatrixDesc desc() { return make_matrix_desc(id_, rows_, cols_, rows_, data_); }

private:
    MatrixId id_ = 0;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct TiledMatrixDesc {
    MatrixDesc matrix;
    std::size_t tile_size = 0;
    std::size_t tile_rows = 0;
    std::size_t tile_cols = 0;

    std::size_t tile_height(std::size_t i) const;
    std::size_t tile_width(std::size_t j) const;

    std::size_t full_tile_count() const noexcept {
        return (matrix.rows / tile_size) * (matrix.cols / tile_size);
    }
    std::size_t edge_tile_count() const noexcept {
        return tile_rows * tile_cols - full_tile_count();
    }
};

/// Canonical identity of one tile's host storage region.
struct TileKey {
    MatrixId matrix = 0;
    std::uint32_t row = 0;
    std::uint32_t col = 0;

    friend auto operator<=>(const TileKey&, const TileKey&) = default;
};

struct TileKeyHash {
    std::size_t operator()(const TileKey& k) const noexcept {
        std::uint64_t h = (std::uint64_t{k.matrix} << 42) ^ (std::uint64_t{k.row} << 21) ^ k.col;
        h ^= h >> 33;
        h *= 0xff51afd7ed558ccdULL;
        h ^= h >> 33;
        return static_cast<std::size_t>(h);
    }
};

/// One tile as seen by a consumer. `tile_row`/`tile_col` index the physical
/// tile; `height`/`width` are the logical (post-transpose) dimensions.
struct TileRef {
    MatrixId matrix_id = 0;
    std::size_t tile_row = 0;
    std::size_t tile_col = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    TileKey host_key;
    bool transposed = false;

    std::size_t physical_rows() const noexcept { return transposed ? width : height; }
    std::size_t physical_cols() const noexcept { return transposed ? height : width; }
    std::size_t elements() const noexcept { return height * width; }
    std::size_t bytes() const noexcept { return elements() * sizeof(double); }
};

TiledMatrixDesc make_tiled(const MatrixDesc& desc, std::size_t tile_size);

/// Tile (i, j) of op(M), where op is the identity or the transpose.
/// Under `trans` the physical tile (j, i) is returned with its flag set.
TileRef logical_tile(const TiledMatrixDesc& tm, std::size_t i, std::size_t j, bool trans);

/// Copy the physical tile region into a contiguous column-major block
/// (never transposed; kernels honour the flag).
void tile_host_copy_in(const TiledMatrixDesc& tm, const TileRef& ref, std::span<double> dest);
void tile_host_copy_out(const TiledMatrixDesc& tm, const TileRef& ref, std::span<const double> src);

}  // namespace tilert

template <>
struct std::hash<tilert::TileKey> : tilert::TileKeyHash {};
