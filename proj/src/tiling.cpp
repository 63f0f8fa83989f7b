#include "tilert/tiling.hpp"

#include <algorithm>
#include <string>

#include "tilert/errors.hpp"

namespace tilert {

MatrixDesc make_matrix_desc(MatrixId id, std::size_t rows, std::size_t cols,
                            std::size_t leading_dim, std::span<double> storage,
                            std::size_t base_offset) {
    if (rows == 0 || cols == 0) {
        throw InvalidArgument("matrix dimensions must be positive");
    }
    if (leading_dim < rows) {
        throw InvalidArgument("leading dimension " + std::to_string(leading_dim) +
                              " is smaller than row count " + std::to_string(rows));
    }
    if (!storage.empty() && storage.size() < base_offset + leading_dim * cols) {
        throw InvalidArgument("storage too small for matrix " + std::to_string(id));
    }
    return MatrixDesc{id, rows, cols, leading_dim, storage, base_offset};
}

std::size_t TiledMatrixDesc::tile_height(std::size_t i) const {
    return std::min(tile_size, matrix.rows - i * tile_size);
}

std::size_t TiledMatrixDesc::tile_width(std::size_t j) const {
    return std::min(tile_size, matrix.cols - j * tile_size);
}

TiledMatrixDesc make_tiled(const MatrixDesc& desc, std::size_t tile_size) {
    if (tile_size == 0) {
        throw InvalidArgument("tile size must be positive");
    }
    if (desc.rows == 0 || desc.cols == 0) {
        throw InvalidArgument("matrix dimensions must be positive");
    }
    TiledMatrixDesc tm;
    tm.matrix = desc;
    tm.tile_size = tile_size;
    tm.tile_rows = (desc.rows + tile_size - 1) / tile_size;
    tm.tile_cols = (desc.cols + tile_size - 1) / tile_size;
    return tm;
}

TileRef logical_tile(const TiledMatrixDesc& tm, std::size_t i, std::size_t j, bool trans) {
    const std::size_t pi = trans ? j : i;
    const std::size_t pj = trans ? i : j;
    if (pi >= tm.tile_rows || pj >= tm.tile_cols) {
        throw InvalidArgument("tile index (" + std::to_string(i) + ", " + std::to_string(j) +
                              ") out of range for matrix " + std::to_string(tm.matrix.id));
    }
    TileRef ref;
    ref.matrix_id = tm.matrix.id;
    ref.tile_row = pi;
    ref.tile_col = pj;
    ref.transposed = trans;
    const std::size_t h = tm.tile_height(pi);
    const std::size_t w = tm.tile_width(pj);
    ref.height = trans ? w : h;
    ref.width = trans ? h : w;
    ref.host_key = TileKey{tm.matrix.id, static_cast<std::uint32_t>(pi), static_cast<std::uint32_t>(pj)};
    return ref;
}

namespace {

void check_copy(const TiledMatrixDesc& tm, const TileRef& ref, std::size_t capacity) {
    if (!tm.matrix.bound()) {
        throw InvalidArgument("matrix " + std::to_string(tm.matrix.id) + " has no storage");
    }
    if (ref.matrix_id != tm.matrix.id) {
        throw InvalidArgument("tile belongs to a different matrix");
    }
    if (capacity < ref.elements()) {
        throw InvalidArgument("tile buffer holds " + std::to_string(capacity) + " elements, need " +
                              std::to_string(ref.elements()));
    }
}

}  // namespace

void tile_host_copy_in(const TiledMatrixDesc& tm, const TileRef& ref, std::span<double> dest) {
    check_copy(tm, ref, dest.size());
    const std::size_t rows = ref.physical_rows();
    const std::size_t cols = ref.physical_cols();
    const std::size_t r0 = ref.tile_row * tm.tile_size;
    const std::size_t c0 = ref.tile_col * tm.tile_size;
    for (std::size_t c = 0; c < cols; ++c) {
        const double* src = &tm.matrix.at(r0, c0 + c);
        std::copy(src, src + rows, dest.begin() + c * rows);
    }
}

void tile_host_copy_out(const TiledMatrixDesc& tm, const TileRef& ref, std::span<const double> src) {
    check_copy(tm, ref, src.size());
    const std::size_t rows = ref.physical_rows();
    const std::size_t cols = ref.physical_cols();
    const std::size_t r0 = ref.tile_row * tm.tile_size;
    const std::size_t c0 = ref.tile_col * tm.tile_size;
    for (std::size_t c = 0; c < cols; ++c) {
        std::copy(src.begin() + c * rows, src.begin() + (c + 1) * rows, &tm.matrix.at(r0, c0 + c));
    }
}

}  // namespace tilert
