#include <random>
#include <vector>

#include "doctest.h"
#include "tilert/errors.hpp"
#include "tilert/tiling.hpp"

using namespace tilert;

namespace {

TiledMatrixDesc shape(std::size_t rows, std::size_t cols, std::size_t t, MatrixId id = 1) {
    return make_tiled(make_matrix_desc(id, rows, cols, rows, {}), t);
}

}  // namespace

TEST_CASE("make_tiled counts tiles with ceiling division") {
    auto a = shape(4096, 4096, 1024);
    CHECK(a.tile_rows == 4);
    CHECK(a.tile_cols == 4);

    auto b = shape(5000, 3000, 1024);
    CHECK(b.tile_rows == 5);
    CHECK(b.tile_cols == 3);
    CHECK(b.tile_height(4) == 904);
    CHECK(b.tile_width(2) == 3000 - 2 * 1024);
    CHECK(b.full_tile_count() == 4 * 2);
    CHECK(b.edge_tile_count() == 15 - 8);

    auto c = shape(1, 1, 1024);
    CHECK(c.tile_rows == 1);
    CHECK(c.tile_cols == 1);
    CHECK(c.tile_height(0) == 1);
}

TEST_CASE("make_tiled and make_matrix_desc reject bad input") {
    CHECK_THROWS_AS(shape(10, 10, 0), InvalidArgument);
    CHECK_THROWS_AS(make_matrix_desc(1, 0, 3, 1, {}), InvalidArgument);
    CHECK_THROWS_AS(make_matrix_desc(1, 4, 3, 3, {}), InvalidArgument);
    std::vector<double> small(5);
    CHECK_THROWS_AS(make_matrix_desc(1, 2, 3, 2, small), InvalidArgument);
}

TEST_CASE("logical_tile maps transposed indices to the physical tile") {
    auto b = shape(20, 20, 10);
    auto t = logical_tile(b, 0, 1, true);
    CHECK(t.tile_row == 1);
    CHECK(t.tile_col == 0);
    CHECK(t.transposed);

    auto d = logical_tile(b, 0, 0, true);
    CHECK(d.tile_row == 0);
    CHECK(d.tile_col == 0);
    CHECK(d.transposed);

    auto wide = shape(20, 30, 10);
    auto n = logical_tile(wide, 1, 2, false);
    CHECK(n.tile_row == 1);
    CHECK(n.tile_col == 2);
    CHECK_FALSE(n.transposed);

    CHECK_THROWS_AS(logical_tile(wide, 2, 0, false), InvalidArgument);
    CHECK_THROWS_AS(logical_tile(wide, 0, 2, true), InvalidArgument);
    CHECK_NOTHROW(logical_tile(wide, 2, 1, true));
}

TEST_CASE("edge tiles swap logical dimensions under transpose") {
    auto m = shape(25, 13, 10);
    auto plain = logical_tile(m, 2, 1, false);
    CHECK(plain.height == 5);
    CHECK(plain.width == 3);
    auto flipped = logical_tile(m, 1, 2, true);
    CHECK(flipped.height == 3);
    CHECK(flipped.width == 5);
    CHECK(flipped.host_key == plain.host_key);
    CHECK(flipped.physical_rows() == 5);
    CHECK(flipped.physical_cols() == 3);
}

TEST_CASE("tile copies are contiguous column-major and round-trip") {
    HostMatrix m(1, 2, 2);
    m(0, 0) = 1;
    m(0, 1) = 2;
    m(1, 0) = 3;
    m(1, 1) = 4;
    auto tm = make_tiled(m.desc(), 2);
    std::vector<double> buf(4);
    tile_host_copy_in(tm, logical_tile(tm, 0, 0, false), buf);
    CHECK(buf == std::vector<double>{1, 3, 2, 4});

    std::vector<double> t(4);
    tile_host_copy_in(tm, logical_tile(tm, 0, 0, true), t);
    CHECK(t == buf);

    std::vector<double> tiny(3);
    CHECK_THROWS_AS(tile_host_copy_in(tm, logical_tile(tm, 0, 0, false), tiny), InvalidArgument);

    auto edge = logical_tile(shape(5000, 3000, 1024), 4, 0, false);
    CHECK(edge.elements() == 925696);
}

TEST_CASE("copy out then copy in restores every tile region") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1, 1);
    HostMatrix m(3, 37, 23);
    for (auto& x : m.data()) x = u(rng);
    const auto original = m.data();
    auto tm = make_tiled(m.desc(), 8);
    for (std::size_t i = 0; i < tm.tile_rows; ++i) {
        for (std::size_t j = 0; j < tm.tile_cols; ++j) {
            auto ref = logical_tile(tm, i, j, false);
            std::vector<double> buf(ref.elements());
            tile_host_copy_in(tm, ref, buf);
            std::vector<double> zeros(ref.elements(), 0.0);
            tile_host_copy_out(tm, ref, zeros);
            tile_host_copy_out(tm, ref, buf);
        }
    }
    CHECK(m.data() == original);
}

TEST_CASE("tiles partition the matrix and transposing twice is the identity") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> dim(1, 300);
    std::uniform_int_distribution<std::size_t> tile(1, 64);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t rows = dim(rng);
        const std::size_t cols = dim(rng);
        auto tm = shape(rows, cols, tile(rng));
        std::size_t area = 0;
        for (std::size_t i = 0; i < tm.tile_rows; ++i) {
            for (std::size_t j = 0; j < tm.tile_cols; ++j) {
                auto r = logical_tile(tm, i, j, false);
                area += r.elements();
                auto t = logical_tile(tm, j, i, true);
                CHECK(t.host_key == r.host_key);
                CHECK(t.height == r.width);
                CHECK(t.width == r.height);
            }
        }
        CHECK(area == rows * cols);
    }
}
