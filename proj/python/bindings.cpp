#include <optional>
#include <sstream>
#include <string>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tilert/config.hpp"
#include "tilert/errors.hpp"
#include "tilert/routines.hpp"
#include "tilert/scheduler.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::f_style>;

std::optional<tilert::TiledMatrixDesc> tiled(const std::optional<Array>& arr, tilert::MatrixId id,
                                             std::size_t tile_size) {
    if (!arr) return std::nullopt;
    const py::buffer_info info = arr->request(true);
    if (info.ndim != 2) throw tilert::InvalidArgument("operands must be two-dimensional");
    const auto rows = static_cast<std::size_t>(info.shape[0]);
    const auto cols = static_cast<std::size_t>(info.shape[1]);
    if (info.strides[0] != static_cast<py::ssize_t>(sizeof(double)) ||
        (cols > 1 && info.strides[1] != static_cast<py::ssize_t>(rows * sizeof(double)))) {
        throw tilert::InvalidArgument("operands must be Fortran-ordered float64 arrays");
    }
    std::span<double> storage(static_cast<double*>(info.ptr), rows * cols);
    return tilert::make_tiled(tilert::make_matrix_desc(id, rows, cols, rows, storage), tile_size);
}

std::optional<tilert::TiledMatrixDesc> shape_only(std::size_t rows, std::size_t cols, tilert::MatrixId id,
                                                  std::size_t tile_size) {
    if (rows == 0 || cols == 0) return std::nullopt;
    return tilert::make_tiled(tilert::make_matrix_desc(id, rows, cols, rows, {}), tile_size);
}

tilert::Routine routine_of(const std::string& name) {
    const auto r = tilert::parse_routine(name);
    if (!r) throw tilert::InvalidArgument("unknown routine '" + name + "'");
    return *r;
}

void set_flags(tilert::RoutineCall& call, const std::string& uplo, const std::string& side, bool unit_diag) {
    if (uplo != "upper" && uplo != "lower") throw tilert::InvalidArgument("uplo must be 'upper' or 'lower'");
    if (side != "left" && side != "right") throw tilert::InvalidArgument("side must be 'left' or 'right'");
    call.uplo = uplo == "lower" ? tilert::Uplo::lower : tilert::Uplo::upper;
    call.side = side == "right" ? tilert::Side::right : tilert::Side::left;
    call.diag = unit_diag ? tilert::Diag::unit : tilert::Diag::non_unit;
}

py::tuple run(const std::string& routine, std::optional<Array> a, std::optional<Array> b, std::optional<Array> c,
              double alpha, double beta, bool trans_a, bool trans_b, const std::string& uplo,
              const std::string& side, bool unit_diag, std::size_t tile_size,
              const std::optional<std::string>& topology_yaml, const std::string& exec, bool l1, bool l2,
              std::size_t rs_capacity, bool trace) {
    tilert::RoutineCall call;
    call.kind = routine_of(routine);
    call.alpha = alpha;
    call.beta = beta;
    call.trans_a = trans_a;
    call.trans_b = trans_b;
    set_flags(call, uplo, side, unit_diag);
    call.a = tiled(a, 0, tile_size);
    call.b = tiled(b, 1, tile_size);
    call.c = tiled(c, 2, tile_size);

    const tilert::Topology topology =
        topology_yaml ? tilert::parse_topology(*topology_yaml) : tilert::default_topology();
    tilert::RunOptions options;
    if (exec == "conc") {
        options.mode = tilert::ExecutionMode::concurrent;
    } else if (exec != "det") {
        throw tilert::InvalidArgument("exec must be 'det' or 'conc'");
    }
    options.l1_enabled = l1;
    options.l2_enabled = l2;
    options.rs_capacity = rs_capacity;
    options.record_trace = trace;

    std::string metrics;
    std::string csv;
    {
        py::gil_scoped_release release;
        const tilert::RoutinePlan plan(call);
        const tilert::RunResult result = tilert::run_plan(plan, topology, options);
        metrics = tilert::metrics_to_json(result.metrics);
        if (trace) {
            std::ostringstream os;
            tilert::write_trace_csv(os, result.trace);
            csv = os.str();
        }
    }
    return py::make_tuple(metrics, csv);
}

double gemm_flop_fraction(const std::string& routine, std::size_t m, std::size_t n, std::size_t k,
                          std::size_t tile_size, const std::string& uplo, const std::string& side, bool trans) {
    tilert::RoutineCall call;
    call.kind = routine_of(routine);
    call.trans_a = trans;
    set_flags(call, uplo, side, false);
    switch (call.kind) {
        case tilert::Routine::gemm:
            call.a = shape_only(m, k, 0, tile_size);
            call.b = shape_only(k, n, 1, tile_size);
            call.c = shape_only(m, n, 2, tile_size);
            break;
        case tilert::Routine::syrk:
        case tilert::Routine::syr2k:
            call.a = trans ? shape_only(k, n, 0, tile_size) : shape_only(n, k, 0, tile_size);
            if (call.kind == tilert::Routine::syr2k) call.b = trans ? shape_only(k, n, 1, tile_size)
                                                                   : shape_only(n, k, 1, tile_size);
            call.c = shape_only(n, n, 2, tile_size);
            break;
        case tilert::Routine::symm: {
            const std::size_t order = call.side == tilert::Side::left ? m : n;
            call.a = shape_only(order, order, 0, tile_size);
            call.b = shape_only(m, n, 1, tile_size);
            call.c = shape_only(m, n, 2, tile_size);
            break;
        }
        case tilert::Routine::trmm:
        case tilert::Routine::trsm: {
            const std::size_t order = call.side == tilert::Side::left ? m : n;
            call.a = shape_only(order, order, 0, tile_size);
            call.b = shape_only(m, n, 1, tile_size);
            break;
        }
    }
    return tilert::gemm_flop_fraction(call);
}

py::dict topology_dict(const tilert::Topology& t) {
    py::list devices;
    for (const auto& d : t.devices) {
        py::dict e;
        e["id"] = d.id;
        e["kind"] = d.kind == tilert::DeviceKind::accelerator ? "accelerator" : "host_compute";
        e["speed"] = d.speed;
        e["arena_capacity"] = d.arena_capacity;
        e["peer_group"] = d.peer_group;
        devices.append(e);
    }
    py::dict out;
    out["host_device_bandwidth"] = t.host_device_bandwidth;
    out["peer_bandwidth"] = t.peer_bandwidth;
    out["devices"] = devices;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Tiled level-3 BLAS on a simulated multi-device fabric";

    static py::exception<tilert::Error> error(m, "TilertError", PyExc_RuntimeError);
    static py::exception<tilert::InvalidArgument> invalid(m, "InvalidArgument", error.ptr());
    static py::exception<tilert::SingularMatrix> singular(m, "SingularMatrix", error.ptr());
    static py::exception<tilert::CapacityDeadlock> deadlock(m, "CapacityDeadlock", error.ptr());
    static py::exception<tilert::InvalidTopology> topology(m, "InvalidTopology", error.ptr());
    static py::exception<tilert::ConfigError> config(m, "ConfigError", error.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const tilert::InvalidArgument& e) {
            py::set_error(invalid, e.what());
        } catch (const tilert::SingularMatrix& e) {
            py::set_error(singular, e.what());
        } catch (const tilert::CapacityDeadlock& e) {
            py::set_error(deadlock, e.what());
        } catch (const tilert::InvalidTopology& e) {
            py::set_error(topology, e.what());
        } catch (const tilert::ConfigError& e) {
            py::set_error(config, e.what());
        } catch (const tilert::Error& e) {
            py::set_error(error, e.what());
        }
    });

    m.def("run", &run, py::arg("routine"), py::arg("a").none(true), py::arg("b").none(true),
          py::arg("c").none(true), py::kw_only(), py::arg("alpha") = 1.0, py::arg("beta") = 0.0,
          py::arg("trans_a") = false, py::arg("trans_b") = false, py::arg("uplo") = "upper",
          py::arg("side") = "left", py::arg("unit_diag") = false, py::arg("tile_size") = 1024,
          py::arg("topology_yaml") = py::none(), py::arg("exec") = "det", py::arg("l1") = true,
          py::arg("l2") = true, py::arg("rs_capacity") = 8, py::arg("trace") = false,
          "Run one call in place on Fortran-ordered float64 arrays. Returns (metrics JSON, trace CSV).");
    m.def("degree_of_parallelism", &tilert::degree_of_parallelism, py::arg("m"), py::arg("n"),
          py::arg("tile_size"));
    m.def("gemm_flop_fraction", &gemm_flop_fraction, py::arg("routine"), py::arg("m"), py::arg("n"),
          py::arg("k") = 0, py::kw_only(), py::arg("tile_size"), py::arg("uplo") = "upper",
          py::arg("side") = "left", py::arg("trans") = false);
    m.def(
        "parse_topology", [](const std::string& text) { return topology_dict(tilert::parse_topology(text)); },
        py::arg("text"));
    m.def("default_topology", [] { return topology_dict(tilert::default_topology()); });
}
