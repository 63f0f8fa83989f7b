// Command-line driver: runs one level-3 call on a simulated device fabric,
// either checking the result against the dense reference (verify) or
// emitting metrics and a trace (bench).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "tilert/config.hpp"
#include "tilert/errors.hpp"
#include "tilert/reference.hpp"
#include "tilert/scheduler.hpp"
#include "tilert/workload.hpp"

namespace {

enum ExitCode {
    exit_ok = 0,
    exit_verify_failed = 1,
    exit_config = 2,
    exit_invalid_argument = 3,
    exit_singular = 4,
    exit_capacity = 5,
    exit_other = 6,
};

constexpr double verify_tolerance = 1e-10;

struct Options {
    std::string routine = "gemm";
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t k = 0;
    std::size_t tile_size = 1024;
    double alpha = 1.0;
    double beta = 0.0;
    std::string uplo = "upper";
    std::string side = "left";
    std::string trans = "N";
    std::string trans_b = "N";
    std::string diag = "non-unit";
    std::string topology;
    std::string mode = "verify";
    std::string exec = "det";
    std::uint64_t seed = 1;
    std::string metrics_out;
    std::string trace_out;
    std::size_t rs_capacity = 8;
    bool no_l1 = false;
    bool no_l2 = false;
};

bool transposed(const std::string& s) { return s == "T" || s == "t" || s == "C" || s == "c"; }

int run(const Options& o) {
    tilert::ProblemSpec spec;
    const auto routine = tilert::parse_routine(o.routine);
    if (!routine) throw tilert::InvalidArgument("unknown routine '" + o.routine + "'");
    spec.routine = *routine;
    spec.n = o.n;
    spec.m = o.m ? o.m : o.n;
    spec.k = o.k ? o.k : o.n;
    spec.tile_size = o.tile_size;
    spec.alpha = o.alpha;
    spec.beta = o.beta;
    spec.trans_a = transposed(o.trans);
    spec.trans_b = transposed(o.trans_b);
    spec.uplo = o.uplo == "lower" ? tilert::Uplo::lower : tilert::Uplo::upper;
    spec.side = o.side == "right" ? tilert::Side::right : tilert::Side::left;
    spec.diag = o.diag == "unit" ? tilert::Diag::unit : tilert::Diag::non_unit;

    const tilert::Topology topology = o.topology.empty() ? tilert::default_topology()
                                                          : tilert::load_topology(o.topology);
    tilert::RunOptions ro;
    ro.mode = o.exec == "conc" ? tilert::ExecutionMode::concurrent : tilert::ExecutionMode::deterministic;
    ro.l1_enabled = !o.no_l1;
    ro.l2_enabled = !o.no_l2;
    ro.rs_capacity = o.rs_capacity;
    ro.record_trace = !o.trace_out.empty();

    tilert::Problem problem = tilert::Problem::random(spec, o.seed);
    tilert::Problem expected = problem;

    const tilert::RoutinePlan plan(problem.call());
    const tilert::RunResult result = tilert::run_plan(plan, topology, ro);

    const std::string json = tilert::metrics_to_json(result.metrics);
    if (!o.metrics_out.empty()) {
        std::ofstream(o.metrics_out) << json;
    } else if (o.mode == "bench") {
        std::cout << json;
    }
    if (!o.trace_out.empty()) {
        std::ofstream out(o.trace_out);
        tilert::write_trace_csv(out, result.trace);
    }

    if (o.mode == "verify") {
        tilert::reference::run(expected.call());
        const double err = tilert::reference::relative_frobenius_error(problem.output().desc(),
                                                                       expected.output().desc());
        std::printf("%s n=%zu m=%zu k=%zu T=%zu: relative error %.3e, makespan %.6e s\n", o.routine.c_str(),
                    spec.n, spec.m, spec.k, spec.tile_size, err, result.metrics.makespan);
        if (!(err <= verify_tolerance)) {
            std::fprintf(stderr, "verification failed: error above %.0e\n", verify_tolerance);
            return exit_verify_failed;
        }
    }
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Run a tiled level-3 BLAS call on a simulated multi-device fabric"};
    Options o;
    app.add_option("--routine", o.routine, "gemm, syrk, syr2k, symm, trmm or trsm")
        ->check(CLI::IsMember({"gemm", "syrk", "syr2k", "symm", "trmm", "trsm"}));
    app.add_option("--n", o.n, "Columns of the output (order of C for syrk/syr2k)")->required()
        ->check(CLI::PositiveNumber);
    app.add_option("--m", o.m, "Rows of the output (defaults to n)");
    app.add_option("--k", o.k, "Inner dimension for gemm/syrk/syr2k (defaults to n)");
    app.add_option("--tile-size", o.tile_size, "Tile edge T")->check(CLI::PositiveNumber);
    app.add_option("--alpha", o.alpha);
    app.add_option("--beta", o.beta);
    app.add_option("--uplo", o.uplo)->check(CLI::IsMember({"upper", "lower"}));
    app.add_option("--side", o.side)->check(CLI::IsMember({"left", "right"}));
    app.add_option("--trans", o.trans, "Transpose A (N or T)")->check(CLI::IsMember({"N", "T", "n", "t"}));
    app.add_option("--trans-b", o.trans_b, "Transpose B for gemm (N or T)")
        ->check(CLI::IsMember({"N", "T", "n", "t"}));
    app.add_option("--diag", o.diag)->check(CLI::IsMember({"unit", "non-unit"}));
    app.add_option("--topology", o.topology, "YAML topology file (default: one accelerator)");
    app.add_option("--mode", o.mode)->check(CLI::IsMember({"verify", "bench"}));
    app.add_option("--exec", o.exec)->check(CLI::IsMember({"det", "conc"}));
    app.add_option("--seed", o.seed);
    app.add_option("--metrics-out", o.metrics_out, "Write metrics JSON here");
    app.add_option("--trace-out", o.trace_out, "Write the event trace CSV here");
    app.add_option("--rs-capacity", o.rs_capacity, "Reservation station slots per device")
        ->check(CLI::PositiveNumber);
    app.add_flag("--no-l1", o.no_l1, "Disable tile caching on devices");
    app.add_flag("--no-l2", o.no_l2, "Disable peer-to-peer tile fetches");
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_invalid_argument;
    }

    try {
        return run(o);
    } catch (const tilert::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return exit_config;
    } catch (const tilert::InvalidTopology& e) {
        std::fprintf(stderr, "invalid topology: %s\n", e.what());
        return exit_config;
    } catch (const tilert::InvalidArgument& e) {
        std::fprintf(stderr, "invalid argument: %s\n", e.what());
        return exit_invalid_argument;
    } catch (const tilert::SingularMatrix& e) {
        std::fprintf(stderr, "singular matrix: %s\n", e.what());
        return exit_singular;
    } catch (const tilert::CapacityDeadlock& e) {
        std::fprintf(stderr, "capacity deadlock: %s\n", e.what());
        return exit_capacity;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_other;
    }
}
