#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "tilert/kernels.hpp"
#include "tilert/tiling.hpp"

namespace tilert {

enum class Routine { gemm, syrk, trsm, trmm, syr2k, symm };

std::string_view to_string(Routine routine) noexcept;
std::optional<Routine> parse_routine(std::string_view name) noexcept;

/// One level-3 call. Operands follow the usual BLAS roles; TRSM and TRMM
/// overwrite `b`, every other routine writes `c`. SYRK and SYR2K take their
/// transpose flag from `trans_a`.
struct RoutineCall {
    Routine kind = Routine::gemm;
    double alpha = 1.0;
    double beta = 0.0;
    bool trans_a = false;
    bool trans_b = false;
    Uplo uplo = Uplo::upper;
    Side side = Side::left;
    Diag diag = Diag::non_unit;
    std::optional<TiledMatrixDesc> a;
    std::optional<TiledMatrixDesc> b;
    std::optional<TiledMatrixDesc> c;

    const TiledMatrixDesc& output() const;
};

/// Throws InvalidArgument unless the operands conform.
void validate(const RoutineCall& call);

using TaskId = std::uint32_t;

/// One kernel application inside a task. `a` is the A-side input and `b` the
/// B-side input (absent for the triangular solve).
struct Step {
    KernelKind kind = KernelKind::gemm_update;
    std::size_t k = 0;
    TileRef a;
    std::optional<TileRef> b;
    double alpha = 1.0;
    double beta = 1.0;
    std::uint64_t flops = 0;
};

struct Task {
    TaskId id = 0;
    Routine routine = Routine::gemm;
    std::size_t i = 0;
    std::size_t j = 0;
    std::size_t k_lo = 0;
    std::size_t k_hi = 0;
    std::vector<Step> steps;
    TileRef output;
    /// The output tile's prior content is consumed and must be moved in.
    bool load_output = false;
    Uplo uplo = Uplo::upper;
    Side side = Side::left;
    Diag diag = Diag::non_unit;
    std::uint64_t flops = 0;
    std::uint32_t deps_remaining = 0;
    std::vector<TaskId> dependents;
};

/// ceil(M/T) * ceil(N/T)
std::size_t degree_of_parallelism(std::size_t m, std::size_t n, std::size_t tile_size);

/// Flops of one step under the runtime's flop model.
std::uint64_t step_flops(const Step& step, const Task& task);
std::uint64_t task_flops(const Task& task);

/// Decompose a call into output-tile tasks, in global-queue order. TRMM reads
/// its right-hand terms from `snapshot`, a pristine copy of B.
std::vector<Task> generate_tasks(const RoutineCall& call, const TiledMatrixDesc* snapshot = nullptr);

/// Fraction of all flops spent in gemm-update steps.
double gemm_flop_fraction(const RoutineCall& call);

/// A call together with its tasks and any host workspace the tasks read
/// (the TRMM snapshot). Movable, not copyable.
class RoutinePlan {
public:
    explicit RoutinePlan(const RoutineCall& call);

    RoutinePlan(RoutinePlan&&) noexcept = default;
    RoutinePlan& operator=(RoutinePlan&&) noexcept = default;
    RoutinePlan(const RoutinePlan&) = delete;
    RoutinePlan& operator=(const RoutinePlan&) = delete;

    const RoutineCall& call() const noexcept { return call_; }
    const std::vector<Task>& tasks() const noexcept { return tasks_; }
    const TiledMatrixDesc& matrix(MatrixId id) const;

private:
    RoutineCall call_;
    std::unique_ptr<std::vector<double>> snapshot_storage_;
    std::optional<TiledMatrixDesc> snapshot_;
    std::vector<Task> tasks_;
};

/// Apply one step's kernel to contiguous tile buffers.
void execute_step(const Task& task, const Step& step, TileView out, std::span<const double> a,
                  std::span<const double> b);

/// Run one task entirely against host memory.
void execute_task_on_host(const RoutinePlan& plan, const Task& task);

/// Execute every task in dependency order on the calling thread.
void run_sequential(const RoutinePlan& plan);

}  // namespace tilert
