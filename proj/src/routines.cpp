#include "tilert/routines.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <string>

#include "tilert/errors.hpp"

namespace tilert {

std::string_view to_string(Routine routine) noexcept {
    switch (routine) {
        case Routine::gemm: return "gemm";
        case Routine::syrk: return "syrk";
        case Routine::trsm: return "trsm";
        case Routine::trmm: return "trmm";
        case Routine::syr2k: return "syr2k";
        case Routine::symm: return "symm";
    }
    return "unknown";
}

std::optional<Routine> parse_routine(std::string_view name) noexcept {
    for (Routine r : {Routine::gemm, Routine::syrk, Routine::trsm, Routine::trmm, Routine::syr2k,
                      Routine::symm}) {
        if (to_string(r) == name) {
            return r;
        }
    }
    return std::nullopt;
}

const TiledMatrixDesc& RoutineCall::output() const {
    const auto& out = (kind == Routine::trsm || kind == Routine::trmm) ? b : c;
    if (!out) {
        throw InvalidArgument(std::string(to_string(kind)) + ": output operand missing");
    }
    return *out;
}

namespace {

struct OpShape {
    std::size_t rows;
    std::size_t cols;
};

OpShape op_shape(const TiledMatrixDesc& tm, bool trans) {
    return trans ? OpShape{tm.matrix.cols, tm.matrix.rows} : OpShape{tm.matrix.rows, tm.matrix.cols};
}

[[noreturn]] void nonconformant(Routine r, const std::string& what) {
    throw InvalidArgument(std::string(to_string(r)) + ": " + what);
}

const TiledMatrixDesc& need(const std::optional<TiledMatrixDesc>& m, Routine r, const char* name) {
    if (!m) {
        nonconformant(r, std::string("operand ") + name + " missing");
    }
    return *m;
}

}  // namespace

void validate(const RoutineCall& call) {
    const Routine r = call.kind;
    const bool uses_b = r != Routine::syrk;
    const bool uses_c = r != Routine::trsm && r != Routine::trmm;
    const auto& a = need(call.a, r, "A");
    const TiledMatrixDesc* b = uses_b ? &need(call.b, r, "B") : nullptr;
    const TiledMatrixDesc* c = uses_c ? &need(call.c, r, "C") : nullptr;

    const std::size_t t = a.tile_size;
    if ((b && b->tile_size != t) || (c && c->tile_size != t)) {
        nonconformant(r, "operands use different tile sizes");
    }
    std::vector<MatrixId> ids{a.matrix.id};
    if (b) ids.push_back(b->matrix.id);
    if (c) ids.push_back(c->matrix.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        nonconformant(r, "operands must have distinct matrix ids");
    }

    switch (r) {
        case Routine::gemm: {
            const auto oa = op_shape(a, call.trans_a);
            const auto ob = op_shape(*b, call.trans_b);
            if (oa.rows != c->matrix.rows || ob.cols != c->matrix.cols || oa.cols != ob.rows) {
                nonconformant(r, "op(A) * op(B) does not conform with C");
            }
            break;
        }
        case Routine::syrk:
        case Routine::syr2k: {
            if (c->matrix.rows != c->matrix.cols) {
                nonconformant(r, "C must be square");
            }
            const auto oa = op_shape(a, call.trans_a);
            if (oa.rows != c->matrix.rows) {
                nonconformant(r, "op(A) rows differ from the order of C");
            }
            if (b) {
                const auto ob = op_shape(*b, call.trans_a);
                if (ob.rows != oa.rows || ob.cols != oa.cols) {
                    nonconformant(r, "op(A) and op(B) differ in shape");
                }
            }
            break;
        }
        case Routine::symm: {
            if (a.matrix.rows != a.matrix.cols) {
                nonconformant(r, "A must be square");
            }
            if (b->matrix.rows != c->matrix.rows || b->matrix.cols != c->matrix.cols) {
                nonconformant(r, "B and C differ in shape");
            }
            const std::size_t order = call.side == Side::left ? c->matrix.rows : c->matrix.cols;
            if (a.matrix.rows != order) {
                nonconformant(r, "order of A does not match C");
            }
            break;
        }
        case Routine::trsm:
        case Routine::trmm: {
            if (a.matrix.rows != a.matrix.cols) {
                nonconformant(r, "A must be square");
            }
            const std::size_t order = call.side == Side::left ? b->matrix.rows : b->matrix.cols;
            if (a.matrix.rows != order) {
                nonconformant(r, "order of A does not match B");
            }
            break;
        }
    }
}

std::size_t degree_of_parallelism(std::size_t m, std::size_t n, std::size_t tile_size) {
    if (m == 0 || n == 0 || tile_size == 0) {
        throw InvalidArgument("degree_of_parallelism: arguments must be positive");
    }
    return ((m + tile_size - 1) / tile_size) * ((n + tile_size - 1) / tile_size);
}

std::uint64_t step_flops(const Step& step, const Task& task) {
    const std::uint64_t h = task.output.height;
    const std::uint64_t w = task.output.width;
    switch (step.kind) {
        case KernelKind::gemm_update: return 2 * h * w * step.a.width;
        case KernelKind::syrk_update: return h * (h + 1) * step.a.width;
        case KernelKind::syr2k_update: return 2 * h * (h + 1) * step.a.width;
        case KernelKind::trsm_solve:
        case KernelKind::trmm_diag: {
            const std::uint64_t n = step.a.height;
            return n * n * (task.side == Side::left ? w : h);
        }
        case KernelKind::symm_diag: return 2 * h * w * step.a.height;
    }
    return 0;
}

std::uint64_t task_flops(const Task& task) {
    std::uint64_t total = 0;
    for (const auto& s : task.steps) {
        total += step_flops(s, task);
    }
    return total;
}

namespace {

class TaskBuilder {
public:
    explicit TaskBuilder(const RoutineCall& call) : call_(call) {}

    Task& open(std::size_t i, std::size_t j) {
        Task t;
        t.routine = call_.kind;
        t.i = i;
        t.j = j;
        t.output = logical_tile(call_.output(), i, j, false);
        t.uplo = call_.uplo;
        t.side = call_.side;
        t.diag = call_.diag;
        pending_.push_back(std::move(t));
        return pending_.back();
    }

    static void add(Task& t, KernelKind kind, std::size_t k, TileRef a, std::optional<TileRef> b,
                    double alpha, double beta) {
        Step s;
        s.kind = kind;
        s.k = k;
        s.a = a;
        s.b = b;
        s.alpha = alpha;
        s.beta = beta;
        t.steps.push_back(s);
    }

    /// Emits tasks in strips of two output-tile rows, column by column, so
    /// that consecutive tasks share input panels.
    std::vector<Task> finish(std::size_t tile_rows) {
        std::map<std::pair<std::size_t, std::size_t>, Task*> by_pos;
        for (auto& t : pending_) {
            by_pos[{t.i, t.j}] = &t;
        }
        std::vector<Task*> order;
        for (std::size_t ib = 0; ib < tile_rows; ib += 2) {
            std::vector<Task*> strip;
            for (auto& t : pending_) {
                if (t.i >= ib && t.i < ib + 2) strip.push_back(&t);
            }
            std::stable_sort(strip.begin(), strip.end(), [](const Task* x, const Task* y) {
                return x->j != y->j ? x->j < y->j : x->i < y->i;
            });
            order.insert(order.end(), strip.begin(), strip.end());
        }
        std::map<const Task*, TaskId> ids;
        for (std::size_t n = 0; n < order.size(); ++n) {
            ids[order[n]] = static_cast<TaskId>(n);
        }
        std::vector<Task> out;
        out.reserve(order.size());
        for (Task* t : order) {
            t->id = ids[t];
            for (auto& s : t->steps) {
                s.flops = step_flops(s, *t);
            }
            t->flops = task_flops(*t);
            t->k_lo = t->steps.front().k;
            t->k_hi = t->steps.front().k;
            for (const auto& s : t->steps) {
                t->k_lo = std::min(t->k_lo, s.k);
                t->k_hi = std::max(t->k_hi, s.k);
            }
        }
        for (const auto& [from, to] : edges_) {
            Task* src = by_pos.at(from);
            Task* dst = by_pos.at(to);
            src->dependents.push_back(ids[dst]);
            ++dst->deps_remaining;
        }
        for (Task* t : order) {
            std::sort(t->dependents.begin(), t->dependents.end());
            out.push_back(std::move(*t));
        }
        return out;
    }

    void depend(std::pair<std::size_t, std::size_t> from, std::pair<std::size_t, std::size_t> to) {
        edges_.emplace_back(from, to);
    }

private:
    const RoutineCall& call_;
    std::deque<Task> pending_;
    std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::pair<std::size_t, std::size_t>>> edges_;
};

double first_beta(bool first, double beta) { return first ? beta : 1.0; }

std::vector<Task> gemm_tasks(const RoutineCall& call) {
    const auto& a = *call.a;
    const auto& b = *call.b;
    const auto& c = *call.c;
    const std::size_t inner = call.trans_a ? a.tile_rows : a.tile_cols;
    TaskBuilder tb(call);
    for (std::size_t i = 0; i < c.tile_rows; ++i) {
        for (std::size_t j = 0; j < c.tile_cols; ++j) {
            Task& t = tb.open(i, j);
            t.load_output = call.beta != 0.0;
            for (std::size_t k = 0; k < inner; ++k) {
                TaskBuilder::add(t, KernelKind::gemm_update, k, logical_tile(a, i, k, call.trans_a),
                                 logical_tile(b, k, j, call.trans_b), call.alpha,
                                 first_beta(k == 0, call.beta));
            }
        }
    }
    return tb.finish(c.tile_rows);
}

// SYRK and SYR2K share the triangle walk; `b` is absent for SYRK.
std::vector<Task> rank_update_tasks(const RoutineCall& call) {
    const auto& a = *call.a;
    const auto& c = *call.c;
    const bool tr = call.trans_a;
    const bool two = call.kind == Routine::syr2k;
    const std::size_t inner = tr ? a.tile_rows : a.tile_cols;
    TaskBuilder tb(call);
    for (std::size_t i = 0; i < c.tile_rows; ++i) {
        for (std::size_t j = 0; j < c.tile_cols; ++j) {
            const bool stored = call.uplo == Uplo::upper ? i <= j : i >= j;
            if (!stored) {
                continue;
            }
            Task& t = tb.open(i, j);
            t.load_output = call.beta != 0.0 || i == j;
            bool first = true;
            for (std::size_t k = 0; k < inner; ++k) {
                if (i == j) {
                    const auto kind = two ? KernelKind::syr2k_update : KernelKind::syrk_update;
                    std::optional<TileRef> rhs;
                    if (two) rhs = logical_tile(*call.b, i, k, tr);
                    TaskBuilder::add(t, kind, k, logical_tile(a, i, k, tr), rhs, call.alpha,
                                     first_beta(first, call.beta));
                    first = false;
                    continue;
                }
                // op(A)_ik * (op(A)^T)_kj, where (op(A)^T)_kj is op(A)_jk transposed.
                const auto& lhs2 = two ? *call.b : a;
                TaskBuilder::add(t, KernelKind::gemm_update, k, logical_tile(a, i, k, tr),
                                 logical_tile(lhs2, k, j, !tr), call.alpha, first_beta(first, call.beta));
                first = false;
                if (two) {
                    TaskBuilder::add(t, KernelKind::gemm_update, k, logical_tile(*call.b, i, k, tr),
                                     logical_tile(a, k, j, !tr), call.alpha, 1.0);
                }
            }
        }
    }
    return tb.finish(c.tile_rows);
}

std::vector<Task> trsm_tasks(const RoutineCall& call) {
    const auto& a = *call.a;
    const auto& b = *call.b;
    const bool tr = call.trans_a;
    const bool eff_upper = (call.uplo == Uplo::upper) != tr;
    TaskBuilder tb(call);
    for (std::size_t i = 0; i < b.tile_rows; ++i) {
        for (std::size_t j = 0; j < b.tile_cols; ++j) {
            Task& t = tb.open(i, j);
            t.load_output = true;
            const std::size_t n = call.side == Side::left ? b.tile_rows : b.tile_cols;
            const std::size_t diag = call.side == Side::left ? i : j;
            const std::size_t k_lo = eff_upper == (call.side == Side::left) ? diag + 1 : 0;
            const std::size_t k_hi = eff_upper == (call.side == Side::left) ? n : diag;
            // B_ij <- alpha * B_ij - sum op(A)_ik X_kj (left) / X_ik op(A)_kj (right)
            for (std::size_t k = k_lo; k < k_hi; ++k) {
                const double beta = first_beta(k == k_lo, call.alpha);
                if (call.side == Side::left) {
                    TaskBuilder::add(t, KernelKind::gemm_update, k, logical_tile(a, i, k, tr),
                                     logical_tile(b, k, j, false), -1.0, beta);
                    tb.depend({k, j}, {i, j});
                } else {
                    TaskBuilder::add(t, KernelKind::gemm_update, k, logical_tile(b, i, k, false),
                                     logical_tile(a, k, j, tr), -1.0, beta);
                    tb.depend({i, k}, {i, j});
                }
            }
            const double solve_alpha = k_lo < k_hi ? 1.0 : call.alpha;
            TaskBuilder::add(t, KernelKind::trsm_solve, diag, logical_tile(a, diag, diag, tr), std::nullopt,
                             solve_alpha, 0.0);
        }
    }
    return tb.finish(b.tile_rows);
}

std::vector<Task> trmm_tasks(const RoutineCall& call, const TiledMatrixDesc& snap) {
    const auto& a = *call.a;
    const auto& b = *call.b;
    const bool tr = call.trans_a;
    const bool eff_upper = (call.uplo == Uplo::upper) != tr;
    TaskBuilder tb(call);
    for (std::size_t i = 0; i < b.tile_rows; ++i) {
        for (std::size_t j = 0; j < b.tile_cols; ++j) {
            Task& t = tb.open(i, j);
            t.load_output = false;
            const bool left = call.side == Side::left;
            const std::size_t n = left ? b.tile_rows : b.tile_cols;
            const std::size_t diag = left ? i : j;
            // Left: op(A)_ik nonzero for k >= i (upper) / k <= i (lower).
            // Right: op(A)_kj nonzero for k <= j (upper) / k >= j (lower).
            const bool ascend_from_diag = eff_upper == left;
            const std::size_t k_lo = ascend_from_diag ? diag : 0;
            const std::size_t k_hi = ascend_from_diag ? n : diag + 1;
            for (std::size_t k = k_lo; k < k_hi; ++k) {
                const double beta = first_beta(k == k_lo, 0.0);
                if (k == diag) {
                    TaskBuilder::add(t, KernelKind::trmm_diag, k, logical_tile(a, diag, diag, tr),
                                     logical_tile(snap, i, j, false), call.alpha, beta);
                } else if (left) {
                    TaskBuilder::add(t, KernelKind::gemm_update, k, logical_tile(a, i, k, tr),
                                     logical_tile(snap, k, j, false), call.alpha, beta);
                } else {
                    TaskBuilder::add(t, KernelKind::gemm_update, k, logical_tile(snap, i, k, false),
                                     logical_tile(a, k, j, tr), call.alpha, beta);
                }
            }
        }
    }
    return tb.finish(b.tile_rows);
}

std::vector<Task> symm_tasks(const RoutineCall& call) {
    const auto& a = *call.a;
    const auto& b = *call.b;
    const auto& c = *call.c;
    const bool left = call.side == Side::left;
    // Tile (r, s) of the full symmetric matrix: stored tiles directly, the
    // mirrored triangle as the transpose of its stored partner.
    auto sym_tile = [&](std::size_t r, std::size_t s) {
        const bool stored = call.uplo == Uplo::upper ? r < s : r > s;
        return logical_tile(a, r, s, !stored);
    };
    TaskBuilder tb(call);
    for (std::size_t i = 0; i < c.tile_rows; ++i) {
        for (std::size_t j = 0; j < c.tile_cols; ++j) {
            Task& t = tb.open(i, j);
            t.load_output = call.beta != 0.0;
            const std::size_t n = left ? c.tile_rows : c.tile_cols;
            const std::size_t diag = left ? i : j;
            for (std::size_t k = 0; k < n; ++k) {
                const double beta = first_beta(k == 0, call.beta);
                if (k == diag) {
                    TaskBuilder::add(t, KernelKind::symm_diag, k, logical_tile(a, k, k, false),
                                     left ? logical_tile(b, k, j, false) : logical_tile(b, i, k, false),
                                     call.alpha, beta);
                } else if (left) {
                    TaskBuilder::add(t, KernelKind::gemm_update, k, sym_tile(i, k), logical_tile(b, k, j, false),
                                     call.alpha, beta);
                } else {
                    TaskBuilder::add(t, KernelKind::gemm_update, k, logical_tile(b, i, k, false), sym_tile(k, j),
                                     call.alpha, beta);
                }
            }
        }
    }
    return tb.finish(c.tile_rows);
}

}  // namespace

std::vector<Task> generate_tasks(const RoutineCall& call, const TiledMatrixDesc* snapshot) {
    validate(call);
    switch (call.kind) {
        case Routine::gemm: return gemm_tasks(call);
        case Routine::syrk:
        case Routine::syr2k: return rank_update_tasks(call);
        case Routine::trsm: return trsm_tasks(call);
        case Routine::trmm:
            if (!snapshot) {
                throw InvalidArgument("trmm: task generation needs a snapshot of B");
            }
            return trmm_tasks(call, *snapshot);
        case Routine::symm: return symm_tasks(call);
    }
    throw InvalidArgument("unknown routine");
}

namespace {

MatrixId fresh_id(const RoutineCall& call) {
    MatrixId id = 0;
    for (const auto* m : {&call.a, &call.b, &call.c}) {
        if (*m) id = std::max(id, (*m)->matrix.id);
    }
    return id + 1;
}

}  // namespace

double gemm_flop_fraction(const RoutineCall& call) {
    std::optional<TiledMatrixDesc> snap;
    if (call.kind == Routine::trmm) {
        validate(call);
        MatrixDesc shape = call.b->matrix;
        shape.id = fresh_id(call);
        shape.storage = {};
        snap = make_tiled(shape, call.b->tile_size);
    }
    const auto tasks = generate_tasks(call, snap ? &*snap : nullptr);
    std::uint64_t gemm = 0;
    std::uint64_t total = 0;
    for (const auto& t : tasks) {
        for (const auto& s : t.steps) {
            total += s.flops;
            if (s.kind == KernelKind::gemm_update) gemm += s.flops;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(gemm) / static_cast<double>(total);
}

RoutinePlan::RoutinePlan(const RoutineCall& call) : call_(call) {
    validate(call_);
    if (call_.kind == Routine::trmm) {
        const auto& b = *call_.b;
        if (!b.matrix.bound()) {
            throw InvalidArgument("trmm: B has no storage to snapshot");
        }
        snapshot_storage_ = std::make_unique<std::vector<double>>(b.matrix.rows * b.matrix.cols);
        auto& s = *snapshot_storage_;
        for (std::size_t col = 0; col < b.matrix.cols; ++col) {
            for (std::size_t row = 0; row < b.matrix.rows; ++row) {
                s[row + col * b.matrix.rows] = b.matrix.at(row, col);
            }
        }
        snapshot_ = make_tiled(make_matrix_desc(fresh_id(call_), b.matrix.rows, b.matrix.cols,
                                                b.matrix.rows, s),
                               b.tile_size);
    }
    tasks_ = generate_tasks(call_, snapshot_ ? &*snapshot_ : nullptr);
}

const TiledMatrixDesc& RoutinePlan::matrix(MatrixId id) const {
    for (const auto* m : {&call_.a, &call_.b, &call_.c, &snapshot_}) {
        if (*m && (*m)->matrix.id == id) {
            return **m;
        }
    }
    throw InvalidArgument("matrix " + std::to_string(id) + " is not part of this call");
}

void execute_step(const Task& task, const Step& step, TileView out, std::span<const double> a,
                  std::span<const double> b) {
    const ConstTileView va{a, step.a.physical_rows(), step.a.physical_cols(), step.a.transposed};
    ConstTileView vb;
    if (step.b) {
        vb = ConstTileView{b, step.b->physical_rows(), step.b->physical_cols(), step.b->transposed};
    }
    switch (step.kind) {
        case KernelKind::gemm_update: gemm_update(out, va, vb, step.alpha, step.beta); break;
        case KernelKind::syrk_update: syrk_update(out, va, step.alpha, step.beta, task.uplo); break;
        case KernelKind::syr2k_update: syr2k_update(out, va, vb, step.alpha, step.beta, task.uplo); break;
        case KernelKind::trsm_solve: trsm_solve(out, va, step.alpha, task.side, task.uplo, task.diag); break;
        case KernelKind::trmm_diag:
            trmm_diag(out, va, vb, step.alpha, step.beta, task.side, task.uplo, task.diag);
            break;
        case KernelKind::symm_diag: symm_diag(out, va, vb, step.alpha, step.beta, task.side, task.uplo); break;
    }
}

void execute_task_on_host(const RoutinePlan& plan, const Task& task) {
    const auto& out_tm = plan.matrix(task.output.matrix_id);
    std::vector<double> out(task.output.elements(), 0.0);
    if (task.load_output) {
        tile_host_copy_in(out_tm, task.output, out);
    }
    std::vector<double> a;
    std::vector<double> b;
    for (const auto& s : task.steps) {
        a.resize(s.a.elements());
        tile_host_copy_in(plan.matrix(s.a.matrix_id), s.a, a);
        if (s.b) {
            b.resize(s.b->elements());
            tile_host_copy_in(plan.matrix(s.b->matrix_id), *s.b, b);
        }
        execute_step(task, s, TileView{out, task.output.height, task.output.width}, a, b);
    }
    tile_host_copy_out(out_tm, task.output, out);
}

void run_sequential(const RoutinePlan& plan) {
    const auto& tasks = plan.tasks();
    std::vector<std::uint32_t> deps(tasks.size());
    std::deque<TaskId> ready;
    for (const auto& t : tasks) {
        deps[t.id] = t.deps_remaining;
        if (t.deps_remaining == 0) ready.push_back(t.id);
    }
    std::size_t done = 0;
    while (!ready.empty()) {
        const Task& t = tasks[ready.front()];
        ready.pop_front();
        execute_task_on_host(plan, t);
        ++done;
        for (TaskId d : t.dependents) {
            if (--deps[d] == 0) ready.push_back(d);
        }
    }
    if (done != tasks.size()) {
        throw InternalError("dependency cycle among generated tasks");
    }
}

}  // namespace tilert
