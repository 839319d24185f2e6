#pragma once

#include <Eigen/Dense>

#include <cstdio>
#include <functional>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace slsgrid {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using BoolMat = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Locality radius sentinel: no restriction (all-true supports).
constexpr int kFullLocality = std::numeric_limits<int>::max();

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Mismatched vector/matrix sizes at a module boundary.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed to deliver its contract (eigensolver
/// non-convergence, residual check failure, singular reduction).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative solver stopped before reaching its tolerances.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, int iterations, double primal_residual,
                double dual_residual)
        : std::runtime_error(what),
          iterations(iterations),
          primal_residual(primal_residual),
          dual_residual(dual_residual) {}

    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
};

/// Constraint set is empty (or a locality patch cannot satisfy the
/// closure constraints). `column`/`node` identify the subproblem when known.
class InfeasibleError : public std::runtime_error {
public:
    explicit InfeasibleError(const std::string& what, int column = -1, int node = -1)
        : std::runtime_error(what), column(column), node(node) {}

    int column = -1;
    int node = -1;
};

/// Shortest-round-trip decimal formatting, used by every text dump so that
/// save/load and golden-file comparisons are exact.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void check_dim(bool ok, const std::string& what) {
    if (!ok) throw DimensionError(what);
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). Deterministic output layout is the caller's job: each index
/// must write only its own slot.
inline void parallel_for(int n, const std::function<void(int)>& fn, int threads = 0) {
    if (n <= 0) return;
    int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    if (workers <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    workers = std::min(workers, n);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    std::exception_ptr first_error = nullptr;
    std::mutex error_mutex;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int i = w; i < n; i += workers) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace slsgrid
