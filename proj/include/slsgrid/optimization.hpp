#pragma once

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "slsgrid/common.hpp"

namespace slsgrid {

/// Penalty and stopping parameters shared by the ADMM-based solvers.
struct AdmmConfig {
    double rho = 1.0;
    double eps_primal = 1e-4;
    double eps_dual = 1e-4;
    int max_iters = 5000;

    void validate() const {
        check_dim(rho > 0 && eps_primal > 0 && eps_dual > 0 && max_iters > 0,
                  "AdmmConfig: all parameters must be positive");
    }
};

/// min 1/2 z'Hz + g'z  s.t.  Ez = h,  lower <= z <= upper  (+-inf allowed).
struct QpProblem {
    Mat hessian;
    Vec linear;
    Mat eq_matrix;   // may have zero rows
    Vec eq_rhs;
    Vec lower;
    Vec upper;

    void validate() const {
        const int n = static_cast<int>(hessian.rows());
        check_dim(hessian.cols() == n, "QpProblem: hessian must be square");
        check_dim(linear.size() == n, "QpProblem: linear size mismatch");
        check_dim(eq_matrix.rows() == eq_rhs.size(), "QpProblem: eq rows mismatch");
        check_dim(eq_matrix.rows() == 0 || eq_matrix.cols() == n,
                  "QpProblem: eq cols mismatch");
        check_dim(lower.size() == n && upper.size() == n, "QpProblem: bound size mismatch");
        for (int i = 0; i < n; ++i)
            check_dim(lower[i] <= upper[i], "QpProblem: lower > upper");
        Eigen::LDLT<Mat> ldlt(hessian);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
            throw NumericalError("QpProblem: hessian is not positive semidefinite");
    }
};

/// argmin 1/2 z'Wz  s.t.  Ez = h, by one KKT solve. W must be PSD and positive
/// definite on the nullspace of E. Redundant-but-consistent constraint rows are
/// tolerated; an inconsistent or degenerate system raises InfeasibleError
/// naming the worst constraint row.
inline Vec solve_eq_ls(const Mat& W, const Mat& E, const Vec& h) {
    const int n = static_cast<int>(W.rows());
    const int m = static_cast<int>(E.rows());
    check_dim(W.cols() == n, "solve_eq_ls: W must be square");
    check_dim(m == 0 || E.cols() == n, "solve_eq_ls: E cols mismatch");
    check_dim(h.size() == m, "solve_eq_ls: rhs size mismatch");

    Mat kkt = Mat::Zero(n + m, n + m);
    kkt.topLeftCorner(n, n) = W;
    if (m > 0) {
        kkt.topRightCorner(n, m) = E.transpose();
        kkt.bottomLeftCorner(m, n) = E;
    }
    Vec rhs = Vec::Zero(n + m);
    rhs.tail(m) = h;

    Eigen::CompleteOrthogonalDecomposition<Mat> cod(kkt);
    Vec sol = cod.solve(rhs);
    Vec z = sol.head(n);
    Vec nu = sol.tail(m);

    if (m > 0) {
        Vec feas = E * z - h;
        Eigen::Index worst = 0;
        const double viol = feas.cwiseAbs().maxCoeff(&worst);
        if (viol > 1e-9 * (1.0 + h.cwiseAbs().maxCoeff() + z.cwiseAbs().maxCoeff()))
            throw InfeasibleError(
                "solve_eq_ls: equality constraints unsatisfiable or degenerate "
                "(worst row " + std::to_string(worst) + ", violation " +
                format_double(viol) + ", KKT rank " + std::to_string(cod.rank()) + ")",
                static_cast<int>(worst));
    }
    Vec stat = W * z + (m > 0 ? Vec(E.transpose() * nu) : Vec(Vec::Zero(n)));
    const double stat_scale =
        1.0 + z.cwiseAbs().maxCoeff() + (m > 0 ? nu.cwiseAbs().maxCoeff() : 0.0);
    if (stat.cwiseAbs().maxCoeff() > 1e-8 * stat_scale)
        throw NumericalError("solve_eq_ls: stationarity residual too large (" +
                             format_double(stat.cwiseAbs().maxCoeff()) + ")");
    return z;
}

struct AdmmResult {
    Vec consensus;        // the constraint-side copy (returned iterate)
    Vec primal_copy;      // the prox-side copy at termination
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
};

/// Warm-start state for consecutive related solves.
struct AdmmState {
    Vec consensus;
    Vec dual;
};

/// Two-block consensus ADMM in scaled form:
///   phi <- prox_f(psi - lambda); psi <- proj_g(phi + lambda); lambda += phi - psi
/// until ||phi - psi|| <= eps_primal and rho*||psi - psi_prev|| <= eps_dual.
/// prox_f(v) must return argmin f(x) + (rho/2)||x - v||^2 for the same rho as
/// the config; proj_g must be a projection onto a closed convex set.
inline AdmmResult admm_two_block(const std::function<Vec(const Vec&)>& prox_f,
                                 const std::function<Vec(const Vec&)>& proj_g, int dim,
                                 const AdmmConfig& config, AdmmState* warm = nullptr) {
    config.validate();
    Vec psi = (warm && warm->consensus.size() == dim) ? warm->consensus : Vec(Vec::Zero(dim));
    Vec lambda = (warm && warm->dual.size() == dim) ? warm->dual : Vec(Vec::Zero(dim));
    Vec phi(dim), psi_prev(dim);
    double r = 0.0, s = 0.0, init_r = -1.0, r_window = -1.0;
    for (int it = 1; it <= config.max_iters; ++it) {
        phi = prox_f(psi - lambda);
        psi_prev = psi;
        psi = proj_g(phi + lambda);
        lambda += phi - psi;
        r = (phi - psi).norm();
        s = config.rho * (psi - psi_prev).norm();
        if (init_r < 0) init_r = r;
        if (r <= config.eps_primal && s <= config.eps_dual) {
            if (warm) {
                warm->consensus = psi;
                warm->dual = lambda;
            }
            return {psi, phi, it, r, s};
        }
        if (it > 100 && r > 1e8 * (1.0 + init_r)) {
            if (warm) {
                warm->consensus = psi;
                warm->dual = lambda;
            }
            throw InfeasibleError("admm_two_block: diverging iterates, constraint sets "
                                  "do not intersect");
        }
        // Stalled primal gap with a vanished dual step is the infeasibility
        // signature: the copies settled on the closest pair of disjoint sets.
        if (it % 200 == 0) {
            if (r_window >= 0.0 && s <= config.eps_dual && r > config.eps_primal &&
                r > r_window - 1e-9 * std::max(1.0, r_window)) {
                if (warm) {
                    warm->consensus = psi;
                    warm->dual = lambda;
                }
                throw InfeasibleError(
                    "admm_two_block: primal gap stalled at " + format_double(r) +
                    " with vanishing dual step; constraint sets do not intersect");
            }
            r_window = r;
        }
    }
    if (warm) {
        warm->consensus = psi;
        warm->dual = lambda;
    }
    throw SolverError("admm_two_block: no convergence after " +
                          std::to_string(config.max_iters) + " iterations (primal " +
                          format_double(r) + ", dual " + format_double(s) + ")",
                      config.max_iters, r, s);
}

struct BoxQpResult {
    Vec solution;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
};

/// Box-constrained QP solver. The quadratic + equality block is one prox
/// (a KKT system factored once); the boxes are the projection block. The
/// returned point is the projected copy, so boxes hold exactly and equalities
/// to roughly eps_primal. Reusable across solves with the same (H, E, rho);
/// call operator() with fresh (g, h, bounds).
class BoxQpSolver {
public:
    BoxQpSolver(Mat hessian, Mat eq_matrix, const AdmmConfig& config)
        : config_(config), hessian_(std::move(hessian)), eq_matrix_(std::move(eq_matrix)) {
        config_.validate();
        n_ = static_cast<int>(hessian_.rows());
        m_ = static_cast<int>(eq_matrix_.rows());
        // Jacobi equilibration: rescale coordinates to unit diagonal
        // curvature so the consensus penalty is commensurate everywhere. Box
        // constraints stay boxes under a positive diagonal scaling and the
        // minimizer maps back exactly.
        Vec diag = hessian_.diagonal().cwiseAbs();
        const double mean_diag = std::max(diag.mean(), 1e-300);
        scale_ = Vec(n_);
        for (int i = 0; i < n_; ++i)
            scale_[i] = std::sqrt(std::max(diag[i], 1e-6 * mean_diag));
        Mat h_eq = scale_.cwiseInverse().asDiagonal() * hessian_ *
                   scale_.cwiseInverse().asDiagonal();
        Mat e_eq = m_ > 0 ? Mat(eq_matrix_ * scale_.cwiseInverse().asDiagonal()) : Mat(0, n_);
        Mat kkt = Mat::Zero(n_ + m_, n_ + m_);
        kkt.topLeftCorner(n_, n_) = h_eq;
        if (m_ > 0) {
            kkt.topRightCorner(n_, m_) = e_eq.transpose();
            kkt.bottomLeftCorner(m_, n_) = e_eq;
        }
        kkt_exact_.compute(kkt);
        kkt.topLeftCorner(n_, n_) = h_eq + config_.rho * Mat::Identity(n_, n_);
        kkt_.compute(kkt);
    }

    BoxQpResult solve(const Vec& g, const Vec& h, const Vec& lower, const Vec& upper,
                      AdmmState* warm = nullptr) const {
        check_dim(g.size() == n_ && h.size() == m_, "BoxQpSolver: rhs size mismatch");
        check_dim(lower.size() == n_ && upper.size() == n_, "BoxQpSolver: bound size mismatch");
        const Vec g_eq = g.cwiseQuotient(scale_);
        const bool unconstrained =
            (lower.array() == -kInf).all() && (upper.array() == kInf).all();
        if (unconstrained) {
            // Boxes inactive: the pure KKT solve (zero proximal pull) is optimal.
            Vec z = solve_kkt(g_eq, h, Vec::Zero(n_), 0.0);
            return {z.cwiseQuotient(scale_), 0, 0.0, 0.0};
        }
        const Vec lower_eq = lower.cwiseProduct(scale_);
        const Vec upper_eq = upper.cwiseProduct(scale_);
        auto prox = [&](const Vec& v) { return solve_kkt(g_eq, h, v, config_.rho); };
        auto proj = [&](const Vec& v) { return clip(v, lower_eq, upper_eq); };
        // Tolerances are per-coordinate RMS in the equilibrated metric,
        // relative to the problem data: the primal gap against the box scale,
        // the dual step against the linear term. Without the relative part,
        // near-null curvature directions (flat tradeoffs with negligible cost
        // impact) stall the absolute dual test indefinitely.
        AdmmConfig scaled = config_;
        const double root_dim = std::sqrt(static_cast<double>(n_));
        double box_sq = 0.0;
        int box_cnt = 0;
        for (int i = 0; i < n_; ++i) {
            if (std::isfinite(lower_eq[i])) {
                box_sq += lower_eq[i] * lower_eq[i];
                ++box_cnt;
            }
            if (std::isfinite(upper_eq[i])) {
                box_sq += upper_eq[i] * upper_eq[i];
                ++box_cnt;
            }
        }
        const double box_scale =
            1.0 + (box_cnt > 0 ? std::sqrt(box_sq / box_cnt) : 0.0);
        const double g_scale = 1.0 + g_eq.norm() / root_dim;
        scaled.eps_primal *= root_dim * box_scale;
        scaled.eps_dual *= root_dim * g_scale;
        AdmmResult res = admm_two_block(prox, proj, n_, scaled, warm);
        // Unscaling can drift a coordinate off its bound by an ulp; reclip in
        // the original coordinates so boxes hold exactly.
        Vec z = clip(res.consensus.cwiseQuotient(scale_), lower, upper);
        return {std::move(z), res.iterations, res.primal_residual, res.dual_residual};
    }

private:
    Vec solve_kkt(const Vec& g_eq, const Vec& h, const Vec& v, double rho) const {
        Vec rhs(n_ + m_);
        rhs.head(n_) = rho * v - g_eq;
        rhs.tail(m_) = h;
        Vec sol = (rho > 0.0) ? kkt_.solve(rhs) : kkt_exact_.solve(rhs);
        return sol.head(n_);
    }

    static Vec clip(const Vec& v, const Vec& lower, const Vec& upper) {
        return v.cwiseMax(lower).cwiseMin(upper);
    }

    AdmmConfig config_;
    Mat hessian_;
    Mat eq_matrix_;
    Eigen::CompleteOrthogonalDecomposition<Mat> kkt_;        // equilibrated, + rho*I
    Eigen::CompleteOrthogonalDecomposition<Mat> kkt_exact_;  // equilibrated, plain
    int n_ = 0;
    int m_ = 0;
    Vec scale_;   // coordinate scaling (sqrt of diagonal curvature)
};

/// One-off convenience wrapper over BoxQpSolver.
inline BoxQpResult solve_box_qp(const QpProblem& problem, const AdmmConfig& config) {
    problem.validate();
    BoxQpSolver solver(problem.hessian, problem.eq_matrix, config);
    return solver.solve(problem.linear, problem.eq_rhs, problem.lower, problem.upper);
}

}  // namespace slsgrid
