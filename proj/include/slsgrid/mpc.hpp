#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "slsgrid/column_solver.hpp"
#include "slsgrid/common.hpp"
#include "slsgrid/lqr.hpp"
#include "slsgrid/optimization.hpp"
#include "slsgrid/plant.hpp"
#include "slsgrid/synthesis.hpp"
#include "slsgrid/system_response.hpp"

namespace slsgrid {

/// Receding-horizon problem data. The reference pair must be an equilibrium
/// and holdable under the input bound. State-box hooks are carried but the
/// case study leaves them unbounded.
struct MpcProblem {
    PlantModel plant;
    int horizon = 1;
    LocalityMask mask;          // all-true for the centralized problem
    Mat q_weight, r_weight;
    double u_max = kInf;
    Vec x_ref, u_ref;
    Vec x_lower, x_upper;       // per-state bounds, default unbounded

    MpcProblem(PlantModel plant_in, int horizon_in, LocalityMask mask_in, Mat q, Mat r,
               double u_max_in, Vec x_ref_in, Vec u_ref_in)
        : plant(std::move(plant_in)),
          horizon(horizon_in),
          mask(std::move(mask_in)),
          q_weight(std::move(q)),
          r_weight(std::move(r)),
          u_max(u_max_in),
          x_ref(std::move(x_ref_in)),
          u_ref(std::move(u_ref_in)) {
        x_lower = Vec::Constant(plant.state_dim(), -kInf);
        x_upper = Vec::Constant(plant.state_dim(), kInf);
        validate();
    }

    void validate() const {
        check_dim(horizon >= 1, "MpcProblem: horizon must be >= 1");
        check_dim(x_ref.size() == plant.state_dim() && u_ref.size() == plant.input_dim(),
                  "MpcProblem: reference size mismatch");
        check_dim(u_max > 0.0, "MpcProblem: u_max must be positive");
        const Vec residual =
            plant.state_matrix() * x_ref + plant.input_matrix() * u_ref - x_ref;
        if (residual.cwiseAbs().maxCoeff() > 1e-8)
            throw DimensionError("MpcProblem: (x_ref, u_ref) is not an equilibrium pair");
        if (u_max != kInf && u_ref.cwiseAbs().maxCoeff() >= u_max)
            throw DimensionError("MpcProblem: u_ref not strictly inside the input bound");
    }

    bool state_bounds_active() const {
        return (x_lower.array() != -kInf).any() || (x_upper.array() != kInf).any();
    }
};

/// Open-loop plan over the MPC horizon. states[0] is the measured state the
/// plan was computed from; inputs[j] is applied j steps after that.
struct PlannedTrajectory {
    std::vector<Vec> states;
    std::vector<Vec> inputs;

    int length() const { return static_cast<int>(inputs.size()); }
};

/// Plan objective: stage tracking costs plus the terminal weight on the last
/// planned state. Matches what both MPC solvers minimize.
inline double mpc_objective(const MpcProblem& problem, const Mat& terminal_weight,
                            const PlannedTrajectory& plan) {
    double cost = 0.0;
    const int T = plan.length();
    for (int j = 0; j < T; ++j) {
        const Vec dx = plan.states[static_cast<size_t>(j)] - problem.x_ref;
        const Vec du = plan.inputs[static_cast<size_t>(j)] - problem.u_ref;
        cost += dx.dot(problem.q_weight * dx) + du.dot(problem.r_weight * du);
    }
    const Vec dT = plan.states[static_cast<size_t>(T - 1)] - problem.x_ref;
    cost += dT.dot(terminal_weight * dT);
    return cost;
}

namespace detail {

inline PlannedTrajectory roll_out(const PlantModel& plant, const Vec& x_now,
                                  const std::vector<Vec>& inputs) {
    PlannedTrajectory plan;
    plan.inputs = inputs;
    plan.states.resize(inputs.size());
    Vec x = x_now;
    for (size_t j = 0; j < inputs.size(); ++j) {
        plan.states[j] = x;
        if (j + 1 < inputs.size())
            x = plant.state_matrix() * x + plant.input_matrix() * inputs[j];
    }
    return plan;
}

}  // namespace detail

/// Centralized receding-horizon solver over trajectory variables. The
/// tracking cost and input boxes form coordinate-separable prox steps; the
/// dynamics are one exact stage-factored projection per iteration. Condensing
/// the states out instead looks natural but raises the powers of an unstable
/// A into the Hessian, whose conditioning then defeats any splitting method;
/// the stagewise form never forms those powers. Unbounded inputs skip the
/// splitting entirely and solve the tracking problem directly.
class CentralizedMpcSolver {
public:
    CentralizedMpcSolver(const PlantModel& plant, int horizon, Mat q_weight, Mat r_weight,
                         double u_max, AdmmConfig config = {})
        : plant_(plant),
          horizon_(horizon),
          q_weight_(std::move(q_weight)),
          r_weight_(std::move(r_weight)),
          u_max_(u_max),
          config_(config) {
        check_dim(horizon_ >= 1, "CentralizedMpcSolver: horizon must be >= 1");
        n_ = plant_.state_dim();
        p_ = plant_.input_dim();
        terminal_weight_ = riccati_infinite(plant_, q_weight_, r_weight_).value;
        if (u_max_ != kInf) {
            Mat off = r_weight_;
            off.diagonal().setZero();
            if (off.cwiseAbs().maxCoeff() != 0.0)
                throw DimensionError(
                    "CentralizedMpcSolver: bounded inputs need a diagonal R "
                    "(per-coordinate box prox)");
        }
        r_diag_ = r_weight_.diagonal();

        ColumnPatch full;
        for (int i = 0; i < n_; ++i) full.state_idx.push_back(i);
        for (int i = 0; i < p_; ++i) full.input_idx.push_back(i);

        // Direct path: minimize the tracking cost itself subject to dynamics.
        std::vector<Mat> wx(static_cast<size_t>(horizon_), q_weight_);
        if (horizon_ >= 2) wx.back() = q_weight_ + terminal_weight_;
        std::vector<Mat> wu(static_cast<size_t>(horizon_), r_weight_);
        cost_solver_ = std::make_unique<ColumnSolver>(plant_.state_matrix(),
                                                      plant_.input_matrix(), full, wx, wu,
                                                      horizon_, /*terminal_deadbeat=*/false);

        // Splitting path: penalties match the per-coordinate cost curvature.
        rho_x_mid_ = Vec(n_);
        rho_x_term_ = Vec(n_);
        rho_u_ = Vec(p_);
        double curv_sum = 0.0;
        int curv_count = 0;
        auto note = [&](double c) {
            if (c > 0.0) {
                curv_sum += c;
                ++curv_count;
            }
            return c;
        };
        for (int i = 0; i < n_; ++i) {
            rho_x_mid_[i] = note(2.0 * q_weight_(i, i));
            rho_x_term_[i] = note(2.0 * (q_weight_(i, i) + terminal_weight_(i, i)));
        }
        for (int i = 0; i < p_; ++i) rho_u_[i] = note(2.0 * r_diag_[i]);
        const double floor =
            curv_count > 0 ? std::max(1e-3 * curv_sum / curv_count, 1e-12) : 1.0;
        auto lift = [&](Vec& v) {
            for (int i = 0; i < v.size(); ++i)
                v[i] = config_.rho * std::max(v[i], floor);
        };
        lift(rho_x_mid_);
        lift(rho_x_term_);
        lift(rho_u_);

        mid_prox_.compute(2.0 * q_weight_ + Mat(rho_x_mid_.asDiagonal()));
        term_prox_.compute(2.0 * (q_weight_ + terminal_weight_) +
                           Mat(rho_x_term_.asDiagonal()));

        std::vector<Vec> proj_wx(static_cast<size_t>(horizon_), rho_x_mid_);
        if (horizon_ >= 2) proj_wx.back() = rho_x_term_;
        std::vector<Vec> proj_wu(static_cast<size_t>(horizon_), rho_u_);
        proj_solver_ = std::make_unique<ColumnSolver>(plant_.state_matrix(),
                                                      plant_.input_matrix(), full, proj_wx,
                                                      proj_wu, horizon_,
                                                      /*terminal_deadbeat=*/false);
        dim_ = (horizon_ - 1) * n_ + horizon_ * p_;
    }

    void set_reference(const Vec& x_ref, const Vec& u_ref) {
        MpcProblem check(plant_, horizon_, LocalityMask{}, q_weight_, r_weight_, u_max_, x_ref,
                         u_ref);
        (void)check;
        x_ref_ = x_ref;
        u_ref_ = u_ref;
    }

    PlannedTrajectory solve(const Vec& x_now) {
        check_dim(x_ref_.size() > 0, "CentralizedMpcSolver: reference not set");
        check_dim(x_now.size() == n_, "CentralizedMpcSolver: state size mismatch");
        const Vec dx = x_now - x_ref_;
        std::vector<Vec> inputs(static_cast<size_t>(horizon_));
        if (u_max_ == kInf) {
            ColumnSolver::Solution sol = cost_solver_->solve(dx);
            for (int k = 0; k < horizon_; ++k)
                inputs[static_cast<size_t>(k)] = u_ref_ + sol.inputs.col(k);
            last_iterations_ = 0;
            return detail::roll_out(plant_, x_now, inputs);
        }

        auto prox = [&](const Vec& v) { return cost_prox(v); };
        auto proj = [&](const Vec& v) { return dynamics_project(v, dx); };
        AdmmConfig scaled = config_;
        const double root_dim = std::sqrt(static_cast<double>(dim_));
        scaled.eps_primal *= root_dim;
        scaled.eps_dual *= root_dim;
        AdmmResult res = admm_two_block(prox, proj, dim_, scaled, &warm_);
        last_iterations_ = res.iterations;
        for (int k = 0; k < horizon_; ++k) {
            Vec u = u_ref_;
            u += res.primal_copy.segment(u_off(k + 1), p_);
            inputs[static_cast<size_t>(k)] = u;
        }
        return detail::roll_out(plant_, x_now, inputs);
    }

    const Mat& terminal_weight() const { return terminal_weight_; }
    int last_iterations() const { return last_iterations_; }
    void reset_warm_start() { warm_ = AdmmState{}; }

private:
    // Layout: deviations [x(2); ...; x(T); u(1); ...; u(T)].
    int x_off(int k) const { return (k - 2) * n_; }
    int u_off(int k) const { return (horizon_ - 1) * n_ + (k - 1) * p_; }

    Vec cost_prox(const Vec& v) const {
        Vec out(dim_);
        for (int k = 2; k <= horizon_; ++k) {
            auto seg = v.segment(x_off(k), n_);
            if (k == horizon_)
                out.segment(x_off(k), n_) =
                    term_prox_.solve(rho_x_term_.asDiagonal() * seg);
            else
                out.segment(x_off(k), n_) =
                    mid_prox_.solve(rho_x_mid_.asDiagonal() * seg);
        }
        for (int k = 1; k <= horizon_; ++k) {
            for (int i = 0; i < p_; ++i) {
                const double vi = v[u_off(k) + i];
                double z = rho_u_[i] * vi / (2.0 * r_diag_[i] + rho_u_[i]);
                z = std::min(std::max(z, -u_max_ - u_ref_[i]), u_max_ - u_ref_[i]);
                out[u_off(k) + i] = z;
            }
        }
        return out;
    }

    Vec dynamics_project(const Vec& v, const Vec& dx) const {
        Mat a(n_, horizon_), b(p_, horizon_);
        a.col(0) = dx;
        for (int k = 2; k <= horizon_; ++k) a.col(k - 1) = v.segment(x_off(k), n_);
        for (int k = 1; k <= horizon_; ++k) b.col(k - 1) = v.segment(u_off(k), p_);
        ColumnSolver::Solution sol = proj_solver_->solve(dx, a, b);
        Vec out(dim_);
        for (int k = 2; k <= horizon_; ++k) out.segment(x_off(k), n_) = sol.states.col(k - 1);
        for (int k = 1; k <= horizon_; ++k) out.segment(u_off(k), p_) = sol.inputs.col(k - 1);
        return out;
    }

    PlantModel plant_;
    int horizon_;
    Mat q_weight_, r_weight_, terminal_weight_;
    Vec r_diag_;
    double u_max_;
    AdmmConfig config_;
    int n_ = 0, p_ = 0, dim_ = 0;
    Vec rho_x_mid_, rho_x_term_, rho_u_;
    Eigen::LDLT<Mat> mid_prox_, term_prox_;
    std::unique_ptr<ColumnSolver> cost_solver_, proj_solver_;
    AdmmState warm_;
    Vec x_ref_, u_ref_;
    int last_iterations_ = 0;
};

/// Distributed-localized receding-horizon solver over response variables.
/// Two-copy consensus ADMM: the prox copy carries the (row-separable) tracking
/// cost and the per-subsystem input boxes, the projection copy is the
/// indicator of the achievability recursion intersected with the locality
/// supports, separable by disturbance-origin column. The consensus metric is
/// preconditioned per row: each row's penalty matches its own cost curvature,
/// so rows dominated by the terminal weight and rows with barely any cost
/// move at commensurate rates. Requires diagonal Q and R.
class LocalizedMpcSolver {
public:
    LocalizedMpcSolver(const PlantModel& plant, int horizon, const LocalityMask& mask,
                       const Mat& q_weight, const Mat& r_weight, double u_max,
                       AdmmConfig config = {}, int threads = 1, bool warm_start = true)
        : plant_(plant),
          horizon_(horizon),
          mask_(mask),
          u_max_(u_max),
          config_(config),
          threads_(threads),
          warm_start_(warm_start) {
        check_dim(horizon_ >= 1, "LocalizedMpcSolver: horizon must be >= 1");
        require_diagonal(q_weight, "q_weight");
        require_diagonal(r_weight, "r_weight");
        q_diag_ = q_weight.diagonal();
        r_diag_ = r_weight.diagonal();
        terminal_weight_ = riccati_infinite(plant_, q_weight, r_weight).value;
        n_ = plant_.state_dim();
        p_ = plant_.input_dim();
        dim_ = horizon_ * (n_ * n_ + p_ * n_);
        // Unweighted solver bank decides feasibility of every column under
        // the mask, once, at construction.
        detail::ColumnSolverBank probe(plant_.state_matrix(), plant_.input_matrix(), mask_,
                                       Mat(Mat::Identity(n_, n_)), Mat(Mat::Identity(p_, p_)),
                                       horizon_, /*terminal_deadbeat=*/false, threads_);
        for (int c = 0; c < n_; ++c) {
            const ColumnSolver& solver = probe.solver_for_column(c);
            if (!solver.feasible(probe.unit_in_patch(c)))
                throw InfeasibleError("LocalizedMpcSolver: column " + std::to_string(c) +
                                          " infeasible under the locality mask",
                                      c, c / 2);
        }
    }

    void set_reference(const Vec& x_ref, const Vec& u_ref) {
        MpcProblem check(plant_, horizon_, mask_, Mat(q_diag_.asDiagonal()),
                         Mat(r_diag_.asDiagonal()), u_max_, x_ref, u_ref);
        (void)check;
        x_ref_ = x_ref;
        u_ref_ = u_ref;
    }

    struct Result {
        PlannedTrajectory plan;
        SystemResponse response;
        int iterations = 0;
        bool converged = true;
        double primal_residual = 0.0;
        double dual_residual = 0.0;
    };

    /// Solves from the measured state. With allow_partial the best iterate is
    /// returned (flagged) instead of throwing on non-convergence; a partial
    /// plan is still box-exact and dynamics-consistent.
    Result solve(const Vec& x_now, bool allow_partial = false) {
        check_dim(x_ref_.size() > 0, "LocalizedMpcSolver: reference not set");
        check_dim(x_now.size() == n_, "LocalizedMpcSolver: state size mismatch");
        const Vec dx = x_now - x_ref_;
        SolveContext ctx = make_context(dx);

        auto prox = [&](const Vec& v) {
            return Vec(row_prox(v.cwiseProduct(ctx.inv_sqrt_w), ctx)
                           .cwiseProduct(ctx.sqrt_w));
        };
        auto proj = [&](const Vec& v) {
            return Vec(column_project(v.cwiseProduct(ctx.inv_sqrt_w), ctx)
                           .cwiseProduct(ctx.sqrt_w));
        };
        // Tolerances are per-coordinate RMS in the preconditioned metric.
        AdmmConfig scaled = config_;
        const double root_dim = std::sqrt(static_cast<double>(dim_));
        scaled.eps_primal *= root_dim;
        scaled.eps_dual *= root_dim;

        if (!warm_start_) warm_ = AdmmState{};
        // Warm state lives in unscaled coordinates; the metric changes with dx.
        AdmmState scaled_warm;
        if (warm_.consensus.size() == dim_) {
            scaled_warm.consensus = warm_.consensus.cwiseProduct(ctx.sqrt_w);
            scaled_warm.dual = warm_.dual.cwiseProduct(ctx.sqrt_w);
        }
        Result out;
        Vec row_copy;
        try {
            AdmmResult res = admm_two_block(prox, proj, dim_, scaled, &scaled_warm);
            out.iterations = res.iterations;
            out.primal_residual = res.primal_residual;
            out.dual_residual = res.dual_residual;
            row_copy = res.primal_copy.cwiseProduct(ctx.inv_sqrt_w);
        } catch (const SolverError& e) {
            if (!allow_partial) throw;
            out.converged = false;
            out.iterations = e.iterations;
            out.primal_residual = e.primal_residual;
            out.dual_residual = e.dual_residual;
            row_copy = row_prox((scaled_warm.consensus - scaled_warm.dual)
                                    .cwiseProduct(ctx.inv_sqrt_w),
                                ctx);
        } catch (const InfeasibleError&) {
            // Deep saturation can empty the intersection of the box rows with
            // the localized achievability set; the closest-pair iterate still
            // gives box-exact inputs and a consistent roll-out.
            if (!allow_partial) throw;
            out.converged = false;
            out.iterations = config_.max_iters;
            row_copy = row_prox((scaled_warm.consensus - scaled_warm.dual)
                                    .cwiseProduct(ctx.inv_sqrt_w),
                                ctx);
        }
        warm_.consensus = scaled_warm.consensus.cwiseProduct(ctx.inv_sqrt_w);
        warm_.dual = scaled_warm.dual.cwiseProduct(ctx.inv_sqrt_w);
        out.response = unflatten(warm_.consensus);
        last_iterations_ = out.iterations;

        // Inputs from the prox copy (box-exact rows), states by rolling the
        // dynamics forward; the consensus copy is the achievable response.
        std::vector<Vec> inputs(static_cast<size_t>(horizon_));
        for (int k = 0; k < horizon_; ++k) {
            Vec u = u_ref_;
            for (int i = 0; i < p_; ++i)
                u[i] += row_copy.segment(offset_u(k) + i * n_, n_).dot(dx);
            inputs[static_cast<size_t>(k)] = u;
        }
        out.plan = detail::roll_out(plant_, x_now, inputs);
        return out;
    }

    int last_iterations() const { return last_iterations_; }
    const Mat& terminal_weight() const { return terminal_weight_; }
    void reset_warm_start() { warm_ = AdmmState{}; }

private:
    struct SolveContext {
        Vec dx;
        std::vector<Vec> dx_state;   // per state row: dx masked to the row support
        std::vector<Vec> dx_input;   // per input row
        Vec eta_state, eta_input;    // squared norms of the masked vectors
        std::vector<Vec> rho_state;  // per stage: consensus penalty per state row
        std::vector<Vec> rho_input;  // per stage: consensus penalty per input row
        std::vector<int> terminal_active;
        Eigen::LDLT<Mat> terminal_solver;
        std::unique_ptr<detail::ColumnSolverBank> bank;  // weighted projections
        Vec sqrt_w, inv_sqrt_w;  // flat-coordinate scaling of the metric
    };

    static void require_diagonal(const Mat& m, const char* name) {
        Mat off = m;
        off.diagonal().setZero();
        if (off.cwiseAbs().maxCoeff() != 0.0)
            throw DimensionError(std::string("LocalizedMpcSolver: ") + name +
                                 " must be diagonal for per-subsystem separability");
    }

    int offset_x(int k) const { return k * n_ * n_; }
    int offset_u(int k) const { return horizon_ * n_ * n_ + k * p_ * n_; }

    SolveContext make_context(const Vec& dx) const {
        SolveContext ctx;
        ctx.dx = dx;
        ctx.dx_state.resize(static_cast<size_t>(n_));
        ctx.dx_input.resize(static_cast<size_t>(p_));
        ctx.eta_state = Vec::Zero(n_);
        ctx.eta_input = Vec::Zero(p_);
        for (int i = 0; i < n_; ++i) {
            Vec masked = Vec::Zero(n_);
            for (int j = 0; j < n_; ++j)
                if (mask_.state_support(i, j)) masked[j] = dx[j];
            ctx.eta_state[i] = masked.squaredNorm();
            ctx.dx_state[static_cast<size_t>(i)] = std::move(masked);
        }
        for (int i = 0; i < p_; ++i) {
            Vec masked = Vec::Zero(n_);
            for (int j = 0; j < n_; ++j)
                if (mask_.input_support(i, j)) masked[j] = dx[j];
            ctx.eta_input[i] = masked.squaredNorm();
            ctx.dx_input[static_cast<size_t>(i)] = std::move(masked);
        }

        // Per-row curvature of the tracking cost; each row's penalty matches
        // it so every row progresses at a commensurate rate.
        ctx.rho_state.assign(static_cast<size_t>(horizon_), Vec::Zero(n_));
        ctx.rho_input.assign(static_cast<size_t>(horizon_), Vec::Zero(p_));
        double curv_sum = 0.0;
        int curv_count = 0;
        auto note = [&](double c) {
            if (c > 0.0) {
                curv_sum += c;
                ++curv_count;
            }
            return c;
        };
        for (int k = 0; k < horizon_; ++k) {
            for (int i = 0; i < n_; ++i) {
                double w = (k == 0) ? 0.0 : q_diag_[i];
                if (k == horizon_ - 1 && horizon_ >= 2)
                    w = q_diag_[i] + terminal_weight_(i, i);
                ctx.rho_state[static_cast<size_t>(k)][i] = note(2.0 * w * ctx.eta_state[i]);
            }
            for (int i = 0; i < p_; ++i)
                ctx.rho_input[static_cast<size_t>(k)][i] =
                    note(2.0 * r_diag_[i] * ctx.eta_input[i]);
        }
        const double floor =
            curv_count > 0 ? std::max(1e-3 * curv_sum / curv_count, 1e-12) : 1.0;
        for (int k = 0; k < horizon_; ++k) {
            for (int i = 0; i < n_; ++i) {
                double& r = ctx.rho_state[static_cast<size_t>(k)][i];
                r = config_.rho * std::max(r, floor);
            }
            for (int i = 0; i < p_; ++i) {
                double& r = ctx.rho_input[static_cast<size_t>(k)][i];
                r = config_.rho * std::max(r, floor);
            }
        }

        // Terminal stage: rows that can move their predicted component couple
        // through the dense terminal weight; factor the reduced system once.
        if (horizon_ >= 2) {
            for (int i = 0; i < n_; ++i)
                if (ctx.eta_state[i] > 1e-300) ctx.terminal_active.push_back(i);
            const int na = static_cast<int>(ctx.terminal_active.size());
            if (na > 0) {
                Mat w_t(na, na);
                for (int a = 0; a < na; ++a)
                    for (int b = 0; b < na; ++b) {
                        const int ia = ctx.terminal_active[static_cast<size_t>(a)];
                        const int ib = ctx.terminal_active[static_cast<size_t>(b)];
                        w_t(a, b) = terminal_weight_(ia, ib) + (a == b ? q_diag_[ia] : 0.0);
                    }
                Mat reduced = 2.0 * w_t;
                for (int a = 0; a < na; ++a) {
                    const int i = ctx.terminal_active[static_cast<size_t>(a)];
                    reduced(a, a) += ctx.rho_state[static_cast<size_t>(horizon_ - 1)][i] /
                                     ctx.eta_state[i];
                }
                ctx.terminal_solver.compute(reduced);
            }
        }

        ctx.bank = std::make_unique<detail::ColumnSolverBank>(
            plant_.state_matrix(), plant_.input_matrix(), mask_, ctx.rho_state, ctx.rho_input,
            horizon_, /*terminal_deadbeat=*/false, threads_);

        // The consensus iteration runs in coordinates scaled by the square
        // root of the per-row penalties, so the driver's plain residuals are
        // the weighted-metric ones and the stopping test is honest.
        ctx.sqrt_w = Vec(dim_);
        for (int k = 0; k < horizon_; ++k) {
            for (int i = 0; i < n_; ++i)
                ctx.sqrt_w.segment(offset_x(k) + i * n_, n_)
                    .setConstant(std::sqrt(ctx.rho_state[static_cast<size_t>(k)][i] /
                                           config_.rho));
            for (int i = 0; i < p_; ++i)
                ctx.sqrt_w.segment(offset_u(k) + i * n_, n_)
                    .setConstant(std::sqrt(ctx.rho_input[static_cast<size_t>(k)][i] /
                                           config_.rho));
        }
        ctx.inv_sqrt_w = ctx.sqrt_w.cwiseInverse();
        return ctx;
    }

    /// prox of the tracking cost + input boxes, row by row, in closed form,
    /// in the per-row weighted consensus metric.
    Vec row_prox(const Vec& v, const SolveContext& ctx) const {
        Vec out = v;
        // State rows: block 0 is pinned by the projection copy (cost constant),
        // middle blocks carry the diagonal stage weight, the last block joins
        // the dense terminal weight below.
        for (int k = 1; k < horizon_ - 1; ++k) {
            for (int i = 0; i < n_; ++i) {
                const double q = q_diag_[i];
                const double eta = ctx.eta_state[i];
                if (q == 0.0 || eta <= 1e-300) continue;
                const double rho = ctx.rho_state[static_cast<size_t>(k)][i];
                auto row = out.segment(offset_x(k) + i * n_, n_);
                const double dot = row.dot(ctx.dx_state[static_cast<size_t>(i)]);
                row -= (2.0 * q * dot / (rho + 2.0 * q * eta)) *
                       ctx.dx_state[static_cast<size_t>(i)];
            }
        }
        if (horizon_ >= 2 && !ctx.terminal_active.empty()) {
            const int k = horizon_ - 1;
            const int na = static_cast<int>(ctx.terminal_active.size());
            Vec b(na);
            for (int a = 0; a < na; ++a) {
                const int i = ctx.terminal_active[static_cast<size_t>(a)];
                b[a] = out.segment(offset_x(k) + i * n_, n_)
                           .dot(ctx.dx_state[static_cast<size_t>(i)]);
            }
            Vec rhs(na);
            for (int a = 0; a < na; ++a) {
                const int i = ctx.terminal_active[static_cast<size_t>(a)];
                rhs[a] = ctx.rho_state[static_cast<size_t>(k)][i] * b[a] / ctx.eta_state[i];
            }
            Vec y = ctx.terminal_solver.solve(rhs);
            for (int a = 0; a < na; ++a) {
                const int i = ctx.terminal_active[static_cast<size_t>(a)];
                out.segment(offset_x(k) + i * n_, n_) +=
                    ((y[a] - b[a]) / ctx.eta_state[i]) * ctx.dx_state[static_cast<size_t>(i)];
            }
        }
        // Input rows: scalar tracking weight plus the hard box on the
        // predicted input, reduced to a clipped one-dimensional quadratic.
        for (int k = 0; k < horizon_; ++k) {
            for (int i = 0; i < p_; ++i) {
                const double eta = ctx.eta_input[i];
                if (eta <= 1e-300) continue;
                const double rho = ctx.rho_input[static_cast<size_t>(k)][i];
                auto row = out.segment(offset_u(k) + i * n_, n_);
                const double dot = row.dot(ctx.dx_input[static_cast<size_t>(i)]);
                double s = rho * dot / (2.0 * r_diag_[i] * eta + rho);
                if (u_max_ != kInf) {
                    const double lo = -u_max_ - u_ref_[i];
                    const double hi = u_max_ - u_ref_[i];
                    s = std::min(std::max(s, lo), hi);
                }
                row += ((s - dot) / eta) * ctx.dx_input[static_cast<size_t>(i)];
            }
        }
        return out;
    }

    /// Projection onto {leading identity block, response recursion, locality
    /// supports} in the weighted metric, one patch-restricted solve per column.
    Vec column_project(const Vec& v, const SolveContext& ctx) const {
        Vec out = Vec::Zero(dim_);
        parallel_for(
            n_,
            [&](int c) {
                const ColumnSolver& solver = ctx.bank->solver_for_column(c);
                const auto& sidx = solver.patch().state_idx;
                const auto& uidx = solver.patch().input_idx;
                const int s = static_cast<int>(sidx.size());
                const int m = static_cast<int>(uidx.size());
                Mat a(s, horizon_), b(m, horizon_);
                for (int k = 0; k < horizon_; ++k) {
                    for (int j = 0; j < s; ++j)
                        a(j, k) = v[offset_x(k) + sidx[static_cast<size_t>(j)] * n_ + c];
                    for (int j = 0; j < m; ++j)
                        b(j, k) = v[offset_u(k) + uidx[static_cast<size_t>(j)] * n_ + c];
                }
                ColumnSolver::Solution sol = solver.solve(ctx.bank->unit_in_patch(c), a, b);
                for (int k = 0; k < horizon_; ++k) {
                    for (int j = 0; j < s; ++j)
                        out[offset_x(k) + sidx[static_cast<size_t>(j)] * n_ + c] =
                            sol.states(j, k);
                    for (int j = 0; j < m; ++j)
                        out[offset_u(k) + uidx[static_cast<size_t>(j)] * n_ + c] =
                            sol.inputs(j, k);
                }
            },
            threads_);
        return out;
    }

    SystemResponse unflatten(const Vec& flat) const {
        SystemResponse response = SystemResponse::zero(horizon_, n_, p_);
        for (int k = 0; k < horizon_; ++k) {
            for (int i = 0; i < n_; ++i)
                response.phi_x[static_cast<size_t>(k)].row(i) =
                    flat.segment(offset_x(k) + i * n_, n_).transpose();
            for (int i = 0; i < p_; ++i)
                response.phi_u[static_cast<size_t>(k)].row(i) =
                    flat.segment(offset_u(k) + i * n_, n_).transpose();
        }
        return response;
    }

    PlantModel plant_;
    int horizon_;
    LocalityMask mask_;
    double u_max_;
    AdmmConfig config_;
    int threads_;
    bool warm_start_;
    Vec q_diag_, r_diag_;
    Mat terminal_weight_;
    int n_ = 0, p_ = 0, dim_ = 0;
    AdmmState warm_;
    Vec x_ref_, u_ref_;
    int last_iterations_ = 0;
};

/// One-off wrappers over the persistent solvers.
inline PlannedTrajectory mpc_solve_centralized(const MpcProblem& problem, const Vec& x_now,
                                               AdmmConfig config = {}) {
    if (problem.state_bounds_active())
        throw std::logic_error("mpc_solve_centralized: state boxes are carried but not solved");
    CentralizedMpcSolver solver(problem.plant, problem.horizon, problem.q_weight,
                                problem.r_weight, problem.u_max, config);
    solver.set_reference(problem.x_ref, problem.u_ref);
    return solver.solve(x_now);
}

struct LocalizedMpcResult {
    PlannedTrajectory plan;
    SystemResponse response;
    int iterations = 0;
};

inline LocalizedMpcResult mpc_solve_localized(const MpcProblem& problem, const Vec& x_now,
                                              const AdmmConfig& config, int threads = 1) {
    if (problem.state_bounds_active())
        throw std::logic_error("mpc_solve_localized: state boxes are carried but not solved");
    LocalizedMpcSolver solver(problem.plant, problem.horizon, problem.mask, problem.q_weight,
                              problem.r_weight, problem.u_max, config, threads);
    solver.set_reference(problem.x_ref, problem.u_ref);
    auto res = solver.solve(x_now);
    return {std::move(res.plan), std::move(res.response), res.iterations};
}

}  // namespace slsgrid
