#pragma once

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "slsgrid/common.hpp"

namespace slsgrid {

/// State / input coordinates one disturbance-origin column may touch.
struct ColumnPatch {
    std::vector<int> state_idx;
    std::vector<int> input_idx;

    bool operator==(const ColumnPatch& other) const {
        return state_idx == other.state_idx && input_idx == other.input_idx;
    }
};

/// Equality-constrained quadratic solver for one response column restricted to
/// a locality patch:
///
///   min  sum_{k=1..T} (x_k - a_k)' Wx (x_k - a_k) + (u_k - b_k)' Wu (u_k - b_k)
///   s.t. x_1 = xi,
///        x_{k+1} = At x_k + Bt u_k                    (in-patch rows),
///        C x_k + D u_k = 0 at every stage             (rows just outside the
///          patch that the dynamics would otherwise write),
///        At x_T + Bt u_T = 0 when terminal_deadbeat   (FIR closure).
///
/// Solved by a backward stage recursion. Next-stage state requirements that no
/// input can meet are pulled back into constraints on the current state, so
/// infeasibility surfaces as a residual on the initial vector. Every stage
/// keeps its KKT factorization: synthesis (zero targets) and repeated
/// projections onto the same constraint set (fresh targets each call) reuse
/// the factors.
class ColumnSolver {
public:
    /// state_weight is the global n x n matrix, input_weight the global p x p
    /// one; both are restricted to the patch internally (exact, since column
    /// entries outside the patch are identically zero).
    ColumnSolver(const Mat& A, const Mat& B, ColumnPatch patch, const Mat& state_weight,
                 const Mat& input_weight, int horizon, bool terminal_deadbeat,
                 double rank_tol = 1e-10)
        : patch_(std::move(patch)), horizon_(horizon), rank_tol_(rank_tol) {
        check_dim(horizon_ >= 1, "ColumnSolver: horizon must be >= 1");
        s_ = static_cast<int>(patch_.state_idx.size());
        m_ = static_cast<int>(patch_.input_idx.size());
        check_dim(s_ >= 1, "ColumnSolver: empty state patch");
        At_ = submatrix(A, patch_.state_idx, patch_.state_idx);
        Bt_ = submatrix(B, patch_.state_idx, patch_.input_idx);
        Wx_.assign(static_cast<size_t>(horizon_),
                   submatrix(state_weight, patch_.state_idx, patch_.state_idx));
        Wu_.assign(static_cast<size_t>(horizon_),
                   submatrix(input_weight, patch_.input_idx, patch_.input_idx));
        build_leak_rows(A, B);
        factor(terminal_deadbeat);
    }

    /// Stage-varying dense weights (one global n x n and p x p matrix per
    /// stage), restricted to the patch internally.
    ColumnSolver(const Mat& A, const Mat& B, ColumnPatch patch,
                 const std::vector<Mat>& state_weights, const std::vector<Mat>& input_weights,
                 int horizon, bool terminal_deadbeat, double rank_tol = 1e-10)
        : patch_(std::move(patch)), horizon_(horizon), rank_tol_(rank_tol) {
        check_dim(horizon_ >= 1, "ColumnSolver: horizon must be >= 1");
        check_dim(static_cast<int>(state_weights.size()) == horizon_ &&
                      static_cast<int>(input_weights.size()) == horizon_,
                  "ColumnSolver: one weight matrix per stage required");
        s_ = static_cast<int>(patch_.state_idx.size());
        m_ = static_cast<int>(patch_.input_idx.size());
        check_dim(s_ >= 1, "ColumnSolver: empty state patch");
        At_ = submatrix(A, patch_.state_idx, patch_.state_idx);
        Bt_ = submatrix(B, patch_.state_idx, patch_.input_idx);
        Wx_.reserve(static_cast<size_t>(horizon_));
        Wu_.reserve(static_cast<size_t>(horizon_));
        for (int k = 0; k < horizon_; ++k) {
            Wx_.push_back(submatrix(state_weights[static_cast<size_t>(k)], patch_.state_idx,
                                    patch_.state_idx));
            Wu_.push_back(submatrix(input_weights[static_cast<size_t>(k)], patch_.input_idx,
                                    patch_.input_idx));
        }
        build_leak_rows(A, B);
        factor(terminal_deadbeat);
    }

    /// Stage-varying diagonal weights (one global n-vector and p-vector per
    /// stage), used by the weighted projections of the consensus MPC solvers.
    ColumnSolver(const Mat& A, const Mat& B, ColumnPatch patch,
                 const std::vector<Vec>& state_weight_diag,
                 const std::vector<Vec>& input_weight_diag, int horizon,
                 bool terminal_deadbeat, double rank_tol = 1e-10)
        : patch_(std::move(patch)), horizon_(horizon), rank_tol_(rank_tol) {
        check_dim(horizon_ >= 1, "ColumnSolver: horizon must be >= 1");
        check_dim(static_cast<int>(state_weight_diag.size()) == horizon_ &&
                      static_cast<int>(input_weight_diag.size()) == horizon_,
                  "ColumnSolver: one weight vector per stage required");
        s_ = static_cast<int>(patch_.state_idx.size());
        m_ = static_cast<int>(patch_.input_idx.size());
        check_dim(s_ >= 1, "ColumnSolver: empty state patch");
        At_ = submatrix(A, patch_.state_idx, patch_.state_idx);
        Bt_ = submatrix(B, patch_.state_idx, patch_.input_idx);
        Wx_.reserve(static_cast<size_t>(horizon_));
        Wu_.reserve(static_cast<size_t>(horizon_));
        for (int k = 0; k < horizon_; ++k) {
            Mat wx = Mat::Zero(s_, s_);
            for (int j = 0; j < s_; ++j)
                wx(j, j) = state_weight_diag[static_cast<size_t>(k)][patch_.state_idx[
                    static_cast<size_t>(j)]];
            Mat wu = Mat::Zero(m_, m_);
            for (int j = 0; j < m_; ++j)
                wu(j, j) = input_weight_diag[static_cast<size_t>(k)][patch_.input_idx[
                    static_cast<size_t>(j)]];
            Wx_.push_back(std::move(wx));
            Wu_.push_back(std::move(wu));
        }
        build_leak_rows(A, B);
        factor(terminal_deadbeat);
    }

    int horizon() const { return horizon_; }
    int patch_states() const { return s_; }
    int patch_inputs() const { return m_; }
    const ColumnPatch& patch() const { return patch_; }

    /// Residual of the initial-state feasibility requirement; 0 when every
    /// constraint can be met from xi.
    double feasibility_residual(const Vec& xi) const {
        if (entry_constraints_.rows() == 0) return 0.0;
        return (entry_constraints_ * xi).cwiseAbs().maxCoeff();
    }

    bool feasible(const Vec& xi, double tol = 1e-9) const {
        return feasibility_residual(xi) <= tol * std::max(1.0, xi.cwiseAbs().maxCoeff());
    }

    struct Solution {
        Mat states;   // s x T, column k-1 = x_k
        Mat inputs;   // m x T
    };

    /// Zero-target solve (H2 synthesis columns).
    Solution solve(const Vec& xi) const { return solve_impl(xi, nullptr, nullptr); }

    /// Affine-target solve (projection steps): state_targets is s x T,
    /// input_targets m x T.
    Solution solve(const Vec& xi, const Mat& state_targets, const Mat& input_targets) const {
        check_dim(state_targets.rows() == s_ && state_targets.cols() == horizon_,
                  "ColumnSolver: state target shape mismatch");
        check_dim(input_targets.rows() == m_ && input_targets.cols() == horizon_,
                  "ColumnSolver: input target shape mismatch");
        return solve_impl(xi, &state_targets, &input_targets);
    }

private:
    struct Stage {
        Eigen::CompleteOrthogonalDecomposition<Mat> kkt;
        Mat feedback;   // u = feedback * x + affine part
        Mat closed;     // At + Bt * feedback
        Mat value_next; // P_{k+1}
        int constraint_rows = 0;
    };

    static Mat submatrix(const Mat& M, const std::vector<int>& rows,
                         const std::vector<int>& cols) {
        Mat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
        for (size_t r = 0; r < rows.size(); ++r)
            for (size_t c = 0; c < cols.size(); ++c)
                out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    M(rows[r], cols[c]);
        return out;
    }

    /// Rows outside the patch that read patch entries through A or B. Each
    /// such row must stay identically zero, giving C x + D u = 0 per stage.
    void build_leak_rows(const Mat& A, const Mat& B) {
        const int n = static_cast<int>(A.rows());
        std::vector<bool> in_patch(static_cast<size_t>(n), false);
        for (int idx : patch_.state_idx) in_patch[static_cast<size_t>(idx)] = true;
        std::vector<Vec> c_rows, d_rows;
        for (int r = 0; r < n; ++r) {
            if (in_patch[static_cast<size_t>(r)]) continue;
            Vec crow(s_), drow(m_);
            bool nonzero = false;
            for (int j = 0; j < s_; ++j) {
                crow[j] = A(r, patch_.state_idx[static_cast<size_t>(j)]);
                nonzero = nonzero || crow[j] != 0.0;
            }
            for (int j = 0; j < m_; ++j) {
                drow[j] = B(r, patch_.input_idx[static_cast<size_t>(j)]);
                nonzero = nonzero || drow[j] != 0.0;
            }
            if (!nonzero) continue;
            const double norm = std::sqrt(crow.squaredNorm() + drow.squaredNorm());
            c_rows.push_back(crow / norm);
            d_rows.push_back(drow / norm);
        }
        leak_state_ = Mat::Zero(static_cast<Eigen::Index>(c_rows.size()), s_);
        leak_input_ = Mat::Zero(static_cast<Eigen::Index>(c_rows.size()), m_);
        for (size_t r = 0; r < c_rows.size(); ++r) {
            leak_state_.row(static_cast<Eigen::Index>(r)) = c_rows[r].transpose();
            leak_input_.row(static_cast<Eigen::Index>(r)) = d_rows[r].transpose();
        }
    }

    void factor(bool terminal_deadbeat) {
        stages_.resize(static_cast<size_t>(horizon_));
        Mat M = terminal_deadbeat ? Mat(Mat::Identity(s_, s_)) : Mat(0, s_);
        Mat P = Mat::Zero(s_, s_);
        for (int k = horizon_; k >= 1; --k) {
            Stage& stage = stages_[static_cast<size_t>(k - 1)];
            const Mat& wx = Wx_[static_cast<size_t>(k - 1)];
            const Mat& wu = Wu_[static_cast<size_t>(k - 1)];
            const int c = static_cast<int>(M.rows() + leak_state_.rows());
            Mat F(c, m_), G(c, s_);
            F.topRows(M.rows()) = M * Bt_;
            F.bottomRows(leak_input_.rows()) = leak_input_;
            G.topRows(M.rows()) = M * At_;
            G.bottomRows(leak_state_.rows()) = leak_state_;

            Mat kkt = Mat::Zero(m_ + c, m_ + c);
            kkt.topLeftCorner(m_, m_) = wu + Bt_.transpose() * P * Bt_;
            kkt.topRightCorner(m_, c) = F.transpose();
            kkt.bottomLeftCorner(c, m_) = F;
            stage.kkt.compute(kkt);
            stage.constraint_rows = c;

            Mat rhs(m_ + c, s_);
            rhs.topRows(m_) = -(Bt_.transpose() * (P * At_));
            rhs.bottomRows(c) = -G;
            stage.feedback = stage.kkt.solve(rhs).topRows(m_);
            stage.closed = At_ + Bt_ * stage.feedback;
            stage.value_next = P;

            P = wx + stage.feedback.transpose() * wu * stage.feedback +
                stage.closed.transpose() * P * stage.closed;
            P = 0.5 * (P + P.transpose());
            M = pull_back(F, G);
        }
        entry_constraints_ = M;
    }

    /// Constraints on x implied by requiring -Gx within range(F): the
    /// left-null directions of F applied to G, orthonormalized.
    Mat pull_back(const Mat& F, const Mat& G) const {
        if (F.rows() == 0) return Mat(0, s_);
        Mat N;
        if (F.cols() == 0) {
            N = G;
        } else {
            Eigen::JacobiSVD<Mat> svd(F, Eigen::ComputeFullU);
            const double sigma_max = svd.singularValues().size() > 0
                                         ? svd.singularValues()[0]
                                         : 0.0;
            int rank = 0;
            for (int i = 0; i < svd.singularValues().size(); ++i)
                if (svd.singularValues()[i] > rank_tol_ * std::max(sigma_max, 1.0)) ++rank;
            if (rank == F.rows()) return Mat(0, s_);
            Mat Z = svd.matrixU().rightCols(F.rows() - rank);
            N = Z.transpose() * G;
        }
        // Drop void rows, normalize the rest, reduce to an orthonormal row basis.
        std::vector<Eigen::Index> keep;
        for (Eigen::Index r = 0; r < N.rows(); ++r)
            if (N.row(r).norm() > 1e-12) keep.push_back(r);
        if (keep.empty()) return Mat(0, s_);
        Mat Nk(static_cast<Eigen::Index>(keep.size()), s_);
        for (size_t r = 0; r < keep.size(); ++r)
            Nk.row(static_cast<Eigen::Index>(r)) = N.row(keep[r]) / N.row(keep[r]).norm();
        Eigen::JacobiSVD<Mat> svd(Nk, Eigen::ComputeFullV);
        int rank = 0;
        for (int i = 0; i < svd.singularValues().size(); ++i)
            if (svd.singularValues()[i] > rank_tol_ * std::max(svd.singularValues()[0], 1.0))
                ++rank;
        return Mat(svd.matrixV().leftCols(rank).transpose());
    }

    Solution solve_impl(const Vec& xi, const Mat* state_targets, const Mat* input_targets) const {
        check_dim(xi.size() == s_, "ColumnSolver: initial vector size mismatch");
        if (!feasible(xi))
            throw InfeasibleError(
                "ColumnSolver: column infeasible within its locality patch (residual " +
                format_double(feasibility_residual(xi)) +
                "); a larger d or longer horizon is required");

        Mat affine = Mat::Zero(m_, horizon_);
        if (state_targets != nullptr) {
            Vec q = Vec::Zero(s_);
            for (int k = horizon_; k >= 1; --k) {
                const Stage& stage = stages_[static_cast<size_t>(k - 1)];
                const Mat& wx = Wx_[static_cast<size_t>(k - 1)];
                const Mat& wu = Wu_[static_cast<size_t>(k - 1)];
                Vec rhs = Vec::Zero(m_ + stage.constraint_rows);
                rhs.head(m_) = wu * input_targets->col(k - 1) - Bt_.transpose() * q;
                Vec kappa = stage.kkt.solve(rhs).head(m_);
                affine.col(k - 1) = kappa;
                Vec beta = Bt_ * kappa;
                q = -(wx * state_targets->col(k - 1)) +
                    stage.feedback.transpose() * wu * (kappa - input_targets->col(k - 1)) +
                    stage.closed.transpose() * (stage.value_next * beta + q);
            }
        }

        Solution out;
        out.states = Mat::Zero(s_, horizon_);
        out.inputs = Mat::Zero(m_, horizon_);
        Vec x = xi;
        for (int k = 1; k <= horizon_; ++k) {
            const Stage& stage = stages_[static_cast<size_t>(k - 1)];
            Vec u = stage.feedback * x + affine.col(k - 1);
            out.states.col(k - 1) = x;
            out.inputs.col(k - 1) = u;
            if (k < horizon_) x = At_ * x + Bt_ * u;
        }
        return out;
    }

    ColumnPatch patch_;
    int horizon_;
    double rank_tol_;
    int s_ = 0, m_ = 0;
    Mat At_, Bt_;
    std::vector<Mat> Wx_, Wu_;        // per-stage weights, restricted to the patch
    Mat leak_state_, leak_input_;     // C, D (row-normalized jointly)
    Mat entry_constraints_;           // M_1: requirements on the initial vector
    std::vector<Stage> stages_;
};

}  // namespace slsgrid
