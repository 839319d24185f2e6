#pragma once

#include <Eigen/Cholesky>

#include <vector>

#include "slsgrid/common.hpp"
#include "slsgrid/plant.hpp"

namespace slsgrid {

/// Finite-horizon LQR data: gains[t] is K_t for u = -K_t x (t = 0..T-1),
/// value_matrices[t] is P_t (t = 0..T, P_T = the terminal weight).
struct LqrSolution {
    std::vector<Mat> gains;
    std::vector<Mat> value_matrices;

    const Mat& stationary_gain() const { return gains.front(); }
};

/// Backward Riccati recursion for cost
///   sum_{t=0}^{T-1} (x_t' Q x_t + u_t' R u_t) + x_T' P_T x_T,
/// with K_t = (R + B' P_{t+1} B)^{-1} B' P_{t+1} A and the default terminal
/// weight P_T = Q. R must be positive definite.
inline LqrSolution lqr_riccati(const Mat& A, const Mat& B, const Mat& q_weight,
                               const Mat& r_weight, int horizon,
                               const Mat* terminal_weight = nullptr) {
    const int n = static_cast<int>(A.rows());
    const int p = static_cast<int>(B.cols());
    check_dim(A.cols() == n && B.rows() == n, "lqr_riccati: dynamics shape mismatch");
    check_dim(q_weight.rows() == n && q_weight.cols() == n, "lqr_riccati: Q shape mismatch");
    check_dim(r_weight.rows() == p && r_weight.cols() == p, "lqr_riccati: R shape mismatch");
    check_dim(horizon >= 1, "lqr_riccati: horizon must be >= 1");

    LqrSolution out;
    out.gains.assign(static_cast<size_t>(horizon), Mat());
    out.value_matrices.assign(static_cast<size_t>(horizon) + 1, Mat());
    Mat P = terminal_weight != nullptr ? *terminal_weight : q_weight;
    out.value_matrices[static_cast<size_t>(horizon)] = P;
    for (int t = horizon - 1; t >= 0; --t) {
        Mat H = r_weight + B.transpose() * P * B;
        Eigen::LLT<Mat> llt(H);
        if (llt.info() != Eigen::Success)
            throw NumericalError("lqr_riccati: R + B'PB not positive definite");
        Mat K = llt.solve(B.transpose() * P * A);
        P = q_weight + A.transpose() * P * (A - B * K);
        P = 0.5 * (P + P.transpose());
        out.gains[static_cast<size_t>(t)] = std::move(K);
        out.value_matrices[static_cast<size_t>(t)] = P;
    }
    return out;
}

inline LqrSolution lqr_riccati(const PlantModel& plant, const Mat& q_weight, const Mat& r_weight,
                               int horizon, const Mat* terminal_weight = nullptr) {
    return lqr_riccati(plant.state_matrix(), plant.input_matrix(), q_weight, r_weight, horizon,
                       terminal_weight);
}

/// Stationary solution: value iteration until the Riccati fixed point moves by
/// less than `tol` relative, returning the converged (K, P).
struct StationaryLqr {
    Mat gain;
    Mat value;
    int iterations = 0;
};

inline StationaryLqr riccati_infinite(const Mat& A, const Mat& B, const Mat& q_weight,
                                      const Mat& r_weight, double tol = 1e-12,
                                      int max_iters = 100000) {
    Mat P = q_weight;
    Mat K;
    for (int it = 1; it <= max_iters; ++it) {
        Mat H = r_weight + B.transpose() * P * B;
        Eigen::LLT<Mat> llt(H);
        if (llt.info() != Eigen::Success)
            throw NumericalError("riccati_infinite: R + B'PB not positive definite");
        K = llt.solve(B.transpose() * P * A);
        Mat P_next = q_weight + A.transpose() * P * (A - B * K);
        P_next = 0.5 * (P_next + P_next.transpose());
        const double gap = (P_next - P).cwiseAbs().maxCoeff();
        const double scale = 1.0 + P_next.cwiseAbs().maxCoeff();
        P = std::move(P_next);
        if (gap <= tol * scale) return {std::move(K), std::move(P), it};
    }
    throw NumericalError("riccati_infinite: no fixed point after iteration cap");
}

inline StationaryLqr riccati_infinite(const PlantModel& plant, const Mat& q_weight,
                                      const Mat& r_weight, double tol = 1e-12,
                                      int max_iters = 100000) {
    return riccati_infinite(plant.state_matrix(), plant.input_matrix(), q_weight, r_weight, tol,
                            max_iters);
}

/// Elementwise clamp to [-u_max, u_max].
inline Vec saturate(const Vec& u, double u_max) {
    check_dim(u_max > 0.0, "saturate: u_max must be positive");
    return u.cwiseMax(-u_max).cwiseMin(u_max);
}

/// Setpoint-tracking form of the linear baselines: u = u_ref - K (x - x_ref).
inline Vec linear_tracking_step(const Mat& gain, const Vec& x, const Vec& x_ref,
                                const Vec& u_ref) {
    check_dim(gain.cols() == x.size() && x.size() == x_ref.size(),
              "linear_tracking_step: state size mismatch");
    check_dim(gain.rows() == u_ref.size(), "linear_tracking_step: input size mismatch");
    return u_ref - gain * (x - x_ref);
}

}  // namespace slsgrid
