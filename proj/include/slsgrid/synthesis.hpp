#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "slsgrid/column_solver.hpp"
#include "slsgrid/common.hpp"
#include "slsgrid/plant.hpp"
#include "slsgrid/system_response.hpp"

namespace slsgrid {

namespace detail {

inline ColumnPatch patch_for_column(const LocalityMask& mask, int column) {
    ColumnPatch patch;
    for (int r = 0; r < mask.state_support.rows(); ++r)
        if (mask.state_support(r, column)) patch.state_idx.push_back(r);
    for (int r = 0; r < mask.input_support.rows(); ++r)
        if (mask.input_support(r, column)) patch.input_idx.push_back(r);
    return patch;
}

/// One solver per distinct patch; block masks share patches between the
/// columns of a node, the unconstrained mask shares one solver globally.
class ColumnSolverBank {
public:
    /// Weights may be constant matrices or per-stage diagonal vectors; both
    /// forward to the matching ColumnSolver constructor.
    template <typename StateWeight, typename InputWeight>
    ColumnSolverBank(const Mat& A, const Mat& B, const LocalityMask& mask,
                     const StateWeight& state_weight, const InputWeight& input_weight,
                     int horizon, bool terminal_deadbeat, int threads = 0) {
        const int n = static_cast<int>(A.rows());
        column_patch_.resize(static_cast<size_t>(n));
        std::map<std::pair<std::vector<int>, std::vector<int>>, int> seen;
        std::vector<ColumnPatch> unique_patches;
        for (int c = 0; c < n; ++c) {
            ColumnPatch patch = patch_for_column(mask, c);
            if (std::find(patch.state_idx.begin(), patch.state_idx.end(), c) ==
                patch.state_idx.end())
                throw InfeasibleError(
                    "synthesis: mask excludes the diagonal entry of column " +
                        std::to_string(c),
                    c, c / 2);
            auto key = std::make_pair(patch.state_idx, patch.input_idx);
            auto it = seen.find(key);
            if (it == seen.end()) {
                seen.emplace(key, static_cast<int>(unique_patches.size()));
                column_patch_[static_cast<size_t>(c)] = static_cast<int>(unique_patches.size());
                unique_patches.push_back(std::move(patch));
            } else {
                column_patch_[static_cast<size_t>(c)] = it->second;
            }
        }
        solvers_.resize(unique_patches.size());
        parallel_for(
            static_cast<int>(unique_patches.size()),
            [&](int i) {
                solvers_[static_cast<size_t>(i)] = std::make_unique<ColumnSolver>(
                    A, B, unique_patches[static_cast<size_t>(i)], state_weight, input_weight,
                    horizon, terminal_deadbeat);
            },
            threads);
    }

    const ColumnSolver& solver_for_column(int c) const {
        return *solvers_[static_cast<size_t>(column_patch_[static_cast<size_t>(c)])];
    }

    /// Unit vector e_c restricted to column c's patch.
    Vec unit_in_patch(int c) const {
        const ColumnSolver& solver = solver_for_column(c);
        Vec xi = Vec::Zero(solver.patch_states());
        const auto& idx = solver.patch().state_idx;
        for (size_t j = 0; j < idx.size(); ++j)
            if (idx[j] == c) xi[static_cast<Eigen::Index>(j)] = 1.0;
        return xi;
    }

private:
    std::vector<int> column_patch_;
    std::vector<std::unique_ptr<ColumnSolver>> solvers_;
};

}  // namespace detail

/// Localized finite-horizon H2 synthesis over generic dynamics (A, B): each
/// disturbance-origin column is an independent patch-restricted subproblem,
/// solved in parallel. The result carries the FIR terminal closure and
/// respects the mask supports bitwise.
inline SystemResponse synthesize_h2(const Mat& A, const Mat& B, const LocalityMask& mask, int T,
                                    const Mat& q_weight, const Mat& r_weight, int threads = 0) {
    const int n = static_cast<int>(A.rows());
    const int p = static_cast<int>(B.cols());
    check_dim(mask.state_support.rows() == n && mask.state_support.cols() == n,
              "synthesize_h2: state mask shape mismatch");
    check_dim(mask.input_support.rows() == p && mask.input_support.cols() == n,
              "synthesize_h2: input mask shape mismatch");
    check_dim(q_weight.rows() == n && r_weight.rows() == p,
              "synthesize_h2: weight shape mismatch");

    detail::ColumnSolverBank bank(A, B, mask, q_weight, r_weight, T,
                                  /*terminal_deadbeat=*/true, threads);
    SystemResponse response = SystemResponse::zero(T, n, p);
    parallel_for(
        n,
        [&](int c) {
            const ColumnSolver& solver = bank.solver_for_column(c);
            ColumnSolver::Solution sol;
            try {
                sol = solver.solve(bank.unit_in_patch(c));
            } catch (const InfeasibleError& e) {
                throw InfeasibleError(std::string(e.what()) + " [column " + std::to_string(c) +
                                          ", node " + std::to_string(c / 2) + "]",
                                      c, c / 2);
            }
            const auto& sidx = solver.patch().state_idx;
            const auto& uidx = solver.patch().input_idx;
            for (int k = 0; k < T; ++k) {
                for (size_t j = 0; j < sidx.size(); ++j)
                    response.phi_x[static_cast<size_t>(k)](sidx[j], c) =
                        sol.states(static_cast<Eigen::Index>(j), k);
                for (size_t j = 0; j < uidx.size(); ++j)
                    response.phi_u[static_cast<size_t>(k)](uidx[j], c) =
                        sol.inputs(static_cast<Eigen::Index>(j), k);
            }
        },
        threads);
    return response;
}

inline SystemResponse synthesize_h2(const PlantModel& plant, int T, const LocalityMask& mask,
                                    const Mat& q_weight, const Mat& r_weight, int threads = 0) {
    return synthesize_h2(plant.state_matrix(), plant.input_matrix(), mask, T, q_weight,
                         r_weight, threads);
}

/// sum_k ||Q^(1/2) phi_x[k]||_F^2 + ||R^(1/2) phi_u[k]||_F^2.
inline double h2_cost(const SystemResponse& response, const Mat& q_weight, const Mat& r_weight) {
    double cost = 0.0;
    for (const Mat& block : response.phi_x)
        cost += (q_weight * block).cwiseProduct(block).sum();
    for (const Mat& block : response.phi_u)
        cost += (r_weight * block).cwiseProduct(block).sum();
    return cost;
}

}  // namespace slsgrid
