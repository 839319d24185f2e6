#pragma once

#include <vector>

#include "slsgrid/common.hpp"
#include "slsgrid/optimization.hpp"
#include "slsgrid/plant.hpp"
#include "slsgrid/rng.hpp"
#include "slsgrid/topology.hpp"

namespace slsgrid {

/// Per-node net power injection (positive = surplus at a generation site,
/// negative = load). Profiles need not balance; the dispatch does.
struct LoadProfile {
    Vec net_injection;
};

/// Phase setpoint with zero target frequencies and the steady input that makes
/// it an equilibrium of the plant.
struct Setpoint {
    Vec x_star;   // full state, frequencies identically zero
    Vec u_star;   // per-node steady input
};

/// i.i.d. uniform injections on [-magnitude, magnitude], recentered to zero sum.
inline LoadProfile sample_load_profile(const Topology& topology, Rng& rng, double magnitude) {
    check_dim(magnitude >= 0.0, "sample_load_profile: magnitude must be >= 0");
    Vec inj(topology.node_count);
    for (int i = 0; i < topology.node_count; ++i) inj[i] = rng.uniform(-magnitude, magnitude);
    inj.array() -= inj.mean();
    return {inj};
}

/// Susceptance-weighted graph Laplacian.
inline Mat susceptance_laplacian(const Topology& topology,
                                 const std::vector<double>& edge_susceptance) {
    check_dim(edge_susceptance.size() == topology.edges.size(),
              "susceptance_laplacian: edge count mismatch");
    const int N = topology.node_count;
    Mat L = Mat::Zero(N, N);
    for (size_t e = 0; e < topology.edges.size(); ++e) {
        auto [i, j] = topology.edges[e];
        const double b = edge_susceptance[e];
        L(i, i) += b;
        L(j, j) += b;
        L(i, j) -= b;
        L(j, i) -= b;
    }
    return L;
}

/// DC power-flow phase angles balancing the given loads with minimum quadratic
/// dispatch: min ||g||^2 s.t. L theta = load + g, theta_0 = 0 (gauge).
inline Vec dc_opf_phases(const Topology& topology, const std::vector<double>& edge_susceptance,
                         const LoadProfile& loads) {
    if (!topology.is_connected())
        throw InfeasibleError("dc_opf_phases: disconnected topology has a singular flow system");
    const int N = topology.node_count;
    check_dim(loads.net_injection.size() == N, "dc_opf_phases: load size mismatch");
    const Mat L = susceptance_laplacian(topology, edge_susceptance);

    // Variables z = (theta, g); constraints L theta - g = load and the gauge row.
    Mat W = Mat::Zero(2 * N, 2 * N);
    W.bottomRightCorner(N, N) = 2.0 * Mat::Identity(N, N);
    Mat E = Mat::Zero(N + 1, 2 * N);
    E.topLeftCorner(N, N) = L;
    E.block(0, N, N, N) = -Mat::Identity(N, N);
    E(N, 0) = 1.0;
    Vec h = Vec::Zero(N + 1);
    h.head(N) = loads.net_injection;
    Vec z = solve_eq_ls(W, E, h);
    return z.head(N);
}

/// Steady input making (theta*, omega = 0) an equilibrium, read off the
/// frequency rows of A x* + B u* = x* (the input rows of B are unit there).
inline Vec steady_state_input(const PlantModel& plant, const Vec& phases) {
    check_dim(phases.size() == plant.node_count(), "steady_state_input: phase size mismatch");
    const int N = plant.node_count();
    Vec x_star = Vec::Zero(2 * N);
    for (int i = 0; i < N; ++i) x_star[2 * i] = phases[i];
    Vec gap = x_star - plant.state_matrix() * x_star;
    Vec u_star(N);
    for (int i = 0; i < N; ++i) {
        if (std::abs(gap[2 * i]) > 1e-9)
            throw NumericalError("steady_state_input: phase rows inconsistent at equilibrium");
        u_star[i] = gap[2 * i + 1];
    }
    return u_star;
}

/// Random-load DC-OPF setpoint for the plant.
inline Setpoint solve_dc_opf(const PlantModel& plant, const LoadProfile& loads) {
    Vec phases = dc_opf_phases(plant.topology(), plant.edge_susceptance(), loads);
    Setpoint sp;
    sp.x_star = Vec::Zero(plant.state_dim());
    for (int i = 0; i < plant.node_count(); ++i) sp.x_star[2 * i] = phases[i];
    sp.u_star = steady_state_input(plant, phases);
    return sp;
}

/// Equilibrium residual ||A x* + B u* - x*||_inf; every emitted setpoint keeps
/// this at numerical noise.
inline double setpoint_residual(const PlantModel& plant, const Setpoint& sp) {
    return (plant.state_matrix() * sp.x_star + plant.input_matrix() * sp.u_star - sp.x_star)
        .cwiseAbs()
        .maxCoeff();
}

/// Uniform scaling of a setpoint (phases and inputs scale together; the
/// equilibrium property is linear).
inline Setpoint scale_setpoint(const Setpoint& sp, double factor) {
    return {sp.x_star * factor, sp.u_star * factor};
}

}  // namespace slsgrid
