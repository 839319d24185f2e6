#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "slsgrid/lqr.hpp"
#include "slsgrid/optimization.hpp"
#include "slsgrid/plant.hpp"
#include "slsgrid/sls_runtime.hpp"
#include "slsgrid/synthesis.hpp"
#include "slsgrid/system_response.hpp"

using namespace slsgrid;

namespace {

LocalityMask all_true_mask(int n, int p) {
    LocalityMask mask;
    mask.d = kFullLocality;
    mask.state_support = BoolMat::Constant(n, n, true);
    mask.input_support = BoolMat::Constant(p, n, true);
    return mask;
}

/// Literal one-shot formulation of a single column subproblem as an
/// equality-constrained least squares over the stacked patch variables,
/// solved with solve_eq_ls. Slow but independent of the staged recursion.
struct DenseColumnOracle {
    Mat states;  // s x T
    Mat inputs;  // m x T
};

DenseColumnOracle dense_column_solve(const Mat& A, const Mat& B, const LocalityMask& mask,
                                     int column, int T, const Mat& Q, const Mat& R) {
    std::vector<int> sidx, uidx;
    for (int r = 0; r < A.rows(); ++r)
        if (mask.state_support(r, column)) sidx.push_back(r);
    for (int r = 0; r < B.cols(); ++r)
        if (mask.input_support(r, column)) uidx.push_back(r);
    const int s = static_cast<int>(sidx.size());
    const int m = static_cast<int>(uidx.size());
    auto sub = [](const Mat& M, const std::vector<int>& rows, const std::vector<int>& cols) {
        Mat out(rows.size(), cols.size());
        for (size_t r = 0; r < rows.size(); ++r)
            for (size_t c = 0; c < cols.size(); ++c) out(r, c) = M(rows[r], cols[c]);
        return out;
    };
    Mat At = sub(A, sidx, sidx), Bt = sub(B, sidx, uidx);
    Mat Qt = sub(Q, sidx, sidx), Rt = sub(R, uidx, uidx);
    std::vector<int> leak;
    for (int r = 0; r < A.rows(); ++r) {
        if (mask.state_support(r, column)) continue;
        bool touches = false;
        for (int j : sidx) touches = touches || A(r, j) != 0.0;
        for (int j : uidx) touches = touches || B(r, j) != 0.0;
        if (touches) leak.push_back(r);
    }
    Mat C = sub(A, leak, sidx), D = sub(B, leak, uidx);
    const int L = static_cast<int>(leak.size());

    Vec xi = Vec::Zero(s);
    for (int j = 0; j < s; ++j)
        if (sidx[static_cast<size_t>(j)] == column) xi[j] = 1.0;

    // Variables: x_2..x_T then u_1..u_T.
    const int nx = (T - 1) * s, nu = T * m, nvar = nx + nu;
    auto x_off = [&](int k) { return (k - 2) * s; };          // valid for k = 2..T
    auto u_off = [&](int k) { return nx + (k - 1) * m; };     // valid for k = 1..T
    const int rows = (T - 1) * s + T * L + s;
    Mat E = Mat::Zero(rows, nvar);
    Vec h = Vec::Zero(rows);
    int row = 0;
    for (int k = 1; k <= T - 1; ++k) {  // x_{k+1} = At x_k + Bt u_k
        E.block(row, x_off(k + 1), s, s) = Mat::Identity(s, s);
        if (k >= 2) E.block(row, x_off(k), s, s) = -At;
        E.block(row, u_off(k), s, m) = -Bt;
        if (k == 1) h.segment(row, s) = At * xi;
        row += s;
    }
    for (int k = 1; k <= T && L > 0; ++k) {  // C x_k + D u_k = 0
        if (k >= 2) E.block(row, x_off(k), L, s) = C;
        E.block(row, u_off(k), L, m) = D;
        if (k == 1) h.segment(row, L) = -(C * xi);
        row += L;
    }
    if (T >= 2) E.block(row, x_off(T), s, s) = At;   // terminal closure
    E.block(row, u_off(T), s, m) = Bt;
    if (T == 1) h.segment(row, s) = -(At * xi);
    row += s;

    Mat W = Mat::Zero(nvar, nvar);
    for (int k = 2; k <= T; ++k) W.block(x_off(k), x_off(k), s, s) = 2.0 * Qt;
    for (int k = 1; k <= T; ++k) W.block(u_off(k), u_off(k), m, m) = 2.0 * Rt;
    Vec z = solve_eq_ls(W, E, h);

    DenseColumnOracle out;
    out.states = Mat::Zero(s, T);
    out.inputs = Mat::Zero(m, T);
    out.states.col(0) = xi;
    for (int k = 2; k <= T; ++k) out.states.col(k - 1) = z.segment(x_off(k), s);
    for (int k = 1; k <= T; ++k) out.inputs.col(k - 1) = z.segment(u_off(k), m);
    return out;
}

SystemResponse dense_synthesis_oracle(const Mat& A, const Mat& B, const LocalityMask& mask,
                                      int T, const Mat& Q, const Mat& R) {
    SystemResponse response = SystemResponse::zero(T, A.rows(), B.cols());
    for (int c = 0; c < A.rows(); ++c) {
        DenseColumnOracle sol = dense_column_solve(A, B, mask, c, T, Q, R);
        std::vector<int> sidx, uidx;
        for (int r = 0; r < A.rows(); ++r)
            if (mask.state_support(r, c)) sidx.push_back(r);
        for (int r = 0; r < B.cols(); ++r)
            if (mask.input_support(r, c)) uidx.push_back(r);
        for (int k = 0; k < T; ++k) {
            for (size_t j = 0; j < sidx.size(); ++j)
                response.phi_x[k](sidx[j], c) = sol.states(j, k);
            for (size_t j = 0; j < uidx.size(); ++j)
                response.phi_u[k](uidx[j], c) = sol.inputs(j, k);
        }
    }
    return response;
}

Vec random_vec(Rng& rng, int size, double scale = 1.0) {
    Vec v(size);
    for (int i = 0; i < size; ++i) v[i] = scale * rng.uniform(-1, 1);
    return v;
}

}  // namespace

TEST_CASE("achievability residual: deadbeat pair on memoryless dynamics is exact") {
    const int n = 3;
    SystemResponse response = SystemResponse::zero(4, n, n);
    response.phi_x[0] = Mat::Identity(n, n);
    CHECK(achievability_residual(Mat::Zero(n, n), Mat::Identity(n, n), response) == 0.0);
    response.phi_x[0] = 2.0 * Mat::Identity(n, n);
    CHECK(achievability_residual(Mat::Zero(n, n), Mat::Identity(n, n), response) >= 1.0);
}

TEST_CASE("achievability residual: truncated scalar geometric response") {
    Mat A = Mat::Constant(1, 1, 0.5), B = Mat::Constant(1, 1, 1.0);
    SystemResponse response = SystemResponse::zero(4, 1, 1);
    double g = 1.0;
    for (int k = 0; k < 4; ++k) {
        response.phi_x[k](0, 0) = g;
        g *= 0.5;
    }
    CHECK(achievability_residual(A, B, response) == doctest::Approx(0.0625).epsilon(1e-14));
    CHECK(achievability_residual(A, B, response, /*include_terminal=*/false) <
          1e-15);
}

TEST_CASE("synthesis on memoryless full-actuation dynamics returns the zero response") {
    const int n = 3;
    SystemResponse response =
        synthesize_h2(Mat::Zero(n, n), Mat::Identity(n, n), all_true_mask(n, n), 5,
                      Mat::Identity(n, n), Mat::Identity(n, n));
    CHECK((response.phi_x[0] - Mat::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-12);
    for (int k = 1; k < 5; ++k) CHECK(response.phi_x[k].cwiseAbs().maxCoeff() < 1e-12);
    for (int k = 0; k < 5; ++k) CHECK(response.phi_u[k].cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("staged column recursion matches the one-shot solve_eq_ls oracle") {
    for (std::uint64_t seed : {1ULL, 2ULL}) {
        PlantModel plant = generate_plant(2, 2, seed);
        const int n = plant.state_dim(), p = plant.input_dim();
        const Mat Q = Mat::Identity(n, n), R = Mat::Identity(p, p);
        for (int d : {1, 2}) {
            LocalityMask mask = locality_mask(plant.topology(), d);
            const int T = 6;
            SystemResponse fast = synthesize_h2(plant, T, mask, Q, R);
            SystemResponse oracle = dense_synthesis_oracle(plant.state_matrix(),
                                                           plant.input_matrix(), mask, T, Q, R);
            for (int k = 0; k < T; ++k) {
                CHECK((fast.phi_x[k] - oracle.phi_x[k]).cwiseAbs().maxCoeff() < 1e-8);
                CHECK((fast.phi_u[k] - oracle.phi_u[k]).cwiseAbs().maxCoeff() < 1e-8);
            }
            CHECK(h2_cost(fast, Q, R) ==
                  doctest::Approx(h2_cost(oracle, Q, R)).epsilon(1e-9));
        }
    }
}

TEST_CASE("synthesis output satisfies achievability within 1e-8") {
    for (std::uint64_t seed : {3ULL, 4ULL, 5ULL}) {
        PlantModel plant = generate_plant(3, 3, seed);
        const int n = plant.state_dim(), p = plant.input_dim();
        for (int d : {1, kFullLocality}) {
            LocalityMask mask = locality_mask(plant.topology(), d);
            SystemResponse response =
                synthesize_h2(plant, 12, mask, Mat::Identity(n, n), Mat::Identity(p, p));
            CHECK(validate_achievability(plant, response) <= 1e-8);
            CHECK(response_within_mask(response, mask));
        }
    }
}

TEST_CASE("unconstrained synthesis matches the stationary-LQR impulse responses") {
    for (std::uint64_t seed : {6ULL, 7ULL}) {
        PlantModel plant = generate_plant(2, 2, seed);
        const int n = plant.state_dim(), p = plant.input_dim();
        const Mat Q = Mat::Identity(n, n), R = Mat::Identity(p, p);
        const int T = 40;
        SystemResponse sls = synthesize_h2(plant, T, locality_mask(plant.topology(),
                                                                   kFullLocality),
                                           Q, R);
        // Oracle: impulse responses of the Riccati closed loop, truncated at T.
        const Mat K = riccati_infinite(plant, Q, R).gain;
        const Mat closed = plant.state_matrix() - plant.input_matrix() * K;
        double lqr_cost = 0.0;
        Mat phi = Mat::Identity(n, n);
        for (int k = 0; k < T; ++k) {
            lqr_cost += phi.squaredNorm() + (K * phi).squaredNorm();
            phi = closed * phi;
        }
        const double sls_cost = h2_cost(sls, Q, R);
        CHECK(std::abs(sls_cost - lqr_cost) <= 1e-6 * lqr_cost);
    }
}

TEST_CASE("synthesis cost is monotone in locality radius and horizon") {
    PlantModel plant = generate_plant(3, 3, 9);
    const int n = plant.state_dim(), p = plant.input_dim();
    const Mat Q = Mat::Identity(n, n), R = Mat::Identity(p, p);
    double prev = kInf;
    for (int d : {1, 2, 3, kFullLocality}) {
        const double cost =
            h2_cost(synthesize_h2(plant, 15, locality_mask(plant.topology(), d), Q, R), Q, R);
        CHECK(cost <= prev * (1.0 + 1e-9));
        prev = cost;
    }
    prev = kInf;
    for (int T : {8, 12, 16, 24}) {
        const double cost =
            h2_cost(synthesize_h2(plant, T, locality_mask(plant.topology(), 2), Q, R), Q, R);
        CHECK(cost <= prev * (1.0 + 1e-9));
        prev = cost;
    }
}

TEST_CASE("infeasible locality fails loudly naming the column") {
    PlantModel plant = generate_plant(2, 1, 12);
    const int n = plant.state_dim(), p = plant.input_dim();
    const Mat Q = Mat::Identity(n, n), R = Mat::Identity(p, p);
    // Phase disturbances leak to the neighbor in one step; d=0 cannot contain them.
    CHECK_THROWS_AS(
        synthesize_h2(plant, 8, locality_mask(plant.topology(), 0), Q, R),
        InfeasibleError);
    // A single-step horizon cannot close the FIR response of coupled dynamics.
    CHECK_THROWS_AS(
        synthesize_h2(plant, 1, locality_mask(plant.topology(), kFullLocality), Q, R),
        InfeasibleError);
    try {
        synthesize_h2(plant, 8, locality_mask(plant.topology(), 0), Q, R);
    } catch (const InfeasibleError& e) {
        CHECK(e.column >= 0);
        CHECK(e.node == e.column / 2);
    }
}

TEST_CASE("runtime: zero start emits zero inputs and zero nominal error") {
    PlantModel plant = generate_plant(2, 2, 15);
    const int n = plant.state_dim(), p = plant.input_dim();
    SystemResponse response = synthesize_h2(
        plant, 8, locality_mask(plant.topology(), kFullLocality), Mat::Identity(n, n),
        Mat::Identity(p, p));
    SlsRuntimeState state = runtime_init(response, Vec::Zero(n));
    Vec x = Vec::Zero(n);
    for (int t = 0; t < 10; ++t) {
        Vec u = runtime_step(state, response, x);
        CHECK(u.cwiseAbs().maxCoeff() == 0.0);
        x = plant.step_full(x, u, Vec::Zero(n));
    }
}

TEST_CASE("runtime init anchors the nominal at x0 so the first innovation is zero") {
    PlantModel plant = generate_plant(1, 2, 16);
    const int n = plant.state_dim(), p = plant.input_dim();
    SystemResponse response = synthesize_h2(
        plant, 6, locality_mask(plant.topology(), kFullLocality), Mat::Identity(n, n),
        Mat::Identity(p, p));
    Vec x0 = Vec::Zero(n);
    x0[0] = 1.0;
    SlsRuntimeState state = runtime_init(response, x0);
    CHECK((state.nominal_state() - x0).cwiseAbs().maxCoeff() == 0.0);
    Vec u = runtime_step(state, response, x0);  // no disturbance yet
    CHECK(u.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("impulse disturbance replays the stored spectral blocks") {
    PlantModel plant = generate_plant(2, 2, 18);
    const int n = plant.state_dim(), p = plant.input_dim();
    const int T = 10;
    SystemResponse response = synthesize_h2(
        plant, T, locality_mask(plant.topology(), kFullLocality), Mat::Identity(n, n),
        Mat::Identity(p, p));
    for (int j : {0, 3, n - 1}) {
        SlsRuntimeState state = runtime_init(response, Vec::Zero(n));
        Vec x = Vec::Zero(n);
        for (int t = 0; t <= T + 3; ++t) {
            Vec u = runtime_step(state, response, x);
            if (t >= 1) {
                Vec expect_x = t <= T ? Vec(response.phi_x[t - 1].col(j)) : Vec(Vec::Zero(n));
                Vec expect_u = t <= T ? Vec(response.phi_u[t - 1].col(j)) : Vec(Vec::Zero(p));
                CHECK((x - expect_x).cwiseAbs().maxCoeff() < 1e-9);
                CHECK((u - expect_u).cwiseAbs().maxCoeff() < 1e-9);
            }
            Vec w = Vec::Zero(n);
            if (t == 0) w[j] = 1.0;
            x = plant.step_full(x, u, w);
        }
    }
}

TEST_CASE("closed loop equals the disturbance convolution for random sequences") {
    Rng rng(77);
    for (std::uint64_t seed : {21ULL, 22ULL, 23ULL}) {
        PlantModel plant = generate_plant(3, 1, seed);
        const int n = plant.state_dim(), p = plant.input_dim();
        const int T = 8, steps = 25;
        SystemResponse response = synthesize_h2(
            plant, T, locality_mask(plant.topology(), 1), Mat::Identity(n, n),
            Mat::Identity(p, p));
        std::vector<Vec> w;
        for (int t = 0; t < steps; ++t) w.push_back(random_vec(rng, n));

        SlsRuntimeState state = runtime_init(response, Vec::Zero(n));
        Vec x = Vec::Zero(n);
        for (int t = 0; t < steps; ++t) {
            Vec u = runtime_step(state, response, x);
            Vec x_conv = Vec::Zero(n), u_conv = Vec::Zero(p);
            for (int k = 1; k <= std::min(t, T); ++k) {
                x_conv += response.phi_x[k - 1] * w[static_cast<size_t>(t - k)];
                u_conv += response.phi_u[k - 1] * w[static_cast<size_t>(t - k)];
            }
            CHECK((x - x_conv).cwiseAbs().maxCoeff() < 1e-9);
            CHECK((u - u_conv).cwiseAbs().maxCoeff() < 1e-9);
            x = plant.step_full(x, u, w[static_cast<size_t>(t)]);
        }
    }
}

TEST_CASE("d-hop synthesis contains impulses inside the patch") {
    PlantModel plant = generate_plant(5, 5, 30);
    const int n = plant.state_dim(), p = plant.input_dim();
    const int T = 12, d = 2;
    LocalityMask mask = locality_mask(plant.topology(), d);
    SystemResponse response =
        synthesize_h2(plant, T, mask, Mat::Identity(n, n), Mat::Identity(p, p));
    CHECK(response_within_mask(response, mask));  // structural zeros, bitwise

    const int node = 12;  // mesh center
    auto dist = plant.topology().hop_distances_from(node);
    SlsRuntimeState state = runtime_init(response, Vec::Zero(n));
    Vec x = Vec::Zero(n);
    for (int t = 0; t <= T + 2; ++t) {
        Vec u = runtime_step(state, response, x);
        for (int i = 0; i < plant.node_count(); ++i) {
            if (dist[static_cast<size_t>(i)] <= d) continue;
            CHECK(std::abs(x[2 * i]) <= 1e-10);
            CHECK(std::abs(x[2 * i + 1]) <= 1e-10);
        }
        Vec w = Vec::Zero(n);
        if (t == 0) w[2 * node] = 1.0;  // phase impulse at the center
        x = plant.step_full(x, u, w);
    }
}

TEST_CASE("response text dump round-trips exactly") {
    PlantModel plant = generate_plant(2, 2, 40);
    const int n = plant.state_dim(), p = plant.input_dim();
    SystemResponse response = synthesize_h2(
        plant, 5, locality_mask(plant.topology(), 1), Mat::Identity(n, n),
        Mat::Identity(p, p));
    std::stringstream first;
    response.save(first);
    std::stringstream copy(first.str());
    SystemResponse loaded = SystemResponse::load(copy);
    for (int k = 0; k < 5; ++k) {
        CHECK((loaded.phi_x[k] - response.phi_x[k]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((loaded.phi_u[k] - response.phi_u[k]).cwiseAbs().maxCoeff() == 0.0);
    }
    std::stringstream second;
    loaded.save(second);
    CHECK(first.str() == second.str());
}
