#pragma once

#include <Eigen/Eigenvalues>

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "slsgrid/common.hpp"
#include "slsgrid/rng.hpp"
#include "slsgrid/topology.hpp"

namespace slsgrid {

/// Sparsity supports of a d-hop locality constraint, expanded to entry level.
/// Block (i, j) is allowed iff hop distance(i, j) <= d; d = kFullLocality
/// yields all-true masks.
struct LocalityMask {
    int d = kFullLocality;
    BoolMat state_support;   // n x n, n = 2N
    BoolMat input_support;   // p x n, p = N
};

/// Networked LTI plant: per-node [phase; frequency] state driven by the
/// discretized undamped swing coupling, one controllable load per node.
///
///   A_ii = [1, dt; -(b_i/m_i) dt, 1],  A_ij = [0, 0; (b_ij/m_i) dt, 0],
///   B_i  = [0; 1],  b_i = sum of incident line susceptances.
///
/// State ordering interleaves nodes: [theta_0, omega_0, theta_1, omega_1, ...].
/// Immutable after construction; safe for concurrent reads.
class PlantModel {
public:
    PlantModel(Topology topology, double dt, double u_max, Vec inertia_inv,
               std::vector<double> edge_susceptance)
        : topology_(std::move(topology)),
          dt_(dt),
          u_max_(u_max),
          inertia_inv_(std::move(inertia_inv)),
          edge_susceptance_(std::move(edge_susceptance)) {
        check_dim(dt_ > 0.0, "PlantModel: dt must be positive");
        check_dim(u_max_ > 0.0, "PlantModel: u_max must be positive");
        check_dim(inertia_inv_.size() == topology_.node_count,
                  "PlantModel: inertia_inv size mismatch");
        check_dim(edge_susceptance_.size() == topology_.edges.size(),
                  "PlantModel: edge_susceptance size mismatch");
        for (int i = 0; i < inertia_inv_.size(); ++i)
            check_dim(inertia_inv_[i] >= 0.0, "PlantModel: inertia_inv must be >= 0");
        assemble();
    }

    int node_count() const { return topology_.node_count; }
    int state_dim() const { return 2 * node_count(); }
    int input_dim() const { return node_count(); }
    double dt() const { return dt_; }
    double u_max() const { return u_max_; }
    const Topology& topology() const { return topology_; }
    const Vec& inertia_inv() const { return inertia_inv_; }
    const std::vector<double>& edge_susceptance() const { return edge_susceptance_; }

    const Mat& state_matrix() const { return A_; }   // 2N x 2N
    const Mat& input_matrix() const { return B_; }   // 2N x N

    /// Line susceptance between i and j (0 when not adjacent).
    double susceptance(int i, int j) const {
        if (i > j) std::swap(i, j);
        for (size_t e = 0; e < topology_.edges.size(); ++e)
            if (topology_.edges[e] == std::make_pair(i, j)) return edge_susceptance_[e];
        return 0.0;
    }

    /// b_i: total susceptance incident to node i.
    double total_susceptance(int i) const {
        double b = 0.0;
        for (size_t e = 0; e < topology_.edges.size(); ++e)
            if (topology_.edges[e].first == i || topology_.edges[e].second == i)
                b += edge_susceptance_[e];
        return b;
    }

    Mat a_block(int i, int j) const { return A_.block(2 * i, 2 * j, 2, 2); }

    PlantModel with_u_max(double u_max) const {
        return PlantModel(topology_, dt_, u_max, inertia_inv_, edge_susceptance_);
    }

    /// One exact step x+ = A x + B (u + w_node); saturation is the caller's
    /// job. w_node is the per-node disturbance entering through B.
    Vec step(const Vec& x, const Vec& u, const Vec& w_node) const {
        check_dim(x.size() == state_dim(), "step: state size mismatch");
        check_dim(u.size() == input_dim(), "step: input size mismatch");
        check_dim(w_node.size() == input_dim(), "step: disturbance size mismatch");
        return A_ * x + B_ * (u + w_node);
    }

    /// Step with a full-state disturbance x+ = A x + B u + w.
    Vec step_full(const Vec& x, const Vec& u, const Vec& w_full) const {
        check_dim(x.size() == state_dim(), "step_full: state size mismatch");
        check_dim(u.size() == input_dim(), "step_full: input size mismatch");
        check_dim(w_full.size() == state_dim(), "step_full: disturbance size mismatch");
        return A_ * x + B_ * u + w_full;
    }

    void save(std::ostream& os) const {
        os << "slsgrid-plant 1\n";
        os << "nodes " << node_count() << "\n";
        os << "dt " << format_double(dt_) << "\n";
        os << "u_max " << format_double(u_max_) << "\n";
        os << "inertia_inv " << node_count() << "\n";
        for (int i = 0; i < node_count(); ++i)
            os << format_double(inertia_inv_[i]) << (i + 1 == node_count() ? "\n" : " ");
        os << "edges " << topology_.edges.size() << "\n";
        for (size_t e = 0; e < topology_.edges.size(); ++e)
            os << topology_.edges[e].first << " " << topology_.edges[e].second << " "
               << format_double(edge_susceptance_[e]) << "\n";
    }

    static PlantModel load(std::istream& is) {
        std::string magic;
        int version = 0;
        is >> magic >> version;
        if (magic != "slsgrid-plant" || version != 1)
            throw NumericalError("PlantModel::load: unrecognized header");
        std::string key;
        int nodes = 0;
        double dt = 0.0, u_max = 0.0;
        is >> key >> nodes;
        if (key != "nodes") throw NumericalError("PlantModel::load: expected 'nodes'");
        is >> key >> dt;
        if (key != "dt") throw NumericalError("PlantModel::load: expected 'dt'");
        is >> key >> u_max;
        if (key != "u_max") throw NumericalError("PlantModel::load: expected 'u_max'");
        int count = 0;
        is >> key >> count;
        if (key != "inertia_inv" || count != nodes)
            throw NumericalError("PlantModel::load: bad inertia_inv block");
        Vec m_inv(nodes);
        for (int i = 0; i < nodes; ++i) is >> m_inv[i];
        int edge_count = 0;
        is >> key >> edge_count;
        if (key != "edges") throw NumericalError("PlantModel::load: expected 'edges'");
        std::vector<std::pair<int, int>> edges;
        std::vector<double> sus;
        for (int e = 0; e < edge_count; ++e) {
            int a = 0, b = 0;
            double s = 0.0;
            is >> a >> b >> s;
            edges.emplace_back(a, b);
            sus.push_back(s);
        }
        if (!is) throw NumericalError("PlantModel::load: truncated input");
        return PlantModel(Topology::from_edges(nodes, edges), dt, u_max, m_inv, sus);
    }

private:
    void assemble() {
        const int n = state_dim();
        A_ = Mat::Zero(n, n);
        B_ = Mat::Zero(n, input_dim());
        for (int i = 0; i < node_count(); ++i) {
            const double mi_inv = inertia_inv_[i];
            const double bi = total_susceptance(i);
            A_(2 * i, 2 * i) = 1.0;
            A_(2 * i, 2 * i + 1) = dt_;
            A_(2 * i + 1, 2 * i) = -bi * mi_inv * dt_;
            A_(2 * i + 1, 2 * i + 1) = 1.0;
            for (int j : topology_.neighbors(i))
                A_(2 * i + 1, 2 * j) = susceptance(i, j) * mi_inv * dt_;
            B_(2 * i + 1, i) = 1.0;
        }
    }

    Topology topology_;
    double dt_;
    double u_max_;
    Vec inertia_inv_;
    std::vector<double> edge_susceptance_;  // parallel to topology_.edges
    Mat A_, B_;
};

/// Random connected swing-equation plant over a rows x cols mesh.
/// Susceptances are uniform on [0.5, 1], inverse inertias uniform on [0, 10].
inline PlantModel generate_plant(int rows, int cols, std::uint64_t seed, double dt = 0.2,
                                 double u_max = 1.0, double extra_edge_prob = 0.3) {
    Rng rng(seed);
    Topology topo = generate_mesh_topology(rows, cols, rng, extra_edge_prob);
    std::vector<double> sus(topo.edges.size());
    for (auto& s : sus) s = rng.uniform(0.5, 1.0);
    Vec m_inv(topo.node_count);
    for (int i = 0; i < topo.node_count; ++i) m_inv[i] = rng.uniform(0.0, 10.0);
    return PlantModel(std::move(topo), dt, u_max, std::move(m_inv), std::move(sus));
}

/// Largest eigenvalue modulus of the assembled global A.
inline double spectral_radius(const PlantModel& plant) {
    Eigen::EigenSolver<Mat> solver(plant.state_matrix(), /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success)
        throw NumericalError("spectral_radius: eigensolver did not converge");
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// d-hop sparsity supports over the plant's node graph.
inline LocalityMask locality_mask(const Topology& topology, int d) {
    check_dim(d >= 0, "locality_mask: d must be >= 0");
    const int N = topology.node_count;
    LocalityMask mask;
    mask.d = d;
    mask.state_support = BoolMat::Constant(2 * N, 2 * N, false);
    mask.input_support = BoolMat::Constant(N, 2 * N, false);
    for (int i = 0; i < N; ++i) {
        auto dist = topology.hop_distances_from(i);
        for (int j = 0; j < N; ++j) {
            const bool in = dist[static_cast<size_t>(j)] <= d;
            if (!in) continue;
            mask.state_support.block(2 * i, 2 * j, 2, 2).setConstant(true);
            mask.input_support.block(i, 2 * j, 1, 2).setConstant(true);
        }
    }
    return mask;
}

}  // namespace slsgrid
