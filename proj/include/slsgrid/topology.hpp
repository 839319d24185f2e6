#pragma once

#include <algorithm>
#include <queue>
#include <set>
#include <utility>
#include <vector>

#include "slsgrid/common.hpp"
#include "slsgrid/rng.hpp"

namespace slsgrid {

/// Undirected simple graph over nodes 0..N-1.
struct Topology {
    int node_count = 0;
    std::vector<std::pair<int, int>> edges;       // canonical: first < second, sorted
    std::vector<std::vector<int>> adjacency;      // sorted neighbor lists

    static Topology from_edges(int n, std::vector<std::pair<int, int>> raw_edges) {
        check_dim(n >= 1, "Topology: node_count must be >= 1");
        Topology t;
        t.node_count = n;
        std::set<std::pair<int, int>> canon;
        for (auto [a, b] : raw_edges) {
            check_dim(a >= 0 && a < n && b >= 0 && b < n, "Topology: edge endpoint out of range");
            if (a == b) throw DimensionError("Topology: self-loop rejected");
            canon.insert({std::min(a, b), std::max(a, b)});
        }
        t.edges.assign(canon.begin(), canon.end());
        t.adjacency.assign(static_cast<size_t>(n), {});
        for (auto [a, b] : t.edges) {
            t.adjacency[static_cast<size_t>(a)].push_back(b);
            t.adjacency[static_cast<size_t>(b)].push_back(a);
        }
        for (auto& nbrs : t.adjacency) std::sort(nbrs.begin(), nbrs.end());
        return t;
    }

    const std::vector<int>& neighbors(int i) const { return adjacency[static_cast<size_t>(i)]; }

    /// BFS hop distances from `src`; unreachable nodes get kFullLocality.
    std::vector<int> hop_distances_from(int src) const {
        std::vector<int> dist(static_cast<size_t>(node_count), kFullLocality);
        std::queue<int> frontier;
        dist[static_cast<size_t>(src)] = 0;
        frontier.push(src);
        while (!frontier.empty()) {
            int u = frontier.front();
            frontier.pop();
            for (int v : neighbors(u)) {
                if (dist[static_cast<size_t>(v)] == kFullLocality) {
                    dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
                    frontier.push(v);
                }
            }
        }
        return dist;
    }

    /// Pairwise hop distances (kFullLocality where disconnected).
    Eigen::MatrixXi hop_distances() const {
        Eigen::MatrixXi d(node_count, node_count);
        for (int i = 0; i < node_count; ++i) {
            auto row = hop_distances_from(i);
            for (int j = 0; j < node_count; ++j) d(i, j) = row[static_cast<size_t>(j)];
        }
        return d;
    }

    bool is_connected() const {
        auto dist = hop_distances_from(0);
        return std::all_of(dist.begin(), dist.end(), [](int d) { return d != kFullLocality; });
    }
};

namespace detail {

inline std::vector<std::pair<int, int>> mesh_edges(int rows, int cols) {
    std::vector<std::pair<int, int>> edges;
    auto id = [cols](int r, int c) { return r * cols + c; };
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (c + 1 < cols) edges.emplace_back(id(r, c), id(r, c + 1));
            if (r + 1 < rows) edges.emplace_back(id(r, c), id(r + 1, c));
        }
    }
    std::sort(edges.begin(), edges.end());
    return edges;
}

}  // namespace detail

/// Random connected subgraph of the rows x cols mesh: a uniform spanning tree
/// (Wilson's loop-erased random walk) plus each remaining mesh edge
/// independently with probability `extra_edge_prob`.
inline Topology generate_mesh_topology(int rows, int cols, Rng& rng,
                                       double extra_edge_prob = 0.3) {
    check_dim(rows >= 1 && cols >= 1, "generate_mesh_topology: rows*cols must be >= 1");
    const int n = rows * cols;
    Topology mesh = Topology::from_edges(n, detail::mesh_edges(rows, cols));

    std::vector<bool> in_tree(static_cast<size_t>(n), false);
    in_tree[0] = true;
    std::vector<int> walk_next(static_cast<size_t>(n), -1);
    std::set<std::pair<int, int>> chosen;
    for (int start = 1; start < n; ++start) {
        if (in_tree[static_cast<size_t>(start)]) continue;
        int u = start;
        while (!in_tree[static_cast<size_t>(u)]) {
            const auto& nbrs = mesh.neighbors(u);
            walk_next[static_cast<size_t>(u)] = nbrs[static_cast<size_t>(rng.next_below(
                static_cast<int>(nbrs.size())))];
            u = walk_next[static_cast<size_t>(u)];
        }
        u = start;
        while (!in_tree[static_cast<size_t>(u)]) {
            in_tree[static_cast<size_t>(u)] = true;
            int v = walk_next[static_cast<size_t>(u)];
            chosen.insert({std::min(u, v), std::max(u, v)});
            u = v;
        }
    }
    for (const auto& e : mesh.edges) {
        if (chosen.count(e)) continue;
        if (rng.uniform01() < extra_edge_prob) chosen.insert(e);
    }
    return Topology::from_edges(n, {chosen.begin(), chosen.end()});
}

}  // namespace slsgrid
