#pragma once

// Query-node selection: the affiliation-driven strategy (L1-norm plus a
// dissimilarity bonus against already-queried nodes) and the RS / DFS
// samplers used as baselines and in the ablations.

#include <cstdint>
#include <vector>

#include "metacode/graph.hpp"
#include "metacode/matrix.hpp"
#include "metacode/rng.hpp"

namespace metacode {

// argmax over unqueried v of ||F_v||_1 + lambda (1 - (1/(t+1)) sum_{u in S_t}
// sim(F_v, F_u)). The divisor is t+1 with t = |S_t| summands, as printed;
// strict_mean switches to a plain average over t. Ties break to the smallest
// node id.
inline NodeId select_metacode(const Matrix& f, const ExploredState& state, double lambda,
                              bool strict_mean = false) {
    if (lambda < 0.0) throw std::invalid_argument("select_metacode: lambda must be >= 0");
    const std::size_t n = state.node_count();
    if (state.t() >= n) throw std::runtime_error("select_metacode: all nodes queried");
    const auto& queried = state.query_order();
    const double divisor =
        strict_mean ? double(std::max<std::size_t>(queried.size(), 1)) : double(queried.size() + 1);

    NodeId best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (NodeId v = 0; v < n; ++v) {
        if (state.is_queried(v)) continue;
        double sim_sum = 0.0;
        for (NodeId u : queried) sim_sum += cosine_sim(f.row(v), f.row(u));
        const double score = l1_norm(f.row(v)) + lambda * (1.0 - sim_sum / divisor);
        if (!found || score > best_score) {
            found = true;
            best = v;
            best_score = score;
        }
    }
    return best;
}

inline NodeId select_random(const ExploredState& state, RngStream& rng) {
    const std::size_t remaining = state.unqueried_count();
    if (remaining == 0) throw std::runtime_error("select_random: all nodes queried");
    std::size_t idx = rng.next_index(remaining);
    for (NodeId v = 0; v < state.node_count(); ++v) {
        if (state.is_queried(v)) continue;
        if (idx == 0) return v;
        --idx;
    }
    throw std::logic_error("select_random: unreachable");
}

// LIFO frontier of discovered-but-unqueried nodes. Neighbors of each query
// are pushed in ascending id order; an empty stack restarts uniformly among
// the unqueried nodes.
struct DfsFrontier {
    std::vector<NodeId> stack;

    void observe(std::span<const NodeId> neighbors, const ExploredState& state) {
        for (NodeId w : neighbors)
            if (!state.is_queried(w)) stack.push_back(w);
    }
};

inline NodeId select_dfs(const ExploredState& state, DfsFrontier& frontier, RngStream& rng) {
    if (state.unqueried_count() == 0) throw std::runtime_error("select_dfs: all nodes queried");
    while (!frontier.stack.empty()) {
        const NodeId v = frontier.stack.back();
        frontier.stack.pop_back();
        if (!state.is_queried(v)) return v;
    }
    return select_random(state, rng);  // disconnected leftover: random restart
}

}  // namespace metacode
