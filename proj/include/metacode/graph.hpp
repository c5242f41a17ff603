#pragma once

// Graph core: the hidden network behind the node-query oracle, the explored
// state accumulated by queries, and the working graph (explored + inferred
// edges) that the embedder consumes.
//
// The true edge set is reachable two ways only: query_node (counted against
// the budget) and an EvalHandle capability handed out for evaluation code.
// Detection code never takes an EvalHandle.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace metacode {

using NodeId = std::uint32_t;

// Unordered node pair stored canonically as (min, max); no self-pairs.
struct Edge {
    NodeId u = 0;
    NodeId v = 0;

    static Edge make(NodeId a, NodeId b) {
        if (a == b) throw std::invalid_argument("Edge::make: self-edge " + std::to_string(a));
        return a < b ? Edge{a, b} : Edge{b, a};
    }

    std::uint64_t key() const { return (std::uint64_t(u) << 32) | v; }

    friend bool operator==(const Edge& a, const Edge& b) { return a.u == b.u && a.v == b.v; }
    friend bool operator<(const Edge& a, const Edge& b) {
        return a.u != b.u ? a.u < b.u : a.v < b.v;
    }
};

// Insertion-ordered edge set with O(1) membership. Iteration order is the
// insertion order, so everything downstream is reproducible.
class EdgeSet {
public:
    bool insert(Edge e) {
        if (!keys_.insert(e.key()).second) return false;
        edges_.push_back(e);
        return true;
    }

    bool contains(Edge e) const { return keys_.count(e.key()) != 0; }
    bool contains(NodeId a, NodeId b) const { return contains(Edge::make(a, b)); }

    std::size_t size() const { return edges_.size(); }
    bool empty() const { return edges_.empty(); }

    const std::vector<Edge>& edges() const { return edges_; }
    auto begin() const { return edges_.begin(); }
    auto end() const { return edges_.end(); }

    std::vector<Edge> sorted() const {
        std::vector<Edge> out = edges_;
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    std::vector<Edge> edges_;
    std::unordered_set<std::uint64_t> keys_;
};

struct DegreeStats {
    std::vector<std::size_t> degree;
    double mean = 0.0;
};

inline DegreeStats degree_stats(std::size_t node_count, const std::vector<Edge>& edges) {
    DegreeStats s;
    s.degree.assign(node_count, 0);
    for (const Edge& e : edges) {
        s.degree[e.u]++;
        s.degree[e.v]++;
    }
    if (node_count > 0) s.mean = 2.0 * double(edges.size()) / double(node_count);
    return s;
}

class ExploredState;

// Ground-truth graph. Immutable after construction; the query/handle
// counters are the only mutable state (atomics, shareable across threads).
class HiddenNetwork {
public:
    HiddenNetwork() = default;

    // the atomic counters need explicit transfer
    HiddenNetwork(const HiddenNetwork& o)
        : n_(o.n_), adj_(o.adj_), edges_(o.edges_), queries_(o.queries_.load()),
          privileged_handles_(o.privileged_handles_.load()) {}
    HiddenNetwork(HiddenNetwork&& o) noexcept
        : n_(o.n_), adj_(std::move(o.adj_)), edges_(std::move(o.edges_)),
          queries_(o.queries_.load()), privileged_handles_(o.privileged_handles_.load()) {}
    HiddenNetwork& operator=(const HiddenNetwork& o) {
        n_ = o.n_;
        adj_ = o.adj_;
        edges_ = o.edges_;
        queries_.store(o.queries_.load());
        privileged_handles_.store(o.privileged_handles_.load());
        return *this;
    }
    HiddenNetwork& operator=(HiddenNetwork&& o) noexcept {
        n_ = o.n_;
        adj_ = std::move(o.adj_);
        edges_ = std::move(o.edges_);
        queries_.store(o.queries_.load());
        privileged_handles_.store(o.privileged_handles_.load());
        return *this;
    }

    static HiddenNetwork from_edges(std::size_t node_count, std::vector<Edge> edges) {
        HiddenNetwork g;
        g.n_ = node_count;
        g.adj_.assign(node_count, {});
        for (const Edge& e : edges) {
            if (e.u >= node_count || e.v >= node_count)
                throw std::invalid_argument("HiddenNetwork: edge endpoint out of range");
            if (!g.edges_.insert(e)) continue;  // repeated edges collapse
            g.adj_[e.u].push_back(e.v);
            g.adj_[e.v].push_back(e.u);
        }
        for (auto& nbrs : g.adj_) std::sort(nbrs.begin(), nbrs.end());
        return g;
    }

    std::size_t node_count() const { return n_; }

    // Capability granting full read access to the true edge set. Creation is
    // counted so runs can prove that only evaluation code ever looked.
    class EvalHandle {
    public:
        bool has_edge(NodeId a, NodeId b) const { return net_->edges_.contains(a, b); }
        const std::vector<Edge>& edges() const { return net_->edges_.edges(); }
        std::size_t edge_count() const { return net_->edges_.size(); }
        std::size_t degree(NodeId v) const { return net_->adj_[v].size(); }
        std::span<const NodeId> neighbors(NodeId v) const { return net_->adj_[v]; }
        std::size_t node_count() const { return net_->n_; }
        DegreeStats degree_stats() const {
            return metacode::degree_stats(net_->n_, net_->edges_.edges());
        }

    private:
        friend class HiddenNetwork;
        explicit EvalHandle(const HiddenNetwork* net) : net_(net) {}
        const HiddenNetwork* net_;
    };

    EvalHandle evaluation_handle() const& {
        privileged_handles_.fetch_add(1, std::memory_order_relaxed);
        return EvalHandle(this);
    }
    // a handle into a temporary network would dangle
    EvalHandle evaluation_handle() const&& = delete;

    std::uint64_t query_count() const { return queries_.load(std::memory_order_relaxed); }
    std::uint64_t privileged_handle_count() const {
        return privileged_handles_.load(std::memory_order_relaxed);
    }

    friend std::vector<NodeId> query_node(const HiddenNetwork&, ExploredState&, NodeId);

private:
    std::size_t n_ = 0;
    std::vector<std::vector<NodeId>> adj_;
    EdgeSet edges_;
    mutable std::atomic<std::uint64_t> queries_{0};
    mutable std::atomic<std::uint64_t> privileged_handles_{0};
};

// Query sequence S_t plus the certain edges E_t they revealed.
class ExploredState {
public:
    ExploredState() = default;
    explicit ExploredState(std::size_t node_count)
        : n_(node_count), queried_mask_(node_count, false) {}

    std::size_t node_count() const { return n_; }
    std::size_t t() const { return order_.size(); }

    bool is_queried(NodeId v) const { return queried_mask_[v]; }
    const std::vector<NodeId>& query_order() const { return order_; }
    const EdgeSet& explored_edges() const { return edges_; }

    // A pair is certain iff at least one endpoint has been queried.
    bool is_certain(NodeId a, NodeId b) const { return queried_mask_[a] || queried_mask_[b]; }

    std::size_t unqueried_count() const { return n_ - order_.size(); }

    std::vector<NodeId> unqueried() const {
        std::vector<NodeId> out;
        out.reserve(unqueried_count());
        for (NodeId v = 0; v < n_; ++v)
            if (!queried_mask_[v]) out.push_back(v);
        return out;
    }

    // Nodes seen so far: queried or touched by an explored edge.
    std::size_t explored_node_count() const {
        std::vector<char> seen(n_, 0);
        for (NodeId v : order_) seen[v] = 1;
        for (const Edge& e : edges_) {
            seen[e.u] = 1;
            seen[e.v] = 1;
        }
        std::size_t c = 0;
        for (char s : seen) c += s;
        return c;
    }

private:
    friend std::vector<NodeId> query_node(const HiddenNetwork&, ExploredState&, NodeId);

    std::size_t n_ = 0;
    std::vector<NodeId> order_;
    std::vector<bool> queried_mask_;
    EdgeSet edges_;
};

// The one sanctioned way to learn topology: reveals all edges incident to v.
// Re-querying is an error, not a no-op; budget must never be silently spent.
inline std::vector<NodeId> query_node(const HiddenNetwork& oracle, ExploredState& state,
                                      NodeId v) {
    if (state.node_count() != oracle.node_count())
        throw std::invalid_argument("query_node: state/oracle node count mismatch");
    if (v >= oracle.node_count())
        throw std::invalid_argument("query_node: node out of range");
    if (state.is_queried(v))
        throw std::invalid_argument("query_node: node " + std::to_string(v) +
                                    " already queried");
    oracle.queries_.fetch_add(1, std::memory_order_relaxed);
    state.order_.push_back(v);
    state.queried_mask_[v] = true;
    const auto& nbrs = oracle.adj_[v];
    for (NodeId w : nbrs) state.edges_.insert(Edge::make(v, w));
    return nbrs;
}

enum class EdgeProvenance { explored, inferred };

// G^(t): explored edges union inferred edges, provenance kept per edge.
class WorkingGraph {
public:
    WorkingGraph() = default;
    WorkingGraph(std::size_t node_count, EdgeSet explored, EdgeSet inferred)
        : n_(node_count), explored_(std::move(explored)), inferred_(std::move(inferred)) {}

    std::size_t node_count() const { return n_; }
    std::size_t edge_count() const { return explored_.size() + inferred_.size(); }

    const EdgeSet& explored() const { return explored_; }
    const EdgeSet& inferred() const { return inferred_; }

    bool has_edge(NodeId a, NodeId b) const {
        const Edge e = Edge::make(a, b);
        return explored_.contains(e) || inferred_.contains(e);
    }

    EdgeProvenance provenance(Edge e) const {
        if (explored_.contains(e)) return EdgeProvenance::explored;
        if (inferred_.contains(e)) return EdgeProvenance::inferred;
        throw std::invalid_argument("provenance: edge not present");
    }

    std::vector<Edge> all_edges() const {
        std::vector<Edge> out = explored_.edges();
        out.insert(out.end(), inferred_.begin(), inferred_.end());
        return out;
    }

    std::vector<std::vector<NodeId>> adjacency() const {
        std::vector<std::vector<NodeId>> adj(n_);
        for (const Edge& e : all_edges()) {
            adj[e.u].push_back(e.v);
            adj[e.v].push_back(e.u);
        }
        for (auto& a : adj) std::sort(a.begin(), a.end());
        return adj;
    }

    DegreeStats degree_stats() const { return metacode::degree_stats(n_, all_edges()); }

private:
    std::size_t n_ = 0;
    EdgeSet explored_;
    EdgeSet inferred_;
};

// E^(t) = E_t union E_I. Rejects inferred edges that contradict certainty:
// an edge incident to a queried node that is absent from E_t cannot exist.
inline WorkingGraph merge_inferred(const ExploredState& state, const EdgeSet& inferred) {
    EdgeSet kept;
    for (const Edge& e : inferred) {
        if (e.u >= state.node_count() || e.v >= state.node_count())
            throw std::invalid_argument("merge_inferred: endpoint out of range");
        if (state.explored_edges().contains(e)) continue;  // provenance stays explored
        if (state.is_certain(e.u, e.v))
            throw std::invalid_argument("merge_inferred: inferred edge (" +
                                        std::to_string(e.u) + "," + std::to_string(e.v) +
                                        ") is a certain non-edge");
        kept.insert(e);
    }
    EdgeSet explored;
    for (const Edge& e : state.explored_edges()) explored.insert(e);
    return WorkingGraph(state.node_count(), std::move(explored), std::move(kept));
}

// Drop inferred edges newly contradicted by queries (used between inference
// rounds when infer_every > 1), and fold in ones that became explored.
inline EdgeSet reconcile_inferred(const ExploredState& state, const EdgeSet& inferred) {
    EdgeSet kept;
    for (const Edge& e : inferred) {
        if (state.explored_edges().contains(e)) continue;
        if (state.is_certain(e.u, e.v)) continue;  // contradicted, drop
        kept.insert(e);
    }
    return kept;
}

inline DegreeStats degree_stats(const WorkingGraph& g) { return g.degree_stats(); }

}  // namespace metacode
