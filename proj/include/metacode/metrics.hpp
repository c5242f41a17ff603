#pragma once

// Evaluation: overlapping-cover NMI, best-match average F1, and adjacency
// AUC between the working graph (plus pair scores) and the true network.
//
// NMI treats each community as a binary node-membership variable. For a
// ground-truth community X_i, H(X_i | Y) is the best conditional entropy
// against any detected community Y_j, subject to the validity constraint
// h(a) + h(d) >= h(b) + h(c) on the 2x2 contingency counts (a = neither,
// d = both); communities with no valid match keep their unconditional
// entropy. The final score is 1 - (H(X|Y)/H(X) + H(Y|X)/H(Y)) / 2 with
// sums of per-community entropies. Natural logs throughout; the ratios are
// base-invariant.

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "metacode/data_io.hpp"
#include "metacode/graph.hpp"

namespace metacode {

namespace detail {

inline double h_count(std::size_t count, std::size_t n) {
    if (count == 0 || n == 0) return 0.0;  // 0 log 0 = 0
    const double w = double(count) / double(n);
    return -w * std::log(w);
}

// H(X_i) for a binary membership variable with `size` members of `n` nodes
inline double entropy_binary(std::size_t size, std::size_t n) {
    return h_count(size, n) + h_count(n - size, n);
}

struct Contingency {
    std::size_t a = 0;  // in neither
    std::size_t b = 0;  // only in Y_j
    std::size_t c = 0;  // only in X_i
    std::size_t d = 0;  // in both
};

inline Contingency contingency(const std::vector<NodeId>& xi, const std::vector<NodeId>& yj,
                               std::size_t n) {
    Contingency t;
    std::size_t i = 0, j = 0;
    while (i < xi.size() && j < yj.size()) {
        if (xi[i] == yj[j]) {
            t.d++;
            i++;
            j++;
        } else if (xi[i] < yj[j]) {
            i++;
        } else {
            j++;
        }
    }
    t.c = xi.size() - t.d;
    t.b = yj.size() - t.d;
    t.a = n - t.b - t.c - t.d;
    return t;
}

// H(X_i | Y_j) = H(X_i, Y_j) - H(Y_j), or nullopt when Y_j fails the
// validity constraint.
inline std::optional<double> conditional_entropy(const Contingency& t, std::size_t n) {
    const double ha = h_count(t.a, n), hb = h_count(t.b, n);
    const double hc = h_count(t.c, n), hd = h_count(t.d, n);
    if (ha + hd < hb + hc) return std::nullopt;
    const double joint = ha + hb + hc + hd;
    const double hy = entropy_binary(t.b + t.d, n);
    return joint - hy;
}

// sum over communities of X of the best-match conditional entropy against Y
inline double cover_conditional_entropy(const CommunityCover& x, const CommunityCover& y,
                                        std::size_t n) {
    double total = 0.0;
    for (const auto& xi : x.communities) {
        const double hi = entropy_binary(xi.size(), n);
        double best = hi;  // unmatched communities keep H(X_i)
        for (const auto& yj : y.communities) {
            const auto h = conditional_entropy(contingency(xi, yj, n), n);
            if (h && *h < best) best = *h;
        }
        total += best;
    }
    return total;
}

}  // namespace detail

inline double overlapping_nmi(const CommunityCover& truth, const CommunityCover& detected) {
    if (truth.communities.empty() || detected.communities.empty())
        throw std::invalid_argument("overlapping_nmi: empty cover");
    if (truth.n_nodes != detected.n_nodes)
        throw std::invalid_argument("overlapping_nmi: node universes differ");
    const std::size_t n = truth.n_nodes;

    auto ratio = [&](const CommunityCover& x, const CommunityCover& y) {
        double hx = 0.0;
        for (const auto& c : x.communities) hx += detail::entropy_binary(c.size(), n);
        const double hxy = detail::cover_conditional_entropy(x, y, n);
        if (hx <= 0.0) return hxy > 0.0 ? 1.0 : 0.0;  // degenerate all/none communities
        return hxy / hx;
    };
    const double nmi = 1.0 - 0.5 * (ratio(truth, detected) + ratio(detected, truth));
    return std::min(std::max(nmi, 0.0), 1.0);
}

inline double f1_score(const std::vector<NodeId>& a, const std::vector<NodeId>& b) {
    if (a.empty() || b.empty()) return 0.0;
    std::size_t inter = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) {
            inter++;
            i++;
            j++;
        } else if (a[i] < b[j]) {
            i++;
        } else {
            j++;
        }
    }
    if (inter == 0) return 0.0;
    const double precision = double(inter) / double(b.size());
    const double recall = double(inter) / double(a.size());
    return 2.0 * precision * recall / (precision + recall);
}

// mean best-match F1 in both directions, averaged.
inline double avg_f1(const CommunityCover& truth, const CommunityCover& detected) {
    if (truth.communities.empty() || detected.communities.empty())
        throw std::invalid_argument("avg_f1: empty cover");
    auto one_side = [](const CommunityCover& from, const CommunityCover& to) {
        double total = 0.0;
        for (const auto& c : from.communities) {
            double best = 0.0;
            for (const auto& d : to.communities) best = std::max(best, f1_score(c, d));
            total += best;
        }
        return total / double(from.communities.size());
    };
    return 0.5 * (one_side(truth, detected) + one_side(detected, truth));
}

using PairScores = std::unordered_map<std::uint64_t, double>;

struct AucResult {
    double auc = 0.0;
    bool defined = false;  // false when labels are all-positive or all-negative
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

// Rank-based (Mann-Whitney) AUC over all node pairs: explored edges predict
// 1, certain non-edges 0, uncertain pairs their psi. Labels come from the
// true network through the evaluation handle. Midrank tie handling.
inline AucResult adjacency_auc(const ExploredState& state, const PairScores& scores,
                               const HiddenNetwork::EvalHandle& truth) {
    const std::size_t n = state.node_count();
    std::vector<std::pair<double, char>> ranked;  // (score, label)
    ranked.reserve(n * (n - 1) / 2);
    AucResult r;
    for (NodeId u = 0; u < n; ++u)
        for (NodeId v = u + 1; v < n; ++v) {
            double score;
            if (state.explored_edges().contains(u, v)) {
                score = 1.0;
            } else if (state.is_certain(u, v)) {
                score = 0.0;
            } else {
                const auto it = scores.find(Edge::make(u, v).key());
                score = it == scores.end() ? 0.0 : it->second;
            }
            const bool label = truth.has_edge(u, v);
            ranked.emplace_back(score, label ? 1 : 0);
            if (label) r.positives++; else r.negatives++;
        }
    if (r.positives == 0 || r.negatives == 0) return r;  // undefined
    std::sort(ranked.begin(), ranked.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < ranked.size()) {
        std::size_t j = i;
        while (j < ranked.size() && ranked[j].first == ranked[i].first) j++;
        const double midrank = (double(i + 1) + double(j)) / 2.0;  // 1-based
        for (std::size_t t = i; t < j; ++t)
            if (ranked[t].second) rank_sum_pos += midrank;
        i = j;
    }
    const double np = double(r.positives), nn = double(r.negatives);
    r.auc = (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
    r.defined = true;
    return r;
}

// best-matching detected community for one ground-truth community
struct CommunityMatch {
    std::size_t truth_index = 0;
    int detected_index = -1;  // -1 when nothing intersects
    double f1 = 0.0;
};

inline std::vector<CommunityMatch> best_matches(const CommunityCover& truth,
                                                const CommunityCover& detected) {
    std::vector<CommunityMatch> table;
    for (std::size_t i = 0; i < truth.communities.size(); ++i) {
        CommunityMatch m;
        m.truth_index = i;
        for (std::size_t j = 0; j < detected.communities.size(); ++j) {
            const double f1 = f1_score(truth.communities[i], detected.communities[j]);
            if (f1 > m.f1) {
                m.f1 = f1;
                m.detected_index = int(j);
            }
        }
        table.push_back(m);
    }
    return table;
}

struct MetricReport {
    double nmi = 0.0;
    double avg_f1 = 0.0;
    bool covers_scored = false;  // false when the dataset carries no ground-truth cover
    double auc = 0.0;
    bool auc_defined = false;
    std::vector<CommunityMatch> matches;  // per ground-truth community
};

inline MetricReport evaluate_detection(const CommunityCover& truth,
                                       const CommunityCover& detected,
                                       const ExploredState& state, const PairScores& scores,
                                       const HiddenNetwork::EvalHandle& handle) {
    MetricReport m;
    if (!truth.communities.empty() && !detected.communities.empty()) {
        m.nmi = overlapping_nmi(truth, detected);
        m.avg_f1 = avg_f1(truth, detected);
        m.matches = best_matches(truth, detected);
        m.covers_scored = true;
    }
    const AucResult a = adjacency_auc(state, scores, handle);
    m.auc = a.auc;
    m.auc_defined = a.defined;
    return m;
}

}  // namespace metacode
