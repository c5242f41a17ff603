#pragma once

// Metadata-only initial inference: alternating boolean decomposition of the
// feature matrix into memberships C and prototypes U (X ~= C (x) U, where
// (x) is OR-of-ANDs), then affiliation-model edge sampling from C.

#include <cstdint>
#include <vector>

#include "metacode/data_io.hpp"
#include "metacode/graph.hpp"
#include "metacode/rng.hpp"

namespace metacode {

struct BooleanDecomposition {
    // C: N x K memberships, U: K x D prototypes, both 0/1
    std::vector<std::vector<std::uint8_t>> c;
    std::vector<std::vector<std::uint8_t>> u;
    std::size_t hamming_error = 0;
    std::vector<std::size_t> error_per_round;  // non-increasing by construction
};

namespace detail {

inline std::size_t row_error(std::span<const std::uint8_t> x,
                             const std::vector<std::uint8_t>& membership,
                             const std::vector<std::vector<std::uint8_t>>& u) {
    const std::size_t d = x.size();
    std::size_t err = 0;
    for (std::size_t j = 0; j < d; ++j) {
        std::uint8_t rec = 0;
        for (std::size_t k = 0; k < membership.size() && !rec; ++k)
            rec = membership[k] & u[k][j];
        err += (rec != x[j]) ? 1 : 0;
    }
    return err;
}

inline double jaccard_distance(std::span<const std::uint8_t> a,
                               std::span<const std::uint8_t> b) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        inter += (a[j] & b[j]);
        uni += (a[j] | b[j]);
    }
    if (uni == 0) return 0.0;
    return 1.0 - double(inter) / double(uni);
}

}  // namespace detail

inline std::size_t mac_reconstruction_error(const FeatureMatrix& x,
                                            const BooleanDecomposition& dec) {
    std::size_t err = 0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        err += detail::row_error(x.row(i), dec.c[i], dec.u);
    return err;
}

// Alternating boolean optimization. U starts from k-medoids rows under
// Jaccard distance; then per-node membership bits are greedily flipped while
// the row error drops, and prototype bits are flipped column-exactly while
// the total error drops. Every accepted flip strictly decreases the error,
// so the per-round error trace is non-increasing.
inline BooleanDecomposition mac_decompose(const FeatureMatrix& x, std::size_t k,
                                          std::uint64_t seed, std::size_t max_rounds = 20) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (n == 0 || d == 0) throw std::invalid_argument("mac_decompose: empty features");
    if (k < 1 || k > n) throw std::invalid_argument("mac_decompose: need 1 <= K <= N");

    RngStream rng = RngStream::derive(seed, "mac-init");
    BooleanDecomposition dec;
    dec.u.assign(k, std::vector<std::uint8_t>(d, 0));
    dec.c.assign(n, std::vector<std::uint8_t>(k, 0));

    // --- k-medoids init: greedy farthest-point seeding, then a few
    // assignment/medoid rounds
    std::vector<std::size_t> medoids;
    medoids.push_back(rng.next_index(n));
    while (medoids.size() < k) {
        std::size_t best = 0;
        double best_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            double nearest = 2.0;
            for (std::size_t m : medoids)
                nearest = std::min(nearest, detail::jaccard_distance(x.row(i), x.row(m)));
            if (nearest > best_d) {
                best_d = nearest;
                best = i;
            }
        }
        medoids.push_back(best);
    }
    std::vector<std::size_t> assign(n, 0);
    for (std::size_t round = 0; round < 5; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            double best_d = 2.0;
            for (std::size_t m = 0; m < k; ++m) {
                const double dist = detail::jaccard_distance(x.row(i), x.row(medoids[m]));
                if (dist < best_d) {
                    best_d = dist;
                    assign[i] = m;
                }
            }
        }
        bool changed = false;
        for (std::size_t m = 0; m < k; ++m) {
            // medoid = member minimizing summed distance to its cluster
            double best_cost = -1.0;
            std::size_t best_row = medoids[m];
            for (std::size_t i = 0; i < n; ++i) {
                if (assign[i] != m) continue;
                double cost = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    if (assign[j] == m)
                        cost += detail::jaccard_distance(x.row(i), x.row(j));
                if (best_cost < 0.0 || cost < best_cost) {
                    best_cost = cost;
                    best_row = i;
                }
            }
            if (best_row != medoids[m]) {
                medoids[m] = best_row;
                changed = true;
            }
        }
        if (!changed) break;
    }
    for (std::size_t m = 0; m < k; ++m)
        for (std::size_t j = 0; j < d; ++j) dec.u[m][j] = x(medoids[m], j);

    // --- alternating rounds
    auto membership_pass = [&]() {
        for (std::size_t i = 0; i < n; ++i) {
            auto& row = dec.c[i];
            std::size_t err = detail::row_error(x.row(i), row, dec.u);
            bool improved = true;
            while (improved) {
                improved = false;
                for (std::size_t m = 0; m < k; ++m) {
                    row[m] ^= 1;
                    const std::size_t cand = detail::row_error(x.row(i), row, dec.u);
                    if (cand < err) {
                        err = cand;
                        improved = true;
                    } else {
                        row[m] ^= 1;
                    }
                }
            }
        }
    };
    auto prototype_pass = [&]() {
        // For fixed C the columns are independent; flipping U_kj only affects
        // rows with C_ik = 1, so the exact delta per flip is cheap.
        for (std::size_t m = 0; m < k; ++m) {
            for (std::size_t j = 0; j < d; ++j) {
                long long delta = 0;  // error(U_kj flipped) - error(U_kj as-is)
                for (std::size_t i = 0; i < n; ++i) {
                    if (!dec.c[i][m]) continue;
                    std::uint8_t others = 0;
                    for (std::size_t m2 = 0; m2 < k && !others; ++m2)
                        if (m2 != m) others = dec.c[i][m2] & dec.u[m2][j];
                    if (others) continue;  // covered either way
                    const std::uint8_t cur = dec.u[m][j];
                    const std::uint8_t xv = x(i, j);
                    delta += (xv != (cur ^ 1)) - (xv != cur);
                }
                if (delta < 0) dec.u[m][j] ^= 1;
            }
        }
    };

    std::size_t prev = mac_reconstruction_error(x, dec);
    dec.error_per_round.push_back(prev);
    for (std::size_t round = 0; round < max_rounds; ++round) {
        membership_pass();
        prototype_pass();
        const std::size_t cur = mac_reconstruction_error(x, dec);
        dec.error_per_round.push_back(cur);
        if (cur == prev) break;
        prev = cur;
    }

    // Empty memberships would isolate nodes under the affiliation model
    // forever; assign the single best community instead.
    for (std::size_t i = 0; i < n; ++i) {
        bool any = false;
        for (std::size_t m = 0; m < k; ++m) any = any || dec.c[i][m];
        if (any) continue;
        std::size_t best = 0;
        std::size_t best_err = SIZE_MAX;
        for (std::size_t m = 0; m < k; ++m) {
            dec.c[i][m] = 1;
            const std::size_t e = detail::row_error(x.row(i), dec.c[i], dec.u);
            dec.c[i][m] = 0;
            if (e < best_err) {
                best_err = e;
                best = m;
            }
        }
        dec.c[i][best] = 1;
    }
    // degenerate all-zero prototypes get the majority column of their members
    for (std::size_t m = 0; m < k; ++m) {
        bool any = false;
        for (std::size_t j = 0; j < d; ++j) any = any || dec.u[m][j];
        if (!any) {
            std::size_t best_j = 0, best_ones = 0;
            for (std::size_t j = 0; j < d; ++j) {
                std::size_t ones = 0;
                for (std::size_t i = 0; i < n; ++i)
                    if (dec.c[i][m] && x(i, j)) ones++;
                if (ones > best_ones) {
                    best_ones = ones;
                    best_j = j;
                }
            }
            dec.u[m][best_j] = 1;
        }
    }

    dec.hamming_error = mac_reconstruction_error(x, dec);
    return dec;
}

inline CommunityCover cover_from_memberships(
    const std::vector<std::vector<std::uint8_t>>& c, std::size_t n_nodes) {
    CommunityCover cover;
    cover.n_nodes = n_nodes;
    if (c.empty()) return cover;
    cover.communities.assign(c[0].size(), {});
    for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t m = 0; m < c[i].size(); ++m)
            if (c[i][m]) cover.communities[m].push_back(NodeId(i));
    return cover;
}

// E^(0): affiliation-model sample driven by the boolean memberships.
inline EdgeSet agm_sample_initial(const std::vector<std::vector<std::uint8_t>>& c,
                                  std::size_t n_nodes, double p, std::uint64_t seed) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("agm_sample_initial: bad p");
    RngStream rng = RngStream::derive(seed, "agm-initial");
    const CommunityCover cover = cover_from_memberships(c, n_nodes);
    return agm_sample_edges(cover, p, rng);
}

}  // namespace metacode
