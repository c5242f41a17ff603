#pragma once

// Dataset ingestion and synthesis: the SNAP ego-network format, a canonical
// on-disk bundle, the affiliation-model generator, Erdos-Renyi graphs, and
// theorem-instance construction with an independent assumption checker.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "metacode/graph.hpp"
#include "metacode/rng.hpp"

namespace metacode {

// ---------------------------------------------------------------------------
// core dataset types

// N x D binary node metadata.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), bits_(rows * cols, 0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    std::uint8_t operator()(std::size_t i, std::size_t j) const {
        return bits_[i * cols_ + j];
    }
    void set(std::size_t i, std::size_t j, bool v) { bits_[i * cols_ + j] = v ? 1 : 0; }

    std::span<const std::uint8_t> row(std::size_t i) const {
        return {bits_.data() + i * cols_, cols_};
    }

    bool operator==(const FeatureMatrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && bits_ == o.bits_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> bits_;
};

// A set of (possibly overlapping) node sets. Members are kept sorted; a node
// may belong to any number of communities, including zero for real data.
struct CommunityCover {
    std::size_t n_nodes = 0;
    std::vector<std::vector<NodeId>> communities;

    std::size_t k() const { return communities.size(); }

    void canonicalize() {
        for (auto& c : communities) {
            std::sort(c.begin(), c.end());
            c.erase(std::unique(c.begin(), c.end()), c.end());
        }
    }

    std::vector<std::size_t> membership_counts() const {
        std::vector<std::size_t> m(n_nodes, 0);
        for (const auto& c : communities)
            for (NodeId v : c) m[v]++;
        return m;
    }

    // c_uv table is quadratic; callers needing shared counts per pair use
    // shared_count on demand instead.
    std::size_t shared_count(NodeId u, NodeId v) const {
        std::size_t c = 0;
        for (const auto& comm : communities) {
            const bool inu = std::binary_search(comm.begin(), comm.end(), u);
            const bool inv = std::binary_search(comm.begin(), comm.end(), v);
            if (inu && inv) c++;
        }
        return c;
    }

    bool operator==(const CommunityCover& o) const {
        return n_nodes == o.n_nodes && communities == o.communities;
    }
};

struct DatasetBundle {
    std::string name;
    HiddenNetwork hidden;
    FeatureMatrix features;
    CommunityCover truth;

    std::size_t node_count() const { return hidden.node_count(); }
};

// ---------------------------------------------------------------------------
// affiliation-model sampling (shared by the generator and initial inference)

// Edge probability for a pair sharing c communities: 1 - (1-p)^c.
inline double agm_pair_probability(std::size_t c, double p) {
    if (c == 0) return 0.0;
    return 1.0 - std::pow(1.0 - p, double(c));
}

// Samples edges by flipping one p-coin per (pair, shared community); the
// union gives exactly the 1-(1-p)^c law and never touches c_uv = 0 pairs.
inline EdgeSet agm_sample_edges(const CommunityCover& memberships, double p, RngStream& rng) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("agm_sample_edges: need 0 < p < 1");
    EdgeSet edges;
    for (const auto& comm : memberships.communities) {
        for (std::size_t i = 0; i < comm.size(); ++i)
            for (std::size_t j = i + 1; j < comm.size(); ++j)
                if (rng.bernoulli(p)) edges.insert(Edge::make(comm[i], comm[j]));
    }
    return edges;
}

struct FeatureGenSpec {
    std::size_t d = 64;
    double density = 0.2;   // prototype bit rate
    double flip_noise = 0.01;
};

// Community prototypes OR-ed per node, then bit-flip noise. Keeps the
// metadata consistent with the boolean-decomposition story the initial
// inference assumes.
inline FeatureMatrix generate_features(const CommunityCover& memberships,
                                       const FeatureGenSpec& spec, RngStream& rng) {
    const std::size_t k = memberships.k();
    const std::size_t n = memberships.n_nodes;
    std::vector<std::vector<std::uint8_t>> prototypes(k, std::vector<std::uint8_t>(spec.d, 0));
    for (std::size_t c = 0; c < k; ++c) {
        bool any = false;
        for (std::size_t d = 0; d < spec.d; ++d) {
            prototypes[c][d] = rng.bernoulli(spec.density) ? 1 : 0;
            any = any || prototypes[c][d];
        }
        if (!any) prototypes[c][rng.next_index(spec.d)] = 1;  // no silent community
    }
    FeatureMatrix x(n, spec.d);
    for (std::size_t c = 0; c < k; ++c)
        for (NodeId v : memberships.communities[c])
            for (std::size_t d = 0; d < spec.d; ++d)
                if (prototypes[c][d]) x.set(v, d, true);
    for (std::size_t v = 0; v < n; ++v)
        for (std::size_t d = 0; d < spec.d; ++d)
            if (rng.bernoulli(spec.flip_noise)) x.set(v, d, !x(v, d));
    return x;
}

struct AgmSpec {
    std::size_t n = 0;
    double p = 0.1;
    CommunityCover memberships;  // must cover every node
    FeatureGenSpec features;
    std::uint64_t seed = 0;
    std::string name = "agm";
};

inline void validate_agm_spec(const AgmSpec& spec) {
    if (!(spec.p > 0.0 && spec.p < 1.0)) throw std::invalid_argument("AgmSpec: need 0 < p < 1");
    if (spec.memberships.n_nodes != spec.n)
        throw std::invalid_argument("AgmSpec: membership node count mismatch");
    const auto counts = spec.memberships.membership_counts();
    for (std::size_t v = 0; v < counts.size(); ++v)
        if (counts[v] == 0)
            throw std::invalid_argument("AgmSpec: node " + std::to_string(v) +
                                        " belongs to no community");
}

inline DatasetBundle generate_agm(const AgmSpec& spec) {
    validate_agm_spec(spec);
    RngStream edge_rng = RngStream::derive(spec.seed, "agm-edges");
    RngStream feat_rng = RngStream::derive(spec.seed, "agm-features");
    DatasetBundle b;
    b.name = spec.name;
    b.truth = spec.memberships;
    b.truth.canonicalize();
    EdgeSet edges = agm_sample_edges(b.truth, spec.p, edge_rng);
    b.hidden = HiddenNetwork::from_edges(spec.n, edges.sorted());
    b.features = generate_features(b.truth, spec.features, feat_rng);
    return b;
}

// Equal-size blocks over [0, n) where consecutive blocks share `overlap`
// nodes; a convenient planted cover for the synthetic experiments.
inline CommunityCover make_overlapping_blocks(std::size_t n, std::size_t k,
                                              std::size_t overlap) {
    if (k == 0 || n == 0) throw std::invalid_argument("make_overlapping_blocks: empty");
    CommunityCover cover;
    cover.n_nodes = n;
    const double step = double(n) / double(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t lo = std::size_t(i * step);
        std::size_t hi = (i + 1 == k) ? n : std::size_t((i + 1) * step) + overlap;
        hi = std::min(hi, n);
        std::vector<NodeId> c;
        for (std::size_t v = lo; v < hi; ++v) c.push_back(NodeId(v));
        cover.communities.push_back(std::move(c));
    }
    cover.canonicalize();
    return cover;
}

// ---------------------------------------------------------------------------
// Erdos-Renyi G(n, q)

inline HiddenNetwork generate_er(std::size_t n, double q, std::uint64_t seed) {
    if (q < 0.0 || q > 1.0) throw std::invalid_argument("generate_er: q out of [0,1]");
    RngStream rng = RngStream::derive(seed, "er-edges");
    std::vector<Edge> edges;
    if (q >= 1.0) {
        for (NodeId u = 0; u < n; ++u)
            for (NodeId v = u + 1; v < n; ++v) edges.push_back({u, v});
    } else if (q > 0.0) {
        // geometric skipping over the pair sequence
        const double log1q = std::log1p(-q);
        const std::size_t total = n * (n - 1) / 2;
        std::size_t idx = 0;
        while (true) {
            double u = rng.next_double();
            while (u <= 0.0) u = rng.next_double();
            idx += std::size_t(std::floor(std::log(u) / log1q)) + 1;
            if (idx > total) break;
            // map pair index (1-based) to (a, b)
            std::size_t r = idx - 1;
            NodeId a = 0;
            std::size_t row = n - 1;
            while (r >= row) {
                r -= row;
                row--;
                a++;
            }
            edges.push_back({a, NodeId(a + 1 + r)});
        }
    }
    return HiddenNetwork::from_edges(n, std::move(edges));
}

// ---------------------------------------------------------------------------
// theorem-instance generation

struct AssumptionCheck {
    bool size_ok = false;        // N_max - N_min <= eps
    bool hypothesis_ok = false;  // eps <= (N_min - 1)/K - 1
    bool fraction_ok = false;    // N_1 / N <= 2/3
    bool degree_ok = false;      // E[D|A_1] N_1 >= sum_{i>=2} E[D|A_i] N_i
    std::size_t n_min = 0, n_max = 0;
    std::vector<std::size_t> multiplicity_counts;  // N_1..N_K
    std::vector<double> class_expected_degree;     // closed form per class
    std::string failure;

    bool all() const { return size_ok && hypothesis_ok && fraction_ok && degree_ok; }
};

// Closed-form expected degree of node v under the per-community binomial
// model: p * sum over v's communities of (|C| - 1).
inline double closed_form_degree(const CommunityCover& cover, NodeId v, double p) {
    double s = 0.0;
    for (const auto& c : cover.communities)
        if (std::binary_search(c.begin(), c.end(), v)) s += double(c.size() - 1);
    return p * s;
}

// Independent of the generator: reads only the cover, recomputes sizes,
// multiplicity classes and the closed-form degree ladder.
inline AssumptionCheck check_assumptions(const CommunityCover& cover, double p, double eps) {
    AssumptionCheck r;
    const std::size_t k = cover.k();
    if (k < 2) {
        r.failure = "need K >= 2 communities";
        return r;
    }
    r.n_min = SIZE_MAX;
    for (const auto& c : cover.communities) {
        r.n_min = std::min(r.n_min, c.size());
        r.n_max = std::max(r.n_max, c.size());
    }
    r.size_ok = double(r.n_max - r.n_min) <= eps + 1e-12;
    if (!r.size_ok) r.failure = "community size spread exceeds eps";
    r.hypothesis_ok = eps <= (double(r.n_min) - 1.0) / double(k) - 1.0 + 1e-12;
    if (!r.hypothesis_ok && r.failure.empty())
        r.failure = "eps exceeds (N_min-1)/K - 1 theorem hypothesis";

    const auto mult = cover.membership_counts();
    r.multiplicity_counts.assign(k, 0);
    // sum over class members of sum_{C containing v} (|C|-1); the common
    // factor p cancels in the degree balance, so the comparison is exact in integers
    std::vector<unsigned long long> size_sum(k, 0);
    for (std::size_t v = 0; v < cover.n_nodes; ++v) {
        if (mult[v] == 0 || mult[v] > k) {
            r.failure = "node multiplicity outside [1, K]";
            return r;
        }
        r.multiplicity_counts[mult[v] - 1]++;
        unsigned long long s = 0;
        for (const auto& c : cover.communities)
            if (std::binary_search(c.begin(), c.end(), NodeId(v))) s += c.size() - 1;
        size_sum[mult[v] - 1] += s;
    }
    r.class_expected_degree.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        if (r.multiplicity_counts[i] > 0)
            r.class_expected_degree[i] =
                p * double(size_sum[i]) / double(r.multiplicity_counts[i]);

    r.fraction_ok =
        3 * r.multiplicity_counts[0] <= 2 * cover.n_nodes;  // N_1/N <= 2/3, exact in integers
    if (!r.fraction_ok && r.failure.empty())
        r.failure = "multiplicity-1 fraction N_1/N exceeds 2/3";
    unsigned long long rhs = 0;
    for (std::size_t i = 1; i < k; ++i) rhs += size_sum[i];
    r.degree_ok = size_sum[0] >= rhs;
    if (!r.degree_ok && r.failure.empty())
        r.failure = "degree balance violated: E[D|A_1] N_1 < sum_{i>=2} E[D|A_i] N_i";
    return r;
}

struct TheoremInstance {
    DatasetBundle bundle;
    std::vector<std::size_t> multiplicity;  // per node
    AssumptionCheck check;
    double p = 0.0;
    double epsilon = 0.0;
};

class InfeasibleProfileError : public std::runtime_error {
public:
    InfeasibleProfileError(std::string msg, AssumptionCheck check)
        : std::runtime_error(std::move(msg)), check(std::move(check)) {}
    AssumptionCheck check;
};

namespace detail {

// Builds a cover from explicit exclusive counts per community and overlap
// counts per community pair (lexicographic pair order).
inline CommunityCover build_cover(std::size_t k, const std::vector<std::size_t>& exclusive,
                                  const std::vector<std::vector<std::size_t>>& pair_overlap,
                                  std::size_t triple_overlap) {
    CommunityCover cover;
    cover.communities.assign(k, {});
    NodeId next = 0;
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < exclusive[j]; ++i)
            cover.communities[j].push_back(next++);
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b)
            for (std::size_t i = 0; i < pair_overlap[a][b]; ++i) {
                cover.communities[a].push_back(next);
                cover.communities[b].push_back(next);
                next++;
            }
    for (std::size_t i = 0; i < triple_overlap; ++i) {
        for (std::size_t j = 0; j < std::min<std::size_t>(3, k); ++j)
            cover.communities[j].push_back(next);
        next++;
    }
    cover.n_nodes = next;
    cover.canonicalize();
    return cover;
}

}  // namespace detail

// Constructs an instance satisfying the assumptions, or reports why the
// requested multiplicity profile cannot satisfy them. With near-equal sizes
// the fraction and degree-balance bounds pinch the profile to N_1 : N_2 = 2 : 1 and no
// higher multiplicities; slack only appears through size skew inside the eps
// window, which the constructions below exploit.
inline TheoremInstance generate_theorem_instance(std::size_t k, std::size_t n_min, double eps,
                                                 double p,
                                                 std::optional<std::vector<double>> profile,
                                                 std::uint64_t seed,
                                                 const FeatureGenSpec& feat = {}) {
    if (k < 2) throw std::invalid_argument("generate_theorem_instance: K >= 2 required");
    if (n_min < 4) throw std::invalid_argument("generate_theorem_instance: N_min too small");
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("generate_theorem_instance: bad p");

    CommunityCover cover;
    if (profile) {
        // Honor the requested multiplicity fractions with near-equal sizes,
        // then let the checker rule.
        if (profile->size() != k)
            throw std::invalid_argument("profile must have K entries");
        double tot = 0.0;
        for (double f : *profile) tot += f;
        if (tot <= 0.0) throw std::invalid_argument("profile fractions must sum > 0");
        // scale so each community hits roughly n_min members
        double member_units = 0.0;
        for (std::size_t i = 0; i < k; ++i) member_units += (*profile)[i] / tot * double(i + 1);
        const std::size_t n = std::size_t(std::ceil(double(n_min) * double(k) / member_units));
        std::vector<std::size_t> counts(k, 0);
        std::size_t assigned = 0;
        for (std::size_t i = 0; i < k; ++i) {
            counts[i] = std::size_t(std::floor((*profile)[i] / tot * double(n)));
            assigned += counts[i];
        }
        counts[0] += n - assigned;
        std::vector<std::size_t> exclusive(k, counts[0] / k);
        for (std::size_t j = 0; j < counts[0] % k; ++j) exclusive[j]++;
        std::vector<std::vector<std::size_t>> pairs(k, std::vector<std::size_t>(k, 0));
        if (k == 2) {
            pairs[0][1] = counts[1];
        } else {
            // spread multiplicity-2 nodes over the pair cycle (j, j+1)
            for (std::size_t j = 0; j < k; ++j) {
                const std::size_t a = j, b = (j + 1) % k;
                pairs[std::min(a, b)][std::max(a, b)] += counts[1] / k;
            }
            pairs[0][1] += counts[1] % k;
        }
        const std::size_t triples = k >= 3 ? counts[2] : 0;
        for (std::size_t i = 3; i < k; ++i)
            if (counts[i] > 0)
                throw std::invalid_argument(
                    "profiles with multiplicity > 3 are not constructible here");
        cover = detail::build_cover(k, exclusive, pairs, triples);
    } else if (k == 2) {
        // sizes S1 = n_min + e, S2 = n_min with shared block w: the fraction
        // bound wants 4w >= S1 + S2 while the degree balance wants
        // (S1 - 2w)(S1 - 1) + (S2 - 2w)(S2 - 1) >= 0. The feasible w window
        // can be empty for some spreads, so scan e downward.
        bool found = false;
        for (std::size_t e = std::min<std::size_t>(std::size_t(eps), n_min / 2) + 1;
             !found && e-- > 0;) {
            const std::size_t s1 = n_min + e, s2 = n_min;
            for (std::size_t w = (s1 + s2 + 3) / 4; w + 2 <= s2; ++w) {
                const auto ll = [](std::size_t v) { return static_cast<long long>(v); };
                const long long lhs = (ll(s1) - 2 * ll(w)) * ll(s1 - 1);
                const long long rhs = (2 * ll(w) - ll(s2)) * ll(s2 - 1);
                if (lhs < rhs) break;
                std::vector<std::size_t> exclusive = {s1 - w, s2 - w};
                std::vector<std::vector<std::size_t>> pairs(2, std::vector<std::size_t>(2, 0));
                pairs[0][1] = w;
                CommunityCover cand = detail::build_cover(2, exclusive, pairs, 0);
                if (check_assumptions(cand, p, eps).all()) {
                    cover = std::move(cand);
                    found = true;
                    break;
                }
            }
        }
        if (!found) {
            AssumptionCheck c;
            c.failure = "no integer overlap satisfies the degree balance for these sizes";
            throw InfeasibleProfileError(c.failure, c);
        }
    } else {
        // Community 0 enlarged by g within the eps window; overlaps sit on
        // the pair cycle with weight wa on pairs touching community 0 and wb
        // elsewhere. A small exact scan finds integer (g, wa, wb) satisfying
        // both balance conditions; the assumptions pinch, so margins are thin
        // but the checker below is the arbiter.
        bool found = false;
        const std::size_t gmax = std::min<std::size_t>(std::size_t(eps), n_min / 3);
        for (std::size_t g = gmax; !found && g + 1 > 0; --g) {
            for (std::size_t wa = 1; !found && wa < n_min / 2; ++wa) {
                for (std::size_t wb = 1; !found && wa + wb < n_min; ++wb) {
                    std::vector<std::size_t> sizes(k, n_min);
                    sizes[0] += g;
                    std::vector<std::vector<std::size_t>> pairs(
                        k, std::vector<std::size_t>(k, 0));
                    std::vector<std::size_t> overlap_in(k, 0);
                    bool ok = true;
                    for (std::size_t j = 0; j < k && ok; ++j) {
                        const std::size_t a = j, b = (j + 1) % k;
                        const std::size_t w = (a == 0 || b == 0) ? wa : wb;
                        pairs[std::min(a, b)][std::max(a, b)] += w;
                        overlap_in[a] += w;
                        overlap_in[b] += w;
                    }
                    std::vector<std::size_t> exclusive(k);
                    for (std::size_t j = 0; j < k && ok; ++j) {
                        if (overlap_in[j] + 2 > sizes[j]) ok = false;
                        else exclusive[j] = sizes[j] - overlap_in[j];
                    }
                    if (!ok) continue;
                    CommunityCover cand = detail::build_cover(k, exclusive, pairs, 0);
                    if (check_assumptions(cand, p, eps).all()) {
                        cover = std::move(cand);
                        found = true;
                    }
                }
            }
            if (g == 0) break;
        }
        if (!found) {
            AssumptionCheck c;
            c.failure = "no integer overlap layout satisfies the degree balance for these sizes";
            throw InfeasibleProfileError(c.failure, c);
        }
    }

    AssumptionCheck check = check_assumptions(cover, p, eps);
    if (!check.all())
        throw InfeasibleProfileError("theorem instance infeasible: " + check.failure, check);

    AgmSpec spec;
    spec.n = cover.n_nodes;
    spec.p = p;
    spec.memberships = cover;
    spec.features = feat;
    spec.seed = seed;
    spec.name = "theorem-K" + std::to_string(k);
    TheoremInstance inst;
    inst.bundle = generate_agm(spec);
    inst.multiplicity = cover.membership_counts();
    inst.check = check;
    inst.p = p;
    inst.epsilon = eps;
    return inst;
}

// ---------------------------------------------------------------------------
// canonical bundle format: one JSON header line, then #edges / #features /
// #communities sections. Checksummed so truncation is caught loudly.

namespace detail {

inline std::string bundle_payload(const DatasetBundle& b) {
    std::ostringstream out;
    out << "#edges\n";
    const auto handle = b.hidden.evaluation_handle();
    std::vector<Edge> edges = handle.edges();
    std::sort(edges.begin(), edges.end());
    for (const Edge& e : edges) out << e.u << '\t' << e.v << '\n';
    out << "#features\n";
    for (std::size_t i = 0; i < b.features.rows(); ++i) {
        for (std::size_t j = 0; j < b.features.cols(); ++j)
            out << (b.features(i, j) ? '1' : '0');
        out << '\n';
    }
    out << "#communities\n";
    for (const auto& c : b.truth.communities) {
        for (std::size_t i = 0; i < c.size(); ++i) out << (i ? " " : "") << c[i];
        out << '\n';
    }
    return out.str();
}

}  // namespace detail

inline void save_bundle(const DatasetBundle& b, const std::filesystem::path& path) {
    const std::string payload = detail::bundle_payload(b);
    nlohmann::json header;
    header["format"] = "metacode-bundle";
    header["version"] = 1;
    header["name"] = b.name;
    header["nodes"] = b.hidden.node_count();
    header["edges"] = b.hidden.evaluation_handle().edge_count();
    header["features"] = b.features.cols();
    header["communities"] = b.truth.k();
    std::ostringstream chk;
    chk << std::hex << fnv1a64(payload);
    header["checksum"] = chk.str();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_bundle: cannot open " + path.string());
    out << header.dump() << '\n' << payload;
    if (!out) throw std::runtime_error("save_bundle: write failed for " + path.string());
}

inline DatasetBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_bundle: cannot open " + path.string());
    std::string header_line;
    if (!std::getline(in, header_line))
        throw std::runtime_error("load_bundle: empty file " + path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_bundle: bad header: " + std::string(e.what()));
    }
    if (header.value("format", "") != "metacode-bundle")
        throw std::runtime_error("load_bundle: not a bundle file");
    if (header.value("version", -1) != 1)
        throw std::runtime_error("load_bundle: unsupported version " +
                                 std::to_string(header.value("version", -1)));
    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ostringstream chk;
    chk << std::hex << fnv1a64(payload);
    if (chk.str() != header.value("checksum", ""))
        throw std::runtime_error("load_bundle: checksum mismatch (truncated or corrupted)");

    const std::size_t n = header.at("nodes").get<std::size_t>();
    const std::size_t n_edges = header.at("edges").get<std::size_t>();
    const std::size_t d = header.at("features").get<std::size_t>();
    const std::size_t k = header.at("communities").get<std::size_t>();

    DatasetBundle b;
    b.name = header.value("name", "");
    std::istringstream body(payload);
    std::string line;
    auto expect = [&](const char* tag) {
        if (!std::getline(body, line) || line != tag)
            throw std::runtime_error(std::string("load_bundle: expected section ") + tag);
    };
    expect("#edges");
    std::vector<Edge> edges;
    edges.reserve(n_edges);
    for (std::size_t i = 0; i < n_edges; ++i) {
        if (!std::getline(body, line))
            throw std::runtime_error("load_bundle: edge section truncated");
        std::istringstream ls(line);
        NodeId u, v;
        if (!(ls >> u >> v)) throw std::runtime_error("load_bundle: bad edge line: " + line);
        edges.push_back(Edge::make(u, v));
    }
    b.hidden = HiddenNetwork::from_edges(n, std::move(edges));
    expect("#features");
    b.features = FeatureMatrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(body, line) || line.size() != d)
            throw std::runtime_error("load_bundle: feature row " + std::to_string(i) +
                                     " malformed");
        for (std::size_t j = 0; j < d; ++j) b.features.set(i, j, line[j] == '1');
    }
    expect("#communities");
    b.truth.n_nodes = n;
    for (std::size_t c = 0; c < k; ++c) {
        if (!std::getline(body, line))
            throw std::runtime_error("load_bundle: community section truncated");
        std::istringstream ls(line);
        std::vector<NodeId> comm;
        NodeId v;
        while (ls >> v) {
            if (v >= n) throw std::runtime_error("load_bundle: community member out of range");
            comm.push_back(v);
        }
        b.truth.communities.push_back(std::move(comm));
    }
    b.truth.canonicalize();
    return b;
}

// ---------------------------------------------------------------------------
// cover files: one community per line, space-separated node ids

inline void write_cover_file(const CommunityCover& cover, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_cover_file: cannot open " + path.string());
    for (const auto& c : cover.communities) {
        for (std::size_t i = 0; i < c.size(); ++i) out << (i ? " " : "") << c[i];
        out << '\n';
    }
}

// n_nodes is max id + 1 across the file unless a larger universe is given.
inline CommunityCover read_cover_file(const std::filesystem::path& path,
                                      std::size_t n_nodes = 0) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_cover_file: cannot open " + path.string());
    CommunityCover cover;
    std::string line;
    std::size_t ln = 0;
    NodeId max_id = 0;
    bool any = false;
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<NodeId> comm;
        long long raw;
        while (ls >> raw) {
            if (raw < 0)
                throw std::runtime_error(path.string() + ":" + std::to_string(ln) +
                                         ": negative node id");
            comm.push_back(NodeId(raw));
            max_id = std::max(max_id, NodeId(raw));
            any = true;
        }
        if (!comm.empty()) cover.communities.push_back(std::move(comm));
    }
    cover.n_nodes = std::max<std::size_t>(n_nodes, any ? max_id + 1 : 0);
    cover.canonicalize();
    return cover;
}

// ---------------------------------------------------------------------------
// SNAP ego-network format: <prefix>.edges/.feat/.egofeat/.circles

struct EgoLoadOptions {
    bool largest_component_only = false;
    bool prune_zero_columns = false;
};

struct EgoLoadResult {
    DatasetBundle bundle;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("load_ego_snap: missing file " + p.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

}  // namespace detail

// The ego node itself appears in no file except .egofeat; it is appended as
// the last dense index, connected to every alter listed in .feat.
inline EgoLoadResult load_ego_snap(const std::string& path_prefix,
                                   const EgoLoadOptions& opt = {}) {
    namespace fs = std::filesystem;
    EgoLoadResult result;
    const auto feat_lines = detail::read_lines(path_prefix + ".feat");
    const auto egofeat_lines = detail::read_lines(path_prefix + ".egofeat");
    const auto edge_lines = detail::read_lines(path_prefix + ".edges");
    const auto circle_lines = detail::read_lines(path_prefix + ".circles");

    // .feat: "alterId bit bit ..."
    std::unordered_map<long long, NodeId> dense;
    std::vector<std::vector<std::uint8_t>> rows;
    std::optional<std::size_t> d;
    for (std::size_t ln = 0; ln < feat_lines.size(); ++ln) {
        if (feat_lines[ln].empty()) continue;
        std::istringstream ls(feat_lines[ln]);
        long long raw;
        if (!(ls >> raw))
            throw std::runtime_error(path_prefix + ".feat:" + std::to_string(ln + 1) +
                                     ": bad node id");
        std::vector<std::uint8_t> bits;
        int b;
        while (ls >> b) bits.push_back(b ? 1 : 0);
        if (!d) d = bits.size();
        if (bits.size() != *d)
            throw std::runtime_error(path_prefix + ".feat:" + std::to_string(ln + 1) +
                                     ": ragged feature row (" + std::to_string(bits.size()) +
                                     " vs " + std::to_string(*d) + ")");
        if (dense.count(raw))
            throw std::runtime_error(path_prefix + ".feat:" + std::to_string(ln + 1) +
                                     ": duplicate node id");
        dense[raw] = NodeId(rows.size());
        rows.push_back(std::move(bits));
    }
    if (!d) throw std::runtime_error(path_prefix + ".feat: no feature rows");

    // .egofeat: a single row of bits for the ego
    {
        std::vector<std::uint8_t> bits;
        for (std::size_t ln = 0; ln < egofeat_lines.size(); ++ln) {
            if (egofeat_lines[ln].empty()) continue;
            std::istringstream ls(egofeat_lines[ln]);
            int b;
            while (ls >> b) bits.push_back(b ? 1 : 0);
            break;
        }
        if (bits.size() != *d)
            throw std::runtime_error(path_prefix + ".egofeat:1: ragged feature row (" +
                                     std::to_string(bits.size()) + " vs " +
                                     std::to_string(*d) + ")");
        rows.push_back(std::move(bits));
    }
    const NodeId ego = NodeId(rows.size() - 1);
    const std::size_t n = rows.size();

    std::vector<Edge> edges;
    for (std::size_t ln = 0; ln < edge_lines.size(); ++ln) {
        if (edge_lines[ln].empty()) continue;
        std::istringstream ls(edge_lines[ln]);
        long long a, b;
        if (!(ls >> a >> b))
            throw std::runtime_error(path_prefix + ".edges:" + std::to_string(ln + 1) +
                                     ": bad edge line");
        auto ia = dense.find(a);
        auto ib = dense.find(b);
        if (ia == dense.end() || ib == dense.end())
            throw std::runtime_error(path_prefix + ".edges:" + std::to_string(ln + 1) +
                                     ": edge references node absent from .feat");
        if (ia->second == ib->second) continue;
        edges.push_back(Edge::make(ia->second, ib->second));
    }
    for (NodeId alter = 0; alter < ego; ++alter) edges.push_back(Edge::make(ego, alter));

    CommunityCover truth;
    truth.n_nodes = n;
    for (std::size_t ln = 0; ln < circle_lines.size(); ++ln) {
        if (circle_lines[ln].empty()) continue;
        std::istringstream ls(circle_lines[ln]);
        std::string name;
        ls >> name;  // circle label
        std::vector<NodeId> comm;
        long long raw;
        while (ls >> raw) {
            auto it = dense.find(raw);
            if (it == dense.end())
                throw std::runtime_error(path_prefix + ".circles:" + std::to_string(ln + 1) +
                                         ": circle references unknown node " +
                                         std::to_string(raw));
            comm.push_back(it->second);
        }
        if (comm.empty()) {
            result.warnings.push_back(path_prefix + ".circles:" + std::to_string(ln + 1) +
                                      ": empty circle skipped");
            continue;
        }
        truth.communities.push_back(std::move(comm));
    }
    if (truth.communities.empty())
        result.warnings.push_back(path_prefix + ".circles: no circles; cover is empty");
    truth.canonicalize();

    DatasetBundle b;
    b.name = fs::path(path_prefix).filename().string();
    b.hidden = HiddenNetwork::from_edges(n, std::move(edges));
    b.truth = std::move(truth);
    FeatureMatrix x(n, *d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < *d; ++j) x.set(i, j, rows[i][j]);
    b.features = std::move(x);

    if (opt.largest_component_only) {
        const auto handle = b.hidden.evaluation_handle();
        std::vector<int> comp(n, -1);
        int n_comp = 0;
        for (NodeId s = 0; s < n; ++s) {
            if (comp[s] != -1) continue;
            std::vector<NodeId> stack{s};
            comp[s] = n_comp;
            while (!stack.empty()) {
                NodeId v = stack.back();
                stack.pop_back();
                for (NodeId w : handle.neighbors(v))
                    if (comp[w] == -1) {
                        comp[w] = n_comp;
                        stack.push_back(w);
                    }
            }
            n_comp++;
        }
        std::vector<std::size_t> size(n_comp, 0);
        for (NodeId v = 0; v < n; ++v) size[comp[v]]++;
        const int big = int(std::max_element(size.begin(), size.end()) - size.begin());
        std::vector<NodeId> remap(n, 0);
        NodeId next = 0;
        for (NodeId v = 0; v < n; ++v)
            if (comp[v] == big) remap[v] = next++;
        std::vector<Edge> kept;
        for (const Edge& e : handle.edges())
            if (comp[e.u] == big && comp[e.v] == big)
                kept.push_back(Edge::make(remap[e.u], remap[e.v]));
        FeatureMatrix xf(next, b.features.cols());
        for (NodeId v = 0; v < n; ++v)
            if (comp[v] == big)
                for (std::size_t j = 0; j < b.features.cols(); ++j)
                    xf.set(remap[v], j, b.features(v, j));
        CommunityCover tr;
        tr.n_nodes = next;
        for (const auto& c : b.truth.communities) {
            std::vector<NodeId> cc;
            for (NodeId v : c)
                if (comp[v] == big) cc.push_back(remap[v]);
            if (!cc.empty()) tr.communities.push_back(std::move(cc));
        }
        tr.canonicalize();
        b.hidden = HiddenNetwork::from_edges(next, std::move(kept));
        b.features = std::move(xf);
        b.truth = std::move(tr);
        result.warnings.push_back("kept largest connected component: " +
                                  std::to_string(next) + " of " + std::to_string(n) +
                                  " nodes");
    }
    if (opt.prune_zero_columns) {
        std::vector<std::size_t> keep;
        for (std::size_t j = 0; j < b.features.cols(); ++j) {
            bool any = false;
            for (std::size_t i = 0; i < b.features.rows() && !any; ++i)
                any = b.features(i, j) != 0;
            if (any) keep.push_back(j);
        }
        FeatureMatrix xf(b.features.rows(), keep.size());
        for (std::size_t i = 0; i < b.features.rows(); ++i)
            for (std::size_t j = 0; j < keep.size(); ++j)
                xf.set(i, j, b.features(i, keep[j]));
        result.warnings.push_back("pruned " +
                                  std::to_string(b.features.cols() - keep.size()) +
                                  " all-zero feature columns");
        b.features = std::move(xf);
    }
    result.bundle = std::move(b);
    return result;
}

}  // namespace metacode
