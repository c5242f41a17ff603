#pragma once

// Community-affiliation embedding: a two-layer graph convolution with a
// final ReLU (so F >= 0 holds by construction), trained against the
// reconstruction loss L = L1(structure) + eta * L2(metadata) with
// hand-derived gradients. Also the affiliation -> cover thresholding.

#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <vector>

#include <json.hpp>

#include "metacode/data_io.hpp"
#include "metacode/graph.hpp"
#include "metacode/matrix.hpp"
#include "metacode/rng.hpp"

namespace metacode {

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = std::vector<double>(m.data().begin(), m.data().end());
    return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.data().size())
        throw std::runtime_error("checkpoint: matrix payload size mismatch");
    std::copy(data.begin(), data.end(), m.data().begin());
    return m;
}

}  // namespace detail

// floor for the x in log(1 - exp(-x)); final-ReLU outputs hit exact zeros
inline constexpr double kStructLossFloor = 1e-10;

// Symmetric degree-normalized adjacency with self-loops.
struct Propagation {
    std::size_t n = 0;
    std::vector<std::size_t> offsets;
    std::vector<NodeId> cols;
    std::vector<double> vals;

    static Propagation normalized(const WorkingGraph& g) {
        const auto adj = g.adjacency();
        Propagation p;
        p.n = g.node_count();
        p.offsets.assign(p.n + 1, 0);
        std::vector<double> inv_sqrt(p.n);
        for (std::size_t v = 0; v < p.n; ++v)
            inv_sqrt[v] = 1.0 / std::sqrt(double(adj[v].size()) + 1.0);
        for (std::size_t v = 0; v < p.n; ++v) p.offsets[v + 1] = p.offsets[v] + adj[v].size() + 1;
        p.cols.resize(p.offsets[p.n]);
        p.vals.resize(p.offsets[p.n]);
        for (std::size_t v = 0; v < p.n; ++v) {
            std::size_t at = p.offsets[v];
            bool self_done = false;
            auto put_self = [&] {
                p.cols[at] = NodeId(v);
                p.vals[at] = inv_sqrt[v] * inv_sqrt[v];
                ++at;
                self_done = true;
            };
            for (NodeId w : adj[v]) {
                if (!self_done && w > NodeId(v)) put_self();
                p.cols[at] = w;
                p.vals[at] = inv_sqrt[v] * inv_sqrt[w];
                ++at;
            }
            if (!self_done) put_self();
        }
        return p;
    }

    static Propagation identity(std::size_t n) {
        Propagation p;
        p.n = n;
        p.offsets.resize(n + 1);
        p.cols.resize(n);
        p.vals.assign(n, 1.0);
        for (std::size_t v = 0; v < n; ++v) {
            p.offsets[v] = v;
            p.cols[v] = NodeId(v);
        }
        p.offsets[n] = n;
        return p;
    }

    // out = A_hat * m ; A_hat is symmetric so this doubles as A_hat^T * m
    Matrix apply(const Matrix& m) const {
        Matrix out(n, m.cols());
        for (std::size_t i = 0; i < n; ++i) {
            double* oi = &out(i, 0);
            for (std::size_t e = offsets[i]; e < offsets[i + 1]; ++e) {
                const double w = vals[e];
                const double* src = &m(cols[e], 0);
                for (std::size_t j = 0; j < m.cols(); ++j) oi[j] += w * src[j];
            }
        }
        return out;
    }
};

inline Matrix to_dense(const FeatureMatrix& x) {
    Matrix m(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) m(i, j) = double(x(i, j));
    return m;
}

struct EmbedderParams {
    Matrix w1;      // D x H
    Matrix w2;      // H x K
    Matrix w_meta;  // D x K, the metadata head
};

enum class Optimizer { adam, sgd };

struct EmbedHyper {
    double eta = 1.5;
    double lr = 1e-3;
    std::size_t epochs = 300;
    std::size_t hidden = 128;
    std::size_t k = 0;  // community count (columns of F)
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::adam;
    bool identity_propagation = false;  // perceptron variant: A_hat := I
};

inline EmbedderParams init_embedder_params(std::size_t d, std::size_t hidden, std::size_t k,
                                           std::uint64_t seed) {
    RngStream rng = RngStream::derive(seed, "embedder-init");
    EmbedderParams p;
    p.w1 = Matrix(d, hidden);
    p.w2 = Matrix(hidden, k);
    p.w_meta = Matrix(d, k);
    const double b1 = std::sqrt(6.0 / double(d + hidden));
    for (double& w : p.w1.data()) w = rng.next_uniform(-b1, b1);
    // nonnegative second layer so the final ReLU starts alive
    const double b2 = std::sqrt(6.0 / double(hidden + k));
    for (double& w : p.w2.data()) w = rng.next_uniform(0.0, b2);
    const double bm = std::sqrt(6.0 / double(d + k));
    for (double& w : p.w_meta.data()) w = rng.next_uniform(-bm, bm);
    return p;
}

struct ForwardCache {
    Matrix ax;   // A_hat X (constant per graph)
    Matrix z1;   // (A_hat X) W1
    Matrix h1;   // relu(z1)
    Matrix ah1;  // A_hat h1
    Matrix z2;   // (A_hat h1) W2
    Matrix f;    // relu(z2)
};

inline ForwardCache gcn_forward_cached(const Propagation& prop, const Matrix& ax,
                                       const EmbedderParams& params) {
    ForwardCache c;
    c.ax = ax;
    c.z1 = matmul(ax, params.w1);
    c.h1 = relu(c.z1);
    c.ah1 = prop.apply(c.h1);
    c.z2 = matmul(c.ah1, params.w2);
    c.f = relu(c.z2);
    return c;
}

// F = relu(A_hat relu(A_hat X W1) W2)
inline Matrix gcn_forward(const WorkingGraph& g, const FeatureMatrix& x,
                          const EmbedderParams& params, bool identity_propagation = false) {
    const Propagation prop =
        identity_propagation ? Propagation::identity(g.node_count()) : Propagation::normalized(g);
    const Matrix ax = prop.apply(to_dense(x));
    return gcn_forward_cached(prop, ax, params).f;
}

// L1: -sum_{(u,v) in E} log(1 - exp(-F_u.F_v)) + sum_{(u,v) not in E, u<v} F_u.F_v
// The non-edge sum uses the aggregate identity
//   sum_{u<v} F_u.F_v = (s.s - sum_u F_u.F_u) / 2,  s = sum_u F_u,
// minus the edge dot products, so cost is O(NK + |E|K).
inline double loss_structure(const Matrix& f, const std::vector<Edge>& edges) {
    const std::size_t n = f.rows(), k = f.cols();
    std::vector<double> s(k, 0.0);
    double sum_self = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
        const auto row = f.row(u);
        for (std::size_t j = 0; j < k; ++j) s[j] += row[j];
        sum_self += dot(row, row);
    }
    double all_pairs = (dot(s, s) - sum_self) / 2.0;
    double edge_term = 0.0;
    double edge_dots = 0.0;
    for (const Edge& e : edges) {
        const double x = std::max(dot(f.row(e.u), f.row(e.v)), kStructLossFloor);
        edge_term -= std::log(-std::expm1(-x));
        edge_dots += dot(f.row(e.u), f.row(e.v));
    }
    return edge_term + (all_pairs - edge_dots);
}

inline double loss_structure(const Matrix& f, const WorkingGraph& g) {
    return loss_structure(f, g.all_edges());
}

// Reference O(N^2) evaluation; the oracle the aggregate identity is checked
// against, also used directly in tests.
inline double loss_structure_naive(const Matrix& f, const WorkingGraph& g) {
    const std::size_t n = f.rows();
    double total = 0.0;
    for (NodeId u = 0; u < n; ++u)
        for (NodeId v = u + 1; v < n; ++v) {
            const double d = dot(f.row(u), f.row(v));
            if (g.has_edge(u, v))
                total -= std::log(-std::expm1(-std::max(d, kStructLossFloor)));
            else
                total += d;
        }
    return total;
}

// L2: binary cross-entropy of Q = sigmoid(F W_meta^T) against X.
inline double loss_metadata(const Matrix& f, const Matrix& w_meta, const FeatureMatrix& x) {
    const std::size_t n = f.rows(), d = x.cols();
    const Matrix logits = matmul_nt(f, w_meta);  // N x D
    double total = 0.0;
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t j = 0; j < d; ++j) {
            double q = sigmoid(logits(u, j));
            q = std::min(std::max(q, kProbClamp), 1.0 - kProbClamp);
            total -= x(u, j) ? std::log(q) : std::log(1.0 - q);
        }
    return total;
}

inline double total_loss(const Matrix& f, const Matrix& w_meta, const WorkingGraph& g,
                         const FeatureMatrix& x, double eta) {
    if (eta < 0.0) throw std::invalid_argument("total_loss: eta must be >= 0");
    return loss_structure(f, g) + eta * loss_metadata(f, w_meta, x);
}

struct EmbedGrads {
    Matrix w1, w2, w_meta;
};

struct AffiliationGrads {
    double loss = 0.0;
    Matrix df;      // N x K
    Matrix dw_meta;  // D x K (already scaled by eta)
};

// Loss and gradient of L1 + eta L2 with respect to F and W directly:
//   L1: dF_u = (s - F_u) - sum_{v in N(u)} (1 + 1/(e^{x_uv} - 1)) F_v
//   L2: dLogits = Q - X, dF += eta dLogits W_meta, dW_meta = eta dLogits^T F
inline AffiliationGrads affiliation_loss_and_grads(const Matrix& f, const Matrix& w_meta,
                                                   const std::vector<Edge>& edges,
                                                   const FeatureMatrix& x, double eta) {
    const std::size_t n = f.rows(), k = f.cols(), d = x.cols();
    AffiliationGrads out;
    out.loss = loss_structure(f, edges);
    out.df = Matrix(n, k);
    out.dw_meta = Matrix(d, k);

    std::vector<double> s(k, 0.0);
    for (std::size_t u = 0; u < n; ++u) {
        const auto row = f.row(u);
        for (std::size_t j = 0; j < k; ++j) s[j] += row[j];
    }
    for (std::size_t u = 0; u < n; ++u) {
        const auto row = f.row(u);
        for (std::size_t j = 0; j < k; ++j) out.df(u, j) = s[j] - row[j];
    }
    for (const Edge& e : edges) {
        const double raw = dot(f.row(e.u), f.row(e.v));
        double coef = 1.0;  // removes the non-edge contribution
        if (raw > kStructLossFloor)
            coef += 1.0 / std::expm1(raw);  // d(-log(1-e^-x))/dx = -1/(e^x - 1)
        for (std::size_t j = 0; j < k; ++j) {
            out.df(e.u, j) -= coef * f(e.v, j);
            out.df(e.v, j) -= coef * f(e.u, j);
        }
    }

    if (eta > 0.0) {
        const Matrix logits = matmul_nt(f, w_meta);
        Matrix dlogits(n, d);
        double l2 = 0.0;
        for (std::size_t u = 0; u < n; ++u)
            for (std::size_t j = 0; j < d; ++j) {
                const double q = sigmoid(logits(u, j));
                const double qc = std::min(std::max(q, kProbClamp), 1.0 - kProbClamp);
                l2 -= x(u, j) ? std::log(qc) : std::log(1.0 - qc);
                dlogits(u, j) = q - double(x(u, j));
            }
        out.loss += eta * l2;
        add_scaled(out.df, matmul(dlogits, w_meta), eta);
        out.dw_meta = matmul_tn(dlogits, f);
        for (double& w : out.dw_meta.data()) w *= eta;
    }
    return out;
}

// Full parameter gradient: the dF piece above back-propagated through
// relu / propagation / matmul.
inline std::pair<double, EmbedGrads> loss_and_grads(const Propagation& prop, const Matrix& ax,
                                                    const std::vector<Edge>& edges,
                                                    const FeatureMatrix& x,
                                                    const EmbedderParams& params, double eta) {
    const ForwardCache c = gcn_forward_cached(prop, ax, params);
    AffiliationGrads ag = affiliation_loss_and_grads(c.f, params.w_meta, edges, x, eta);

    EmbedGrads g;
    g.w_meta = std::move(ag.dw_meta);
    const Matrix dz2 = relu_backward(ag.df, c.z2);
    g.w2 = matmul_tn(c.ah1, dz2);
    const Matrix dh1 = prop.apply(matmul_nt(dz2, params.w2));
    const Matrix dz1 = relu_backward(dh1, c.z1);
    g.w1 = matmul_tn(ax, dz1);
    return {ag.loss, std::move(g)};
}

namespace detail {

struct AdamState {
    Matrix m, v;
    explicit AdamState(const Matrix& shape)
        : m(shape.rows(), shape.cols()), v(shape.rows(), shape.cols()) {}

    void step(Matrix& w, const Matrix& grad, double lr, std::size_t t) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(b1, double(t));
        const double bc2 = 1.0 - std::pow(b2, double(t));
        auto wd = w.data();
        auto gd = grad.data();
        auto md = m.data();
        auto vd = v.data();
        for (std::size_t i = 0; i < wd.size(); ++i) {
            md[i] = b1 * md[i] + (1.0 - b1) * gd[i];
            vd[i] = b2 * vd[i] + (1.0 - b2) * gd[i] * gd[i];
            wd[i] -= lr * (md[i] / bc1) / (std::sqrt(vd[i] / bc2) + eps);
        }
    }
};

}  // namespace detail

struct TrainResult {
    EmbedderParams params;
    Matrix f;
    std::vector<double> loss_history;  // loss before each step, then final
    double final_loss = 0.0;
};

// Full-batch training. Returns the best-loss parameters seen, so the
// final-not-worse-than-initial contract holds even if late steps wobble.
inline TrainResult train_embedder(const WorkingGraph& g, const FeatureMatrix& x,
                                  const EmbedHyper& hyper,
                                  const EmbedderParams* init = nullptr) {
    if (g.node_count() == 0) throw std::invalid_argument("train_embedder: empty graph");
    if (hyper.k == 0) throw std::invalid_argument("train_embedder: k not set");
    const Propagation prop = hyper.identity_propagation
                                 ? Propagation::identity(g.node_count())
                                 : Propagation::normalized(g);
    const Matrix ax = prop.apply(to_dense(x));
    const std::vector<Edge> edges = g.all_edges();

    EmbedderParams params =
        init ? *init : init_embedder_params(x.cols(), hyper.hidden, hyper.k, hyper.seed);
    detail::AdamState s1(params.w1), s2(params.w2), sm(params.w_meta);

    TrainResult out;
    EmbedderParams best = params;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        auto [loss, grads] = loss_and_grads(prop, ax, edges, x, params, hyper.eta);
        if (!std::isfinite(loss))
            throw std::runtime_error("train_embedder: loss diverged at epoch " +
                                     std::to_string(epoch));
        out.loss_history.push_back(loss);
        if (loss < best_loss) {
            best_loss = loss;
            best = params;
        }
        if (hyper.optimizer == Optimizer::adam) {
            s1.step(params.w1, grads.w1, hyper.lr, epoch + 1);
            s2.step(params.w2, grads.w2, hyper.lr, epoch + 1);
            sm.step(params.w_meta, grads.w_meta, hyper.lr, epoch + 1);
        } else {
            add_scaled(params.w1, grads.w1, -hyper.lr);
            add_scaled(params.w2, grads.w2, -hyper.lr);
            add_scaled(params.w_meta, grads.w_meta, -hyper.lr);
        }
    }
    const ForwardCache cf = gcn_forward_cached(prop, ax, params);
    const double last = loss_structure(cf.f, edges) +
                        (hyper.eta > 0.0 ? hyper.eta * loss_metadata(cf.f, params.w_meta, x) : 0.0);
    if (std::isfinite(last)) out.loss_history.push_back(last);
    if (last < best_loss) {
        best_loss = last;
        best = params;
    }
    out.params = std::move(best);
    out.f = gcn_forward_cached(prop, ax, out.params).f;
    out.final_loss = best_loss;
    return out;
}

// versioned JSON checkpoint of shaped arrays
inline void save_embedder_params(const EmbedderParams& p, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = "metacode-embedder";
    j["version"] = 1;
    j["w1"] = detail::matrix_to_json(p.w1);
    j["w2"] = detail::matrix_to_json(p.w2);
    j["w_meta"] = detail::matrix_to_json(p.w_meta);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_embedder_params: cannot open " + path.string());
    out << j.dump() << '\n';
}

inline EmbedderParams load_embedder_params(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_embedder_params: cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != "metacode-embedder" || j.value("version", -1) != 1)
        throw std::runtime_error("load_embedder_params: not a version-1 embedder checkpoint");
    EmbedderParams p;
    p.w1 = detail::matrix_from_json(j.at("w1"));
    p.w2 = detail::matrix_from_json(j.at("w2"));
    p.w_meta = detail::matrix_from_json(j.at("w_meta"));
    return p;
}

struct DirectAffiliationResult {
    Matrix f;
    Matrix w_meta;
    std::vector<double> loss_history;
    double final_loss = 0.0;
};

// Projected-gradient optimization of the reconstruction loss over F itself
// (no encoder), keeping F >= 0 after every step. The stand-in for classic
// nonnegative-factorization community detection used by the first ablation.
inline DirectAffiliationResult train_affiliation_direct(const WorkingGraph& g,
                                                        const FeatureMatrix& x,
                                                        const EmbedHyper& hyper,
                                                        const DirectAffiliationResult* init =
                                                            nullptr) {
    const std::size_t n = g.node_count(), k = hyper.k, d = x.cols();
    if (k == 0) throw std::invalid_argument("train_affiliation_direct: k not set");
    const std::vector<Edge> edges = g.all_edges();
    DirectAffiliationResult out;
    Matrix f(n, k), w_meta(d, k);
    if (init) {
        f = init->f;
        w_meta = init->w_meta;
    } else {
        RngStream rng = RngStream::derive(hyper.seed, "direct-f-init");
        for (double& v : f.data()) v = rng.next_uniform(0.0, 1.0 / std::sqrt(double(k)));
        const double bm = std::sqrt(6.0 / double(d + k));
        for (double& v : w_meta.data()) v = rng.next_uniform(-bm, bm);
    }
    detail::AdamState sf(f), sm(w_meta);
    Matrix best_f = f, best_w = w_meta;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        AffiliationGrads ag = affiliation_loss_and_grads(f, w_meta, edges, x, hyper.eta);
        if (!std::isfinite(ag.loss))
            throw std::runtime_error("train_affiliation_direct: loss diverged");
        out.loss_history.push_back(ag.loss);
        if (ag.loss < best_loss) {
            best_loss = ag.loss;
            best_f = f;
            best_w = w_meta;
        }
        sf.step(f, ag.df, hyper.lr, epoch + 1);
        sm.step(w_meta, ag.dw_meta, hyper.lr, epoch + 1);
        for (double& v : f.data())
            if (v < 0.0) v = 0.0;  // projection
    }
    const double last = affiliation_loss_and_grads(f, w_meta, edges, x, hyper.eta).loss;
    out.loss_history.push_back(last);
    if (last < best_loss) {
        best_loss = last;
        best_f = f;
        best_w = w_meta;
    }
    out.f = std::move(best_f);
    out.w_meta = std::move(best_w);
    out.final_loss = best_loss;
    return out;
}

// Membership threshold at which the structure-loss edge probability exceeds
// the background density: delta = sqrt(-log(1 - eps_bg)).
inline double default_affiliation_threshold(std::size_t edge_count, std::size_t n) {
    if (n < 2) return 1e-12;
    double bg = 2.0 * double(edge_count) / (double(n) * double(n - 1));
    bg = std::min(std::max(bg, 0.0), 1.0 - 1e-12);
    return std::max(std::sqrt(-std::log1p(-bg)), 1e-12);
}

// u joins community k iff F_uk >= delta; empty rows fall back to their
// argmax column (smallest index wins ties). Empty communities are dropped.
inline CommunityCover communities_from_affiliation(const Matrix& f, double delta) {
    const std::size_t n = f.rows(), k = f.cols();
    CommunityCover cover;
    cover.n_nodes = n;
    std::vector<std::vector<NodeId>> comms(k);
    for (std::size_t u = 0; u < n; ++u) {
        bool any = false;
        for (std::size_t j = 0; j < k; ++j)
            if (f(u, j) >= delta) {
                comms[j].push_back(NodeId(u));
                any = true;
            }
        if (!any) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < k; ++j)
                if (f(u, j) > f(u, best)) best = j;
            comms[best].push_back(NodeId(u));
        }
    }
    for (auto& c : comms)
        if (!c.empty()) cover.communities.push_back(std::move(c));
    cover.canonicalize();
    return cover;
}

inline CommunityCover communities_from_affiliation(const Matrix& f, const WorkingGraph& g,
                                                   std::optional<double> delta = std::nullopt) {
    const double d =
        delta ? *delta : default_affiliation_threshold(g.edge_count(), g.node_count());
    return communities_from_affiliation(f, d);
}

}  // namespace metacode
