#pragma once

// EC-SiamNet: twin two-layer perceptron encoders over node metadata, a
// scoring head on the Hadamard product of the two embeddings, trained with a
// cosine contrastive loss on certainty-labeled pairs plus binary
// cross-entropy of the score (the head is untrained otherwise). Inference
// scores the pairs whose status is still uncertain and keeps the
// highest-scoring ones above a threshold, capped.

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "metacode/affil_embed.hpp"
#include "metacode/data_io.hpp"
#include "metacode/graph.hpp"
#include "metacode/matrix.hpp"
#include "metacode/rng.hpp"

namespace metacode {

struct SiamParams {
    Matrix w1;                   // D x hidden (shared by both twins)
    Matrix w2;                   // hidden x e_dim
    std::vector<double> w_head;  // e_dim
    double bias = 0.0;
    double margin = 0.5;
};

struct SiamHyper {
    double lr = 0.05;
    std::size_t epochs = 100;
    std::size_t hidden = 256;
    std::size_t e_dim = 64;
    std::size_t batch = 512;
    double margin = 0.5;
    std::uint64_t seed = 0;
};

inline SiamParams init_siam_params(std::size_t d, const SiamHyper& hyper) {
    RngStream rng = RngStream::derive(hyper.seed, "siam-init");
    SiamParams p;
    p.w1 = Matrix(d, hyper.hidden);
    p.w2 = Matrix(hyper.hidden, hyper.e_dim);
    p.w_head.assign(hyper.e_dim, 0.0);
    p.margin = hyper.margin;
    const double b1 = std::sqrt(6.0 / double(d + hyper.hidden));
    for (double& w : p.w1.data()) w = rng.next_uniform(-b1, b1);
    // nonnegative output layer keeps the final relu from starting dead
    const double b2 = std::sqrt(6.0 / double(hyper.hidden + hyper.e_dim));
    for (double& w : p.w2.data()) w = rng.next_uniform(0.0, b2);
    const double bh = std::sqrt(3.0 / double(hyper.e_dim));
    for (double& w : p.w_head) w = rng.next_uniform(-bh, bh);
    return p;
}

// same checkpoint convention as the embedder
inline void save_siam_params(const SiamParams& p, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = "metacode-siamnet";
    j["version"] = 1;
    j["w1"] = detail::matrix_to_json(p.w1);
    j["w2"] = detail::matrix_to_json(p.w2);
    j["w_head"] = p.w_head;
    j["bias"] = p.bias;
    j["margin"] = p.margin;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_siam_params: cannot open " + path.string());
    out << j.dump() << '\n';
}

inline SiamParams load_siam_params(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_siam_params: cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != "metacode-siamnet" || j.value("version", -1) != 1)
        throw std::runtime_error("load_siam_params: not a version-1 siamnet checkpoint");
    SiamParams p;
    p.w1 = detail::matrix_from_json(j.at("w1"));
    p.w2 = detail::matrix_from_json(j.at("w2"));
    p.w_head = j.at("w_head").get<std::vector<double>>();
    p.bias = j.at("bias").get<double>();
    p.margin = j.at("margin").get<double>();
    return p;
}

// e = relu(relu(x W1) W2) for a single metadata row.
inline std::vector<double> encode(const SiamParams& p, std::span<const std::uint8_t> x_row) {
    const std::size_t d = p.w1.rows(), h = p.w1.cols(), e_dim = p.w2.cols();
    if (x_row.size() != d) throw std::invalid_argument("encode: feature width mismatch");
    std::vector<double> hid(h, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        if (!x_row[i]) continue;
        const auto w = p.w1.row(i);
        for (std::size_t j = 0; j < h; ++j) hid[j] += w[j];
    }
    for (double& v : hid)
        if (v < 0.0) v = 0.0;
    std::vector<double> out(e_dim, 0.0);
    for (std::size_t i = 0; i < h; ++i) {
        if (hid[i] == 0.0) continue;
        const auto w = p.w2.row(i);
        for (std::size_t j = 0; j < e_dim; ++j) out[j] += hid[i] * w[j];
    }
    for (double& v : out)
        if (v < 0.0) v = 0.0;
    return out;
}

// psi = sigmoid(w_head . (e_u (.) e_v) + bias)
inline double score_pair(const SiamParams& p, std::span<const double> e_u,
                         std::span<const double> e_v) {
    if (e_u.size() != e_v.size() || e_u.size() != p.w_head.size())
        throw std::invalid_argument("score_pair: embedding width mismatch");
    double z = p.bias;
    for (std::size_t i = 0; i < e_u.size(); ++i) z += p.w_head[i] * e_u[i] * e_v[i];
    return sigmoid(z);
}

// (1-I) 1/2 sim^2 + I 1/2 max(0, r - sim)^2, cosine sim with sim(., 0) = 0.
inline double contrastive_loss(std::span<const double> e_u, std::span<const double> e_v,
                               bool connected, double r) {
    if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("contrastive_loss: r in (0, 1]");
    const double sim = cosine_sim(e_u, e_v);
    if (connected) {
        const double gap = std::max(0.0, r - sim);
        return 0.5 * gap * gap;
    }
    return 0.5 * sim * sim;
}

struct LabeledPair {
    NodeId u, v;
    bool connected;  // I_uv
};

struct PairBatch {
    std::vector<LabeledPair> pairs;
    bool degenerate = false;  // no certain non-edges were available
};

// All explored edges as positives plus neg_ratio * |E_t| certain non-edges
// (at least one endpoint queried, absent from E_t). Negatives are sampled
// with replacement; pairs with both endpoints queried are halved in
// acceptance probability so the two-sided draw stays uniform over pairs.
inline PairBatch sample_pairs(const ExploredState& state, double neg_ratio, std::uint64_t seed) {
    const auto& explored = state.explored_edges();
    if (explored.empty()) throw std::invalid_argument("sample_pairs: no explored edges yet");
    PairBatch batch;
    for (const Edge& e : explored) batch.pairs.push_back({e.u, e.v, true});

    const auto& queried = state.query_order();
    const std::size_t n = state.node_count();
    // a certain non-edge exists iff some queried node misses some other node
    std::size_t want = std::size_t(neg_ratio * double(explored.size()) + 0.5);
    bool any_available = false;
    for (NodeId q : queried) {
        std::size_t adjacent = 0;
        for (NodeId v = 0; v < n; ++v)
            if (v != q && explored.contains(q, v)) adjacent++;
        if (adjacent + 1 < n) {
            any_available = true;
            break;
        }
    }
    if (!any_available) {
        batch.degenerate = true;
        return batch;
    }
    RngStream rng = RngStream::derive(seed, "siam-negatives");
    std::size_t produced = 0;
    std::size_t attempts = 0;
    const std::size_t max_attempts = 200 * (want + 1);
    while (produced < want && attempts < max_attempts) {
        ++attempts;
        const NodeId q = queried[rng.next_index(queried.size())];
        NodeId v = NodeId(rng.next_index(n));
        if (v == q) continue;
        if (state.is_queried(v) && !rng.bernoulli(0.5)) continue;  // reachable from both sides
        if (explored.contains(q, v)) continue;
        batch.pairs.push_back({std::min(q, v), std::max(q, v), false});
        ++produced;
    }
    if (produced == 0) batch.degenerate = true;
    return batch;
}

namespace detail {

struct SiamAdam {
    Matrix m1, v1, m2, v2;
    std::vector<double> mh, vh;
    double mb = 0.0, vb = 0.0;
    std::size_t t = 0;

    explicit SiamAdam(const SiamParams& p)
        : m1(p.w1.rows(), p.w1.cols()),
          v1(p.w1.rows(), p.w1.cols()),
          m2(p.w2.rows(), p.w2.cols()),
          v2(p.w2.rows(), p.w2.cols()),
          mh(p.w_head.size(), 0.0),
          vh(p.w_head.size(), 0.0) {}

    static void update(double& w, double g, double& m, double& v, double lr, double bc1,
                       double bc2) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        w -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
    }
};

}  // namespace detail

struct SiamGrads {
    Matrix w1, w2;
    std::vector<double> w_head;
    double bias = 0.0;
};

// Mean joint loss over the given pairs and its gradient. Joint loss per pair:
// contrastive(e_u, e_v, I, r) + BCE(psi, I). Encodings are computed once per
// distinct node and the encoder gradient is accumulated as matrix products.
inline std::pair<double, SiamGrads> siam_loss_and_grads(const SiamParams& p,
                                                        const FeatureMatrix& x,
                                                        std::span<const LabeledPair> pairs) {
    const std::size_t d = p.w1.rows(), h = p.w1.cols(), e_dim = p.w2.cols();
    // gather distinct nodes
    std::unordered_map<NodeId, std::size_t> slot;
    std::vector<NodeId> nodes;
    for (const auto& pr : pairs)
        for (NodeId v : {pr.u, pr.v})
            if (slot.emplace(v, nodes.size()).second) nodes.push_back(v);
    const std::size_t m = nodes.size();

    Matrix xs(m, d);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) xs(i, j) = double(x(nodes[i], j));
    const Matrix z1 = matmul(xs, p.w1);
    const Matrix h1 = relu(z1);
    const Matrix z2 = matmul(h1, p.w2);
    const Matrix e = relu(z2);

    Matrix de(m, e_dim);
    SiamGrads g;
    g.w_head.assign(e_dim, 0.0);
    double loss = 0.0;
    const double inv = 1.0 / double(pairs.size());
    for (const auto& pr : pairs) {
        const std::size_t iu = slot[pr.u], iv = slot[pr.v];
        const auto eu = e.row(iu);
        const auto ev = e.row(iv);
        const double nu = l2_norm(eu), nv = l2_norm(ev);
        const double sim = (nu == 0.0 || nv == 0.0) ? 0.0 : dot(eu, ev) / (nu * nv);

        // contrastive piece
        double dsim = 0.0;
        if (pr.connected) {
            const double gap = std::max(0.0, p.margin - sim);
            loss += inv * 0.5 * gap * gap;
            dsim = -gap;
        } else {
            loss += inv * 0.5 * sim * sim;
            dsim = sim;
        }
        if (dsim != 0.0 && nu > 0.0 && nv > 0.0) {
            for (std::size_t j = 0; j < e_dim; ++j) {
                de(iu, j) += inv * dsim * (ev[j] / (nu * nv) - sim * eu[j] / (nu * nu));
                de(iv, j) += inv * dsim * (eu[j] / (nu * nv) - sim * ev[j] / (nv * nv));
            }
        }

        // BCE of the head score
        double z = p.bias;
        for (std::size_t j = 0; j < e_dim; ++j) z += p.w_head[j] * eu[j] * ev[j];
        const double psi = sigmoid(z);
        const double target = pr.connected ? 1.0 : 0.0;
        const double pc = std::min(std::max(psi, kProbClamp), 1.0 - kProbClamp);
        loss -= inv * (target * std::log(pc) + (1.0 - target) * std::log(1.0 - pc));
        const double dz = inv * (psi - target);
        g.bias += dz;
        for (std::size_t j = 0; j < e_dim; ++j) {
            g.w_head[j] += dz * eu[j] * ev[j];
            de(iu, j) += dz * p.w_head[j] * ev[j];
            de(iv, j) += dz * p.w_head[j] * eu[j];
        }
    }

    const Matrix dz2 = relu_backward(de, z2);
    g.w2 = matmul_tn(h1, dz2);
    const Matrix dh1 = relu_backward(matmul_nt(dz2, p.w2), z1);
    g.w1 = matmul_tn(xs, dh1);
    return {loss, std::move(g)};
}

struct SiamTrainResult {
    SiamParams params;
    std::vector<double> loss_history;  // full-batch loss per epoch, then final
    double final_loss = 0.0;
};

// Mini-batch Adam on the joint loss; batches reshuffled per epoch from the
// stream. Returns the best full-batch-loss parameters.
inline SiamTrainResult train_siamnet(const FeatureMatrix& x, const PairBatch& batch,
                                     const SiamHyper& hyper,
                                     const SiamParams* init = nullptr) {
    if (batch.pairs.empty()) throw std::invalid_argument("train_siamnet: empty pair batch");
    SiamParams params = init ? *init : init_siam_params(x.cols(), hyper);
    params.margin = hyper.margin;
    detail::SiamAdam adam(params);
    RngStream shuffle_rng = RngStream::derive(hyper.seed, "siam-shuffle");

    std::vector<LabeledPair> pairs = batch.pairs;
    SiamTrainResult out;
    SiamParams best = params;
    double best_loss = std::numeric_limits<double>::infinity();

    auto full_loss = [&](const SiamParams& p) {
        return siam_loss_and_grads(p, x, pairs).first;
    };

    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        const double epoch_loss = full_loss(params);
        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("train_siamnet: loss diverged at epoch " +
                                     std::to_string(epoch));
        out.loss_history.push_back(epoch_loss);
        if (epoch_loss < best_loss) {
            best_loss = epoch_loss;
            best = params;
        }
        // Fisher-Yates from the stream
        for (std::size_t i = pairs.size(); i > 1; --i)
            std::swap(pairs[i - 1], pairs[shuffle_rng.next_index(i)]);
        for (std::size_t start = 0; start < pairs.size(); start += hyper.batch) {
            const std::size_t len = std::min(hyper.batch, pairs.size() - start);
            auto [l, g] = siam_loss_and_grads(params, x,
                                              {pairs.data() + start, len});
            (void)l;
            adam.t++;
            const double bc1 = 1.0 - std::pow(0.9, double(adam.t));
            const double bc2 = 1.0 - std::pow(0.999, double(adam.t));
            auto wd = params.w1.data();
            auto gd = g.w1.data();
            auto md = adam.m1.data();
            auto vd = adam.v1.data();
            for (std::size_t i = 0; i < wd.size(); ++i)
                detail::SiamAdam::update(wd[i], gd[i], md[i], vd[i], hyper.lr, bc1, bc2);
            wd = params.w2.data();
            gd = g.w2.data();
            md = adam.m2.data();
            vd = adam.v2.data();
            for (std::size_t i = 0; i < wd.size(); ++i)
                detail::SiamAdam::update(wd[i], gd[i], md[i], vd[i], hyper.lr, bc1, bc2);
            for (std::size_t i = 0; i < params.w_head.size(); ++i)
                detail::SiamAdam::update(params.w_head[i], g.w_head[i], adam.mh[i], adam.vh[i],
                                         hyper.lr, bc1, bc2);
            detail::SiamAdam::update(params.bias, g.bias, adam.mb, adam.vb, hyper.lr, bc1, bc2);
        }
    }
    const double last = full_loss(params);
    if (std::isfinite(last)) {
        out.loss_history.push_back(last);
        if (last < best_loss) {
            best_loss = last;
            best = params;
        }
    }
    out.params = std::move(best);
    out.final_loss = best_loss;
    return out;
}

// psi for every pair with both endpoints unqueried (the only uncertain
// pairs). Embeddings are computed once per node.
inline std::unordered_map<std::uint64_t, double> score_uncertain_pairs(
    const SiamParams& params, const FeatureMatrix& x, const ExploredState& state) {
    const auto unqueried = state.unqueried();
    std::unordered_map<std::uint64_t, double> scores;
    if (unqueried.size() < 2) return scores;
    Matrix xs(unqueried.size(), x.cols());
    for (std::size_t i = 0; i < unqueried.size(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) xs(i, j) = double(x(unqueried[i], j));
    const Matrix e = relu(matmul(relu(matmul(xs, params.w1)), params.w2));
    scores.reserve(unqueried.size() * (unqueried.size() - 1) / 2);
    for (std::size_t i = 0; i < unqueried.size(); ++i) {
        // fold the head weights into one side of the dot product
        std::vector<double> wi(e.cols());
        for (std::size_t j = 0; j < e.cols(); ++j) wi[j] = e(i, j) * params.w_head[j];
        for (std::size_t j2 = i + 1; j2 < unqueried.size(); ++j2) {
            const double z = params.bias + dot(wi, e.row(j2));
            scores[Edge::make(unqueried[i], unqueried[j2]).key()] = sigmoid(z);
        }
    }
    return scores;
}

// Candidates are the uncertain pairs; keep psi >= threshold, truncated to the
// cap highest-scoring. Certain non-edges can never be returned because they
// are never candidates. Scores stream through a threshold filter instead of
// materializing the full pair map.
inline EdgeSet infer_edges(const SiamParams& params, const FeatureMatrix& x,
                           const ExploredState& state, double threshold, std::size_t cap) {
    const auto unqueried = state.unqueried();
    std::vector<std::pair<double, std::uint64_t>> picked;
    if (unqueried.size() >= 2) {
        Matrix xs(unqueried.size(), x.cols());
        for (std::size_t i = 0; i < unqueried.size(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j)
                xs(i, j) = double(x(unqueried[i], j));
        const Matrix e = relu(matmul(relu(matmul(xs, params.w1)), params.w2));
        std::vector<double> wi(e.cols());
        for (std::size_t i = 0; i < unqueried.size(); ++i) {
            for (std::size_t j = 0; j < e.cols(); ++j) wi[j] = e(i, j) * params.w_head[j];
            for (std::size_t j2 = i + 1; j2 < unqueried.size(); ++j2) {
                const double psi = sigmoid(params.bias + dot(wi, e.row(j2)));
                if (psi >= threshold)
                    picked.emplace_back(psi,
                                        Edge::make(unqueried[i], unqueried[j2]).key());
            }
        }
    }
    std::sort(picked.begin(), picked.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    if (picked.size() > cap) picked.resize(cap);
    EdgeSet out;
    for (const auto& [psi, key] : picked)
        out.insert(Edge{NodeId(key >> 32), NodeId(key & 0xffffffffu)});
    return out;
}

}  // namespace metacode
