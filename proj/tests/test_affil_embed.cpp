#include <doctest.h>

#include "metacode/affil_embed.hpp"
#include "metacode/data_io.hpp"

using namespace metacode;

namespace {

WorkingGraph graph_from_edges(std::size_t n, const std::vector<Edge>& edges) {
    EdgeSet inferred;
    for (const Edge& e : edges) inferred.insert(e);
    return WorkingGraph(n, EdgeSet{}, std::move(inferred));
}

DatasetBundle planted_bundle(std::size_t n, std::size_t seed) {
    AgmSpec spec;
    spec.n = n;
    spec.p = 0.15;
    spec.memberships = make_overlapping_blocks(n, 2, 3);
    spec.features.d = 12;
    spec.seed = seed;
    return generate_agm(spec);
}

WorkingGraph as_working(const DatasetBundle& b) {
    EdgeSet inferred;
    for (const Edge& e : b.hidden.evaluation_handle().edges()) inferred.insert(e);
    return WorkingGraph(b.node_count(), EdgeSet{}, std::move(inferred));
}

double loss_at(const Propagation& prop, const Matrix& ax, const std::vector<Edge>& edges,
               const FeatureMatrix& x, const EmbedderParams& params, double eta) {
    const ForwardCache c = gcn_forward_cached(prop, ax, params);
    double l = loss_structure(c.f, edges);
    if (eta > 0.0) l += eta * loss_metadata(c.f, params.w_meta, x);
    return l;
}

struct FdCheck {
    double max_rel_err = 0.0;
    std::size_t points = 0;
};

// central finite differences at randomly chosen parameter coordinates
FdCheck fd_check(const WorkingGraph& g, const FeatureMatrix& x, EmbedderParams params,
                 double eta, std::size_t points_per_matrix, std::uint64_t seed,
                 bool l2_only = false) {
    const Propagation prop = Propagation::normalized(g);
    const Matrix ax = prop.apply(to_dense(x));
    const auto edges = g.all_edges();
    auto grads_of = [&](double e) { return loss_and_grads(prop, ax, edges, x, params, e).second; };
    EmbedGrads grads = grads_of(eta);
    if (l2_only) {
        // the eta-term is linear in eta: grad_L2 = grads(1) - grads(0)
        const EmbedGrads g0 = grads_of(0.0);
        add_scaled(grads.w1, g0.w1, -1.0);
        add_scaled(grads.w2, g0.w2, -1.0);
        add_scaled(grads.w_meta, g0.w_meta, -1.0);
    }
    auto eval = [&](double e) { return loss_at(prop, ax, edges, x, params, e); };
    RngStream rng(seed);
    const double h = 1e-5;
    FdCheck out;
    Matrix* mats[3] = {&params.w1, &params.w2, &params.w_meta};
    const Matrix* gmats[3] = {&grads.w1, &grads.w2, &grads.w_meta};
    for (int mi = 0; mi < 3; ++mi) {
        auto data = mats[mi]->data();
        for (std::size_t pt = 0; pt < points_per_matrix; ++pt) {
            const std::size_t idx = rng.next_index(data.size());
            const double orig = data[idx];
            double fd;
            if (!l2_only) {
                data[idx] = orig + h;
                const double up = eval(eta);
                data[idx] = orig - h;
                const double dn = eval(eta);
                fd = (up - dn) / (2 * h);
            } else {
                data[idx] = orig + h;
                const double up = eval(1.0) - eval(0.0);
                data[idx] = orig - h;
                const double dn = eval(1.0) - eval(0.0);
                fd = (up - dn) / (2 * h);
            }
            data[idx] = orig;
            const double ga = gmats[mi]->data()[idx];
            const double rel = std::abs(ga - fd) / std::max({1.0, std::abs(ga), std::abs(fd)});
            out.max_rel_err = std::max(out.max_rel_err, rel);
            out.points++;
        }
    }
    return out;
}

}  // namespace

TEST_SUITE("affil-embed") {

TEST_CASE("forward: zero weights give a zero affiliation matrix") {
    const WorkingGraph g = graph_from_edges(3, {Edge::make(0, 1)});
    FeatureMatrix x(3, 2);
    x.set(0, 0, true);
    x.set(2, 1, true);
    EmbedderParams p;
    p.w1 = Matrix(2, 4);
    p.w2 = Matrix(4, 2);
    p.w_meta = Matrix(2, 2);
    const Matrix f = gcn_forward(g, x, p);
    for (double v : f.data()) CHECK(v == 0.0);
}

TEST_CASE("forward: single node with self-loop is a pure perceptron") {
    const WorkingGraph g = graph_from_edges(1, {});
    FeatureMatrix x(1, 2);
    x.set(0, 0, true);
    x.set(0, 1, true);
    EmbedderParams p;
    p.w1 = Matrix(2, 2);
    p.w1(0, 0) = 0.5;
    p.w1(1, 0) = -1.0;
    p.w1(0, 1) = 0.25;
    p.w1(1, 1) = 0.25;
    p.w2 = Matrix(2, 1);
    p.w2(0, 0) = 2.0;
    p.w2(1, 0) = 1.0;
    p.w_meta = Matrix(2, 1);
    const Matrix f = gcn_forward(g, x, p);
    // A_hat = [1]; z1 = (x w1) = (-0.5, 0.5) -> relu (0, 0.5); z2 = 0.5 -> f
    CHECK(f(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("forward: 3-node path matches the hand-evaluated propagation") {
    const WorkingGraph g = graph_from_edges(3, {Edge::make(0, 1), Edge::make(1, 2)});
    FeatureMatrix x(3, 1);
    x.set(0, 0, true);  // features (1, 0, 1)
    x.set(2, 0, true);
    EmbedderParams p;
    p.w1 = Matrix(1, 1);
    p.w1(0, 0) = 1.0;
    p.w2 = Matrix(1, 1);
    p.w2(0, 0) = 1.0;
    p.w_meta = Matrix(1, 1);
    // degrees+1: (2, 3, 2); A_hat rows:
    //   0: 1/2, 1/sqrt6, 0 ; 1: 1/sqrt6, 1/3, 1/sqrt6 ; 2: 0, 1/sqrt6, 1/2
    const double s6 = 1.0 / std::sqrt(6.0);
    const double h0 = 0.5, h1 = 2 * s6, h2 = 0.5;  // A_hat x, all nonnegative
    const double f0 = 0.5 * h0 + s6 * h1;
    const double f1 = s6 * h0 + h1 / 3.0 + s6 * h2;
    const double f2 = s6 * h1 + 0.5 * h2;
    const Matrix f = gcn_forward(g, x, p);
    CHECK(f(0, 0) == doctest::Approx(f0));
    CHECK(f(1, 0) == doctest::Approx(f1));
    CHECK(f(2, 0) == doctest::Approx(f2));
}

TEST_CASE("forward output is always nonnegative") {
    const DatasetBundle b = planted_bundle(24, 3);
    const WorkingGraph g = as_working(b);
    const EmbedderParams p = init_embedder_params(b.features.cols(), 6, 2, 99);
    const Matrix f = gcn_forward(g, b.features, p);
    for (double v : f.data()) CHECK(v >= 0.0);
}

TEST_CASE("structure loss: frozen two-node values") {
    Matrix f(2, 1);
    f(0, 0) = 1.0;
    f(1, 0) = 1.0;
    SUBCASE("one edge") {
        const WorkingGraph g = graph_from_edges(2, {Edge::make(0, 1)});
        CHECK(loss_structure(f, g) == doctest::Approx(0.45867514538708193).epsilon(1e-9));
    }
    SUBCASE("no edge: single dot product") {
        const WorkingGraph g = graph_from_edges(2, {});
        CHECK(loss_structure(f, g) == doctest::Approx(1.0));
    }
    SUBCASE("zero affiliations with an edge stay finite via the floor") {
        Matrix fz(2, 1);
        const WorkingGraph g = graph_from_edges(2, {Edge::make(0, 1)});
        const double l = loss_structure(fz, g);
        CHECK(std::isfinite(l));
        CHECK(l == doctest::Approx(-std::log(-std::expm1(-1e-10))));
    }
}

TEST_CASE("structure loss: aggregate identity equals the naive double loop") {
    RngStream rng(2718);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 5 + rng.next_index(55);
        const std::size_t k = 1 + rng.next_index(4);
        std::vector<Edge> edges;
        for (NodeId u = 0; u < n; ++u)
            for (NodeId v = u + 1; v < n; ++v)
                if (rng.bernoulli(0.2)) edges.push_back({u, v});
        const WorkingGraph g = graph_from_edges(n, edges);
        Matrix f(n, k);
        for (double& v : f.data()) v = rng.next_double() * 2.0;
        const double fast = loss_structure(f, g);
        const double naive = loss_structure_naive(f, g);
        CHECK(fast == doctest::Approx(naive).epsilon(1e-9));
    }
}

TEST_CASE("metadata loss: frozen values") {
    SUBCASE("zero logits: N D log 2") {
        Matrix f(3, 2);
        Matrix w(4, 2);
        FeatureMatrix x(3, 4);
        x.set(0, 0, true);
        CHECK(loss_metadata(f, w, x) == doctest::Approx(12.0 * std::log(2.0)));
    }
    SUBCASE("saturated correct prediction contributes about zero") {
        Matrix f(1, 1);
        f(0, 0) = 1000.0;
        Matrix w(1, 1);
        w(0, 0) = 1.0;
        FeatureMatrix x(1, 1);
        x.set(0, 0, true);
        CHECK(loss_metadata(f, w, x) < 1e-6);
    }
    SUBCASE("hand value: 2 softplus(-2)") {
        Matrix f(1, 1);
        f(0, 0) = 2.0;
        Matrix w(2, 1);
        w(0, 0) = 1.0;
        w(1, 0) = -1.0;
        FeatureMatrix x(1, 2);
        x.set(0, 0, true);  // X = (1, 0)
        CHECK(loss_metadata(f, w, x) ==
              doctest::Approx(2.0 * std::log1p(std::exp(-2.0))).epsilon(1e-9));
        CHECK(loss_metadata(f, w, x) == doctest::Approx(0.25385602208594525).epsilon(1e-7));
    }
}

TEST_CASE("total loss: eta gating and additivity") {
    const DatasetBundle b = planted_bundle(16, 8);
    const WorkingGraph g = as_working(b);
    Matrix f(16, 2);
    RngStream rng(5);
    for (double& v : f.data()) v = rng.next_double();
    Matrix w(b.features.cols(), 2);
    for (double& v : w.data()) v = rng.next_double() - 0.5;
    const double l1 = loss_structure(f, g);
    const double l2 = loss_metadata(f, w, b.features);
    CHECK(total_loss(f, w, g, b.features, 0.0) == doctest::Approx(l1));
    CHECK(total_loss(f, w, g, b.features, 1.0) == doctest::Approx(l1 + l2));
    CHECK(total_loss(f, w, g, b.features, 1.5) == doctest::Approx(l1 + 1.5 * l2));
    CHECK_THROWS_AS(total_loss(f, w, g, b.features, -0.1), std::invalid_argument);
}

TEST_CASE("analytic gradients match central finite differences") {
    const DatasetBundle b = planted_bundle(30, 12);
    const WorkingGraph g = as_working(b);
    for (std::uint64_t pseed : {1u, 2u, 3u}) {
        const EmbedderParams params =
            init_embedder_params(b.features.cols(), 6, 2, 1000 + pseed);
        SUBCASE("structure term alone (eta = 0)") {
            const FdCheck c = fd_check(g, b.features, params, 0.0, 4, pseed);
            CHECK(c.max_rel_err < 1e-4);
        }
        SUBCASE("metadata term alone") {
            const FdCheck c = fd_check(g, b.features, params, 1.0, 4, pseed, true);
            CHECK(c.max_rel_err < 1e-4);
        }
        SUBCASE("combined (eta = 1.5)") {
            const FdCheck c = fd_check(g, b.features, params, 1.5, 4, pseed);
            CHECK(c.max_rel_err < 1e-4);
        }
    }
}

TEST_CASE("community-column permutation leaves the loss unchanged") {
    const DatasetBundle b = planted_bundle(20, 4);
    const WorkingGraph g = as_working(b);
    const std::size_t k = 3;
    Matrix f(20, k);
    Matrix w(b.features.cols(), k);
    RngStream rng(31);
    for (double& v : f.data()) v = rng.next_double();
    for (double& v : w.data()) v = rng.next_double() - 0.5;
    const std::size_t perm[3] = {2, 0, 1};
    Matrix fp(20, k), wp(b.features.cols(), k);
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t j = 0; j < k; ++j) fp(i, perm[j]) = f(i, j);
    for (std::size_t i = 0; i < b.features.cols(); ++i)
        for (std::size_t j = 0; j < k; ++j) wp(i, perm[j]) = w(i, j);
    CHECK(total_loss(f, w, g, b.features, 1.5) ==
          doctest::Approx(total_loss(fp, wp, g, b.features, 1.5)).epsilon(1e-12));
}

TEST_CASE("training reduces the loss substantially on a planted instance") {
    const DatasetBundle b = planted_bundle(30, 77);
    const WorkingGraph g = as_working(b);
    EmbedHyper hyper;
    hyper.eta = 1.0;
    hyper.epochs = 300;
    hyper.hidden = 16;
    hyper.k = 2;
    hyper.seed = 5;
    const TrainResult r = train_embedder(g, b.features, hyper);
    REQUIRE(r.loss_history.size() >= 2);
    CHECK(r.final_loss <= r.loss_history.front());
    CHECK(r.final_loss < 0.75 * r.loss_history.front());
    for (double v : r.f.data()) CHECK(v >= 0.0);

    // with a hotter step the same fixture halves the loss
    hyper.lr = 0.01;
    const TrainResult fast = train_embedder(g, b.features, hyper);
    CHECK(fast.final_loss < 0.5 * fast.loss_history.front());
}

TEST_CASE("warm start reproduces the previous final loss at epoch zero") {
    const DatasetBundle b = planted_bundle(24, 13);
    const WorkingGraph g = as_working(b);
    EmbedHyper hyper;
    hyper.eta = 1.0;
    hyper.epochs = 80;
    hyper.hidden = 8;
    hyper.k = 2;
    hyper.seed = 9;
    const TrainResult first = train_embedder(g, b.features, hyper);
    const TrainResult second = train_embedder(g, b.features, hyper, &first.params);
    CHECK(second.loss_history.front() == doctest::Approx(first.final_loss).epsilon(1e-12));
}

TEST_CASE("plain gradient descent with a small step is non-increasing") {
    const DatasetBundle b = planted_bundle(20, 6);
    const WorkingGraph g = as_working(b);
    EmbedHyper hyper;
    hyper.eta = 1.0;
    hyper.lr = 1e-4;
    hyper.epochs = 150;
    hyper.hidden = 8;
    hyper.k = 2;
    hyper.seed = 3;
    hyper.optimizer = Optimizer::sgd;
    const TrainResult r = train_embedder(g, b.features, hyper);
    for (std::size_t i = 1; i < r.loss_history.size(); ++i)
        CHECK(r.loss_history[i] <= r.loss_history[i - 1] + 1e-9);
}

TEST_CASE("identity propagation reduces the net to a per-node perceptron") {
    const DatasetBundle b = planted_bundle(12, 44);
    const WorkingGraph g = as_working(b);
    const EmbedderParams p = init_embedder_params(b.features.cols(), 5, 2, 7);
    const Matrix f = gcn_forward(g, b.features, p, true);
    // manual per-node forward
    const Matrix xd = to_dense(b.features);
    const Matrix expect = relu(matmul(relu(matmul(xd, p.w1)), p.w2));
    REQUIRE(f.rows() == expect.rows());
    for (std::size_t i = 0; i < f.rows(); ++i)
        for (std::size_t j = 0; j < f.cols(); ++j)
            CHECK(f(i, j) == doctest::Approx(expect(i, j)));
}

TEST_CASE("direct affiliation optimization keeps F nonnegative and descends") {
    const DatasetBundle b = planted_bundle(24, 21);
    const WorkingGraph g = as_working(b);
    EmbedHyper hyper;
    hyper.eta = 1.0;
    hyper.lr = 0.05;
    hyper.epochs = 150;
    hyper.k = 2;
    hyper.seed = 2;
    const DirectAffiliationResult r = train_affiliation_direct(g, b.features, hyper);
    CHECK(r.final_loss <= r.loss_history.front());
    for (double v : r.f.data()) CHECK(v >= 0.0);
}

TEST_CASE("cover extraction: one-hot, zero, and hand-set fixtures") {
    SUBCASE("one-hot rows select the argmax community for any delta <= 1") {
        Matrix f(3, 3);
        f(0, 1) = 1.0;
        f(1, 0) = 1.0;
        f(2, 2) = 1.0;
        const CommunityCover c = communities_from_affiliation(f, 0.5);
        REQUIRE(c.k() == 3);
        CHECK(c.communities[0] == std::vector<NodeId>{1});
        CHECK(c.communities[1] == std::vector<NodeId>{0});
        CHECK(c.communities[2] == std::vector<NodeId>{2});
    }
    SUBCASE("all-zero F falls back to argmax column 0") {
        Matrix f(4, 2);
        const CommunityCover c = communities_from_affiliation(f, 0.5);
        REQUIRE(c.k() == 1);
        CHECK(c.communities[0] == std::vector<NodeId>{0, 1, 2, 3});
    }
    SUBCASE("hand fixture equals brute-force thresholding") {
        Matrix f(4, 2);
        const double vals[4][2] = {{0.9, 0.1}, {0.6, 0.6}, {0.2, 0.3}, {0.0, 0.51}};
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 2; ++j) f(i, j) = vals[i][j];
        const double delta = 0.5;
        const CommunityCover c = communities_from_affiliation(f, delta);
        // brute force: memberships >= delta, empty rows -> argmax
        std::vector<std::vector<NodeId>> expect(2);
        for (NodeId u = 0; u < 4; ++u) {
            bool any = false;
            for (int j = 0; j < 2; ++j)
                if (vals[u][j] >= delta) {
                    expect[j].push_back(u);
                    any = true;
                }
            if (!any) expect[vals[u][0] >= vals[u][1] ? 0 : 1].push_back(u);
        }
        REQUIRE(c.k() == 2);
        CHECK(c.communities[0] == expect[0]);
        CHECK(c.communities[1] == expect[1]);
    }
}

TEST_CASE("parameter checkpoints round-trip through disk") {
    const EmbedderParams p = init_embedder_params(6, 4, 3, 12);
    const auto path = std::filesystem::temp_directory_path() / "embedder.ckpt";
    save_embedder_params(p, path);
    const EmbedderParams back = load_embedder_params(path);
    CHECK(std::equal(p.w1.data().begin(), p.w1.data().end(), back.w1.data().begin()));
    CHECK(std::equal(p.w2.data().begin(), p.w2.data().end(), back.w2.data().begin()));
    CHECK(std::equal(p.w_meta.data().begin(), p.w_meta.data().end(),
                     back.w_meta.data().begin()));
    std::ofstream(path) << "{\"format\":\"other\"}\n";
    CHECK_THROWS_AS(load_embedder_params(path), std::runtime_error);
}

TEST_CASE("default threshold grows with background density") {
    CHECK(default_affiliation_threshold(0, 100) == doctest::Approx(1e-12));
    const double d1 = default_affiliation_threshold(50, 100);
    const double d2 = default_affiliation_threshold(500, 100);
    CHECK(d1 > 0.0);
    CHECK(d2 > d1);
    // delta = sqrt(-log(1 - 2|E|/(N(N-1))))
    const double bg = 2.0 * 50 / (100.0 * 99.0);
    CHECK(d1 == doctest::Approx(std::sqrt(-std::log1p(-bg))));
}

}  // TEST_SUITE
