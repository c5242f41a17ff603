#include <doctest.h>

#include "metacode/edge_infer.hpp"

using namespace metacode;

namespace {

// two feature groups with disjoint active bits; within-group edges explored
struct PlantedFixture {
    HiddenNetwork net;
    FeatureMatrix x;
    ExploredState state;
};

PlantedFixture planted(std::size_t per_group, std::size_t queried_per_group) {
    const std::size_t n = 2 * per_group;
    FeatureMatrix x(n, 8);
    for (std::size_t v = 0; v < n; ++v) {
        const bool group_a = v < per_group;
        for (std::size_t j = 0; j < 4; ++j) x.set(v, group_a ? j : 4 + j, true);
    }
    std::vector<Edge> edges;
    for (std::size_t g = 0; g < 2; ++g) {
        const std::size_t base = g * per_group;
        for (std::size_t i = 0; i < per_group; ++i)
            for (std::size_t j = i + 1; j < per_group; ++j)
                edges.push_back(Edge::make(NodeId(base + i), NodeId(base + j)));
    }
    PlantedFixture f{HiddenNetwork::from_edges(n, edges), std::move(x), ExploredState(n)};
    for (std::size_t g = 0; g < 2; ++g)
        for (std::size_t i = 0; i < queried_per_group; ++i)
            query_node(f.net, f.state, NodeId(g * per_group + i));
    return f;
}

SiamHyper tiny_hyper(std::uint64_t seed) {
    SiamHyper h;
    h.hidden = 8;
    h.e_dim = 4;
    h.epochs = 60;
    h.batch = 16;
    h.seed = seed;
    return h;
}

}  // namespace

TEST_SUITE("edge-infer") {

TEST_CASE("encoder: zero weights give zero embeddings") {
    SiamParams p;
    p.w1 = Matrix(3, 4);
    p.w2 = Matrix(4, 2);
    p.w_head.assign(2, 0.0);
    FeatureMatrix x(1, 3);
    x.set(0, 0, true);
    const auto e = encode(p, x.row(0));
    CHECK(e == std::vector<double>{0.0, 0.0});
}

TEST_CASE("encoder: twin sharing means identical rows get identical embeddings") {
    SiamHyper h = tiny_hyper(4);
    const SiamParams p = init_siam_params(6, h);
    FeatureMatrix x(2, 6);
    for (std::size_t j : {0u, 2u, 5u}) {
        x.set(0, j, true);
        x.set(1, j, true);
    }
    CHECK(encode(p, x.row(0)) == encode(p, x.row(1)));
}

TEST_CASE("encoder: hand-set 2x2 weights") {
    SiamParams p;
    p.w1 = Matrix(2, 2);
    p.w1(0, 0) = 1.0;
    p.w1(0, 1) = -1.0;
    p.w1(1, 0) = 0.5;
    p.w1(1, 1) = 2.0;
    p.w2 = Matrix(2, 2);
    p.w2(0, 0) = 1.0;
    p.w2(1, 1) = -3.0;
    p.w_head.assign(2, 0.0);
    FeatureMatrix x(1, 2);
    x.set(0, 0, true);
    x.set(0, 1, true);
    // x W1 = (1.5, 1) -> relu same; (.) W2 = (1.5, -3) -> relu (1.5, 0)
    CHECK(encode(p, x.row(0)) == std::vector<double>{1.5, 0.0});
}

TEST_CASE("score head: frozen values") {
    SiamParams p;
    p.w_head.assign(2, 0.0);
    p.bias = 0.0;
    SUBCASE("zero head scores one half everywhere") {
        const std::vector<double> eu{3.0, 1.0}, ev{0.5, 2.0};
        CHECK(score_pair(p, eu, ev) == doctest::Approx(0.5));
    }
    SUBCASE("zero embedding scores sigmoid of the bias") {
        p.w_head = {1.0, 1.0};
        p.bias = -1.2;
        const std::vector<double> zero{0.0, 0.0}, ev{4.0, 5.0};
        CHECK(score_pair(p, zero, ev) == doctest::Approx(sigmoid(-1.2)));
    }
    SUBCASE("hand value sigmoid(3)") {
        p.w_head = {1.0, 1.0};
        const std::vector<double> eu{1.0, 2.0}, ev{3.0, 0.0};
        CHECK(score_pair(p, eu, ev) == doctest::Approx(0.9525741268224334));
    }
}

TEST_CASE("score is symmetric in its arguments") {
    SiamHyper h = tiny_hyper(11);
    const SiamParams p = init_siam_params(5, h);
    RngStream rng(2);
    std::vector<double> eu(4), ev(4);
    for (double& v : eu) v = rng.next_double();
    for (double& v : ev) v = rng.next_double();
    CHECK(score_pair(p, eu, ev) == doctest::Approx(score_pair(p, ev, eu)));
    CHECK(contrastive_loss(eu, ev, true, 0.5) ==
          doctest::Approx(contrastive_loss(ev, eu, true, 0.5)));
}

TEST_CASE("contrastive loss: frozen values and zero conditions") {
    const std::vector<double> ex{1.0, 0.0}, ey{0.0, 1.0}, same{1.0, 1.0};
    CHECK(contrastive_loss(ex, ey, false, 0.5) == doctest::Approx(0.0));  // orthogonal negative
    CHECK(contrastive_loss(same, same, true, 0.5) == doctest::Approx(0.0));  // sim 1 >= r
    CHECK(contrastive_loss(ex, ey, true, 0.5) == doctest::Approx(0.125));    // sim 0, r 0.5
    CHECK_THROWS_AS(contrastive_loss(ex, ey, true, 0.0), std::invalid_argument);

    // zero iff every positive has sim >= r and every negative sim = 0
    const std::vector<double> partial{1.0, 0.5};
    CHECK(contrastive_loss(ex, partial, false, 0.5) > 0.0);  // negative with sim > 0
    CHECK(contrastive_loss(ex, partial, true, 0.95) > 0.0);  // positive short of the margin
    const std::vector<double> zero{0.0, 0.0};
    CHECK(contrastive_loss(ex, zero, false, 0.5) == doctest::Approx(0.0));  // sim(.,0) = 0
}

TEST_CASE("pair sampling: positives are E_t, negatives are certain non-edges") {
    PlantedFixture f = planted(5, 2);
    const PairBatch batch = sample_pairs(f.state, 3.0, 99);
    CHECK_FALSE(batch.degenerate);
    const std::size_t positives = f.state.explored_edges().size();
    std::size_t pos_seen = 0;
    const auto handle = f.net.evaluation_handle();
    for (const auto& pr : batch.pairs) {
        if (pr.connected) {
            pos_seen++;
            CHECK(f.state.explored_edges().contains(pr.u, pr.v));
        } else {
            // brute-force certainty: an endpoint is queried and the pair is no edge
            CHECK((f.state.is_queried(pr.u) || f.state.is_queried(pr.v)));
            CHECK_FALSE(f.state.explored_edges().contains(pr.u, pr.v));
            CHECK_FALSE(handle.has_edge(pr.u, pr.v));
        }
    }
    CHECK(pos_seen == positives);
    CHECK(batch.pairs.size() > positives);  // negatives present
}

TEST_CASE("pair sampling: degenerate when no certain non-edge exists") {
    SUBCASE("single queried node adjacent to everything") {
        HiddenNetwork net = HiddenNetwork::from_edges(
            4, {Edge::make(0, 1), Edge::make(0, 2), Edge::make(0, 3)});
        ExploredState state(4);
        query_node(net, state, 0);
        const PairBatch batch = sample_pairs(state, 5.0, 1);
        CHECK(batch.degenerate);
        CHECK(batch.pairs.size() == 3);  // positives still usable
    }
    SUBCASE("fully queried triangle has no non-edges at all") {
        HiddenNetwork net = HiddenNetwork::from_edges(
            3, {Edge::make(0, 1), Edge::make(1, 2), Edge::make(0, 2)});
        ExploredState state(3);
        for (NodeId v = 0; v < 3; ++v) query_node(net, state, v);
        const PairBatch batch = sample_pairs(state, 5.0, 1);
        CHECK(batch.degenerate);
    }
    SUBCASE("no explored edges is an error") {
        ExploredState state(4);
        CHECK_THROWS_AS(sample_pairs(state, 5.0, 1), std::invalid_argument);
    }
}

TEST_CASE("joint loss gradients match central finite differences") {
    PlantedFixture f = planted(4, 2);
    const PairBatch batch = sample_pairs(f.state, 2.0, 5);
    REQUIRE(batch.pairs.size() >= 4);
    for (std::uint64_t pseed : {1u, 2u, 3u}) {
        SiamHyper h = tiny_hyper(500 + pseed);
        SiamParams params = init_siam_params(8, h);
        auto [loss, grads] = siam_loss_and_grads(params, f.x, batch.pairs);
        (void)loss;
        RngStream rng(pseed);
        const double step = 1e-5;
        double max_rel = 0.0;
        auto probe = [&](double& slot, double analytic) {
            const double orig = slot;
            slot = orig + step;
            const double up = siam_loss_and_grads(params, f.x, batch.pairs).first;
            slot = orig - step;
            const double dn = siam_loss_and_grads(params, f.x, batch.pairs).first;
            slot = orig;
            const double fd = (up - dn) / (2 * step);
            max_rel = std::max(max_rel, std::abs(analytic - fd) /
                                            std::max({1.0, std::abs(analytic), std::abs(fd)}));
        };
        for (int i = 0; i < 6; ++i) {
            const std::size_t i1 = rng.next_index(params.w1.data().size());
            probe(params.w1.data()[i1], grads.w1.data()[i1]);
            const std::size_t i2 = rng.next_index(params.w2.data().size());
            probe(params.w2.data()[i2], grads.w2.data()[i2]);
            const std::size_t ih = rng.next_index(params.w_head.size());
            probe(params.w_head[ih], grads.w_head[ih]);
        }
        probe(params.bias, grads.bias);
        CHECK(max_rel < 1e-4);
    }
}

TEST_CASE("training separates planted groups") {
    PlantedFixture f = planted(8, 4);
    const PairBatch batch = sample_pairs(f.state, 3.0, 17);
    SiamHyper h;
    h.hidden = 16;
    h.e_dim = 8;
    h.epochs = 300;
    h.batch = 32;
    h.seed = 23;
    const SiamTrainResult r = train_siamnet(f.x, batch, h);
    CHECK(r.final_loss <= r.loss_history.front());
    double pos_mean = 0.0, neg_mean = 0.0;
    std::size_t pos_n = 0, neg_n = 0;
    for (const auto& pr : batch.pairs) {
        const auto eu = encode(r.params, f.x.row(pr.u));
        const auto ev = encode(r.params, f.x.row(pr.v));
        const double psi = score_pair(r.params, eu, ev);
        if (pr.connected) {
            pos_mean += psi;
            pos_n++;
        } else {
            neg_mean += psi;
            neg_n++;
        }
    }
    pos_mean /= double(pos_n);
    neg_mean /= double(neg_n);
    CHECK(pos_mean - neg_mean > 0.5);
}

TEST_CASE("warm start reproduces the previous loss at epoch zero") {
    PlantedFixture f = planted(5, 2);
    const PairBatch batch = sample_pairs(f.state, 2.0, 3);
    SiamHyper h = tiny_hyper(77);
    const SiamTrainResult first = train_siamnet(f.x, batch, h);
    const SiamTrainResult second = train_siamnet(f.x, batch, h, &first.params);
    CHECK(second.loss_history.front() == doctest::Approx(first.final_loss).epsilon(1e-12));
}

TEST_CASE("inference: threshold one excludes everything (psi < 1 strictly)") {
    PlantedFixture f = planted(5, 2);
    SiamHyper h = tiny_hyper(6);
    const SiamParams p = init_siam_params(8, h);
    CHECK(infer_edges(p, f.x, f.state, 1.0, 1000).empty());
}

TEST_CASE("inference: no candidates once every node is queried") {
    HiddenNetwork net = HiddenNetwork::from_edges(3, {Edge::make(0, 1)});
    ExploredState state(3);
    for (NodeId v = 0; v < 3; ++v) query_node(net, state, v);
    SiamHyper h = tiny_hyper(6);
    FeatureMatrix x(3, 8);
    const SiamParams p = init_siam_params(8, h);
    CHECK(infer_edges(p, x, state, 0.0, 1000).empty());
}

TEST_CASE("inference equals the brute-force filter on an 8-node fixture") {
    PlantedFixture f = planted(4, 1);  // queried 0 and 4; nodes 1,2,3,5,6,7 uncertain
    SiamHyper h = tiny_hyper(42);
    SiamParams p = init_siam_params(8, h);
    RngStream rng(3);
    for (double& v : p.w_head) v = rng.next_double() - 0.2;
    p.bias = 0.3;
    const double threshold = 0.55;
    const EdgeSet got = infer_edges(p, f.x, f.state, threshold, 1000);
    EdgeSet expect;
    for (NodeId u = 0; u < 8; ++u)
        for (NodeId v = u + 1; v < 8; ++v) {
            if (f.state.is_queried(u) || f.state.is_queried(v)) continue;
            const auto eu = encode(p, f.x.row(u));
            const auto ev = encode(p, f.x.row(v));
            if (score_pair(p, eu, ev) >= threshold) expect.insert(Edge::make(u, v));
        }
    CHECK(got.size() == expect.size());
    for (const Edge& e : got) {
        CHECK(expect.contains(e));
        CHECK_FALSE(f.state.is_certain(e.u, e.v));  // never a certain pair
    }
}

TEST_CASE("siamnet checkpoints round-trip through disk") {
    SiamHyper h = tiny_hyper(3);
    const SiamParams p = init_siam_params(6, h);
    const auto path = std::filesystem::temp_directory_path() / "siam.ckpt";
    save_siam_params(p, path);
    const SiamParams back = load_siam_params(path);
    CHECK(std::equal(p.w1.data().begin(), p.w1.data().end(), back.w1.data().begin()));
    CHECK(p.w_head == back.w_head);
    CHECK(p.bias == back.bias);
    CHECK(p.margin == back.margin);
}

TEST_CASE("inference cap keeps the highest-scoring candidates") {
    PlantedFixture f = planted(6, 1);
    SiamHyper h = tiny_hyper(8);
    SiamParams p = init_siam_params(8, h);
    RngStream rng(9);
    for (double& v : p.w_head) v = rng.next_double();
    p.bias = 1.0;
    const EdgeSet all = infer_edges(p, f.x, f.state, 0.0, 100000);
    REQUIRE(all.size() > 4);
    const EdgeSet capped = infer_edges(p, f.x, f.state, 0.0, 4);
    CHECK(capped.size() == 4);
    // the capped set scores dominate every excluded candidate
    const auto scores = score_uncertain_pairs(p, f.x, f.state);
    double min_kept = 1.0;
    for (const Edge& e : capped) min_kept = std::min(min_kept, scores.at(e.key()));
    for (const Edge& e : all)
        if (!capped.contains(e)) CHECK(scores.at(e.key()) <= min_kept + 1e-12);
}

}  // TEST_SUITE
