#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "metacode/data_io.hpp"

using namespace metacode;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path p = fs::temp_directory_path() / "metacode-tests";
    fs::create_directories(p);
    return p;
}

// 4-node ego fixture: ego + 3 alters, 2 circles, 3 features
void write_ego_fixture(const fs::path& dir, const std::string& id) {
    std::ofstream(dir / (id + ".feat")) << "10 1 0 0\n11 1 1 0\n12 0 0 1\n";
    std::ofstream(dir / (id + ".egofeat")) << "0 1 1\n";
    std::ofstream(dir / (id + ".edges")) << "10 11\n11 12\n";
    std::ofstream(dir / (id + ".circles")) << "circle0\t10\t11\ncircle1\t12\n";
}

CommunityCover two_blocks(std::size_t n) {
    CommunityCover c;
    c.n_nodes = n;
    std::vector<NodeId> a, b;
    for (NodeId v = 0; v < n / 2; ++v) a.push_back(v);
    for (NodeId v = NodeId(n / 2); v < n; ++v) b.push_back(v);
    c.communities = {a, b};
    return c;
}

}  // namespace

TEST_SUITE("data-io") {

TEST_CASE("agm pair probability follows 1 - (1-p)^c") {
    CHECK(agm_pair_probability(0, 0.3) == doctest::Approx(0.0));
    CHECK(agm_pair_probability(1, 0.1) == doctest::Approx(0.1));
    CHECK(agm_pair_probability(2, 0.1) == doctest::Approx(0.19));
    CHECK(agm_pair_probability(3, 0.2) == doctest::Approx(0.488));
}

TEST_CASE("agm generator: empirical pair frequencies match the closed form") {
    // nodes 0,1 share two communities; 0,2 share one; 2,3 share none
    CommunityCover cover;
    cover.n_nodes = 4;
    cover.communities = {{0, 1, 2}, {0, 1, 3}};
    const double p = 0.1;
    int count01 = 0, count23 = 0, count02 = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        RngStream rng(900 + t);
        const EdgeSet edges = agm_sample_edges(cover, p, rng);
        count01 += edges.contains(0, 1);
        count23 += edges.contains(2, 3);
        count02 += edges.contains(0, 2);
    }
    const double p01 = agm_pair_probability(2, p);
    const double sd01 = std::sqrt(p01 * (1 - p01) * trials);
    CHECK(std::abs(count01 - trials * p01) < 3 * sd01);
    CHECK(count23 == 0);  // zero shared communities: never connected
    const double p02 = agm_pair_probability(1, p);
    const double sd02 = std::sqrt(p02 * (1 - p02) * trials);
    CHECK(std::abs(count02 - trials * p02) < 3 * sd02);
}

TEST_CASE("agm bundles are seed-deterministic and respect zero-share pairs") {
    AgmSpec spec;
    spec.n = 60;
    spec.p = 0.15;
    spec.memberships = two_blocks(60);
    spec.seed = 7;
    const DatasetBundle a = generate_agm(spec);
    const DatasetBundle b = generate_agm(spec);
    const auto ha = a.hidden.evaluation_handle();
    const auto hb = b.hidden.evaluation_handle();
    REQUIRE(ha.edge_count() == hb.edge_count());
    CHECK(ha.edges() == hb.edges());
    CHECK(a.features == b.features);
    for (const Edge& e : ha.edges())
        CHECK(a.truth.shared_count(e.u, e.v) >= 1);
}

TEST_CASE("agm spec validation") {
    AgmSpec spec;
    spec.n = 4;
    spec.p = 1.5;
    spec.memberships = two_blocks(4);
    CHECK_THROWS_AS(generate_agm(spec), std::invalid_argument);
    spec.p = 0.2;
    spec.memberships.communities[0] = {0};  // node 1 uncovered
    CHECK_THROWS_AS(generate_agm(spec), std::invalid_argument);
}

TEST_CASE("erdos-renyi endpoints and expectation") {
    const HiddenNetwork empty = generate_er(50, 0.0, 1);
    CHECK(empty.evaluation_handle().edge_count() == 0);
    const HiddenNetwork complete = generate_er(20, 1.0, 1);
    CHECK(complete.evaluation_handle().edge_count() == 190);
    const std::size_t n = 2000;
    const double q = 0.01;
    const double expect = q * double(n) * double(n - 1) / 2.0;
    const double sd = std::sqrt(expect * (1 - q));
    const HiddenNetwork net = generate_er(n, q, 99);
    const auto h = net.evaluation_handle();
    CHECK(std::abs(double(h.edge_count()) - expect) < 3 * sd);
    for (const Edge& e : h.edges()) CHECK(e.u < e.v);  // canonical, no self loops
}

TEST_CASE("bundle round trip is byte-identical") {
    AgmSpec spec;
    spec.n = 100;
    spec.p = 0.08;
    spec.memberships = two_blocks(100);
    spec.seed = 21;
    spec.name = "roundtrip";
    const DatasetBundle b = generate_agm(spec);
    const fs::path p1 = temp_dir() / "bundle1.mcb";
    const fs::path p2 = temp_dir() / "bundle2.mcb";
    save_bundle(b, p1);
    const DatasetBundle loaded = load_bundle(p1);
    save_bundle(loaded, p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string s1((std::istreambuf_iterator<char>(f1)), {});
    const std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
    CHECK(loaded.node_count() == b.node_count());
    CHECK(loaded.hidden.evaluation_handle().edges() == b.hidden.evaluation_handle().edges());
    CHECK(loaded.features == b.features);
    CHECK(loaded.truth == b.truth);
}

TEST_CASE("truncated bundle file fails the checksum") {
    AgmSpec spec;
    spec.n = 30;
    spec.p = 0.2;
    spec.memberships = two_blocks(30);
    const fs::path p = temp_dir() / "trunc.mcb";
    save_bundle(generate_agm(spec), p);
    std::ifstream in(p, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), {});
    in.close();
    std::ofstream(p, std::ios::binary) << all.substr(0, all.size() - 10);
    CHECK_THROWS_WITH_AS(load_bundle(p), doctest::Contains("checksum"), std::runtime_error);
}

TEST_CASE("bundle version mismatch is rejected") {
    const fs::path p = temp_dir() / "badver.mcb";
    std::ofstream(p) << R"({"format":"metacode-bundle","version":9,"checksum":""})" << "\n";
    CHECK_THROWS_WITH_AS(load_bundle(p), doctest::Contains("version"), std::runtime_error);
}

TEST_CASE("ego fixture loads with dense reindexing and the ego appended") {
    const fs::path dir = temp_dir();
    write_ego_fixture(dir, "demo");
    const EgoLoadResult r = load_ego_snap((dir / "demo").string());
    const DatasetBundle& b = r.bundle;
    CHECK(b.node_count() == 4);
    CHECK(b.features.cols() == 3);
    CHECK(b.truth.k() == 2);
    const auto h = b.hidden.evaluation_handle();
    // 2 alter-alter edges + ego to 3 alters
    CHECK(h.edge_count() == 5);
    CHECK(h.degree(3) == 3);  // ego arrives last
    for (const Edge& e : h.edges()) {
        CHECK(e.u < e.v);
        CHECK(e.v < 4);
    }
    // ego features from .egofeat
    CHECK(b.features(3, 0) == 0);
    CHECK(b.features(3, 1) == 1);
    CHECK(b.features(3, 2) == 1);
    // circles over alter ids, reindexed
    CHECK(b.truth.communities[0] == std::vector<NodeId>{0, 1});
    CHECK(b.truth.communities[1] == std::vector<NodeId>{2});
}

TEST_CASE("ego loader error paths carry line numbers") {
    const fs::path dir = temp_dir() / "ego-errs";
    fs::create_directories(dir);
    SUBCASE("missing file") {
        CHECK_THROWS_WITH_AS(load_ego_snap((dir / "nope").string()),
                             doctest::Contains("missing file"), std::runtime_error);
    }
    SUBCASE("ragged feature row") {
        std::ofstream(dir / "r.feat") << "10 1 0 0\n11 1 1\n";
        std::ofstream(dir / "r.egofeat") << "0 1 1\n";
        std::ofstream(dir / "r.edges") << "";
        std::ofstream(dir / "r.circles") << "";
        CHECK_THROWS_WITH_AS(load_ego_snap((dir / "r").string()),
                             doctest::Contains(".feat:2"), std::runtime_error);
    }
    SUBCASE("circle referencing unknown node") {
        std::ofstream(dir / "c.feat") << "10 1 0 0\n";
        std::ofstream(dir / "c.egofeat") << "0 1 1\n";
        std::ofstream(dir / "c.edges") << "";
        std::ofstream(dir / "c.circles") << "circle0\t10\t99\n";
        CHECK_THROWS_WITH_AS(load_ego_snap((dir / "c").string()),
                             doctest::Contains(".circles:1"), std::runtime_error);
    }
    SUBCASE("empty circles file loads with a warning") {
        std::ofstream(dir / "e.feat") << "10 1 0 0\n11 0 1 0\n";
        std::ofstream(dir / "e.egofeat") << "0 1 1\n";
        std::ofstream(dir / "e.edges") << "10 11\n";
        std::ofstream(dir / "e.circles") << "";
        const EgoLoadResult r = load_ego_snap((dir / "e").string());
        CHECK(r.bundle.truth.k() == 0);
        CHECK(!r.warnings.empty());
    }
}

TEST_CASE("theorem instance: compliant constructions pass the independent checker") {
    for (std::size_t k : {std::size_t(2), std::size_t(3)}) {
        const std::size_t n_min = 30;
        const double eps = (double(n_min) - 1.0) / double(k) - 1.0;  // boundary inclusive
        const TheoremInstance inst =
            generate_theorem_instance(k, n_min, eps, 0.05, std::nullopt, 5);
        CHECK(inst.check.all());
        const AssumptionCheck recheck = check_assumptions(inst.bundle.truth, 0.05, eps);
        CHECK(recheck.all());
        CHECK(recheck.n_min >= n_min);
        CHECK(double(recheck.n_max - recheck.n_min) <= eps);
        for (std::size_t m : inst.multiplicity) {
            CHECK(m >= 1);
            CHECK(m <= k);
        }
    }
}

TEST_CASE("theorem instance: infeasible profiles report the failing inequality") {
    SUBCASE("all nodes in one community violates the 2/3 fraction") {
        std::vector<double> profile = {1.0, 0.0};
        try {
            generate_theorem_instance(2, 30, 13.5, 0.05, profile, 1);
            FAIL("expected infeasibility");
        } catch (const InfeasibleProfileError& e) {
            CHECK(std::string(e.what()).find("2/3") != std::string::npos);
        }
    }
    SUBCASE("60/30/10 multiplicities cannot satisfy the degree balance") {
        std::vector<double> profile = {0.6, 0.3, 0.1};
        try {
            generate_theorem_instance(3, 30, 5.0, 0.05, profile, 1);
            FAIL("expected infeasibility");
        } catch (const InfeasibleProfileError& e) {
            CHECK(std::string(e.what()).find("degree balance") != std::string::npos);
        }
    }
}

TEST_CASE("theorem hypothesis boundary is inclusive") {
    const std::size_t k = 2, n_min = 30;
    const double boundary = (double(n_min) - 1.0) / double(k) - 1.0;
    const TheoremInstance inst =
        generate_theorem_instance(k, n_min, boundary, 0.05, std::nullopt, 9);
    CHECK(inst.check.hypothesis_ok);
    // just past the boundary the hypothesis re-check fails
    const AssumptionCheck over = check_assumptions(inst.bundle.truth, 0.05, boundary + 0.51);
    CHECK_FALSE(over.hypothesis_ok);
}

TEST_CASE("cover file round trip") {
    CommunityCover cover;
    cover.n_nodes = 6;
    cover.communities = {{0, 1, 2}, {2, 3, 4, 5}};
    const fs::path p = temp_dir() / "cover.txt";
    write_cover_file(cover, p);
    const CommunityCover back = read_cover_file(p);
    CHECK(back.communities == cover.communities);
    CHECK(back.n_nodes == 6);
}

TEST_CASE("prototype-OR features reflect memberships") {
    CommunityCover cover = two_blocks(40);
    FeatureGenSpec fs;
    fs.d = 32;
    fs.flip_noise = 0.0;  // exact OR of prototypes
    RngStream rng(4);
    const FeatureMatrix x = generate_features(cover, fs, rng);
    // all nodes of one community share identical rows when noise is off
    for (std::size_t v = 1; v < 20; ++v)
        CHECK(std::equal(x.row(0).begin(), x.row(0).end(), x.row(v).begin()));
    for (std::size_t v = 21; v < 40; ++v)
        CHECK(std::equal(x.row(20).begin(), x.row(20).end(), x.row(v).begin()));
}

}  // TEST_SUITE
