#pragma once

// Orchestration: the full iterative pipeline (initial inference, embedding,
// query selection, edge inference), its single-shot variant, the four
// ablations, multi-seed experiments, theorem verification and the scaling
// benchmark, plus report serialization.

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "metacode/affil_embed.hpp"
#include "metacode/data_io.hpp"
#include "metacode/edge_infer.hpp"
#include "metacode/explore.hpp"
#include "metacode/graph.hpp"
#include "metacode/init_infer.hpp"
#include "metacode/metrics.hpp"

namespace metacode {

enum class Variant {
    metacode,
    sim,
    ablation1,  // direct F optimization (no encoder)
    ablation2,  // perceptron propagation (A_hat := I)
    ablation3,  // RS query selection
    ablation4,  // no edge inference
    rs_baseline,
    dfs_baseline,
};

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::metacode: return "metacode";
        case Variant::sim: return "sim";
        case Variant::ablation1: return "ablation1";
        case Variant::ablation2: return "ablation2";
        case Variant::ablation3: return "ablation3";
        case Variant::ablation4: return "ablation4";
        case Variant::rs_baseline: return "rs_baseline";
        case Variant::dfs_baseline: return "dfs_baseline";
    }
    return "?";
}

inline Variant variant_from_name(const std::string& s) {
    for (Variant v : {Variant::metacode, Variant::sim, Variant::ablation1, Variant::ablation2,
                      Variant::ablation3, Variant::ablation4, Variant::rs_baseline,
                      Variant::dfs_baseline})
        if (s == variant_name(v)) return v;
    throw std::invalid_argument("unknown variant: " + s);
}

struct RunConfig {
    Variant variant = Variant::metacode;
    std::uint64_t seed = 1;

    std::optional<std::size_t> budget;   // absolute T
    std::optional<double> budget_pct;    // else percentage of N (0-100]

    // embedding
    double eta = 1.5;
    double lr_embed = 1e-3;
    std::size_t embed_epochs = 300;
    std::size_t embed_warm_epochs = 60;
    std::size_t hidden = 128;
    bool warm_start = true;

    // exploration
    double lambda = 2.0;
    bool strict_mean = false;

    // initial inference
    double p_init = 0.1;
    std::size_t mac_rounds = 20;

    // edge inference
    double margin = 0.5;
    double threshold = 0.9;
    double cap = 2.0;  // |inferred| <= cap * |E_t|
    double neg_ratio = 5.0;
    std::optional<std::size_t> infer_every;  // default 1, or ceil(0.01 N) for N > 5000
    double lr_siam = 0.05;
    std::size_t siam_epochs = 100;
    std::size_t siam_warm_epochs = 15;
    std::size_t siam_hidden = 256;
    std::size_t e_dim = 64;
    std::size_t batch = 512;

    // evaluation
    std::optional<double> delta;
    std::vector<double> checkpoint_pcts = {10.0, 20.0, 30.0, 40.0};
    bool enable_metrics = true;

    std::size_t resolve_budget(std::size_t n) const {
        std::size_t t;
        if (budget) t = *budget;
        else if (budget_pct) t = std::size_t(std::floor(*budget_pct / 100.0 * double(n)));
        else t = std::size_t(std::floor(0.4 * double(n)));
        if (t > n) throw std::invalid_argument("budget exceeds node count");
        return t;
    }

    std::size_t resolve_infer_every(std::size_t n) const {
        if (infer_every) return std::max<std::size_t>(1, *infer_every);
        if (n > 5000) return std::size_t(std::ceil(0.01 * double(n)));
        return 1;
    }
};

inline nlohmann::json run_config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["variant"] = variant_name(c.variant);
    j["seed"] = c.seed;
    if (c.budget) j["budget"] = *c.budget;
    if (c.budget_pct) j["budget_pct"] = *c.budget_pct;
    j["eta"] = c.eta;
    j["lambda"] = c.lambda;
    j["p_init"] = c.p_init;
    j["mac_rounds"] = c.mac_rounds;
    j["margin"] = c.margin;
    j["threshold"] = c.threshold;
    j["cap"] = c.cap;
    j["neg_ratio"] = c.neg_ratio;
    if (c.infer_every) j["infer_every"] = *c.infer_every;
    j["embed_epochs"] = c.embed_epochs;
    j["embed_warm_epochs"] = c.embed_warm_epochs;
    j["siam_epochs"] = c.siam_epochs;
    j["siam_warm_epochs"] = c.siam_warm_epochs;
    j["hidden"] = c.hidden;
    j["siam_hidden"] = c.siam_hidden;
    j["e_dim"] = c.e_dim;
    j["batch"] = c.batch;
    j["lr_embed"] = c.lr_embed;
    j["lr_siam"] = c.lr_siam;
    j["strict_mean"] = c.strict_mean;
    j["warm_start"] = c.warm_start;
    if (c.delta) j["delta"] = *c.delta;
    j["checkpoints"] = c.checkpoint_pcts;
    j["enable_metrics"] = c.enable_metrics;
    return j;
}

struct CheckpointRow {
    double pct = 0.0;  // percent of N at which this was evaluated
    std::size_t t = 0;
    MetricReport metrics;
    std::size_t n_ex = 0;
    std::size_t explored_edges = 0;
    std::size_t working_edges = 0;
};

struct RunReport {
    std::string dataset;
    std::string variant;
    std::uint64_t seed = 0;
    std::size_t n = 0, k = 0, budget = 0;
    std::vector<CheckpointRow> checkpoints;
    std::vector<std::size_t> n_ex_series;  // after each query
    std::vector<NodeId> query_order;
    nlohmann::json config_echo;
    std::map<std::string, double> phase_seconds;
    double total_seconds = 0.0;
    std::uint64_t oracle_queries = 0;
    std::uint64_t privileged_handles = 0;
    CommunityCover final_cover;
    Matrix final_f;

    nlohmann::json to_json(bool include_timings = true) const {
        nlohmann::json j;
        j["dataset"] = dataset;
        j["variant"] = variant;
        j["seed"] = seed;
        j["nodes"] = n;
        j["communities"] = k;
        j["budget"] = budget;
        j["oracle_queries"] = oracle_queries;
        j["privileged_handles"] = privileged_handles;
        j["n_ex"] = n_ex_series;
        j["query_order"] = query_order;
        j["config"] = config_echo;
        j["checkpoints"] = nlohmann::json::array();
        for (const auto& c : checkpoints) {
            nlohmann::json row;
            row["pct"] = c.pct;
            row["t"] = c.t;
            row["nmi"] = c.metrics.covers_scored ? nlohmann::json(c.metrics.nmi)
                                                 : nlohmann::json();
            row["avg_f1"] = c.metrics.covers_scored ? nlohmann::json(c.metrics.avg_f1)
                                                    : nlohmann::json();
            row["auc"] = c.metrics.auc_defined ? nlohmann::json(c.metrics.auc)
                                               : nlohmann::json();
            row["matches"] = nlohmann::json::array();
            for (const auto& m : c.metrics.matches)
                row["matches"].push_back({{"truth", m.truth_index},
                                          {"detected", m.detected_index},
                                          {"f1", m.f1}});
            row["n_ex"] = c.n_ex;
            row["explored_edges"] = c.explored_edges;
            row["working_edges"] = c.working_edges;
            j["checkpoints"].push_back(row);
        }
        if (include_timings) {
            j["seconds"] = phase_seconds;
            j["total_seconds"] = total_seconds;
        }
        return j;
    }

    static std::string csv_header() {
        return "dataset,variant,seed,pct,nmi,avg_f1,auc,n_ex,seconds";
    }

    std::vector<std::string> csv_rows() const {
        std::vector<std::string> rows;
        for (const auto& c : checkpoints) {
            std::ostringstream os;
            os << dataset << ',' << variant << ',' << seed << ',' << c.pct << ',';
            if (c.metrics.covers_scored) os << c.metrics.nmi;
            os << ',';
            if (c.metrics.covers_scored) os << c.metrics.avg_f1;
            os << ',';
            if (c.metrics.auc_defined) os << c.metrics.auc;
            os << ',' << c.n_ex << ',' << total_seconds;
            rows.push_back(os.str());
        }
        return rows;
    }
};

namespace detail {

class PhaseTimer {
public:
    explicit PhaseTimer(std::map<std::string, double>& sink) : sink_(sink) {}
    template <typename F>
    auto time(const std::string& phase, F&& fn) {
        const auto start = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            sink_[phase] += std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                          start).count();
        } else {
            auto out = fn();
            sink_[phase] += std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                          start).count();
            return out;
        }
    }

private:
    std::map<std::string, double>& sink_;
};

}  // namespace detail

// One pass of Algorithm "initialize, then loop { embed, evaluate, select,
// query, infer, merge }". All variants except `sim` share this body.
inline RunReport run_metacode(const DatasetBundle& bundle, const RunConfig& config) {
    const auto wall_start = std::chrono::steady_clock::now();
    const std::size_t n = bundle.node_count();
    const std::size_t k = bundle.truth.k() > 0 ? bundle.truth.k() : 2;
    const std::size_t budget = config.resolve_budget(n);
    const std::size_t infer_every = config.resolve_infer_every(n);
    const Variant variant = config.variant;
    const bool infers = variant != Variant::ablation4;
    if (variant == Variant::sim)
        throw std::invalid_argument("run_metacode: use run_metacode_sim for the sim variant");

    RunReport report;
    report.dataset = bundle.name;
    report.variant = variant_name(variant);
    report.seed = config.seed;
    report.n = n;
    report.k = k;
    report.budget = budget;
    report.config_echo = run_config_to_json(config);
    detail::PhaseTimer timer(report.phase_seconds);

    // checkpoint schedule: floor(pct/100 * N), plus the final budget
    std::vector<std::pair<double, std::size_t>> checkpoints;
    for (double pct : config.checkpoint_pcts) {
        const std::size_t t = std::size_t(std::floor(pct / 100.0 * double(n)));
        if (t <= budget) checkpoints.emplace_back(pct, t);
    }

    ExploredState state(n);

    // initial metadata-only inference
    EdgeSet inferred = timer.time("init_infer", [&] {
        const auto mac = mac_decompose(bundle.features, k, mix_seed(config.seed, "mac"),
                                       config.mac_rounds);
        return agm_sample_initial(mac.c, n, config.p_init, mix_seed(config.seed, "init-agm"));
    });
    WorkingGraph g = merge_inferred(state, inferred);

    RngStream explore_rng = RngStream::derive(config.seed, "explore");
    DfsFrontier dfs_frontier;
    std::optional<EmbedderParams> embed_params;
    std::optional<DirectAffiliationResult> direct_state;
    std::optional<SiamParams> siam_params;
    Matrix f;

    EmbedHyper embed_hyper;
    embed_hyper.eta = config.eta;
    embed_hyper.lr = config.lr_embed;
    embed_hyper.hidden = config.hidden;
    embed_hyper.k = k;
    embed_hyper.seed = mix_seed(config.seed, "embedder");
    embed_hyper.identity_propagation = variant == Variant::ablation2;

    auto train_f = [&](bool warm) {
        embed_hyper.epochs = warm ? config.embed_warm_epochs : config.embed_epochs;
        if (variant == Variant::ablation1) {
            direct_state = train_affiliation_direct(g, bundle.features, embed_hyper,
                                                    warm ? &*direct_state : nullptr);
            f = direct_state->f;
        } else {
            TrainResult r = train_embedder(g, bundle.features, embed_hyper,
                                           warm ? &*embed_params : nullptr);
            embed_params = std::move(r.params);
            f = std::move(r.f);
        }
    };

    std::uint64_t handles_used = 0;
    auto evaluate_at = [&](double pct, std::size_t t) {
        if (!config.enable_metrics) return;
        ++handles_used;
        CheckpointRow row;
        row.pct = pct;
        row.t = t;
        row.n_ex = state.explored_node_count();
        row.explored_edges = state.explored_edges().size();
        row.working_edges = g.edge_count();
        const CommunityCover detected = communities_from_affiliation(f, g, config.delta);
        PairScores scores;
        if (siam_params)
            scores = score_uncertain_pairs(*siam_params, bundle.features, state);
        const auto handle = bundle.hidden.evaluation_handle();
        row.metrics = evaluate_detection(bundle.truth, detected, state, scores, handle);
        report.checkpoints.push_back(std::move(row));
    };

    for (std::size_t t = 0; t <= budget; ++t) {
        timer.time("embed", [&] { train_f(config.warm_start && t > 0); });
        for (const auto& [pct, ct] : checkpoints)
            if (ct == t) timer.time("evaluate", [&] { evaluate_at(pct, t); });
        if (t == budget) {
            const bool at_grid = std::any_of(checkpoints.begin(), checkpoints.end(),
                                             [&](const auto& c) { return c.second == t; });
            if (!at_grid)
                timer.time("evaluate",
                           [&] { evaluate_at(100.0 * double(t) / double(n), t); });
            break;
        }

        const NodeId v = timer.time("select", [&]() -> NodeId {
            switch (variant) {
                case Variant::ablation3:
                case Variant::rs_baseline:
                    return select_random(state, explore_rng);
                case Variant::dfs_baseline:
                    return select_dfs(state, dfs_frontier, explore_rng);
                default:
                    return select_metacode(f, state, config.lambda, config.strict_mean);
            }
        });
        const auto neighbors = query_node(bundle.hidden, state, v);
        if (variant == Variant::dfs_baseline) dfs_frontier.observe(neighbors, state);
        report.n_ex_series.push_back(state.explored_node_count());

        if (!infers) {
            // inference removed: E^(t) = E_t from the first query onward
            inferred = EdgeSet{};
        } else if ((t + 1) % infer_every == 0 && !state.explored_edges().empty()) {
            timer.time("edge_infer", [&] {
                const PairBatch batch =
                    sample_pairs(state, config.neg_ratio, mix_seed(config.seed, "neg", t));
                if (!batch.pairs.empty()) {
                    SiamHyper sh;
                    sh.lr = config.lr_siam;
                    sh.hidden = config.siam_hidden;
                    sh.e_dim = config.e_dim;
                    sh.batch = config.batch;
                    sh.margin = config.margin;
                    sh.seed = mix_seed(config.seed, "siam", t);
                    sh.epochs = (config.warm_start && siam_params) ? config.siam_warm_epochs
                                                                   : config.siam_epochs;
                    SiamTrainResult r =
                        train_siamnet(bundle.features, batch, sh,
                                      siam_params ? &*siam_params : nullptr);
                    siam_params = std::move(r.params);
                    const std::size_t cap = std::size_t(
                        std::ceil(config.cap * double(state.explored_edges().size())));
                    inferred = infer_edges(*siam_params, bundle.features, state,
                                           config.threshold, cap);
                }
            });
        }
        inferred = reconcile_inferred(state, inferred);
        g = merge_inferred(state, inferred);
    }

    report.final_cover = communities_from_affiliation(f, g, config.delta);
    report.final_f = f;
    report.query_order = state.query_order();
    report.oracle_queries = state.t();
    report.privileged_handles = handles_used;
    report.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return report;
}

// Single-shot variant: random queries up front, one edge-inference round,
// one embedder training, one evaluation. No iterations.
inline RunReport run_metacode_sim(const DatasetBundle& bundle, const RunConfig& config) {
    const auto wall_start = std::chrono::steady_clock::now();
    const std::size_t n = bundle.node_count();
    const std::size_t k = bundle.truth.k() > 0 ? bundle.truth.k() : 2;
    const std::size_t budget = config.resolve_budget(n);

    RunReport report;
    report.dataset = bundle.name;
    report.variant = variant_name(Variant::sim);
    report.seed = config.seed;
    report.n = n;
    report.k = k;
    report.budget = budget;
    report.config_echo = run_config_to_json(config);
    detail::PhaseTimer timer(report.phase_seconds);

    ExploredState state(n);
    RngStream explore_rng = RngStream::derive(config.seed, "explore");
    for (std::size_t t = 0; t < budget; ++t) {
        query_node(bundle.hidden, state, select_random(state, explore_rng));
        report.n_ex_series.push_back(state.explored_node_count());
    }

    std::optional<SiamParams> siam_params;
    EdgeSet inferred;
    if (!state.explored_edges().empty()) {
        timer.time("edge_infer", [&] {
            const PairBatch batch =
                sample_pairs(state, config.neg_ratio, mix_seed(config.seed, "neg", 0));
            if (!batch.pairs.empty()) {
                SiamHyper sh;
                sh.lr = config.lr_siam;
                sh.hidden = config.siam_hidden;
                sh.e_dim = config.e_dim;
                sh.batch = config.batch;
                sh.margin = config.margin;
                sh.seed = mix_seed(config.seed, "siam", 0);
                sh.epochs = config.siam_epochs;
                siam_params = train_siamnet(bundle.features, batch, sh).params;
                const std::size_t cap =
                    std::size_t(std::ceil(config.cap * double(state.explored_edges().size())));
                inferred =
                    infer_edges(*siam_params, bundle.features, state, config.threshold, cap);
            }
        });
    }
    const WorkingGraph g = merge_inferred(state, reconcile_inferred(state, inferred));

    EmbedHyper embed_hyper;
    embed_hyper.eta = config.eta;
    embed_hyper.lr = config.lr_embed;
    embed_hyper.epochs = config.embed_epochs;
    embed_hyper.hidden = config.hidden;
    embed_hyper.k = k;
    embed_hyper.seed = mix_seed(config.seed, "embedder");
    Matrix f;
    timer.time("embed", [&] { f = train_embedder(g, bundle.features, embed_hyper).f; });

    std::uint64_t handles_used = 0;
    if (config.enable_metrics) {
        timer.time("evaluate", [&] {
            ++handles_used;
            CheckpointRow row;
            row.pct = 100.0 * double(budget) / double(n);
            row.t = budget;
            row.n_ex = state.explored_node_count();
            row.explored_edges = state.explored_edges().size();
            row.working_edges = g.edge_count();
            const CommunityCover detected = communities_from_affiliation(f, g, config.delta);
            PairScores scores;
            if (siam_params)
                scores = score_uncertain_pairs(*siam_params, bundle.features, state);
            const auto handle = bundle.hidden.evaluation_handle();
            row.metrics = evaluate_detection(bundle.truth, detected, state, scores, handle);
            report.checkpoints.push_back(std::move(row));
        });
    }
    report.final_cover = communities_from_affiliation(f, g, config.delta);
    report.final_f = f;
    report.query_order = state.query_order();
    report.oracle_queries = state.t();
    report.privileged_handles = handles_used;
    report.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return report;
}

inline RunReport run_variant(const DatasetBundle& bundle, const RunConfig& config) {
    return config.variant == Variant::sim ? run_metacode_sim(bundle, config)
                                          : run_metacode(bundle, config);
}

inline RunReport run_ablation(const DatasetBundle& bundle, RunConfig config, int which) {
    switch (which) {
        case 1: config.variant = Variant::ablation1; break;
        case 2: config.variant = Variant::ablation2; break;
        case 3: config.variant = Variant::ablation3; break;
        case 4: config.variant = Variant::ablation4; break;
        default: throw std::invalid_argument("run_ablation: which must be 1..4");
    }
    return run_metacode(bundle, config);
}

// Independent seeds run on worker threads; reports come back in seed order.
inline std::vector<RunReport> run_seeds(const DatasetBundle& bundle, const RunConfig& base,
                                        const std::vector<std::uint64_t>& seeds,
                                        std::size_t jobs = 0) {
    if (jobs == 0) jobs = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    std::vector<RunReport> reports(seeds.size());
    std::vector<std::exception_ptr> errors(seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= seeds.size()) break;
            try {
                RunConfig c = base;
                c.seed = seeds[i];
                reports[i] = run_variant(bundle, c);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < std::min(jobs, seeds.size()); ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return reports;
}

// ---------------------------------------------------------------------------
// theorem verification

struct TheoremVerifyConfig {
    std::size_t instances = 20;
    std::vector<std::size_t> ks = {2, 3};
    std::size_t n_min = 30;
    double p = 0.05;
    std::optional<double> eps;  // default: the hypothesis boundary per K
    std::uint64_t seed = 1;
};

struct TheoremInstanceResult {
    std::size_t k = 0;
    double eps = 0.0;
    bool assumptions_ok = false;
    std::string assumption_failure;
    bool ordering_ok = false;    // all class-mean orderings M > M'
    bool above_mean_ok = false;  // every M >= 2 class mean >= global mean
    std::vector<double> empirical_class_mean;
    std::vector<double> closed_form_class_mean;
    std::vector<std::size_t> class_count;
    double global_mean = 0.0;
};

struct TheoremReport {
    std::vector<TheoremInstanceResult> instances;
    std::size_t usable = 0;
    std::size_t excluded = 0;
    double ordering_pass_rate = 0.0;
    double above_mean_pass_rate = 0.0;
    // pooled closed-form check per (K, class): z = |emp - closed| / SE
    struct PooledClass {
        std::size_t k = 0;
        std::size_t multiplicity = 0;
        double empirical_mean = 0.0;
        double closed_form_mean = 0.0;
        double standard_error = 0.0;
        double z = 0.0;
        std::size_t samples = 0;
    };
    std::vector<PooledClass> pooled;
    double min_effect_size = 0.0;  // smallest (class gap / class-mean SE) over instances

    static std::string csv_header() {
        return "instance,k,eps,assumptions_ok,ordering_ok,above_mean_ok,global_mean";
    }
    std::vector<std::string> csv_rows() const {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < instances.size(); ++i) {
            const auto& r = instances[i];
            std::ostringstream os;
            os << i << ',' << r.k << ',' << r.eps << ',' << r.assumptions_ok << ','
               << r.ordering_ok << ',' << r.above_mean_ok << ',' << r.global_mean;
            out.push_back(os.str());
        }
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["usable_instances"] = usable;
        j["excluded_instances"] = excluded;
        j["ordering_pass_rate"] = ordering_pass_rate;
        j["above_mean_pass_rate"] = above_mean_pass_rate;
        j["pooled_classes"] = nlohmann::json::array();
        for (const auto& p : pooled) {
            nlohmann::json row;
            row["k"] = p.k;
            row["multiplicity"] = p.multiplicity;
            row["empirical_mean"] = p.empirical_mean;
            row["closed_form_mean"] = p.closed_form_mean;
            row["standard_error"] = p.standard_error;
            row["z"] = p.z;
            row["samples"] = p.samples;
            j["pooled_classes"].push_back(row);
        }
        j["instances"] = nlohmann::json::array();
        for (const auto& r : instances) {
            nlohmann::json row;
            row["k"] = r.k;
            row["eps"] = r.eps;
            row["assumptions_ok"] = r.assumptions_ok;
            if (!r.assumption_failure.empty()) row["failure"] = r.assumption_failure;
            row["ordering_ok"] = r.ordering_ok;
            row["above_mean_ok"] = r.above_mean_ok;
            row["empirical_class_mean"] = r.empirical_class_mean;
            row["closed_form_class_mean"] = r.closed_form_class_mean;
            j["instances"].push_back(row);
        }
        return j;
    }
};

inline TheoremReport verify_theorems(const TheoremVerifyConfig& cfg) {
    TheoremReport report;
    struct PoolKey {
        std::size_t k, mult;
        bool operator<(const PoolKey& o) const {
            return k != o.k ? k < o.k : mult < o.mult;
        }
    };
    struct PoolAgg {
        double deg_sum = 0.0;
        double closed_sum = 0.0;
        double var_sum = 0.0;
        std::size_t count = 0;
    };
    std::map<PoolKey, PoolAgg> pools;

    std::size_t ordering_pass = 0, above_pass = 0;
    double min_effect = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cfg.instances; ++i) {
        const std::size_t k = cfg.ks[i % cfg.ks.size()];
        const double eps = cfg.eps ? *cfg.eps : (double(cfg.n_min) - 1.0) / double(k) - 1.0;
        TheoremInstanceResult r;
        r.k = k;
        r.eps = eps;
        TheoremInstance inst;
        try {
            FeatureGenSpec feat;
            feat.d = 16;  // features are irrelevant to the degree checks
            inst = generate_theorem_instance(k, cfg.n_min, eps, cfg.p, std::nullopt,
                                             mix_seed(cfg.seed, "theorem", i), feat);
        } catch (const InfeasibleProfileError& e) {
            r.assumption_failure = e.what();
            report.instances.push_back(std::move(r));
            report.excluded++;
            continue;
        }
        // independent re-check on the generated cover
        const AssumptionCheck check = check_assumptions(inst.bundle.truth, cfg.p, eps);
        r.assumptions_ok = check.all();
        if (!r.assumptions_ok) {
            r.assumption_failure = check.failure;
            report.instances.push_back(std::move(r));
            report.excluded++;
            continue;
        }

        const auto handle = inst.bundle.hidden.evaluation_handle();
        const auto degs = handle.degree_stats();
        r.class_count.assign(k, 0);
        r.empirical_class_mean.assign(k, 0.0);
        r.closed_form_class_mean.assign(k, 0.0);
        for (std::size_t v = 0; v < inst.bundle.node_count(); ++v) {
            const std::size_t cls = inst.multiplicity[v] - 1;
            r.class_count[cls]++;
            r.empirical_class_mean[cls] += double(degs.degree[v]);
            r.closed_form_class_mean[cls] += closed_form_degree(inst.bundle.truth, NodeId(v),
                                                                cfg.p);
        }
        // exact model variance of each class degree sum: an edge internal to
        // the class adds 2 to the sum, so its variance enters with weight 4
        std::vector<double> var_accum(k, 0.0);
        const std::size_t nn = inst.bundle.node_count();
        for (NodeId u = 0; u < nn; ++u)
            for (NodeId v = u + 1; v < nn; ++v) {
                const std::size_t c = inst.bundle.truth.shared_count(u, v);
                if (c == 0) continue;
                const double pe = agm_pair_probability(c, cfg.p);
                const double var = pe * (1.0 - pe);
                const std::size_t cu = inst.multiplicity[u] - 1;
                const std::size_t cv = inst.multiplicity[v] - 1;
                if (cu == cv) {
                    var_accum[cu] += 4.0 * var;
                } else {
                    var_accum[cu] += var;
                    var_accum[cv] += var;
                }
            }
        r.global_mean = degs.mean;
        for (std::size_t c = 0; c < k; ++c) {
            if (r.class_count[c] == 0) continue;
            auto key = PoolKey{k, c + 1};
            auto& agg = pools[key];
            agg.deg_sum += r.empirical_class_mean[c];
            agg.closed_sum += r.closed_form_class_mean[c];
            agg.var_sum += var_accum[c];
            agg.count += r.class_count[c];
            r.empirical_class_mean[c] /= double(r.class_count[c]);
            r.closed_form_class_mean[c] /= double(r.class_count[c]);
        }

        r.ordering_ok = true;
        for (std::size_t hi = 1; hi < k; ++hi) {
            if (r.class_count[hi] == 0) continue;
            for (std::size_t lo = 0; lo < hi; ++lo) {
                if (r.class_count[lo] == 0) continue;
                if (r.empirical_class_mean[hi] < r.empirical_class_mean[lo])
                    r.ordering_ok = false;
                const double se = std::sqrt(var_accum[hi] / double(r.class_count[hi]) /
                                                double(r.class_count[hi]) +
                                            var_accum[lo] / double(r.class_count[lo]) /
                                                double(r.class_count[lo]));
                if (se > 0.0)
                    min_effect = std::min(min_effect,
                                          (r.closed_form_class_mean[hi] -
                                           r.closed_form_class_mean[lo]) /
                                              se);
            }
        }
        r.above_mean_ok = true;
        for (std::size_t c = 1; c < k; ++c)
            if (r.class_count[c] > 0 && r.empirical_class_mean[c] < r.global_mean)
                r.above_mean_ok = false;

        ordering_pass += r.ordering_ok ? 1 : 0;
        above_pass += r.above_mean_ok ? 1 : 0;
        report.usable++;
        report.instances.push_back(std::move(r));
    }
    if (report.usable > 0) {
        report.ordering_pass_rate = double(ordering_pass) / double(report.usable);
        report.above_mean_pass_rate = double(above_pass) / double(report.usable);
    }
    for (const auto& [key, agg] : pools) {
        TheoremReport::PooledClass p;
        p.k = key.k;
        p.multiplicity = key.mult;
        p.samples = agg.count;
        p.empirical_mean = agg.deg_sum / double(agg.count);
        p.closed_form_mean = agg.closed_sum / double(agg.count);
        p.standard_error = std::sqrt(agg.var_sum) / double(agg.count);
        p.z = p.standard_error > 0.0
                  ? std::abs(p.empirical_mean - p.closed_form_mean) / p.standard_error
                  : 0.0;
        report.pooled.push_back(p);
    }
    report.min_effect_size = min_effect;
    return report;
}

// ---------------------------------------------------------------------------
// scaling benchmark: one full iteration on G(n, q) graphs across a q grid

struct BenchConfig {
    std::size_t n = 2000;
    std::vector<double> qs = {0.002, 0.003, 0.006, 0.008, 0.01, 0.02, 0.03, 0.04};
    std::size_t k = 8;
    std::size_t feature_dim = 64;
    double seed_query_pct = 8.0;  // explored fraction before the timed iteration
    std::uint64_t seed = 1;
    std::size_t embed_epochs = 50;
    std::size_t siam_epochs = 16;
    std::size_t siam_hidden = 128;
    std::size_t e_dim = 32;
    double neg_ratio = 2.0;
    double lambda = 2.0;
    double eta = 0.0;  // structure term only; no ground-truth metadata model
    double threshold = 0.9;
    double cap = 2.0;
    std::size_t reps = 2;  // timed repetitions per row; the minimum is kept
};

struct BenchRow {
    double q = 0.0;
    std::size_t edges = 0;
    double embed_seconds = 0.0;
    double select_seconds = 0.0;
    double infer_seconds = 0.0;
    double total_seconds = 0.0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["rows"] = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json row;
            row["q"] = r.q;
            row["edges"] = r.edges;
            row["embed_seconds"] = r.embed_seconds;
            row["select_seconds"] = r.select_seconds;
            row["infer_seconds"] = r.infer_seconds;
            row["total_seconds"] = r.total_seconds;
            j["rows"].push_back(row);
        }
        j["fit"] = {{"slope", slope}, {"intercept", intercept}, {"r_squared", r_squared}};
        return j;
    }

    static std::string csv_header() {
        return "q,edges,embed_seconds,select_seconds,infer_seconds,total_seconds";
    }
    std::vector<std::string> csv_rows() const {
        std::vector<std::string> out;
        for (const auto& r : rows) {
            std::ostringstream os;
            os << r.q << ',' << r.edges << ',' << r.embed_seconds << ',' << r.select_seconds
               << ',' << r.infer_seconds << ',' << r.total_seconds;
            out.push_back(os.str());
        }
        return out;
    }
};

inline BenchReport bench_scaling(const BenchConfig& cfg) {
    BenchReport report;
    auto run_row = [&](std::size_t qi) {
        const double q = cfg.qs[qi];
        const HiddenNetwork net = generate_er(cfg.n, q, mix_seed(cfg.seed, "bench-er", qi));
        RngStream feat_rng = RngStream::derive(cfg.seed, "bench-feat", qi);
        FeatureMatrix x(cfg.n, cfg.feature_dim);
        for (std::size_t i = 0; i < cfg.n; ++i)
            for (std::size_t j = 0; j < cfg.feature_dim; ++j)
                if (feat_rng.bernoulli(0.2)) x.set(i, j, true);

        ExploredState state0(cfg.n);
        RngStream rs = RngStream::derive(cfg.seed, "bench-rs", qi);
        const std::size_t warm = std::size_t(cfg.seed_query_pct / 100.0 * double(cfg.n));
        for (std::size_t t = 0; t < warm; ++t)
            query_node(net, state0, select_random(state0, rs));

        BenchRow row;
        row.q = q;
        row.edges = net.evaluation_handle().edge_count();
        row.total_seconds = std::numeric_limits<double>::infinity();
        using clock = std::chrono::steady_clock;

        // identical work per repetition; the minimum filters scheduler noise
        for (std::size_t rep = 0; rep < std::max<std::size_t>(1, cfg.reps); ++rep) {
            ExploredState state = state0;
            const WorkingGraph g = merge_inferred(state, EdgeSet{});
            EmbedHyper eh;
            eh.eta = cfg.eta;
            eh.epochs = cfg.embed_epochs;
            eh.hidden = 128;
            eh.k = cfg.k;
            eh.seed = mix_seed(cfg.seed, "bench-embed", qi);
            auto t0 = clock::now();
            const Matrix f = train_embedder(g, x, eh).f;
            auto t1 = clock::now();
            const NodeId v = select_metacode(f, state, cfg.lambda);
            auto t2 = clock::now();
            query_node(net, state, v);
            if (!state.explored_edges().empty()) {  // q = 0 has nothing to train on
                const PairBatch batch =
                    sample_pairs(state, cfg.neg_ratio, mix_seed(cfg.seed, "bench-neg", qi));
                SiamHyper sh;
                sh.epochs = cfg.siam_epochs;
                sh.hidden = cfg.siam_hidden;
                sh.e_dim = cfg.e_dim;
                sh.seed = mix_seed(cfg.seed, "bench-siam", qi);
                const SiamParams sp = train_siamnet(x, batch, sh).params;
                const std::size_t cap =
                    std::size_t(std::ceil(cfg.cap * double(state.explored_edges().size())));
                const EdgeSet inferred = infer_edges(sp, x, state, cfg.threshold, cap);
                (void)merge_inferred(state, reconcile_inferred(state, inferred));
            }
            auto t3 = clock::now();

            const double total = std::chrono::duration<double>(t3 - t0).count();
            if (total < row.total_seconds) {
                row.embed_seconds = std::chrono::duration<double>(t1 - t0).count();
                row.select_seconds = std::chrono::duration<double>(t2 - t1).count();
                row.infer_seconds = std::chrono::duration<double>(t3 - t2).count();
                row.total_seconds = total;
            }
        }
        return row;
    };
    (void)run_row(0);  // warm-up: caches and allocator, not recorded
    for (std::size_t qi = 0; qi < cfg.qs.size(); ++qi) report.rows.push_back(run_row(qi));
    // least squares total_seconds ~ a + b * edges
    const std::size_t m = report.rows.size();
    if (m >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
        for (const auto& r : report.rows) {
            const double x = double(r.edges), y = r.total_seconds;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            syy += y * y;
        }
        const double denom = double(m) * sxx - sx * sx;
        if (denom > 0) {
            report.slope = (double(m) * sxy - sx * sy) / denom;
            report.intercept = (sy - report.slope * sx) / double(m);
            double ss_res = 0, ss_tot = 0;
            const double ybar = sy / double(m);
            for (const auto& r : report.rows) {
                const double pred = report.intercept + report.slope * double(r.edges);
                ss_res += (r.total_seconds - pred) * (r.total_seconds - pred);
                ss_tot += (r.total_seconds - ybar) * (r.total_seconds - ybar);
            }
            report.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// config file parsing (JSON), CLI flags override these fields

inline RunConfig parse_run_config(const nlohmann::json& j) {
    static const std::set<std::string> known = {
        "variant", "seed", "seeds", "budget", "budget_pct", "eta", "lambda", "p_init",
        "delta", "r", "margin", "threshold", "cap", "neg_ratio", "infer_every", "epochs",
        "embed_epochs", "embed_warm_epochs", "siam_epochs", "siam_warm_epochs", "hidden",
        "siam_hidden", "e_dim", "batch", "lr_embed", "lr_siam", "strict_mean", "warm_start",
        "mac_rounds", "checkpoints", "enable_metrics", "dataset", "out", "name"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key))
            throw std::invalid_argument("config: unknown key \"" + key + "\"");
    RunConfig c;
    if (j.contains("variant")) c.variant = variant_from_name(j["variant"].get<std::string>());
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("budget")) c.budget = j["budget"].get<std::size_t>();
    if (j.contains("budget_pct")) c.budget_pct = j["budget_pct"].get<double>();
    if (j.contains("eta")) c.eta = j["eta"].get<double>();
    if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
    if (j.contains("p_init")) c.p_init = j["p_init"].get<double>();
    if (j.contains("delta")) c.delta = j["delta"].get<double>();
    if (j.contains("r")) c.margin = j["r"].get<double>();
    if (j.contains("margin")) c.margin = j["margin"].get<double>();
    if (j.contains("threshold")) c.threshold = j["threshold"].get<double>();
    if (j.contains("cap")) c.cap = j["cap"].get<double>();
    if (j.contains("neg_ratio")) c.neg_ratio = j["neg_ratio"].get<double>();
    if (j.contains("infer_every")) c.infer_every = j["infer_every"].get<std::size_t>();
    if (j.contains("epochs")) c.embed_epochs = j["epochs"].get<std::size_t>();
    if (j.contains("embed_epochs")) c.embed_epochs = j["embed_epochs"].get<std::size_t>();
    if (j.contains("embed_warm_epochs"))
        c.embed_warm_epochs = j["embed_warm_epochs"].get<std::size_t>();
    if (j.contains("siam_epochs")) c.siam_epochs = j["siam_epochs"].get<std::size_t>();
    if (j.contains("siam_warm_epochs"))
        c.siam_warm_epochs = j["siam_warm_epochs"].get<std::size_t>();
    if (j.contains("hidden")) c.hidden = j["hidden"].get<std::size_t>();
    if (j.contains("siam_hidden")) c.siam_hidden = j["siam_hidden"].get<std::size_t>();
    if (j.contains("e_dim")) c.e_dim = j["e_dim"].get<std::size_t>();
    if (j.contains("batch")) c.batch = j["batch"].get<std::size_t>();
    if (j.contains("lr_embed")) c.lr_embed = j["lr_embed"].get<double>();
    if (j.contains("lr_siam")) c.lr_siam = j["lr_siam"].get<double>();
    if (j.contains("strict_mean")) c.strict_mean = j["strict_mean"].get<bool>();
    if (j.contains("warm_start")) c.warm_start = j["warm_start"].get<bool>();
    if (j.contains("mac_rounds")) c.mac_rounds = j["mac_rounds"].get<std::size_t>();
    if (j.contains("checkpoints"))
        c.checkpoint_pcts = j["checkpoints"].get<std::vector<double>>();
    if (j.contains("enable_metrics")) c.enable_metrics = j["enable_metrics"].get<bool>();
    return c;
}

}  // namespace metacode
