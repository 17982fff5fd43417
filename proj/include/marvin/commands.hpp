#pragma once

// Implementations behind the command-line verbs. Each returns its outputs as
// strings or records so callers decide where they go.

#include <iomanip>
#include <sstream>

#include "marvin/export.hpp"
#include "marvin/training.hpp"
#include "marvin/tsp.hpp"

namespace marvin {

struct EvalOptions {
    std::size_t episodes = 100;
    std::size_t agents = 2;
    int iterations = 0;  // 0: the model's training K
    std::uint64_t seed = 0;
    std::string distribution = "uniform:1:3";
    bool traffic = true;
    bool async = true;
    std::vector<std::string> baselines{"oracle", "iterative-vrp", "greedy", "random"};
};

struct EvalOutput {
    std::vector<EvalRecord> records;
    std::vector<MethodSummary> summary;
};

inline std::string fmt(double x, int precision = 6) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << x;
    return s.str();
}

/// Evaluates the model (when given) and the listed baselines on the same
/// test episodes. Gaps are taken against the oracle when it is listed.
inline EvalOutput cmd_evaluate(const MarvinModel* model, const std::vector<Corpus::Ptr>& graphs,
                               const EvalOptions& o) {
    if (graphs.empty()) throw Error("evaluate: no graphs in the selected split");
    const EpisodeSetup setup{MultiPassDistribution::parse(o.distribution), o.agents, o.traffic};
    const auto eps = fixed_episodes(graphs, o.episodes, o.seed);
    std::vector<std::pair<std::string, PolicyFactory>> methods;
    if (model) methods.emplace_back("marvin", marvin_factory(*model, o.iterations));
    for (const auto& b : o.baselines) methods.emplace_back(b, baseline_factory(b));
    std::vector<std::vector<EvalRecord>> per;
    std::optional<std::size_t> oracle_idx;
    for (const auto& [name, factory] : methods) {
        if (name == "oracle") oracle_idx = per.size();
        per.push_back(evaluate_method(name, factory, eps, setup, o.async));
    }
    EvalOutput out;
    for (const auto& rows : per) {
        out.records.insert(out.records.end(), rows.begin(), rows.end());
        out.summary.push_back(summarize(rows, oracle_idx ? &per[*oracle_idx] : nullptr));
    }
    return out;
}

/// Deterministic summary table (runtime excluded).
inline std::string summary_csv(const std::vector<MethodSummary>& rows, const std::string& prefix_header = "",
                               const std::string& prefix = "") {
    std::ostringstream s;
    s << prefix_header << "method,episodes,mean_cost_h,gap_vs_oracle_pct,mean_makespan_h,mean_gini\n";
    for (const auto& r : rows)
        s << prefix << r.method << ',' << r.episodes << ',' << fmt(r.mean_cost_h) << ','
          << (std::isnan(r.gap_vs_oracle) ? std::string() : fmt(100.0 * r.gap_vs_oracle, 3)) << ','
          << fmt(r.mean_makespan_h) << ',' << fmt(r.mean_gini) << '\n';
    return s.str();
}

inline std::string runtime_csv(const std::vector<MethodSummary>& rows) {
    std::ostringstream s;
    s << "method,ms_per_decision\n";
    for (const auto& r : rows) s << r.method << ',' << fmt(r.ms_per_decision, 4) << '\n';
    return s.str();
}

/// Cost against fleet size on identical episode seeds.
inline std::string cmd_sweep_agents(const MarvinModel* model, const std::vector<Corpus::Ptr>& graphs,
                                    const std::vector<std::size_t>& agent_counts, EvalOptions o) {
    o.baselines = {"greedy"};
    std::string out = "agents,method,episodes,mean_cost_h,gap_vs_oracle_pct,mean_makespan_h,mean_gini\n";
    for (std::size_t L : agent_counts) {
        if (L == 0) throw Error("sweep-agents: agent counts must be positive");
        o.agents = L;
        auto r = cmd_evaluate(model, graphs, o);
        const auto table = summary_csv(r.summary, "agents,", std::to_string(L) + ",");
        out += table.substr(table.find('\n') + 1);
    }
    return out;
}

/// The multi-pass distribution suite against oracle and iterative-VRP.
inline std::string cmd_distribution_shift(const MarvinModel* model, const std::vector<Corpus::Ptr>& graphs,
                                          EvalOptions o) {
    o.baselines = {"oracle", "iterative-vrp"};
    std::string out = "distribution,method,episodes,mean_cost_h,gap_vs_oracle_pct,mean_makespan_h,mean_gini\n";
    for (const auto& d : distribution_shift_suite()) {
        o.distribution = d.name();
        auto r = cmd_evaluate(model, graphs, o);
        const auto table = summary_csv(r.summary, "distribution,", d.name() + ",");
        out += table.substr(table.find('\n') + 1);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Toy TSP benchmark

struct TspBenchOptions {
    std::size_t k = 25;
    std::size_t instances = 500;
    std::size_t model_instances = 500;  // instances that also run the model modes
    std::size_t samples = 1280;
    std::uint64_t seed = 0;
};

struct TspInstanceResult {
    std::map<std::string, double> cost;
    std::map<std::string, double> ms;
    double best = 0.0;
};

struct TspBenchResult {
    std::vector<TspInstanceResult> instances;
    std::vector<std::string> methods;

    /// Mean relative gap (percent) against the best tour found per instance.
    double mean_gap_pct(const std::string& m) const {
        double g = 0.0;
        std::size_t c = 0;
        for (const auto& r : instances) {
            auto it = r.cost.find(m);
            if (it == r.cost.end()) continue;
            g += it->second / r.best - 1.0;
            ++c;
        }
        return c ? 100.0 * g / static_cast<double>(c) : std::numeric_limits<double>::quiet_NaN();
    }
    double mean(const std::string& m, bool runtime) const {
        double s = 0.0;
        std::size_t c = 0;
        for (const auto& r : instances) {
            const auto& src = runtime ? r.ms : r.cost;
            auto it = src.find(m);
            if (it == src.end()) continue;
            s += it->second;
            ++c;
        }
        return c ? s / static_cast<double>(c) : std::numeric_limits<double>::quiet_NaN();
    }
};

inline TspBenchResult cmd_bench_tsp(const TspBenchOptions& o, const MarvinModel* model) {
    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };
    TspBenchResult res;
    res.methods = {"best-found", "farthest-insertion", "random-insertion", "nearest-insertion", "nearest-neighbour",
                   "farthest-insertion+2opt"};
    if (model) {
        res.methods.push_back("marvin");
        res.methods.push_back("marvin-ss");
        res.methods.push_back("marvin-ss-sp");
    }
    for (std::size_t i = 0; i < o.instances; ++i) {
        const std::uint64_t s = derive_seed(o.seed, i);
        const Matrix d = tsp::distance_matrix(tsp::random_points(o.k, s));
        TspInstanceResult r;
        auto run = [&](const std::string& name, auto&& make) {
            const auto t0 = clock::now();
            tsp::Tour t = make();
            r.ms[name] = ms_since(t0);
            if (!tsp::is_tour(t, o.k)) throw Error("bench-tsp: " + name + " returned an invalid tour");
            r.cost[name] = tsp::tour_length(d, t);
        };
        run("best-found", [&] { return tsp::best_found(d, s); });
        run("farthest-insertion", [&] { return tsp::insertion(d, tsp::Insertion::Farthest); });
        run("random-insertion", [&] { return tsp::insertion(d, tsp::Insertion::Random, s); });
        run("nearest-insertion", [&] { return tsp::insertion(d, tsp::Insertion::Nearest); });
        run("nearest-neighbour", [&] { return tsp::nearest_neighbour(d, 0); });
        run("farthest-insertion+2opt", [&] {
            auto t = tsp::insertion(d, tsp::Insertion::Farthest);
            tsp::two_opt(d, t);
            return t;
        });
        if (model && i < o.model_instances) {
            auto mt = tsp::model_tours(*model, d, o.samples, s);
            r.cost["marvin"] = tsp::tour_length(d, mt.single_start);
            r.cost["marvin-ss"] = tsp::tour_length(d, mt.self_start);
            r.cost["marvin-ss-sp"] = tsp::tour_length(d, mt.sampled);
            r.ms["marvin"] = mt.single_ms;
            r.ms["marvin-ss"] = mt.self_ms;
            r.ms["marvin-ss-sp"] = mt.sampled_ms;
        }
        r.best = std::numeric_limits<double>::infinity();
        for (const auto& [m, c] : r.cost) r.best = std::min(r.best, c);
        res.instances.push_back(std::move(r));
    }
    return res;
}

/// Table with method, mean cost, gap against best found, runtime.
inline std::string tsp_bench_csv(const TspBenchResult& r, bool with_runtime) {
    std::ostringstream s;
    s << "method,instances,cost,gap_pct" << (with_runtime ? ",runtime_ms" : "") << '\n';
    for (const auto& m : r.methods) {
        std::size_t c = 0;
        for (const auto& inst : r.instances) c += inst.cost.count(m);
        s << m << ',' << c << ',' << fmt(r.mean(m, false)) << ',' << fmt(r.mean_gap_pct(m), 3);
        if (with_runtime) s << ',' << fmt(r.mean(m, true), 3);
        s << '\n';
    }
    return s.str();
}

// ---------------------------------------------------------------------------
// Exports

struct ExportFiles {
    std::string json;
    std::string svg;
};

/// Runs one episode (asynchronously) and exports the first `max_steps`
/// moves of it.
inline ExportFiles cmd_export_routes(const EpisodeSpec& e, const EpisodeSetup& setup, const PolicyFactory& factory,
                                     const std::string& label, std::size_t max_steps) {
    Env env = make_env(e, setup);
    const auto starts = env.starts();
    auto policy = factory(env, e);
    auto res = run_episode_async(env, *policy);
    auto r = make_route_export(e.ctx->graph, starts, res.steps, label, max_steps);
    return {to_json(r).dump(2) + "\n", routes_svg(e.ctx->graph, r, force_layout(e.ctx->graph, e.seed))};
}

/// Captures the decision values of one step of a replayed model episode.
class ValueRecorder : public Policy {
public:
    ValueRecorder(Policy& inner, std::size_t step) : inner_(inner), step_(step) {}
    void reset(const EpisodeStart& s) override { inner_.reset(s); }
    Decision decide(const Observation& obs) override {
        Decision d = inner_.decide(obs);
        if (count_++ == step_) {
            ValueMap m;
            m.step = step_;
            m.agent = obs.agent;
            m.position = obs.position;
            for (NodeId v = 0; v < obs.coverage.covered.size(); ++v)
                m.values.push_back(obs.coverage.covered[v] ? std::nullopt : std::optional<double>(d.values.at(v)));
            captured_ = std::move(m);
        }
        return d;
    }
    const std::optional<ValueMap>& captured() const { return captured_; }
    std::size_t decisions() const { return count_; }

private:
    Policy& inner_;
    std::size_t step_;
    std::size_t count_ = 0;
    std::optional<ValueMap> captured_;
};

inline ValueMap value_map_at(const MarvinModel& model, const EpisodeSpec& e, const EpisodeSetup& setup,
                             std::size_t step, int iterations = 0) {
    Env env = make_env(e, setup);
    MarvinPolicy p(model, SelectMode::Greedy, e.seed, iterations);
    ValueRecorder rec(p, step);
    run_episode_async(env, rec, {false});
    if (!rec.captured())
        throw Error("step " + std::to_string(step) + " out of range: the episode has " +
                    std::to_string(rec.decisions()) + " decisions");
    return *rec.captured();
}

inline ExportFiles cmd_export_value_heatmap(const MarvinModel& model, const EpisodeSpec& e,
                                            const EpisodeSetup& setup, std::size_t step) {
    auto m = value_map_at(model, e, setup, step);
    return {to_json(m).dump(2) + "\n", heatmap_svg(e.ctx->graph, m, force_layout(e.ctx->graph, e.seed))};
}

}  // namespace marvin
