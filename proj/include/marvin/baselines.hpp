#pragma once

// Classical policies and solvers: random, greedy, the iterative multi-route
// heuristic (insertion + 2-opt + Or-opt), the full-information oracle on the
// augmented graph, and an exhaustive oracle for small instances.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "marvin/sim.hpp"

namespace marvin {

// ---------------------------------------------------------------------------
// Simple policies

class RandomPolicy : public Policy {
public:
    explicit RandomPolicy(std::uint64_t seed) : rng_(derive_seed(seed, 0x9b05688c)) {}

    Decision decide(const Observation& obs) override {
        std::vector<NodeId> open;
        for (NodeId v = 0; v < obs.coverage.covered.size(); ++v)
            if (!obs.coverage.covered[v]) open.push_back(v);
        if (open.empty()) return {};
        Decision d;
        d.destination = open[uniform_index(rng_, open.size())];
        return d;
    }

private:
    Rng rng_;
};

/// Closest node still needing coverage (planner distances, loop cost for the
/// current node); ties go to the lowest id.
inline std::optional<NodeId> greedy_choice(const GraphContext& ctx, const CoverageState& cov, NodeId position) {
    std::optional<NodeId> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (NodeId v = 0; v < ctx.size(); ++v) {
        if (cov.covered[v]) continue;
        const double d = ctx.travel(position, v);
        if (d < best_d) {
            best_d = d;
            best = v;
        }
    }
    return best;
}

class GreedyPolicy : public Policy {
public:
    Decision decide(const Observation& obs) override {
        Decision d;
        d.destination = greedy_choice(obs.ctx, obs.coverage, obs.position);
        return d;
    }
};

// ---------------------------------------------------------------------------
// Multi-route open-path solver

/// Travel cost between graph nodes; choosing the node you stand on costs its
/// cheapest loop.
struct TravelCost {
    Matrix D;
    std::vector<double> loop;

    double operator()(NodeId a, NodeId b) const { return a == b ? loop[a] : D(a, b); }
};

inline TravelCost make_travel_cost(const RoadGraph& g, std::span<const double> weights) {
    TravelCost c;
    c.D = floyd_warshall(g, weights);
    c.loop = cycle_costs(g, weights, c.D);
    return c;
}

struct Plan {
    std::vector<NodeId> starts;
    std::vector<std::vector<NodeId>> routes;  // job sequence per agent, start excluded
    double total_cost = 0.0;
};

inline double route_cost(const TravelCost& c, NodeId start, std::span<const NodeId> route) {
    double total = 0.0;
    NodeId prev = start;
    for (NodeId v : route) {
        total += c(prev, v);
        prev = v;
    }
    return total;
}

inline double plan_cost(const TravelCost& c, const Plan& p) {
    double total = 0.0;
    for (std::size_t a = 0; a < p.routes.size(); ++a) total += route_cost(c, p.starts[a], p.routes[a]);
    return total;
}

struct SolverConfig {
    std::size_t move_budget = 0;  // 0: 10 * jobs^2
    bool local_search = true;
};

namespace detail {

constexpr double kImprovementEps = 1e-9;

/// Cheapest insertion over all agents. Equal insertion costs prefer the
/// route that is currently shorter, which spreads work across agents.
inline void cheapest_insertion(const TravelCost& c, Plan& plan, std::vector<NodeId> jobs) {
    const std::size_t L = plan.starts.size();
    std::vector<double> length(L, 0.0);
    while (!jobs.empty()) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bj = 0, ba = 0, bp = 0;
        for (std::size_t j = 0; j < jobs.size(); ++j) {
            const NodeId v = jobs[j];
            for (std::size_t a = 0; a < L; ++a) {
                const auto& r = plan.routes[a];
                for (std::size_t p = 0; p <= r.size(); ++p) {
                    const NodeId prev = p == 0 ? plan.starts[a] : r[p - 1];
                    double delta = c(prev, v);
                    if (p < r.size()) delta += c(v, r[p]) - c(prev, r[p]);
                    const bool better = delta < best - kImprovementEps ||
                                        (delta < best + kImprovementEps && length[a] < length[ba] - kImprovementEps);
                    if (better) {
                        best = delta;
                        bj = j;
                        ba = a;
                        bp = p;
                    }
                }
            }
        }
        plan.routes[ba].insert(plan.routes[ba].begin() + static_cast<std::ptrdiff_t>(bp), jobs[bj]);
        length[ba] += best;
        jobs.erase(jobs.begin() + static_cast<std::ptrdiff_t>(bj));
    }
}

/// Full sequence with the start prepended.
inline std::vector<NodeId> with_start(NodeId s, const std::vector<NodeId>& r) {
    std::vector<NodeId> seq{s};
    seq.insert(seq.end(), r.begin(), r.end());
    return seq;
}

/// One first-improvement 2-opt move on an open path (asymmetric costs).
inline bool two_opt_pass(const TravelCost& c, NodeId start, std::vector<NodeId>& route, std::size_t& budget) {
    auto s = with_start(start, route);
    const std::size_t m = s.size();
    if (m < 3) return false;
    std::vector<double> fwd(m, 0.0), bwd(m, 0.0);
    for (std::size_t k = 1; k < m; ++k) {
        fwd[k] = fwd[k - 1] + c(s[k - 1], s[k]);
        bwd[k] = bwd[k - 1] + c(s[k], s[k - 1]);
    }
    for (std::size_t i = 1; i + 1 < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            if (budget == 0) return false;
            --budget;
            const double old_mid = fwd[j] - fwd[i];
            const double new_mid = bwd[j] - bwd[i];
            double before = c(s[i - 1], s[i]) + old_mid;
            double after = c(s[i - 1], s[j]) + new_mid;
            if (j + 1 < m) {
                before += c(s[j], s[j + 1]);
                after += c(s[i], s[j + 1]);
            }
            if (after < before - kImprovementEps) {
                std::reverse(route.begin() + static_cast<std::ptrdiff_t>(i - 1),
                             route.begin() + static_cast<std::ptrdiff_t>(j));
                return true;
            }
        }
    }
    return false;
}

/// One first-improvement Or-opt move: relocate a segment of 1-3 jobs to any
/// position of any route.
inline bool or_opt_pass(const TravelCost& c, Plan& plan, std::size_t& budget) {
    const std::size_t L = plan.routes.size();
    for (std::size_t a = 0; a < L; ++a) {
        auto& ra = plan.routes[a];
        for (std::size_t len = 1; len <= 3; ++len) {
            for (std::size_t i = 0; i + len <= ra.size(); ++i) {
                const NodeId before = i == 0 ? plan.starts[a] : ra[i - 1];
                const NodeId first = ra[i], last = ra[i + len - 1];
                const bool has_after = i + len < ra.size();
                double removal = c(before, first);
                if (has_after) removal += c(last, ra[i + len]) - c(before, ra[i + len]);
                for (std::size_t b = 0; b < L; ++b) {
                    const auto& rb = plan.routes[b];
                    for (std::size_t p = 0; p <= rb.size(); ++p) {
                        if (a == b && p >= i && p <= i + len) continue;
                        if (budget == 0) return false;
                        --budget;
                        // insertion between prev and next of the route without the segment
                        NodeId prev;
                        std::optional<NodeId> next;
                        if (a == b) {
                            const std::size_t q = p > i ? p - len : p;  // position in the reduced route
                            auto reduced_at = [&](std::size_t k) { return k < i ? ra[k] : ra[k + len]; };
                            const std::size_t reduced_size = ra.size() - len;
                            prev = q == 0 ? plan.starts[a] : reduced_at(q - 1);
                            if (q < reduced_size) next = reduced_at(q);
                        } else {
                            prev = p == 0 ? plan.starts[b] : rb[p - 1];
                            if (p < rb.size()) next = rb[p];
                        }
                        double insertion = c(prev, first);
                        if (next) insertion += c(last, *next) - c(prev, *next);
                        if (insertion < removal - kImprovementEps) {
                            std::vector<NodeId> seg(ra.begin() + static_cast<std::ptrdiff_t>(i),
                                                    ra.begin() + static_cast<std::ptrdiff_t>(i + len));
                            if (a == b) {
                                const std::size_t q = p > i ? p - len : p;
                                ra.erase(ra.begin() + static_cast<std::ptrdiff_t>(i),
                                         ra.begin() + static_cast<std::ptrdiff_t>(i + len));
                                ra.insert(ra.begin() + static_cast<std::ptrdiff_t>(q), seg.begin(), seg.end());
                            } else {
                                ra.erase(ra.begin() + static_cast<std::ptrdiff_t>(i),
                                         ra.begin() + static_cast<std::ptrdiff_t>(i + len));
                                auto& rbm = plan.routes[b];
                                rbm.insert(rbm.begin() + static_cast<std::ptrdiff_t>(p), seg.begin(), seg.end());
                            }
                            return true;
                        }
                    }
                }
            }
        }
    }
    return false;
}

}  // namespace detail

/// Improves a plan in place with 2-opt and Or-opt moves until none improves or
/// the move budget runs out. Never increases the plan cost.
inline void improve_plan(const TravelCost& c, Plan& plan, std::size_t budget) {
    bool improved = true;
    while (improved && budget > 0) {
        improved = false;
        for (std::size_t a = 0; a < plan.routes.size(); ++a)
            while (detail::two_opt_pass(c, plan.starts[a], plan.routes[a], budget)) improved = true;
        if (detail::or_opt_pass(c, plan, budget)) improved = true;
    }
    plan.total_cost = plan_cost(c, plan);
}

/// Optional external single-route solver. When MARVIN_TSP_SOLVER names an
/// executable it is called as `solver <instance> <tour>`; the instance is
///   DIMENSION <m>
///   EDGE_WEIGHT_SECTION
///   m rows of m costs (row = from, column = to; index 0 is the start)
/// and the tour file must list a permutation of 0..m-1 starting with 0,
/// whitespace separated. Any failure falls back to the built-in solver.
inline std::optional<std::vector<std::size_t>> external_open_tour(const std::vector<std::vector<double>>& cost) {
    const char* exe = std::getenv("MARVIN_TSP_SOLVER");
    if (exe == nullptr || *exe == '\0') return std::nullopt;
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path();
    const fs::path in = dir / "marvin_tsp_instance.txt";
    const fs::path out = dir / "marvin_tsp_tour.txt";
    {
        std::ofstream f(in);
        f << "DIMENSION " << cost.size() << "\nEDGE_WEIGHT_SECTION\n";
        f.precision(17);
        for (const auto& row : cost) {
            for (std::size_t j = 0; j < row.size(); ++j) f << (j ? " " : "") << row[j];
            f << "\n";
        }
    }
    const std::string cmd = "\"" + std::string(exe) + "\" \"" + in.string() + "\" \"" + out.string() + "\"";
    if (std::system(cmd.c_str()) != 0) return std::nullopt;
    std::ifstream f(out);
    std::vector<std::size_t> tour;
    std::size_t x;
    while (f >> x) tour.push_back(x);
    std::vector<std::size_t> sorted = tour;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < sorted.size(); ++k)
        if (sorted[k] != k) return std::nullopt;
    if (tour.size() != cost.size() || tour.front() != 0) return std::nullopt;
    return tour;
}

/// Open routes for L agents covering every job (duplicates allowed).
inline Plan solve_routes(const TravelCost& c, std::vector<NodeId> starts, std::vector<NodeId> jobs,
                         const SolverConfig& cfg = {}) {
    Plan plan;
    plan.starts = std::move(starts);
    plan.routes.resize(plan.starts.size());
    if (jobs.empty()) return plan;
    std::sort(jobs.begin(), jobs.end());
    if (plan.starts.size() == 1) {
        std::vector<NodeId> nodes{plan.starts[0]};
        nodes.insert(nodes.end(), jobs.begin(), jobs.end());
        std::vector<std::vector<double>> m(nodes.size(), std::vector<double>(nodes.size(), 0.0));
        for (std::size_t i = 0; i < nodes.size(); ++i)
            for (std::size_t j = 0; j < nodes.size(); ++j)
                if (i != j) m[i][j] = j == 0 ? 0.0 : c(nodes[i], nodes[j]);
        if (auto tour = external_open_tour(m)) {
            for (std::size_t k = 1; k < tour->size(); ++k) plan.routes[0].push_back(nodes[(*tour)[k]]);
            plan.total_cost = plan_cost(c, plan);
            return plan;
        }
    }
    detail::cheapest_insertion(c, plan, jobs);
    const std::size_t m = jobs.size();
    if (cfg.local_search) improve_plan(c, plan, cfg.move_budget ? cfg.move_budget : 10 * m * m);
    plan.total_cost = plan_cost(c, plan);
    return plan;
}

// ---------------------------------------------------------------------------
// Augmented full-information instances

/// Node v repeated M_v times.
inline std::vector<NodeId> augmented_jobs(std::span<const int> M) {
    std::vector<NodeId> jobs;
    for (NodeId v = 0; v < M.size(); ++v)
        for (int k = 0; k < M[v]; ++k) jobs.push_back(v);
    return jobs;
}

/// Congestion-adjusted travel costs using the simulator's capped factors.
inline TravelCost congested_cost(const RoadGraph& g, const HiddenState& h) {
    std::vector<double> f(g.size());
    for (NodeId v = 0; v < g.size(); ++v) f[v] = h.factor(v);
    return make_travel_cost(g, scaled_edge_weights(g, f));
}

inline Plan oracle_solver(const RoadGraph& g, const HiddenState& h, std::span<const NodeId> starts,
                          const SolverConfig& cfg = {}) {
    return solve_routes(congested_cost(g, h), {starts.begin(), starts.end()}, augmented_jobs(h.M), cfg);
}

struct ExhaustiveResult {
    std::vector<NodeId> order;
    double cost = 0.0;
};

constexpr std::size_t kExhaustiveLimit = 9;

/// Best single-agent visit order over the augmented multiset by enumeration.
inline ExhaustiveResult exhaustive_oracle(const TravelCost& c, NodeId start, std::span<const int> M) {
    auto jobs = augmented_jobs(M);
    if (jobs.size() > kExhaustiveLimit)
        throw Error("exhaustive oracle: augmented size " + std::to_string(jobs.size()) + " exceeds " +
                    std::to_string(kExhaustiveLimit));
    std::sort(jobs.begin(), jobs.end());
    ExhaustiveResult best{jobs, std::numeric_limits<double>::infinity()};
    do {
        const double cost = route_cost(c, start, jobs);
        if (cost < best.cost) best = {jobs, cost};
    } while (std::next_permutation(jobs.begin(), jobs.end()));
    return best;
}

// ---------------------------------------------------------------------------
// Plan-executing policies

/// Executes precomputed per-agent routes, skipping jobs whose node is already
/// covered. Routes are driven on the given weights.
class PlanFollower {
public:
    PlanFollower() = default;
    PlanFollower(const RoadGraph* g, std::vector<double> weights, TravelCost cost, Plan plan)
        : g_(g), weights_(std::move(weights)), cost_(std::move(cost)), plan_(std::move(plan)),
          cursor_(plan_.routes.size(), 0) {}

    const Plan& plan() const { return plan_; }

    std::optional<NodeId> next(std::size_t agent, const CoverageState& cov) {
        auto& r = plan_.routes.at(agent);
        auto& k = cursor_.at(agent);
        while (k < r.size() && cov.covered[r[k]]) ++k;
        if (k == r.size()) return std::nullopt;
        return r[k++];
    }

    std::vector<NodeId> path(NodeId from, NodeId to) const { return route(*g_, weights_, cost_.D, from, to); }

private:
    const RoadGraph* g_ = nullptr;
    std::vector<double> weights_;
    TravelCost cost_;
    Plan plan_;
    std::vector<std::size_t> cursor_;
};

/// Full-information oracle: plans once on the augmented, congestion-adjusted
/// instance and follows that plan with congestion-aware routes.
class OraclePolicy : public Policy {
public:
    OraclePolicy(HiddenState hidden, SolverConfig cfg = {}) : hidden_(std::move(hidden)), cfg_(cfg) {}

    void reset(const EpisodeStart& s) override {
        ctx_ = s.ctx;
        const auto& g = ctx_->graph;
        std::vector<double> f(g.size());
        for (NodeId v = 0; v < g.size(); ++v) f[v] = hidden_.factor(v);
        auto w = scaled_edge_weights(g, f);
        TravelCost c = make_travel_cost(g, w);
        Plan plan = solve_routes(c, s.starts, augmented_jobs(hidden_.M), cfg_);
        follower_ = PlanFollower(&g, std::move(w), std::move(c), std::move(plan));
    }

    Decision decide(const Observation& obs) override {
        Decision d;
        d.destination = follower_.next(obs.agent, obs.coverage);
        if (d.destination) d.path = follower_.path(obs.position, *d.destination);
        return d;
    }

    const Plan& plan() const { return follower_.plan(); }

private:
    HiddenState hidden_;
    SolverConfig cfg_;
    std::shared_ptr<const GraphContext> ctx_;
    PlanFollower follower_;
};

/// Partial-information planner: assumes every uncovered node needs one more
/// visit, plans routes for all agents, and replans whenever the asking agent
/// runs out of work. Observed congestion enters the travel costs.
class IterativeVrpPolicy : public Policy {
public:
    explicit IterativeVrpPolicy(SolverConfig cfg = {}) : cfg_(cfg) {}

    void reset(const EpisodeStart& s) override {
        ctx_ = s.ctx;
        anchor_ = s.starts;
        routes_.assign(s.num_agents, {});
        replans_ = 0;
    }

    Decision decide(const Observation& obs) override {
        auto pop = [&]() -> std::optional<NodeId> {
            auto& r = routes_.at(obs.agent);
            while (!r.empty() && obs.coverage.covered[r.front()]) r.erase(r.begin());
            if (r.empty()) return std::nullopt;
            NodeId v = r.front();
            r.erase(r.begin());
            return v;
        };
        auto dest = pop();
        if (!dest && !obs.coverage.all_covered()) {
            replan(obs);
            dest = pop();
        }
        // The new plan may give this agent nothing; keep it useful anyway.
        if (!dest) dest = greedy_choice(*ctx_, obs.coverage, obs.position);
        Decision d;
        if (!dest) return d;
        d.destination = dest;
        if (!weights_.empty()) d.path = route(ctx_->graph, weights_, cost_.D, obs.position, *dest);
        anchor_[obs.agent] = *dest;
        return d;
    }

    std::size_t replans() const { return replans_; }

private:
    void replan(const Observation& obs) {
        ++replans_;
        const auto& g = ctx_->graph;
        std::vector<double> f(g.size(), 1.0);
        for (NodeId v = 0; v < g.size(); ++v)
            if (obs.coverage.observed_factor[v]) f[v] = *obs.coverage.observed_factor[v];
        weights_ = scaled_edge_weights(g, f);
        cost_ = make_travel_cost(g, weights_);
        anchor_[obs.agent] = obs.position;
        std::vector<NodeId> jobs;
        for (NodeId v = 0; v < g.size(); ++v)
            if (!obs.coverage.covered[v]) jobs.push_back(v);
        Plan p = solve_routes(cost_, anchor_, jobs, cfg_);
        routes_ = std::move(p.routes);
    }

    SolverConfig cfg_;
    std::shared_ptr<const GraphContext> ctx_;
    std::vector<NodeId> anchor_;  // where each agent's committed work ends
    std::vector<std::vector<NodeId>> routes_;
    std::vector<double> weights_;
    TravelCost cost_;
    std::size_t replans_ = 0;
};

}  // namespace marvin
