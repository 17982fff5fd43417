#pragma once

// Episode environment: hidden revisit counts and congestion, coverage
// bookkeeping, the step transition, and the synchronous/asynchronous episode
// runners.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <queue>
#include <tuple>
#include <vector>

#include "marvin/distributions.hpp"
#include "marvin/graph.hpp"
#include "marvin/inbox.hpp"

namespace marvin {

// ---------------------------------------------------------------------------
// Traffic

struct TrafficConfig {
    double damping = 0.5;
    double tolerance = 1e-4;
    int max_iterations = 200;
};

struct TrafficResult {
    std::vector<double> rho;
    int iterations = 0;
    double residual = 0.0;  // max |delta rho| of the last sweep
    bool converged = false;
};

/// Damped fixed-point flow balance. Capacity is lanes_out * speed limit; each
/// segment pushes its free flow c_u (1 - rho_u) evenly onto its successors.
inline TrafficResult traffic_equilibrium(const RoadGraph& g, std::uint64_t seed, const TrafficConfig& cfg = {}) {
    const std::size_t n = g.size();
    Rng rng(derive_seed(seed, 0xbb67ae85));
    TrafficResult r;
    r.rho.resize(n);
    for (auto& x : r.rho) x = uniform01(rng);
    std::vector<double> cap(n);
    for (NodeId v = 0; v < n; ++v) cap[v] = g.node(v).lanes_out * g.node(v).speed_mps;
    std::vector<double> demand(n);
    for (r.iterations = 1; r.iterations <= cfg.max_iterations; ++r.iterations) {
        std::fill(demand.begin(), demand.end(), 0.0);
        for (NodeId u = 0; u < n; ++u) {
            const double share = cap[u] * (1.0 - r.rho[u]) / static_cast<double>(g.out(u).size());
            for (NodeId v : g.out(u)) demand[v] += share;
        }
        double delta = 0.0;
        for (NodeId v = 0; v < n; ++v) {
            const double target = std::clamp(demand[v] / cap[v], 0.0, 1.0);
            const double next = (1.0 - cfg.damping) * r.rho[v] + cfg.damping * target;
            delta = std::max(delta, std::abs(next - r.rho[v]));
            r.rho[v] = next;
        }
        r.residual = delta;
        if (delta < cfg.tolerance) {
            r.converged = true;
            return r;
        }
    }
    r.iterations = cfg.max_iterations;
    return r;
}

// ---------------------------------------------------------------------------
// Hidden state

struct HiddenState {
    std::vector<int> M;
    std::vector<double> rho;

    int max_required() const { return M.empty() ? 0 : *std::max_element(M.begin(), M.end()); }
    double factor(NodeId v) const { return congestion_factor(rho[v]); }
};

inline HiddenState sample_hidden(const MultiPassDistribution& dist, const RoadGraph& g, std::uint64_t seed,
                                 bool traffic = true, const TrafficConfig& tcfg = {}) {
    dist.validate();
    HiddenState h;
    Rng rng(derive_seed(seed, 0x3c6ef372));
    h.M.resize(g.size());
    for (auto& m : h.M) m = std::max(1, dist.sample(rng));
    if (traffic)
        h.rho = traffic_equilibrium(g, derive_seed(seed, 0xa54ff53a), tcfg).rho;
    else
        h.rho.assign(g.size(), 0.0);
    return h;
}

// ---------------------------------------------------------------------------
// Coverage and observations

/// Everything the fleet knows about the map state. Shared by all agents.
struct CoverageState {
    std::vector<int> visits;
    std::vector<std::optional<double>> observed_factor;  // revealed on first traversal
    std::vector<char> covered;                           // revealed when the threshold is met

    explicit CoverageState(std::size_t n = 0) : visits(n, 0), observed_factor(n), covered(n, 0) {}

    bool explored(NodeId v) const { return visits[v] >= 1; }
    std::size_t remaining() const {
        return static_cast<std::size_t>(std::count(covered.begin(), covered.end(), char{0}));
    }
    bool all_covered() const { return remaining() == 0; }

    bool operator==(const CoverageState&) const = default;
};

/// What a policy sees when asked for its next destination. Deliberately
/// carries no requirement counts and no congestion for unvisited segments.
struct Observation {
    const GraphContext& ctx;
    const CoverageState& coverage;
    std::size_t agent;
    std::size_t num_agents;
    NodeId position;
    double time;
    const Inbox& inbox;
    const Matrix* last_message;  // this agent's previous broadcast, null before its first decision
};

struct Decision {
    std::optional<NodeId> destination;  // empty: agent retires
    std::vector<NodeId> path;           // optional explicit route; empty means planner shortest path
    std::optional<Matrix> message;      // broadcast to all other agents
    double log_prob = 0.0;
    std::vector<double> values;         // optional per-node diagnostics
    std::vector<double> probs;
};

struct EpisodeStart {
    std::shared_ptr<const GraphContext> ctx;
    std::size_t num_agents = 1;
    std::vector<NodeId> starts;
};

class Policy {
public:
    virtual ~Policy() = default;
    virtual void reset(const EpisodeStart&) {}
    virtual Decision decide(const Observation& obs) = 0;
};

// ---------------------------------------------------------------------------
// Environment

enum class Outcome { Success, NeedsRevisit };

struct PlannedMove {
    std::size_t agent = 0;
    NodeId from = 0;
    NodeId destination = 0;
    std::vector<NodeId> path;
    double cost = 0.0;  // realized seconds, congestion included
};

struct StepResult {
    double cost = 0.0;
    Outcome outcome = Outcome::NeedsRevisit;
    std::vector<NodeId> path;
};

struct AgentState {
    NodeId position = 0;
    double clock = 0.0;  // time at which the committed move completes
    double load = 0.0;   // total realized seconds
};

class Env {
public:
    Env(std::shared_ptr<const GraphContext> ctx, HiddenState hidden, std::vector<NodeId> starts)
        : ctx_(std::move(ctx)), hidden_(std::move(hidden)), coverage_(ctx_->size()) {
        const std::size_t n = ctx_->size();
        if (hidden_.M.size() != n || hidden_.rho.size() != n) throw Error("hidden state size does not match graph");
        for (int m : hidden_.M)
            if (m < 1) throw Error("hidden requirement must be >= 1");
        if (starts.empty()) throw Error("an episode needs at least one agent");
        for (NodeId s : starts) {
            if (s >= n) throw Error("start node " + std::to_string(s) + " out of range");
            agents_.push_back({s, 0.0, 0.0});
        }
        starts_ = std::move(starts);
    }

    /// Hidden state sampled from `seed`; agents start on distinct random
    /// segments when there are enough of them.
    static Env create(std::shared_ptr<const GraphContext> ctx, const MultiPassDistribution& dist,
                      std::size_t num_agents, std::uint64_t seed, bool traffic = true) {
        auto hidden = sample_hidden(dist, ctx->graph, seed, traffic);
        return Env(ctx, std::move(hidden), sample_starts(ctx->size(), num_agents, seed));
    }

    static std::vector<NodeId> sample_starts(std::size_t n, std::size_t num_agents, std::uint64_t seed) {
        Rng rng(derive_seed(seed, 0x510e527f));
        std::vector<NodeId> perm(n);
        std::iota(perm.begin(), perm.end(), NodeId{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<NodeId> starts(num_agents);
        for (std::size_t i = 0; i < num_agents; ++i) starts[i] = i < n ? perm[i] : uniform_index(rng, n);
        return starts;
    }

    const GraphContext& ctx() const { return *ctx_; }
    std::shared_ptr<const GraphContext> ctx_ptr() const { return ctx_; }
    const HiddenState& hidden() const { return hidden_; }
    const CoverageState& coverage() const { return coverage_; }
    std::size_t num_agents() const { return agents_.size(); }
    const AgentState& agent(std::size_t i) const { return agents_.at(i); }
    const std::vector<NodeId>& starts() const { return starts_; }
    std::vector<NodeId> positions() const {
        std::vector<NodeId> p;
        for (const auto& a : agents_) p.push_back(a.position);
        return p;
    }
    bool done() const { return coverage_.all_covered(); }

    /// Step budget that no sensible policy should reach.
    std::size_t step_budget() const { return 50 * ctx_->size() * static_cast<std::size_t>(hidden_.max_required()); }

    /// Realized traversal time of the segment `v` (congestion included).
    double realized_time(NodeId v) const { return ctx_->graph.node(v).base_time() * hidden_.factor(v); }

    /// Resolves the route and its realized cost without changing coverage.
    PlannedMove plan(std::size_t agent, NodeId destination, std::vector<NodeId> path = {}) const {
        if (agent >= agents_.size()) throw Error("unknown agent " + std::to_string(agent));
        const std::size_t n = ctx_->size();
        if (destination >= n) throw Error("destination " + std::to_string(destination) + " out of range");
        if (coverage_.covered[destination])
            throw Error("masked action: node " + std::to_string(destination) + " is already fully covered");
        PlannedMove mv;
        mv.agent = agent;
        mv.from = agents_[agent].position;
        mv.destination = destination;
        if (path.empty()) {
            mv.path = route(ctx_->graph, ctx_->base_weights, ctx_->D, mv.from, destination);
        } else {
            if (path.size() < 2 || path.front() != mv.from || path.back() != destination)
                throw Error("explicit route must run from the agent position to the destination");
            for (std::size_t i = 1; i < path.size(); ++i)
                if (!ctx_->graph.has_edge(path[i - 1], path[i]))
                    throw Error("explicit route uses missing edge " + std::to_string(path[i - 1]) + "->" +
                                std::to_string(path[i]));
            mv.path = std::move(path);
        }
        for (std::size_t i = 1; i < mv.path.size(); ++i) mv.cost += realized_time(mv.path[i]);
        return mv;
    }

    /// Commits the agent to a planned move: charges its cost and advances the
    /// agent's clock. Coverage changes only when the move is applied.
    void commit(const PlannedMove& mv) {
        auto& a = agents_[mv.agent];
        a.load += mv.cost;
        a.clock += mv.cost;
    }

    /// Drives the path: every entered segment gains a visit and reveals its
    /// congestion and, once complete, its coverage.
    StepResult apply(const PlannedMove& mv) {
        for (std::size_t i = 1; i < mv.path.size(); ++i) {
            const NodeId v = mv.path[i];
            ++coverage_.visits[v];
            coverage_.observed_factor[v] = hidden_.factor(v);
            if (coverage_.visits[v] >= hidden_.M[v]) coverage_.covered[v] = 1;
        }
        agents_[mv.agent].position = mv.destination;
        StepResult r;
        r.cost = mv.cost;
        r.path = mv.path;
        r.outcome = coverage_.visits[mv.destination] >= hidden_.M[mv.destination] ? Outcome::Success
                                                                                  : Outcome::NeedsRevisit;
        return r;
    }

    StepResult step(std::size_t agent, NodeId destination, std::vector<NodeId> path = {}) {
        auto mv = plan(agent, destination, std::move(path));
        commit(mv);
        return apply(mv);
    }

private:
    std::shared_ptr<const GraphContext> ctx_;
    HiddenState hidden_;
    CoverageState coverage_;
    std::vector<AgentState> agents_;
    std::vector<NodeId> starts_;
};

// ---------------------------------------------------------------------------
// Metrics

/// Mean absolute difference form of the Gini coefficient; all-zero loads give 0.
inline double gini(const std::vector<double>& loads) {
    if (loads.empty()) return 0.0;
    const double L = static_cast<double>(loads.size());
    double sum = 0.0;
    for (double x : loads) {
        if (x < 0) throw Error("gini: negative load");
        sum += x;
    }
    if (sum == 0.0) return 0.0;
    double diff = 0.0;
    for (double x : loads)
        for (double y : loads) diff += std::abs(x - y);
    return diff / (2.0 * L * L * (sum / L));
}

struct EpisodeMetrics {
    double total_cost_h = 0.0;
    double makespan_h = 0.0;
    std::vector<double> loads_h;
    double gini = 0.0;
    std::map<int, std::size_t> visit_histogram;  // visit count -> number of nodes
    std::size_t decisions = 0;
};

struct StepRecord {
    std::size_t agent = 0;
    NodeId from = 0;
    NodeId destination = 0;
    std::vector<NodeId> path;
    double start_time = 0.0;
    double end_time = 0.0;
    double cost = 0.0;
    Outcome outcome = Outcome::NeedsRevisit;
    double log_prob = 0.0;
};

struct EpisodeResult {
    std::vector<StepRecord> steps;
    EpisodeMetrics metrics;
    CoverageState final_coverage;
};

namespace detail {

inline EpisodeMetrics finish_metrics(const Env& env, std::size_t decisions, double makespan_s) {
    EpisodeMetrics m;
    for (std::size_t i = 0; i < env.num_agents(); ++i) {
        m.loads_h.push_back(env.agent(i).load / kSecondsPerHour);
        m.total_cost_h += env.agent(i).load;
    }
    m.total_cost_h /= kSecondsPerHour;
    m.makespan_h = makespan_s / kSecondsPerHour;
    m.gini = gini(m.loads_h);
    for (int v : env.coverage().visits) ++m.visit_histogram[v];
    m.decisions = decisions;
    return m;
}

inline EpisodeStart start_of(const Env& env) {
    return {env.ctx_ptr(), env.num_agents(), env.positions()};
}

}  // namespace detail

struct RunOptions {
    bool record_steps = true;
};

/// Agents act round-robin, each move completing before the next agent acts.
inline EpisodeResult run_episode_sync(Env& env, Policy& policy, const RunOptions& opts = {}) {
    const std::size_t L = env.num_agents();
    policy.reset(detail::start_of(env));
    std::vector<Inbox> inbox(L);
    std::vector<std::optional<Matrix>> last(L);
    std::vector<char> retired(L, 0);
    EpisodeResult res;
    std::size_t decisions = 0;
    const std::size_t budget = env.step_budget();
    while (!env.done()) {
        bool acted = false;
        for (std::size_t i = 0; i < L && !env.done(); ++i) {
            if (retired[i]) continue;
            Observation obs{env.ctx(), env.coverage(), i, L, env.agent(i).position, env.agent(i).clock, inbox[i],
                            last[i] ? &*last[i] : nullptr};
            Decision d = policy.decide(obs);
            if (!d.destination) {
                retired[i] = 1;
                continue;
            }
            if (++decisions > budget) throw Error("non-terminating policy: step budget exceeded");
            const double t0 = env.agent(i).clock;
            auto mv = env.plan(i, *d.destination, std::move(d.path));
            env.commit(mv);
            auto sr = env.apply(mv);
            if (d.message) {
                for (std::size_t j = 0; j < L; ++j)
                    if (j != i) inbox[j].store(i, {*d.message, env.agent(i).clock});
                last[i] = std::move(d.message);
            }
            if (opts.record_steps)
                res.steps.push_back({i, mv.from, mv.destination, mv.path, t0, env.agent(i).clock, mv.cost, sr.outcome,
                                     d.log_prob});
            acted = true;
        }
        if (!acted && !env.done()) throw Error("all agents retired before coverage was complete");
    }
    double makespan = 0.0;
    for (std::size_t i = 0; i < L; ++i) makespan = std::max(makespan, env.agent(i).clock);
    res.metrics = detail::finish_metrics(env, decisions, makespan);
    res.final_coverage = env.coverage();
    return res;
}

/// Event-driven execution: the agent whose move finishes first acts next
/// (ties by agent id). A move's coverage effects land when it completes.
inline EpisodeResult run_episode_async(Env& env, Policy& policy, const RunOptions& opts = {}) {
    const std::size_t L = env.num_agents();
    policy.reset(detail::start_of(env));
    std::vector<Inbox> inbox(L);
    std::vector<std::vector<std::pair<std::size_t, Message>>> pending(L);
    std::vector<std::optional<Matrix>> last(L);
    std::vector<std::optional<PlannedMove>> in_flight(L);
    std::vector<std::size_t> step_index(L, 0);
    using Event = std::pair<double, std::size_t>;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue;
    for (std::size_t i = 0; i < L; ++i) queue.emplace(0.0, i);
    EpisodeResult res;
    std::size_t decisions = 0;
    double makespan = 0.0;
    const std::size_t budget = env.step_budget();
    while (!queue.empty()) {
        auto [now, i] = queue.top();
        queue.pop();
        makespan = std::max(makespan, now);
        if (in_flight[i]) {
            auto sr = env.apply(*in_flight[i]);
            if (opts.record_steps) res.steps[step_index[i]].outcome = sr.outcome;
            in_flight[i].reset();
        }
        for (auto& [sender, msg] : pending[i]) inbox[i].store(sender, std::move(msg));
        pending[i].clear();
        if (env.done()) continue;  // drain remaining moves
        Observation obs{env.ctx(), env.coverage(), i, L, env.agent(i).position, now, inbox[i],
                        last[i] ? &*last[i] : nullptr};
        Decision d = policy.decide(obs);
        if (!d.destination) continue;
        if (++decisions > budget) throw Error("non-terminating policy: step budget exceeded");
        auto mv = env.plan(i, *d.destination, std::move(d.path));
        env.commit(mv);
        if (d.message) {
            for (std::size_t j = 0; j < L; ++j)
                if (j != i) pending[j].emplace_back(i, Message{*d.message, now});
            last[i] = std::move(d.message);
        }
        if (opts.record_steps) {
            step_index[i] = res.steps.size();
            res.steps.push_back({i, mv.from, mv.destination, mv.path, now, now + mv.cost, mv.cost,
                                 Outcome::NeedsRevisit, d.log_prob});
        }
        queue.emplace(now + mv.cost, i);
        in_flight[i] = std::move(mv);
    }
    if (!env.done()) throw Error("all agents retired before coverage was complete");
    res.metrics = detail::finish_metrics(env, decisions, makespan);
    res.final_coverage = env.coverage();
    return res;
}

}  // namespace marvin
