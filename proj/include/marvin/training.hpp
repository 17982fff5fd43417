#pragma once

// Imitation learning with teacher forcing, REINFORCE with batch-normalized
// returns, the training loop, and evaluation.
//
// One epoch is one optimizer step on a batch of episodes, each on a graph
// drawn from the training split.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "marvin/baselines.hpp"
#include "marvin/dataset.hpp"
#include "marvin/policy.hpp"

namespace marvin {

enum class TrainMode { IL, RL };

inline std::string to_string(TrainMode m) { return m == TrainMode::IL ? "il" : "rl"; }
inline TrainMode train_mode_from_string(const std::string& s) {
    if (s == "il" || s == "IL") return TrainMode::IL;
    if (s == "rl" || s == "RL") return TrainMode::RL;
    throw Error("unknown training mode \"" + s + "\" (expected il or rl)");
}

struct TrainConfig {
    std::size_t batch = 50;
    std::size_t epochs = 5000;
    nn::AdamConfig adam;
    std::size_t agents = 2;
    TrainMode mode = TrainMode::IL;
    std::uint64_t seed = 0;
    std::string distribution = "uniform:1:3";
    bool traffic = true;
    std::size_t val_every = 50;        // epochs between validations
    std::size_t val_episodes = 50;
    std::size_t checkpoint_every = 500;
    ModelConfig model;
    GeneratorSpec data;                // used when no manifest is given
    std::string manifest;              // optional dataset manifest path
    std::string init_checkpoint;       // optional warm start (e.g. RL after IL)

    nlohmann::json to_json() const {
        return {{"batch", batch},
                {"epochs", epochs},
                {"lr", adam.lr},
                {"lr_decay", adam.decay},
                {"lr_decay_every", adam.decay_every},
                {"agents", agents},
                {"mode", to_string(mode)},
                {"seed", seed},
                {"distribution", distribution},
                {"traffic", traffic},
                {"val_every", val_every},
                {"val_episodes", val_episodes},
                {"checkpoint_every", checkpoint_every},
                {"model", model.to_json()},
                {"data", data.to_json()},
                {"manifest", manifest},
                {"init_checkpoint", init_checkpoint}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.batch = j.value("batch", c.batch);
        c.epochs = j.value("epochs", c.epochs);
        c.adam.lr = j.value("lr", c.adam.lr);
        c.adam.decay = j.value("lr_decay", c.adam.decay);
        c.adam.decay_every = j.value("lr_decay_every", c.adam.decay_every);
        c.agents = j.value("agents", c.agents);
        c.mode = train_mode_from_string(j.value("mode", std::string("il")));
        c.seed = j.value("seed", c.seed);
        c.distribution = j.value("distribution", c.distribution);
        c.traffic = j.value("traffic", c.traffic);
        c.val_every = j.value("val_every", c.val_every);
        c.val_episodes = j.value("val_episodes", c.val_episodes);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        if (j.contains("model")) c.model = ModelConfig::from_json(j["model"]);
        if (j.contains("data")) c.data = GeneratorSpec::from_json(j["data"]);
        c.manifest = j.value("manifest", std::string());
        c.init_checkpoint = j.value("init_checkpoint", std::string());
        c.validate();
        return c;
    }

    void validate() const {
        if (batch == 0 || agents == 0) throw Error("train config: batch and agents must be positive");
        if (mode == TrainMode::RL && batch < 2) throw Error("train config: RL needs batch >= 2");
        if (!(adam.lr > 0.0)) throw Error("train config: lr must be positive");
        MultiPassDistribution::parse(distribution).validate();
    }
};

// ---------------------------------------------------------------------------
// Gradient buffers

using GradBuffer = std::vector<std::vector<double>>;

inline GradBuffer zero_grads(const nn::ParamStore& store) {
    GradBuffer g;
    for (const auto& p : store.params()) g.emplace_back(p.value.size(), 0.0);
    return g;
}

inline void accumulate(GradBuffer& buf, const nn::Tape& tape, const std::vector<nn::Var>& vars, double weight) {
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const auto& g = tape.grad_of(vars[i].id);
        for (std::size_t k = 0; k < g.size(); ++k) buf[i][k] += weight * g[k];
    }
}

// ---------------------------------------------------------------------------
// Teacher forcing

struct ImitationStats {
    double loss = 0.0;  // summed cross-entropy
    std::size_t decisions = 0;
    std::size_t correct = 0;  // learner argmax equals the expert action

    double accuracy() const { return decisions ? static_cast<double>(correct) / static_cast<double>(decisions) : 0.0; }
    ImitationStats& operator+=(const ImitationStats& o) {
        loss += o.loss;
        decisions += o.decisions;
        correct += o.correct;
        return *this;
    }
};

/// Plays the expert's actions while scoring the learner on each of them. The
/// learner's message is what gets broadcast, so communication is trained on
/// the states it will see. With a gradient buffer the cross-entropy of every
/// decision is backpropagated into it with the given weight.
class TeacherForcing : public Policy {
public:
    TeacherForcing(const MarvinModel& learner, Policy& expert, PlannerCache& cache, GradBuffer* grads, double weight)
        : learner_(learner), expert_(expert), cache_(cache), grads_(grads), weight_(weight) {}

    void reset(const EpisodeStart& s) override { expert_.reset(s); }

    Decision decide(const Observation& obs) override {
        Decision d = expert_.decide(obs);
        if (!d.destination) return d;
        if (obs.coverage.covered.at(*d.destination))
            throw Error("inconsistent expert trace: node " + std::to_string(*d.destination) + " is already covered");
        DecisionPass pass;
        planner_pass(pass, learner_, obs, cache_.get(obs.ctx), learner_.config().iterations, grads_ != nullptr);
        nn::Var loss = nn::cross_entropy_logits(pass.tape, pass.out.values, pass.mask, *d.destination);
        const double l = pass.tape.value(loss).data[0];
        if (!std::isfinite(l)) throw Error("non-finite imitation loss");
        if (grads_) {
            pass.tape.backward(loss);
            accumulate(*grads_, pass.tape, pass.params, weight_);
        }
        const auto& values = pass.tape.value(pass.out.values).data;
        const Selection s = select_action(values, pass.mask, SelectMode::Greedy, nullptr);
        stats_.loss += l;
        ++stats_.decisions;
        if (s.chosen == *d.destination) ++stats_.correct;
        d.message = pass.tape.value(pass.out.message).to_matrix();
        d.log_prob = -l;
        return d;
    }

    const ImitationStats& stats() const { return stats_; }

private:
    const MarvinModel& learner_;
    Policy& expert_;
    PlannerCache& cache_;
    GradBuffer* grads_;
    double weight_;
    ImitationStats stats_;
};

/// Episode instance: a graph plus the seed of its hidden state and starts.
struct EpisodeSpec {
    std::shared_ptr<const GraphContext> ctx;
    std::uint64_t seed = 0;
    std::size_t graph_index = 0;
};

struct EpisodeSetup {
    MultiPassDistribution dist = MultiPassDistribution::uniform(1, 3);
    std::size_t agents = 2;
    bool traffic = true;
};

inline Env make_env(const EpisodeSpec& e, const EpisodeSetup& s) {
    return Env::create(e.ctx, s.dist, s.agents, e.seed, s.traffic);
}

/// Expert actions for an episode in synchronous round-robin order.
struct ExpertTrajectory {
    std::vector<std::vector<NodeId>> actions;  // per agent
    std::vector<StepRecord> steps;
    double total_cost_h = 0.0;
};

inline ExpertTrajectory make_expert_trajectory(Env env) {
    OraclePolicy expert(env.hidden());
    auto res = run_episode_sync(env, expert);
    ExpertTrajectory t;
    t.actions.resize(env.num_agents());
    for (const auto& s : res.steps) t.actions[s.agent].push_back(s.destination);
    t.steps = std::move(res.steps);
    t.total_cost_h = res.metrics.total_cost_h;
    return t;
}

/// Teacher-forced pass over one episode; gradients (scaled by `weight`) go
/// into `grads` when given.
inline ImitationStats imitation_episode(const MarvinModel& model, const EpisodeSpec& e, const EpisodeSetup& s,
                                        PlannerCache& cache, GradBuffer* grads, double weight) {
    Env env = make_env(e, s);
    OraclePolicy expert(env.hidden());
    TeacherForcing tf(model, expert, cache, grads, weight);
    run_episode_sync(env, tf, {false});
    return tf.stats();
}

struct StepReport {
    double loss = 0.0;  // batch-mean objective value
    double accuracy = 0.0;
    double mean_cost_h = 0.0;
    bool skipped = false;
    std::string warning;
};

/// Imitation loss over a batch: cross-entropy summed over decisions and
/// agents, averaged over episodes. Leaves the gradient in the store.
inline StepReport il_step(MarvinModel& model, std::span<const EpisodeSpec> batch, const EpisodeSetup& s,
                          PlannerCache& cache) {
    if (batch.empty()) throw Error("il_step: empty batch");
    GradBuffer g = zero_grads(model.params());
    ImitationStats total;
    const double w = 1.0 / static_cast<double>(batch.size());
    for (const auto& e : batch) total += imitation_episode(model, e, s, cache, &g, w);
    model.params().set_grads(g);
    StepReport r;
    r.loss = total.loss * w;
    r.accuracy = total.accuracy();
    return r;
}

/// Samples actions from the learner and sums the gradient of log pi over the
/// episode's decisions.
class ScoreFunctionRecorder : public Policy {
public:
    ScoreFunctionRecorder(const MarvinModel& model, PlannerCache& cache, GradBuffer& grads, std::uint64_t seed)
        : model_(model), cache_(cache), grads_(grads), rng_(derive_seed(seed, 0x137e2179)) {}

    Decision decide(const Observation& obs) override {
        if (obs.coverage.all_covered()) return {};
        DecisionPass pass;
        planner_pass(pass, model_, obs, cache_.get(obs.ctx), model_.config().iterations, true);
        const auto& values = pass.tape.value(pass.out.values).data;
        Selection sel = select_action(values, pass.mask, SelectMode::Sample, &rng_);
        nn::Var nll = nn::cross_entropy_logits(pass.tape, pass.out.values, pass.mask, sel.chosen);
        pass.tape.backward(nll, -1.0);  // d log pi
        accumulate(grads_, pass.tape, pass.params, 1.0);
        Decision d;
        d.destination = sel.chosen;
        d.log_prob = -pass.tape.value(nll).data[0];
        d.message = pass.tape.value(pass.out.message).to_matrix();
        return d;
    }

private:
    const MarvinModel& model_;
    PlannerCache& cache_;
    GradBuffer& grads_;
    Rng rng_;
};

/// Population mean/std normalization with a 1e-8 guard on the std.
inline std::vector<double> normalize_rewards(std::span<const double> r, double* std_out = nullptr) {
    const double B = static_cast<double>(r.size());
    double mu = 0.0;
    for (double x : r) mu += x;
    mu /= B;
    double var = 0.0;
    for (double x : r) var += (x - mu) * (x - mu);
    const double sd = std::sqrt(var / B);
    if (std_out) *std_out = sd;
    std::vector<double> out(r.size(), 0.0);
    if (sd < 1e-8) return out;
    for (std::size_t i = 0; i < r.size(); ++i) out[i] = (r[i] - mu) / (sd + 1e-8);
    return out;
}

/// Combines per-episode score-function gradients: the loss is
/// -mean_e(r~_e * sum_t log pi), so its gradient is -mean_e(r~_e * G_e).
inline GradBuffer reinforce_gradient(std::span<const GradBuffer> per_episode, std::span<const double> normalized) {
    GradBuffer out = per_episode[0];
    for (auto& t : out) std::fill(t.begin(), t.end(), 0.0);
    const double B = static_cast<double>(per_episode.size());
    for (std::size_t e = 0; e < per_episode.size(); ++e)
        for (std::size_t i = 0; i < out.size(); ++i)
            for (std::size_t k = 0; k < out[i].size(); ++k) out[i][k] -= normalized[e] * per_episode[e][i][k] / B;
    return out;
}

inline StepReport rl_step(MarvinModel& model, std::span<const EpisodeSpec> batch, const EpisodeSetup& s,
                          PlannerCache& cache, std::uint64_t seed) {
    if (batch.size() < 2) throw Error("rl_step: batch must hold at least 2 episodes");
    std::vector<GradBuffer> per(batch.size());
    std::vector<double> reward(batch.size());
    std::vector<double> logp(batch.size(), 0.0);
    StepReport rep;
    for (std::size_t e = 0; e < batch.size(); ++e) {
        per[e] = zero_grads(model.params());
        Env env = make_env(batch[e], s);
        ScoreFunctionRecorder rec(model, cache, per[e], derive_seed(seed, e));
        auto res = run_episode_sync(env, rec);
        for (const auto& st : res.steps) logp[e] += st.log_prob;
        reward[e] = -res.metrics.total_cost_h;
        rep.mean_cost_h += res.metrics.total_cost_h / static_cast<double>(batch.size());
    }
    double sd = 0.0;
    auto rn = normalize_rewards(reward, &sd);
    if (sd < 1e-8) {
        rep.skipped = true;
        rep.warning = "zero reward variance in batch; update skipped";
        model.params().zero_grad();
        return rep;
    }
    model.params().set_grads(reinforce_gradient(per, rn));
    for (std::size_t e = 0; e < batch.size(); ++e) rep.loss -= rn[e] * logp[e] / static_cast<double>(batch.size());
    return rep;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainRow {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double train_accuracy = 0.0;
    double train_cost_h = 0.0;
    std::optional<double> val_metric;  // accuracy (IL) or negative mean cost (RL)
};

struct TrainResult {
    std::vector<TrainRow> curve;
    double best_val = -std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
};

inline std::string checkpoint_metadata(const ModelConfig& m, const TrainConfig& t, std::size_t epoch) {
    return nlohmann::json{{"model", m.to_json()}, {"train", t.to_json()}, {"epoch", epoch}}.dump();
}

/// Rebuilds a model from a checkpoint file.
inline MarvinModel load_model(const std::filesystem::path& path) {
    auto ck = nn::load_checkpoint(path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(ck.metadata);
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": bad checkpoint metadata: " + e.what());
    }
    return MarvinModel(ModelConfig::from_json(meta.at("model")), ck.store);
}

/// Fixed validation episodes: graph i with a seed that depends only on i.
inline std::vector<EpisodeSpec> fixed_episodes(const std::vector<Corpus::Ptr>& graphs, std::size_t count,
                                               std::uint64_t seed) {
    std::vector<EpisodeSpec> out;
    if (graphs.empty()) return out;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t gi = i % graphs.size();
        out.push_back({graphs[gi], derive_seed(seed, i), gi});
    }
    return out;
}

inline ImitationStats imitation_accuracy(const MarvinModel& model, std::span<const EpisodeSpec> episodes,
                                         const EpisodeSetup& s) {
    PlannerCache cache(model.config().ablation);
    ImitationStats total;
    for (const auto& e : episodes) total += imitation_episode(model, e, s, cache, nullptr, 0.0);
    return total;
}

using ProgressFn = std::function<void(const TrainRow&)>;

/// Trains `model` in place. Writes curve.csv, last.ckpt, best.ckpt and
/// periodic epoch checkpoints under `out_dir` when it is non-empty.
inline TrainResult train(MarvinModel& model, const TrainConfig& cfg, const Corpus& corpus,
                         const std::filesystem::path& out_dir = {}, const ProgressFn& progress = {}) {
    cfg.validate();
    if (corpus.train.empty()) throw Error("train: empty training split");
    const EpisodeSetup setup{MultiPassDistribution::parse(cfg.distribution), cfg.agents, cfg.traffic};
    const auto& val_graphs = corpus.val.empty() ? corpus.train : corpus.val;
    const auto val_eps = fixed_episodes(val_graphs, cfg.val_episodes, derive_seed(cfg.seed, 0xfa11));
    PlannerCache cache(model.config().ablation);
    Rng rng(derive_seed(cfg.seed, 0x7ea1));
    TrainResult result;
    std::ostringstream csv;
    csv << "epoch,lr,loss,train_accuracy,train_cost_h,val_metric\n";
    const bool write = !out_dir.empty();
    if (write) std::filesystem::create_directories(out_dir);

    auto validate = [&]() {
        if (cfg.mode == TrainMode::IL) return imitation_accuracy(model, val_eps, setup).accuracy();
        double cost = 0.0;
        for (const auto& e : val_eps) {
            Env env = make_env(e, setup);
            MarvinPolicy p(model, SelectMode::Greedy, e.seed);
            cost += run_episode_sync(env, p, {false}).metrics.total_cost_h;
        }
        return -cost / static_cast<double>(val_eps.size());
    };

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<EpisodeSpec> batch;
        for (std::size_t b = 0; b < cfg.batch; ++b) {
            const std::size_t gi = uniform_index(rng, corpus.train.size());
            batch.push_back({corpus.train[gi], rng(), gi});
        }
        StepReport rep = cfg.mode == TrainMode::IL ? il_step(model, batch, setup, cache)
                                                   : rl_step(model, batch, setup, cache, rng());
        TrainRow row;
        row.epoch = epoch;
        row.lr = nn::decayed_lr(cfg.adam, epoch - 1);
        row.loss = rep.loss;
        row.train_accuracy = rep.accuracy;
        row.train_cost_h = rep.mean_cost_h;
        if (!std::isfinite(rep.loss)) {
            if (write) nn::save_checkpoint(out_dir / "abort.ckpt", model.params(), checkpoint_metadata(model.config(), cfg, epoch));
            throw Error("non-finite loss at epoch " + std::to_string(epoch) +
                        (write ? "; state dumped to " + (out_dir / "abort.ckpt").string() : std::string()));
        }
        if (!rep.skipped) nn::adam_step(model.params(), row.lr, cfg.adam);
        if (!rep.warning.empty()) std::cerr << "epoch " << epoch << ": " << rep.warning << "\n";

        if (cfg.val_every && (epoch % cfg.val_every == 0 || epoch == cfg.epochs) && !val_eps.empty()) {
            row.val_metric = validate();
            if (*row.val_metric > result.best_val) {
                result.best_val = *row.val_metric;
                result.best_epoch = epoch;
                if (write)
                    nn::save_checkpoint(out_dir / "best.ckpt", model.params(),
                                        checkpoint_metadata(model.config(), cfg, epoch));
            }
        }
        if (write && cfg.checkpoint_every && epoch % cfg.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch_%05zu.ckpt", epoch);
            nn::save_checkpoint(out_dir / name, model.params(), checkpoint_metadata(model.config(), cfg, epoch));
        }
        csv << row.epoch << ',' << row.lr << ',' << row.loss << ',' << row.train_accuracy << ',' << row.train_cost_h
            << ',' << (row.val_metric ? std::to_string(*row.val_metric) : std::string()) << '\n';
        result.curve.push_back(row);
        if (progress) progress(row);
    }
    if (write) {
        nn::save_checkpoint(out_dir / "last.ckpt", model.params(), checkpoint_metadata(model.config(), cfg, cfg.epochs));
        write_file_atomic(out_dir / "curve.csv", csv.str());
    }
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation

using PolicyFactory = std::function<std::unique_ptr<Policy>(const Env&, const EpisodeSpec&)>;

/// Records per-decision latency, skipping the first (warm-up) decision.
class TimedPolicy : public Policy {
public:
    explicit TimedPolicy(Policy& inner) : inner_(inner) {}
    void reset(const EpisodeStart& s) override { inner_.reset(s); }
    Decision decide(const Observation& obs) override {
        const auto t0 = std::chrono::steady_clock::now();
        Decision d = inner_.decide(obs);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (calls_++ > 0) {
            total_ms_ += ms;
            ++timed_;
        }
        return d;
    }
    double mean_ms() const { return timed_ ? total_ms_ / static_cast<double>(timed_) : 0.0; }

private:
    Policy& inner_;
    std::size_t calls_ = 0, timed_ = 0;
    double total_ms_ = 0.0;
};

struct EvalRecord {
    std::string method;
    std::size_t graph = 0;
    std::size_t nodes = 0;
    std::size_t agents = 0;
    std::uint64_t seed = 0;
    EpisodeMetrics metrics;
    double ms_per_decision = 0.0;  // runtime, excluded from deterministic outputs
};

inline std::vector<EvalRecord> evaluate_method(const std::string& method, const PolicyFactory& factory,
                                               std::span<const EpisodeSpec> episodes, const EpisodeSetup& setup,
                                               bool async = true) {
    std::vector<EvalRecord> out;
    for (const auto& e : episodes) {
        Env env = make_env(e, setup);
        auto policy = factory(env, e);
        TimedPolicy timed(*policy);
        auto res = async ? run_episode_async(env, timed, {false}) : run_episode_sync(env, timed, {false});
        out.push_back({method, e.graph_index, e.ctx->size(), setup.agents, e.seed, res.metrics, timed.mean_ms()});
    }
    return out;
}

inline PolicyFactory marvin_factory(const MarvinModel& model, int iterations = 0) {
    return [&model, iterations](const Env&, const EpisodeSpec& e) -> std::unique_ptr<Policy> {
        return std::make_unique<MarvinPolicy>(model, SelectMode::Greedy, e.seed, iterations);
    };
}

inline PolicyFactory baseline_factory(const std::string& name) {
    if (name == "oracle")
        return [](const Env& env, const EpisodeSpec&) -> std::unique_ptr<Policy> {
            return std::make_unique<OraclePolicy>(env.hidden());
        };
    if (name == "iterative-vrp")
        return [](const Env&, const EpisodeSpec&) -> std::unique_ptr<Policy> {
            return std::make_unique<IterativeVrpPolicy>();
        };
    if (name == "greedy")
        return [](const Env&, const EpisodeSpec&) -> std::unique_ptr<Policy> { return std::make_unique<GreedyPolicy>(); };
    if (name == "random")
        return [](const Env&, const EpisodeSpec& e) -> std::unique_ptr<Policy> {
            return std::make_unique<RandomPolicy>(e.seed);
        };
    throw Error("unknown baseline \"" + name + "\"");
}

struct MethodSummary {
    std::string method;
    std::size_t episodes = 0;
    double mean_cost_h = 0.0;
    double gap_vs_oracle = 0.0;  // mean per-episode relative gap; NaN without oracle rows
    double mean_makespan_h = 0.0;
    double mean_gini = 0.0;
    double ms_per_decision = 0.0;
};

/// Per-method means; the gap is paired per episode against `oracle` records.
inline MethodSummary summarize(const std::vector<EvalRecord>& rows, const std::vector<EvalRecord>* oracle) {
    MethodSummary s;
    if (rows.empty()) return s;
    s.method = rows[0].method;
    s.episodes = rows.size();
    double gap = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        s.mean_cost_h += rows[i].metrics.total_cost_h;
        s.mean_makespan_h += rows[i].metrics.makespan_h;
        s.mean_gini += rows[i].metrics.gini;
        s.ms_per_decision += rows[i].ms_per_decision;
        if (oracle && i < oracle->size()) gap += rows[i].metrics.total_cost_h / (*oracle)[i].metrics.total_cost_h - 1.0;
    }
    const double N = static_cast<double>(rows.size());
    s.mean_cost_h /= N;
    s.mean_makespan_h /= N;
    s.mean_gini /= N;
    s.ms_per_decision /= N;
    s.gap_vs_oracle = oracle ? gap / N : std::numeric_limits<double>::quiet_NaN();
    return s;
}

/// One JSON object per episode, runtime excluded so reruns are byte-identical.
inline std::string metrics_jsonl(const std::vector<EvalRecord>& rows) {
    std::string out;
    for (const auto& r : rows) {
        nlohmann::json hist = nlohmann::json::object();
        for (const auto& [visits, count] : r.metrics.visit_histogram) hist[std::to_string(visits)] = count;
        nlohmann::json j{{"method", r.method},
                         {"graph", r.graph},
                         {"nodes", r.nodes},
                         {"agents", r.agents},
                         {"seed", r.seed},
                         {"cost_h", r.metrics.total_cost_h},
                         {"makespan_h", r.metrics.makespan_h},
                         {"loads_h", r.metrics.loads_h},
                         {"gini", r.metrics.gini},
                         {"decisions", r.metrics.decisions},
                         {"visit_histogram", hist}};
        out += j.dump() + "\n";
    }
    return out;
}

inline std::string runtime_jsonl(const std::vector<EvalRecord>& rows) {
    std::string out;
    for (const auto& r : rows)
        out += nlohmann::json{{"method", r.method}, {"graph", r.graph}, {"seed", r.seed},
                              {"ms_per_decision", r.ms_per_decision}}
                   .dump() +
               "\n";
    return out;
}

}  // namespace marvin
