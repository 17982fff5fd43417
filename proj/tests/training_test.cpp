#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"

using namespace marvin;
using marvin::testing::context;
using marvin::testing::hidden;
using marvin::testing::path_graph;
using marvin::testing::timed_graph;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("marvin_training_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

// Remembers how many nodes were still selectable at each expert decision.
class CountingExpert : public Policy {
public:
    explicit CountingExpert(Policy& inner) : inner_(inner) {}
    void reset(const EpisodeStart& s) override { inner_.reset(s); }
    Decision decide(const Observation& obs) override {
        Decision d = inner_.decide(obs);
        if (d.destination) choices.push_back(obs.coverage.remaining());
        return d;
    }
    std::vector<std::size_t> choices;

private:
    Policy& inner_;
};

// Always asks for a fixed node, covered or not.
class StubbornPolicy : public Policy {
public:
    explicit StubbornPolicy(NodeId v) : v_(v) {}
    Decision decide(const Observation&) override {
        Decision d;
        d.destination = v_;
        return d;
    }

private:
    NodeId v_;
};

void zero_decoder(MarvinModel& m) {
    for (const char* name : {"dec.W", "dec.b"})
        std::fill(m.params().at(name).value.data.begin(), m.params().at(name).value.data.end(), 0.0);
}

Corpus tiny_corpus(std::size_t count, std::uint64_t seed) {
    GeneratorSpec gs;
    gs.count = count;
    gs.test_count = 4;
    gs.nodes_min = 3;
    gs.nodes_max = 4;
    gs.seed = seed;
    return generate_corpus(gs);
}

}  // namespace

TEST(Expert, MatchesExhaustiveOptimumOnPath) {
    // Path 0-1-2-3 with unequal segment times, one visit each, one agent.
    std::vector<Edge> e{{0, 1}, {1, 0}, {1, 2}, {2, 1}, {2, 3}, {3, 2}};
    auto ctx = context(timed_graph({4, 1, 7, 2}, e));
    const std::vector<int> M(4, 1);
    for (NodeId start = 0; start < 4; ++start) {
        Env env(ctx, hidden(M), {start});
        OraclePolicy expert(env.hidden());
        auto res = run_episode_sync(env, expert);
        const auto best = exhaustive_oracle(make_travel_cost(ctx->graph, ctx->base_weights), start, M);
        EXPECT_NEAR(expert.plan().total_cost, best.cost, 1e-9) << "start " << start;
        EXPECT_LE(res.metrics.total_cost_h * kSecondsPerHour, best.cost + 1e-9);
        EXPECT_TRUE(res.final_coverage.all_covered());
    }
}

TEST(Expert, TrajectoryCoversEverythingAndIsDeterministic) {
    auto ctx = context(generate_graph(10, 4));
    auto env = Env::create(ctx, MultiPassDistribution::uniform(1, 3), 2, 5, true);
    auto a = make_expert_trajectory(env);
    auto b = make_expert_trajectory(env);
    EXPECT_EQ(a.actions, b.actions);
    EXPECT_EQ(a.total_cost_h, b.total_cost_h);
    std::vector<int> visits(10, 0);
    for (const auto& s : a.steps)
        for (std::size_t k = 1; k < s.path.size(); ++k) ++visits[s.path[k]];
    for (NodeId v = 0; v < 10; ++v) EXPECT_GE(visits[v], env.hidden().M[v]) << v;
}

TEST(Imitation, UniformPolicyLossIsSumOfLogChoices) {
    MarvinModel m(ModelConfig{}, 3);
    zero_decoder(m);  // every remaining node gets the same value
    auto g1 = context(generate_graph(6, 1)), g2 = context(generate_graph(7, 2));
    std::vector<EpisodeSpec> batch{{g1, 11, 0}, {g2, 12, 1}, {g1, 13, 0}};
    const EpisodeSetup setup{MultiPassDistribution::uniform(1, 3), 2, true};

    double expected = 0.0;
    for (const auto& e : batch) {
        Env env = make_env(e, setup);
        OraclePolicy expert(env.hidden());
        CountingExpert counter(expert);
        run_episode_sync(env, counter, {false});
        for (std::size_t k : counter.choices) expected += std::log(static_cast<double>(k));
    }
    expected /= static_cast<double>(batch.size());

    PlannerCache cache(m.config().ablation);
    auto rep = il_step(m, batch, setup, cache);
    EXPECT_NEAR(rep.loss, expected, 1e-9);
    // Shifting every value equally changes nothing, so the decoder bias gets no gradient.
    EXPECT_NEAR(m.params().at("dec.b").grad[0], 0.0, 1e-12);
}

TEST(Imitation, CertainExpertActionHasZeroLossAndGradient) {
    MarvinModel m(ModelConfig{}, 4);
    auto ctx = context(path_graph(5));
    CoverageState cov(5);
    for (NodeId v : {0u, 1u, 3u, 4u}) cov.covered[v] = 1;
    Inbox inbox;
    Observation obs{*ctx, cov, 0, 1, 1, 0.0, inbox, nullptr};
    StubbornPolicy expert(2);
    PlannerCache cache(m.config().ablation);
    GradBuffer g = zero_grads(m.params());
    TeacherForcing tf(m, expert, cache, &g, 1.0);
    tf.decide(obs);
    EXPECT_EQ(tf.stats().loss, 0.0);
    EXPECT_EQ(tf.stats().correct, 1u);
    for (const auto& t : g)
        for (double x : t) EXPECT_EQ(x, 0.0);
}

TEST(Imitation, MaskedExpertActionIsRejected) {
    MarvinModel m(ModelConfig{}, 4);
    auto ctx = context(path_graph(4));
    CoverageState cov(4);
    cov.covered[2] = 1;
    Inbox inbox;
    Observation obs{*ctx, cov, 0, 1, 0, 0.0, inbox, nullptr};
    StubbornPolicy expert(2);
    PlannerCache cache(m.config().ablation);
    TeacherForcing tf(m, expert, cache, nullptr, 1.0);
    try {
        tf.decide(obs);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("inconsistent expert trace"), std::string::npos);
    }
}

TEST(Imitation, ReplayFollowsExpertStates) {
    MarvinModel m(ModelConfig{}, 6);
    auto ctx = context(generate_graph(9, 8));
    auto env = Env::create(ctx, MultiPassDistribution::uniform(1, 3), 2, 21, true);
    Env a = env, b = env;
    OraclePolicy expert_a(env.hidden()), expert_b(env.hidden());
    auto ref = run_episode_sync(a, expert_a);
    PlannerCache cache(m.config().ablation);
    TeacherForcing tf(m, expert_b, cache, nullptr, 1.0);
    auto rep = run_episode_sync(b, tf);
    ASSERT_EQ(ref.steps.size(), rep.steps.size());
    for (std::size_t k = 0; k < ref.steps.size(); ++k) {
        EXPECT_EQ(ref.steps[k].agent, rep.steps[k].agent);
        EXPECT_EQ(ref.steps[k].path, rep.steps[k].path);
        EXPECT_EQ(ref.steps[k].end_time, rep.steps[k].end_time);
        EXPECT_EQ(ref.steps[k].outcome, rep.steps[k].outcome);
    }
    EXPECT_EQ(ref.final_coverage.visits, rep.final_coverage.visits);
    EXPECT_EQ(tf.stats().decisions, ref.steps.size());
}

TEST(Imitation, LossDecreasesOnFixedBatch) {
    MarvinModel m(ModelConfig{}, 7);
    auto g = context(generate_graph(6, 3));
    std::vector<EpisodeSpec> batch{{g, 1, 0}, {g, 2, 0}, {g, 3, 0}, {g, 4, 0}};
    const EpisodeSetup setup{MultiPassDistribution::constant(1), 1, false};
    PlannerCache cache(m.config().ablation);
    nn::AdamConfig adam;
    std::vector<double> losses;
    for (int step = 0; step < 50; ++step) {
        losses.push_back(il_step(m, batch, setup, cache).loss);
        nn::adam_step(m.params(), 1e-2, adam);
    }
    double first = 0.0, last = 0.0;
    for (int k = 0; k < 5; ++k) {
        first += losses[k];
        last += losses[45 + k];
    }
    EXPECT_LT(last, 0.5 * first);
}

TEST(Reinforce, NormalizationExamples) {
    const std::vector<double> r{-2.0, -4.0};
    auto n = normalize_rewards(r);
    EXPECT_NEAR(n[0], 1.0, 1e-8);
    EXPECT_NEAR(n[1], -1.0, 1e-8);

    Rng rng(3);
    std::vector<double> x(37);
    for (auto& v : x) v = 10.0 * uniform01(rng);
    auto z = normalize_rewards(x);
    double mu = 0.0, var = 0.0;
    for (double v : z) mu += v;
    mu /= 37.0;
    for (double v : z) var += (v - mu) * (v - mu);
    EXPECT_NEAR(mu, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(var / 37.0), 1.0, 1e-8);

    double sd = 1.0;
    auto same = normalize_rewards(std::vector<double>{-3.0, -3.0, -3.0}, &sd);
    EXPECT_EQ(sd, 0.0);
    for (double v : same) EXPECT_EQ(v, 0.0);
}

TEST(Reinforce, IdenticalCostsSkipTheUpdate) {
    // Two nodes joined both ways: every order costs exactly both segments.
    auto ctx = context(timed_graph({5, 5}, {{0, 1}, {1, 0}}));
    MarvinModel m(ModelConfig{}, 2);
    std::vector<EpisodeSpec> batch{{ctx, 1, 0}, {ctx, 2, 0}, {ctx, 3, 0}};
    const EpisodeSetup setup{MultiPassDistribution::constant(1), 1, false};
    PlannerCache cache(m.config().ablation);
    auto rep = rl_step(m, batch, setup, cache, 9);
    EXPECT_TRUE(rep.skipped);
    EXPECT_FALSE(rep.warning.empty());
    for (const auto& p : m.params().params())
        for (double g : p.grad) EXPECT_EQ(g, 0.0);
}

TEST(Reinforce, CheaperEpisodeLogProbIsPushedUp) {
    // Per-episode score gradients G1, G2; rewards favour episode 0.
    GradBuffer g0{{1.0, -2.0}}, g1{{0.5, 3.0}};
    std::vector<GradBuffer> per{g0, g1};
    auto rn = normalize_rewards(std::vector<double>{-2.0, -4.0});
    auto grad = reinforce_gradient(per, rn);
    // A descent step along -grad must raise log pi of episode 0 and lower episode 1.
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t k = 0; k < 2; ++k) {
        d0 += -grad[0][k] * g0[0][k];
        d1 += -grad[0][k] * g1[0][k];
    }
    EXPECT_GT(d0, 0.0);
    EXPECT_LT(d1, 0.0);
    EXPECT_NEAR(grad[0][0], -(1.0 - 0.5) / 2.0, 1e-8);
}

TEST(Reinforce, StepProducesFiniteGradients) {
    MarvinModel m(ModelConfig{}, 5);
    auto g = context(generate_graph(7, 5));
    std::vector<EpisodeSpec> batch{{g, 1, 0}, {g, 2, 0}, {g, 3, 0}, {g, 4, 0}};
    const EpisodeSetup setup{MultiPassDistribution::uniform(1, 3), 2, true};
    PlannerCache cache(m.config().ablation);
    auto rep = rl_step(m, batch, setup, cache, 1);
    ASSERT_FALSE(rep.skipped);
    double norm = 0.0;
    for (const auto& p : m.params().params())
        for (double x : p.grad) {
            ASSERT_TRUE(std::isfinite(x));
            norm += x * x;
        }
    EXPECT_GT(norm, 0.0);
    EXPECT_THROW(rl_step(m, std::span(batch).first(1), setup, cache, 1), Error);
}

TEST(TrainLoop, OneEpochWritesLoadableCheckpoint) {
    auto corpus = tiny_corpus(10, 2);
    TrainConfig cfg;
    cfg.batch = 2;
    cfg.epochs = 1;
    cfg.val_episodes = 2;
    cfg.checkpoint_every = 1;
    MarvinModel m(cfg.model, 1);
    const auto dir = temp_dir("one_epoch");
    auto res = train(m, cfg, corpus, dir);
    ASSERT_EQ(res.curve.size(), 1u);
    EXPECT_TRUE(std::filesystem::exists(dir / "curve.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "epoch_00001.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(dir / "best.ckpt"));
    auto back = load_model(dir / "last.ckpt");
    EXPECT_TRUE(back.params() == m.params());
    EXPECT_EQ(back.config().to_json(), m.config().to_json());

    // Evaluation through the reloaded model is bit-identical.
    const EpisodeSetup setup{MultiPassDistribution::uniform(1, 3), 2, true};
    auto eps = fixed_episodes(corpus.test, 4, 3);
    auto a = evaluate_method("marvin", marvin_factory(m), eps, setup);
    auto b = evaluate_method("marvin", marvin_factory(back), eps, setup);
    EXPECT_EQ(metrics_jsonl(a), metrics_jsonl(b));
    std::filesystem::remove_all(dir);
}

TEST(TrainLoop, ConfigValidationAndJson) {
    TrainConfig cfg;
    cfg.epochs = 17;
    cfg.mode = TrainMode::RL;
    auto back = TrainConfig::from_json(cfg.to_json());
    EXPECT_EQ(back.to_json(), cfg.to_json());
    auto bad = cfg.to_json();
    bad["batch"] = 1;
    EXPECT_THROW(TrainConfig::from_json(bad), Error);
    bad = cfg.to_json();
    bad["distribution"] = "uniform:3:1";
    EXPECT_THROW(TrainConfig::from_json(bad), Error);
}

TEST(TrainLoop, ImitationFitsTinyGraphs) {
    auto corpus = tiny_corpus(200, 1);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.agents = 1;
    cfg.distribution = "constant:1";
    cfg.traffic = false;
    cfg.val_every = 0;
    cfg.checkpoint_every = 0;
    cfg.adam.lr = 1e-2;
    cfg.seed = 3;
    MarvinModel m(cfg.model, 5);
    train(m, cfg, corpus);
    const EpisodeSetup setup{MultiPassDistribution::constant(1), 1, false};
    auto eps = fixed_episodes(corpus.train, corpus.train.size(), 9);
    const double acc = imitation_accuracy(m, eps, setup).accuracy();
    std::cout << "train-split expert accuracy " << acc << "\n";
    EXPECT_GE(acc, 0.90);
}

TEST(Evaluation, OracleAgainstItselfHasZeroGap) {
    auto corpus = tiny_corpus(4, 5);
    const EpisodeSetup setup{MultiPassDistribution::uniform(1, 3), 2, true};
    auto eps = fixed_episodes(corpus.test, 6, 1);
    auto rows = evaluate_method("oracle", baseline_factory("oracle"), eps, setup);
    auto s = summarize(rows, &rows);
    EXPECT_EQ(s.gap_vs_oracle, 0.0);
    EXPECT_EQ(s.episodes, 6u);
    EXPECT_THROW(baseline_factory("lkh"), Error);
}

TEST(Evaluation, RepeatRunsAreIdentical) {
    auto corpus = tiny_corpus(4, 6);
    const EpisodeSetup setup{MultiPassDistribution::uniform(1, 3), 2, true};
    auto eps = fixed_episodes(corpus.test, 4, 2);
    for (const char* name : {"random", "greedy", "iterative-vrp"}) {
        auto a = evaluate_method(name, baseline_factory(name), eps, setup);
        auto b = evaluate_method(name, baseline_factory(name), eps, setup);
        EXPECT_EQ(metrics_jsonl(a), metrics_jsonl(b)) << name;
    }
}
