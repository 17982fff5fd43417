#include <gtest/gtest.h>

#include <algorithm>

#include "helpers.hpp"

using namespace marvin;
using marvin::testing::random_matrix;
using marvin::testing::random_tensor;

namespace {

MarvinModel model_with(CommKind kind, std::uint64_t seed = 0) {
    ModelConfig c;
    c.comm = kind;
    return MarvinModel(c, seed);
}

std::vector<double> aggregate_values(const MarvinModel& m, const std::vector<Matrix>& inbox, const Matrix* own,
                                     std::size_t n) {
    nn::Tape t;
    auto p = m.bind_constants(t);
    std::vector<nn::Var> msgs;
    for (const auto& x : inbox) msgs.push_back(t.constant(nn::Tensor::from_matrix(x)));
    std::optional<nn::Var> self;
    if (own) self = t.constant(nn::Tensor::from_matrix(*own));
    return t.value(m.aggregate(t, p, msgs, self, n)).data;
}

// Linear value projection of one message, computed outside the model.
std::vector<double> value_projection(const MarvinModel& m, const Matrix& x) {
    const auto& W = m.params().at("comm.Wv").value;
    const auto& b = m.params().at("comm.bv").value;
    std::vector<double> out(x.rows * x.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) {
            double s = b.data[j];
            for (std::size_t k = 0; k < x.cols; ++k) s += x(i, k) * W(k, j);
            out[i * x.cols + j] = s;
        }
    return out;
}

}  // namespace

TEST(CommAttention, SingleSenderGetsAllWeight) {
    auto m = model_with(CommKind::Attention, 1);
    Rng rng(1);
    std::vector<Matrix> inbox{random_matrix(5, kCommChannels, rng)};
    Matrix own = random_matrix(5, kCommChannels, rng);
    auto a = m.comm_weights(inbox, &own);
    ASSERT_EQ(a.size(), 1u);
    EXPECT_DOUBLE_EQ(a[0], 1.0);
    auto u = aggregate_values(m, inbox, &own, 5);
    auto v = value_projection(m, inbox[0]);
    for (std::size_t k = 0; k < u.size(); ++k) EXPECT_NEAR(u[k], v[k], 1e-13);
}

TEST(CommAttention, IdenticalMessagesSplitEvenly) {
    auto m = model_with(CommKind::Attention, 2);
    Rng rng(2);
    Matrix x = random_matrix(4, kCommChannels, rng);
    Matrix own = random_matrix(4, kCommChannels, rng);
    std::vector<Matrix> inbox{x, x};
    auto a = m.comm_weights(inbox, &own);
    ASSERT_EQ(a.size(), 2u);
    EXPECT_DOUBLE_EQ(a[0], 0.5);
    EXPECT_DOUBLE_EQ(a[1], 0.5);
}

TEST(CommAttention, WeightsFormDistribution) {
    auto m = model_with(CommKind::Attention, 3);
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Matrix> inbox;
        const std::size_t senders = 1 + uniform_index(rng, 6);
        for (std::size_t s = 0; s < senders; ++s) inbox.push_back(random_matrix(6, kCommChannels, rng, 2.0));
        auto a = m.comm_weights(inbox, nullptr);
        double sum = 0.0;
        for (double x : a) {
            EXPECT_GE(x, 0.0);
            sum += x;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(CommAggregation, InvariantToSenderOrder) {
    for (auto kind : {CommKind::Attention, CommKind::Mean, CommKind::MaxPool}) {
        auto m = model_with(kind, 4);
        Rng rng(4);
        std::vector<Matrix> inbox;
        for (int s = 0; s < 4; ++s) inbox.push_back(random_matrix(7, kCommChannels, rng));
        Matrix own = random_matrix(7, kCommChannels, rng);
        auto base = aggregate_values(m, inbox, &own, 7);
        for (int trial = 0; trial < 5; ++trial) {
            std::shuffle(inbox.begin(), inbox.end(), rng);
            auto u = aggregate_values(m, inbox, &own, 7);
            for (std::size_t k = 0; k < u.size(); ++k) EXPECT_NEAR(u[k], base[k], 1e-12) << to_string(kind);
        }
    }
}

TEST(CommAggregation, EmptyInboxGivesZero) {
    for (auto kind : {CommKind::Attention, CommKind::Mean, CommKind::MaxPool}) {
        auto m = model_with(kind);
        auto u = aggregate_values(m, {}, nullptr, 6);
        ASSERT_EQ(u.size(), 6 * kCommChannels);
        for (double x : u) EXPECT_EQ(x, 0.0);
    }
}

TEST(CommAggregation, MeanAndMaxPoolMatchDirectComputation) {
    Rng rng(5);
    std::vector<Matrix> inbox;
    for (int s = 0; s < 3; ++s) inbox.push_back(random_matrix(4, kCommChannels, rng));
    auto mean_model = model_with(CommKind::Mean, 9);
    auto max_model = model_with(CommKind::MaxPool, 9);
    auto mean = aggregate_values(mean_model, inbox, nullptr, 4);
    auto mx = aggregate_values(max_model, inbox, nullptr, 4);
    std::vector<std::vector<double>> pm, px;
    for (const auto& x : inbox) {
        pm.push_back(value_projection(mean_model, x));
        px.push_back(value_projection(max_model, x));
    }
    for (std::size_t k = 0; k < mean.size(); ++k) {
        EXPECT_NEAR(mean[k], (pm[0][k] + pm[1][k] + pm[2][k]) / 3.0, 1e-13);
        EXPECT_NEAR(mx[k], std::max({px[0][k], px[1][k], px[2][k]}), 1e-13);
    }
    EXPECT_FALSE(mean_model.params().contains("comm.Wq"));
}

TEST(CommAggregation, ShapeMismatchThrows) {
    auto m = model_with(CommKind::Attention);
    Rng rng(6);
    std::vector<Matrix> inbox{random_matrix(3, kCommChannels, rng)};
    EXPECT_THROW(aggregate_values(m, inbox, nullptr, 4), Error);
}

TEST(CommGradCheck, FourNodesThreeAgents) {
    auto m = model_with(CommKind::Attention, 11);
    Rng rng(11);
    const std::size_t n = 4;
    // Two incoming messages plus the receiver's own last message; all comm
    // parameters are perturbed too.
    std::vector<std::string> names{"comm.Wq", "comm.bq", "comm.Wk", "comm.bk", "comm.Wv", "comm.bv"};
    std::vector<nn::Tensor> inputs{random_tensor({n, kCommChannels}, rng), random_tensor({n, kCommChannels}, rng),
                                   random_tensor({n, kCommChannels}, rng)};
    for (const auto& nm : names) inputs.push_back(m.params().at(nm).value);
    auto proj = random_tensor({n, kCommChannels}, rng);
    auto f = [&](nn::Tape& t, std::span<const nn::Var> v) {
        auto p = m.bind_constants(t);
        for (std::size_t i = 0; i < names.size(); ++i) p[m.params().index_of(names[i])] = v[3 + i];
        std::vector<nn::Var> msgs{v[0], v[1]};
        auto U = m.aggregate(t, p, msgs, v[2], n);
        return nn::dot_all(t, U, t.constant(proj));
    };
    auto rep = nn::grad_check(f, inputs);
    EXPECT_LE(rep.max_rel_error, 1e-3) << "input " << rep.worst_input << " analytic " << rep.analytic;
}

TEST(CommInEpisode, MessagesReachOtherAgents) {
    auto ctx = marvin::testing::context(generate_graph(12, 3));
    MarvinModel m(ModelConfig{}, 5);
    auto env = Env::create(ctx, MultiPassDistribution::uniform(1, 3), 3, 7, true);
    MarvinPolicy pol(m, SelectMode::Greedy, 1);
    auto res = run_episode_async(env, pol, {true});
    EXPECT_TRUE(res.final_coverage.all_covered());
}
