#pragma once

// Finite-difference cases shared by the unit tests and the acceptance run.

#include <string>
#include <vector>

#include "helpers.hpp"

namespace marvin::testing {

struct GradCase {
    std::string name;
    nn::ScalarClosure f;
    std::vector<nn::Tensor> in;
};

// Random weights used to turn any tensor into a scalar without symmetries.
inline nn::Var project(nn::Tape& t, nn::Var x, std::uint64_t seed) {
    Rng rng(seed);
    return nn::dot_all(t, x, t.constant(random_tensor(t.value(x).shape, rng)));
}

/// One case per differentiable primitive, inputs drawn from `seed`.
inline std::vector<GradCase> primitive_cases(std::uint64_t seed) {
    using namespace marvin::nn;
    Rng rng(seed);
    static const std::vector<char> mask{1, 0, 1, 1, 0, 1};
    std::vector<GradCase> cases;
    auto P = [seed](Tape& t, Var x) { return project(t, x, seed + 7); };
    cases.push_back({"matmul", [P](Tape& t, std::span<const Var> v) { return P(t, matmul(t, v[0], v[1])); },
                     {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}});
    cases.push_back({"matmul_nt", [P](Tape& t, std::span<const Var> v) { return P(t, matmul_nt(t, v[0], v[1])); },
                     {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng)}});
    cases.push_back({"linear", [P](Tape& t, std::span<const Var> v) { return P(t, linear(t, v[0], v[1], v[2])); },
                     {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng), random_tensor({2}, rng)}});
    cases.push_back({"relu", [P](Tape& t, std::span<const Var> v) { return P(t, relu(t, v[0])); },
                     {random_tensor({4, 3}, rng)}});
    cases.push_back({"sigmoid", [P](Tape& t, std::span<const Var> v) { return P(t, sigmoid(t, v[0])); },
                     {random_tensor({4, 3}, rng, 3.0)}});
    cases.push_back({"tanh", [P](Tape& t, std::span<const Var> v) { return P(t, tanh(t, v[0])); },
                     {random_tensor({4, 3}, rng, 2.0)}});
    cases.push_back({"mul", [P](Tape& t, std::span<const Var> v) { return P(t, mul(t, v[0], v[1])); },
                     {random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)}});
    cases.push_back({"concat_slice",
                     [P](Tape& t, std::span<const Var> v) {
                         Var c = concat_cols(t, v[0], v[1]);
                         return P(t, mul(t, slice_cols(t, c, 1, 3), slice_cols(t, c, 0, 3)));
                     },
                     {random_tensor({2, 2}, rng), random_tensor({2, 3}, rng)}});
    cases.push_back({"pair_rows", [P](Tape& t, std::span<const Var> v) { return P(t, pair_rows(t, v[0], v[1])); },
                     {random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)}});
    cases.push_back({"row_softmax", [P](Tape& t, std::span<const Var> v) { return P(t, row_softmax(t, v[0])); },
                     {random_tensor({3, 4}, rng, 2.0)}});
    cases.push_back({"masked_softmax",
                     [P](Tape& t, std::span<const Var> v) { return P(t, masked_softmax(t, v[0], mask)); },
                     {random_tensor({6}, rng, 2.0)}});
    cases.push_back({"cross_entropy",
                     [](Tape& t, std::span<const Var> v) { return cross_entropy(t, masked_softmax(t, v[0], mask), 3); },
                     {random_tensor({6}, rng, 2.0)}});
    cases.push_back({"cross_entropy_logits",
                     [](Tape& t, std::span<const Var> v) { return cross_entropy_logits(t, v[0], mask, 5); },
                     {random_tensor({6}, rng, 2.0)}});
    cases.push_back({"attention",
                     [P](Tape& t, std::span<const Var> v) {
                         return P(t, matmul(t, row_softmax(t, attention_scores(t, v[0], v[1])), v[2]));
                     },
                     {random_tensor({4, 3}, rng), random_tensor({4, 3}, rng), random_tensor({4, 2}, rng)}});
    cases.push_back({"weighted_sum",
                     [P](Tape& t, std::span<const Var> v) {
                         std::vector<Var> xs{v[1], v[2], v[3]};
                         return P(t, weighted_sum(t, v[0], xs));
                     },
                     {random_tensor({3}, rng), random_tensor({2, 2}, rng), random_tensor({2, 2}, rng),
                      random_tensor({2, 2}, rng)}});
    cases.push_back({"mean_max",
                     [P](Tape& t, std::span<const Var> v) {
                         std::vector<Var> xs{v[0], v[1]};
                         return add(t, P(t, mean_of(t, xs)), P(t, max_of(t, xs)));
                     },
                     {random_tensor({3, 2}, rng), random_tensor({3, 2}, rng)}});
    cases.push_back({"pick_stack",
                     [P](Tape& t, std::span<const Var> v) {
                         std::vector<Var> s{pick(t, v[0], 2), pick(t, v[0], 0), dot_all(t, v[0], v[0])};
                         return P(t, stack_scalars(t, s));
                     },
                     {random_tensor({4}, rng)}});
    cases.push_back({"reshape_scale",
                     [P](Tape& t, std::span<const Var> v) { return P(t, scale(t, reshape(t, v[0], {6}), -2.5)); },
                     {random_tensor({2, 3}, rng)}});
    return cases;
}

/// Full forward on a random n-node instance with two senders, through
/// cross-entropy plus a projection of the outgoing message, checked against
/// every model parameter.
inline nn::GradCheckReport model_grad_check(std::uint64_t seed, std::size_t n = 8, int K = 2) {
    MarvinModel m(ModelConfig{}, seed);
    Rng rng(seed);
    Matrix X = random_matrix(n, kNodeFeatures, rng), dist = random_matrix(n, n, rng), conn(n, n);
    Matrix self_last = random_matrix(n, kCommChannels, rng);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) conn(i, j) = uniform01(rng) < 0.3 ? 1.0 : 0.0;
    std::vector<Matrix> inbox{random_matrix(n, kCommChannels, rng), random_matrix(n, kCommChannels, rng)};
    const auto pg = PlannerGraph::build(dist, conn, m.config().ablation);
    std::vector<nn::Tensor> inputs;
    for (const auto& prm : m.params().params()) inputs.push_back(prm.value);
    std::vector<char> mask(n, 1);
    mask[2] = 0;
    if (n > 5) mask[5] = 0;
    auto proj = random_tensor({n, kCommChannels}, rng);
    auto f = [&](nn::Tape& t, std::span<const nn::Var> p) {
        auto out = m.forward(t, p, {X, inbox, &self_last, pg, K});
        auto ce = nn::cross_entropy_logits(t, out.values, mask, 3);
        return nn::add(t, ce, nn::dot_all(t, out.message, t.constant(proj)));
    };
    // Several step sizes so a perturbation that crosses a ReLU kink is not
    // mistaken for a wrong gradient; smaller steps are only tried when the
    // first one disagrees.
    const double steps[] = {1e-5, 1e-6, 1e-7};
    return nn::grad_check(f, inputs, steps, 1e-5);
}

}  // namespace marvin::testing
