#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "marvin/nn/tape.hpp"

namespace marvin::nn {

/// Scalar-valued function of tape leaves.
using ScalarClosure = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares reverse-mode gradients with central differences coordinate by
/// coordinate; relative error uses max(|a|, |n|, 1e-6) as denominator.
/// With several step sizes a coordinate keeps its best agreement, so a step
/// that straddles a ReLU kink does not count against the analytic gradient.
/// Later steps are skipped for a coordinate once its error is within `accept`.
inline GradCheckReport grad_check(const ScalarClosure& f, const std::vector<Tensor>& inputs,
                                  std::span<const double> steps, double accept = 0.0) {
    if (steps.empty()) throw Error("grad_check: no step sizes");
    auto evaluate = [&](const std::vector<Tensor>& xs, std::vector<std::vector<double>>* grads) {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& x : xs) vars.push_back(tape.leaf(x, true));
        Var out = f(tape, vars);
        const double value = tape.value(out).data.at(0);
        if (grads) {
            tape.backward(out);
            grads->clear();
            for (auto v : vars) grads->push_back(tape.grad(v));
        }
        return value;
    };
    std::vector<std::vector<double>> analytic;
    evaluate(inputs, &analytic);
    GradCheckReport report;
    std::vector<Tensor> work = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t k = 0; k < inputs[i].size(); ++k) {
            const double x0 = work[i].data[k];
            const double a = analytic[i][k];
            GradCheckReport best{std::numeric_limits<double>::infinity(), i, k, a, 0.0};
            for (double h : steps) {
                work[i].data[k] = x0 + h;
                const double fp = evaluate(work, nullptr);
                work[i].data[k] = x0 - h;
                const double fm = evaluate(work, nullptr);
                work[i].data[k] = x0;
                const double numeric = (fp - fm) / (2.0 * h);
                const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
                if (rel < best.max_rel_error) best = {rel, i, k, a, numeric};
                if (best.max_rel_error <= accept) break;
            }
            if (best.max_rel_error > report.max_rel_error) report = best;
        }
    }
    return report;
}

inline GradCheckReport grad_check(const ScalarClosure& f, const std::vector<Tensor>& inputs, double h = 1e-5) {
    const double steps[] = {h};
    return grad_check(f, inputs, steps);
}

}  // namespace marvin::nn
