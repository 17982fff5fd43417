#pragma once

// MARVIN as an environment policy, plus the per-decision forward/backward
// helper shared by the training loops.

#include <map>

#include "marvin/features.hpp"
#include "marvin/model.hpp"
#include "marvin/sim.hpp"

namespace marvin {

/// PlannerGraph cache keyed by graph context identity.
class PlannerCache {
public:
    explicit PlannerCache(AblationFlags flags) : flags_(flags) {}

    const PlannerGraph& get(const GraphContext& ctx) {
        auto it = cache_.find(&ctx);
        if (it == cache_.end()) it = cache_.emplace(&ctx, PlannerGraph::build(ctx, flags_)).first;
        return it->second;
    }

    void clear() { cache_.clear(); }

private:
    AblationFlags flags_;
    std::map<const GraphContext*, PlannerGraph> cache_;
};

struct DecisionPass {
    nn::Tape tape;
    std::vector<nn::Var> params;
    MarvinModel::Forward out;
    std::vector<char> mask;
    FeatureMatrix features;
};

/// Runs the planner for one observation. With `track_grads` the parameters
/// are gradient leaves so the caller can backpropagate a loss.
inline void planner_pass(DecisionPass& pass, const MarvinModel& model, const Observation& obs,
                         const PlannerGraph& pg, int iterations, bool track_grads) {
    const std::size_t n = obs.ctx.size();
    pass.features = build_features(obs.ctx, obs.coverage, obs.position, Matrix(n, model.config().comm_channels));
    pass.mask = action_mask(obs.coverage);
    pass.params = track_grads ? model.params().bind(pass.tape) : model.bind_constants(pass.tape);
    const std::vector<Matrix> inbox = obs.inbox.snapshot();
    pass.out = model.forward(pass.tape, pass.params, {pass.features.X, inbox, obs.last_message, pg, iterations});
}

class MarvinPolicy : public Policy {
public:
    MarvinPolicy(const MarvinModel& model, SelectMode mode, std::uint64_t seed, int iterations = 0)
        : model_(model), mode_(mode), rng_(derive_seed(seed, 0x1f83d9ab)),
          iterations_(iterations > 0 ? iterations : model.config().iterations), cache_(model.config().ablation) {}

    Decision decide(const Observation& obs) override {
        if (obs.coverage.all_covered()) return {};
        DecisionPass pass;
        planner_pass(pass, model_, obs, cache_.get(obs.ctx), iterations_, false);
        const auto& values = pass.tape.value(pass.out.values).data;
        Selection s = select_action(values, pass.mask, mode_, &rng_);
        Decision d;
        d.destination = s.chosen;
        d.log_prob = s.log_prob;
        d.values = values;
        d.probs = std::move(s.probs);
        d.message = pass.tape.value(pass.out.message).to_matrix();
        return d;
    }

private:
    const MarvinModel& model_;
    SelectMode mode_;
    Rng rng_;
    int iterations_;
    PlannerCache cache_;
};

}  // namespace marvin
