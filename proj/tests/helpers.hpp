#pragma once

#include <memory>
#include <vector>

#include "marvin/marvin.hpp"

namespace marvin::testing {

/// Graph whose node v takes `times[v]` seconds to drive (speed 10 m/s).
inline RoadGraph timed_graph(const std::vector<double>& times, std::vector<Edge> edges) {
    std::vector<NodeAttr> nodes;
    for (double t : times) nodes.push_back({t * 10.0, 10.0, 1, 1});
    return RoadGraph(std::move(nodes), std::move(edges));
}

/// Bidirectional path 0-1-...-(n-1), every node `t` seconds.
inline RoadGraph path_graph(std::size_t n, double t = 10.0) {
    std::vector<Edge> e;
    for (NodeId v = 0; v + 1 < n; ++v) {
        e.push_back({v, v + 1});
        e.push_back({v + 1, v});
    }
    return timed_graph(std::vector<double>(n, t), e);
}

/// Directed ring 0->1->...->(n-1)->0.
inline RoadGraph ring_graph(std::size_t n, double t = 10.0) {
    std::vector<Edge> e;
    for (NodeId v = 0; v < n; ++v) e.push_back({v, (v + 1) % n});
    return timed_graph(std::vector<double>(n, t), e);
}

inline std::shared_ptr<const GraphContext> context(RoadGraph g) {
    return std::make_shared<const GraphContext>(std::move(g));
}

inline HiddenState hidden(std::vector<int> M, double rho = 0.0) {
    HiddenState h;
    h.rho.assign(M.size(), rho);
    h.M = std::move(M);
    return h;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (auto& x : m.data) x = scale * (2.0 * uniform01(rng) - 1.0);
    return m;
}

inline nn::Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    nn::Tensor t(std::move(shape));
    for (auto& x : t.data) x = scale * (2.0 * uniform01(rng) - 1.0);
    return t;
}

/// Plays a fixed destination list per agent.
class ScriptedPolicy : public Policy {
public:
    explicit ScriptedPolicy(std::vector<std::vector<NodeId>> script) : script_(std::move(script)) {}
    void reset(const EpisodeStart& s) override { cursor_.assign(s.num_agents, 0); }
    Decision decide(const Observation& obs) override {
        Decision d;
        auto& k = cursor_.at(obs.agent);
        const auto& s = script_.at(obs.agent);
        while (k < s.size() && obs.coverage.covered[s[k]]) ++k;
        if (k < s.size()) d.destination = s[k++];
        return d;
    }

private:
    std::vector<std::vector<NodeId>> script_;
    std::vector<std::size_t> cursor_;
};

}  // namespace marvin::testing
