#pragma once

// Per-node planner input features. Column layout of X:
//   0 sum of incoming edge weights   1 sum of outgoing edge weights
//   2 number of incoming edges       3 number of outgoing edges
//   4 agent at v                     5 v unexplored
//   6 v fully covered                7 distance from current position
//   8 observed traffic factor        9 v adjacent to current position
// U holds the aggregated communication channels.

#include <algorithm>

#include "marvin/graph.hpp"
#include "marvin/sim.hpp"

namespace marvin {

constexpr std::size_t kNodeFeatures = 10;
constexpr std::size_t kCommChannels = 16;

namespace feat {
enum : std::size_t {
    InWeight = 0,
    OutWeight,
    InDegree,
    OutDegree,
    AgentAt,
    Unexplored,
    Covered,
    Distance,
    Traffic,
    Adjacent
};
}

struct FeatureMatrix {
    Matrix X;  // n x 10
    Matrix U;  // n x channels
};

/// Edge-weight sums are expressed in units of the graph's mean segment time.
inline FeatureMatrix build_features(const GraphContext& ctx, const CoverageState& cov, NodeId position,
                                    const Matrix& U) {
    const auto& g = ctx.graph;
    const std::size_t n = g.size();
    if (U.rows != n) throw Error("communication features have " + std::to_string(U.rows) + " rows, graph has " +
                                 std::to_string(n) + " nodes");
    if (cov.visits.size() != n) throw Error("coverage state does not match graph size");
    if (position >= n) throw Error("agent position out of range");
    double mean_w = 0.0;
    for (double w : ctx.base_weights) mean_w += w;
    mean_w /= static_cast<double>(ctx.base_weights.size());

    double dmax = 0.0, dmin = ctx.D(position, 0);
    for (NodeId v = 0; v < n; ++v) {
        dmax = std::max(dmax, ctx.D(position, v));
        dmin = std::min(dmin, ctx.D(position, v));
    }
    const double span = dmax - dmin;

    FeatureMatrix f{Matrix(n, kNodeFeatures), U};
    for (NodeId v = 0; v < n; ++v) {
        double in_w = 0.0, out_w = 0.0;
        for (std::size_t e : g.in_edges(v)) in_w += ctx.base_weights[e];
        for (std::size_t e : g.out_edges(v)) out_w += ctx.base_weights[e];
        f.X(v, feat::InWeight) = in_w / mean_w;
        f.X(v, feat::OutWeight) = out_w / mean_w;
        f.X(v, feat::InDegree) = static_cast<double>(g.in(v).size());
        f.X(v, feat::OutDegree) = static_cast<double>(g.out(v).size());
        f.X(v, feat::AgentAt) = v == position ? 1.0 : 0.0;
        f.X(v, feat::Unexplored) = cov.visits[v] == 0 ? 1.0 : 0.0;
        f.X(v, feat::Covered) = cov.covered[v] ? 1.0 : 0.0;
        f.X(v, feat::Distance) = span > 0.0 ? (ctx.D(position, v) - dmin) / span : 0.0;
        f.X(v, feat::Traffic) = cov.observed_factor[v] ? *cov.observed_factor[v] : 0.0;
        f.X(v, feat::Adjacent) = g.has_edge(position, v) ? 1.0 : 0.0;
    }
    return f;
}

/// Nodes a policy may still choose (not reported fully covered).
inline std::vector<char> action_mask(const CoverageState& cov) {
    std::vector<char> m(cov.covered.size());
    for (std::size_t v = 0; v < m.size(); ++v) m[v] = cov.covered[v] ? 0 : 1;
    return m;
}

}  // namespace marvin
