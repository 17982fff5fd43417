#pragma once

// Road-graph representation and the distance machinery the planner and the
// simulator share. Nodes are street segments; an edge u->v means a vehicle
// leaving segment u can enter segment v, and the time charged for that edge is
// the time needed to drive segment v.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "marvin/common.hpp"

namespace marvin {

struct NodeAttr {
    double length_m = 100.0;
    double speed_mps = 10.0;
    int lanes_in = 1;
    int lanes_out = 1;

    double base_time() const { return length_m / speed_mps; }
    bool operator==(const NodeAttr&) const = default;
};

struct Edge {
    NodeId src = 0;
    NodeId dst = 0;
    bool operator==(const Edge&) const = default;
    auto operator<=>(const Edge&) const = default;
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point2&) const = default;
};

namespace detail {

// Breadth-first reachability from `root` along out-edges (forward) or
// in-edges (reverse).
inline std::vector<char> reach(const std::vector<std::vector<NodeId>>& adj, NodeId root) {
    std::vector<char> seen(adj.size(), 0);
    std::vector<NodeId> stack{root};
    seen[root] = 1;
    while (!stack.empty()) {
        NodeId u = stack.back();
        stack.pop_back();
        for (NodeId v : adj[u]) {
            if (!seen[v]) {
                seen[v] = 1;
                stack.push_back(v);
            }
        }
    }
    return seen;
}

}  // namespace detail

/// Returns an (unreachable-from, unreachable-to) witness pair if the directed
/// graph on `n` nodes is not strongly connected.
inline std::optional<std::pair<NodeId, NodeId>> strong_connectivity_witness(std::size_t n,
                                                                           std::span<const Edge> edges) {
    if (n == 0) return std::nullopt;
    std::vector<std::vector<NodeId>> fwd(n), rev(n);
    for (const auto& e : edges) {
        fwd[e.src].push_back(e.dst);
        rev[e.dst].push_back(e.src);
    }
    auto f = detail::reach(fwd, 0);
    for (NodeId v = 0; v < n; ++v)
        if (!f[v]) return std::make_pair(NodeId{0}, v);
    auto r = detail::reach(rev, 0);
    for (NodeId v = 0; v < n; ++v)
        if (!r[v]) return std::make_pair(v, NodeId{0});
    return std::nullopt;
}

class RoadGraph {
public:
    RoadGraph() = default;

    /// Validates every structural invariant; throws marvin::Error otherwise.
    RoadGraph(std::vector<NodeAttr> nodes, std::vector<Edge> edges,
              std::optional<std::vector<Point2>> coords = std::nullopt)
        : nodes_(std::move(nodes)), edges_(std::move(edges)), coords_(std::move(coords)) {
        validate();
        out_.assign(nodes_.size(), {});
        in_.assign(nodes_.size(), {});
        out_edge_.assign(nodes_.size(), {});
        in_edge_.assign(nodes_.size(), {});
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            out_[edges_[e].src].push_back(edges_[e].dst);
            in_[edges_[e].dst].push_back(edges_[e].src);
            out_edge_[edges_[e].src].push_back(e);
            in_edge_[edges_[e].dst].push_back(e);
        }
    }

    std::size_t size() const { return nodes_.size(); }
    const std::vector<NodeAttr>& nodes() const { return nodes_; }
    const NodeAttr& node(NodeId v) const { return nodes_.at(v); }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<NodeId>& out(NodeId v) const { return out_[v]; }
    const std::vector<NodeId>& in(NodeId v) const { return in_[v]; }
    const std::vector<std::size_t>& out_edges(NodeId v) const { return out_edge_[v]; }
    const std::vector<std::size_t>& in_edges(NodeId v) const { return in_edge_[v]; }
    const std::optional<std::vector<Point2>>& coords() const { return coords_; }

    bool has_edge(NodeId u, NodeId v) const {
        const auto& o = out_[u];
        return std::find(o.begin(), o.end(), v) != o.end();
    }

    bool operator==(const RoadGraph& other) const {
        return nodes_ == other.nodes_ && edges_ == other.edges_ && coords_ == other.coords_;
    }

private:
    void validate() const {
        const std::size_t n = nodes_.size();
        if (n < 2) throw Error("road graph needs at least 2 nodes, got " + std::to_string(n));
        for (std::size_t v = 0; v < n; ++v) {
            const auto& a = nodes_[v];
            if (!(a.length_m > 0.0) || !std::isfinite(a.length_m))
                throw Error("node " + std::to_string(v) + ": length_m must be positive and finite");
            if (!(a.speed_mps > 0.0) || !std::isfinite(a.speed_mps))
                throw Error("node " + std::to_string(v) + ": speed_mps must be positive and finite");
            if (a.lanes_in < 1 || a.lanes_out < 1)
                throw Error("node " + std::to_string(v) + ": lane counts must be positive");
        }
        std::set<Edge> seen;
        for (const auto& e : edges_) {
            if (e.src >= n || e.dst >= n)
                throw Error("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                            ") references a node outside [0," + std::to_string(n) + ")");
            if (e.src == e.dst) throw Error("self-loop on node " + std::to_string(e.src));
            if (!seen.insert(e).second)
                throw Error("duplicate edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) + ")");
        }
        if (coords_ && coords_->size() != n) throw Error("coordinate count does not match node count");
        if (auto w = strong_connectivity_witness(n, edges_))
            throw Error("graph not strongly connected: no path from " + std::to_string(w->first) + " to " +
                        std::to_string(w->second));
    }

    std::vector<NodeAttr> nodes_;
    std::vector<Edge> edges_;
    std::optional<std::vector<Point2>> coords_;
    std::vector<std::vector<NodeId>> out_, in_;
    std::vector<std::vector<std::size_t>> out_edge_, in_edge_;
};

// ---------------------------------------------------------------------------
// Travel-time weights

constexpr double kTrafficGamma = 3.0;
constexpr double kMaxCongestionFactor = 4.0;

/// Slow-down factor 1/(1 - rho^gamma), capped at 4.
inline double congestion_factor(double rho, double gamma = kTrafficGamma) {
    const double denom = 1.0 - std::pow(rho, gamma);
    if (denom <= 1.0 / kMaxCongestionFactor) return kMaxCongestionFactor;
    return std::min(kMaxCongestionFactor, 1.0 / denom);
}

inline double edge_time_weight(const NodeAttr& node, std::optional<double> observed_rho = std::nullopt) {
    const double base = node.base_time();
    if (!observed_rho) return base;
    return base * congestion_factor(*observed_rho);
}

/// Congestion-free weight for every edge (time to traverse the edge's head).
inline std::vector<double> base_edge_weights(const RoadGraph& g) {
    std::vector<double> w(g.edges().size());
    for (std::size_t e = 0; e < w.size(); ++e) w[e] = g.node(g.edges()[e].dst).base_time();
    return w;
}

/// Edge weights where each head node's time is scaled by a per-node factor.
inline std::vector<double> scaled_edge_weights(const RoadGraph& g, std::span<const double> node_factor) {
    std::vector<double> w(g.edges().size());
    for (std::size_t e = 0; e < w.size(); ++e) {
        const NodeId v = g.edges()[e].dst;
        w[e] = g.node(v).base_time() * node_factor[v];
    }
    return w;
}

// ---------------------------------------------------------------------------
// All-pairs distances

inline Matrix floyd_warshall(const RoadGraph& g, std::span<const double> weights) {
    const std::size_t n = g.size();
    if (weights.size() != g.edges().size())
        throw Error("floyd_warshall: " + std::to_string(weights.size()) + " weights for " +
                    std::to_string(g.edges().size()) + " edges");
    constexpr double inf = std::numeric_limits<double>::infinity();
    Matrix d(n, n, inf);
    for (std::size_t i = 0; i < n; ++i) d(i, i) = 0.0;
    for (std::size_t e = 0; e < weights.size(); ++e) {
        if (!(weights[e] > 0.0)) throw Error("floyd_warshall: edge weight " + std::to_string(e) + " not positive");
        const auto& ed = g.edges()[e];
        d(ed.src, ed.dst) = std::min(d(ed.src, ed.dst), weights[e]);
    }
    for (std::size_t k = 0; k < n; ++k) {
        const double* dk = &d.data[k * n];
        for (std::size_t i = 0; i < n; ++i) {
            const double dik = d(i, k);
            if (dik == inf) continue;
            double* di = &d.data[i * n];
            for (std::size_t j = 0; j < n; ++j) {
                const double via = dik + dk[j];
                if (via < di[j]) di[j] = via;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (d(i, j) == inf)
                throw Error("graph not strongly connected: no path from " + std::to_string(i) + " to " +
                            std::to_string(j));
    return d;
}

struct NormalizedDistance {
    Matrix A;
    double mu = 0.0;
    double sigma = 0.0;
    bool degenerate = false;
};

/// Standardizes D element-wise; a constant matrix maps to zeros with the
/// degenerate flag set.
inline NormalizedDistance normalize_distance(const Matrix& D) {
    NormalizedDistance out;
    const double count = static_cast<double>(D.data.size());
    double sum = 0.0;
    for (double x : D.data) sum += x;
    out.mu = sum / count;
    double ss = 0.0;
    for (double x : D.data) ss += (x - out.mu) * (x - out.mu);
    out.sigma = std::sqrt(ss / count);
    out.A = Matrix(D.rows, D.cols, 0.0);
    if (out.sigma == 0.0 || !std::isfinite(out.sigma)) {
        out.degenerate = true;
        return out;
    }
    for (std::size_t k = 0; k < D.data.size(); ++k) out.A.data[k] = (D.data[k] - out.mu) / out.sigma;
    return out;
}

// ---------------------------------------------------------------------------
// Single-source routing

/// Dijkstra from src to dst; ties resolve toward lower node ids. src == dst
/// yields [src].
inline std::vector<NodeId> shortest_path(const RoadGraph& g, std::span<const double> weights, NodeId src,
                                         NodeId dst) {
    const std::size_t n = g.size();
    if (src >= n || dst >= n)
        throw Error("shortest_path: node id out of range (" + std::to_string(src) + "," + std::to_string(dst) + ")");
    if (src == dst) return {src};
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n, inf);
    std::vector<NodeId> prev(n, n);
    std::vector<char> done(n, 0);
    using Item = std::pair<double, NodeId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[src] = 0.0;
    pq.emplace(0.0, src);
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (done[u]) continue;
        done[u] = 1;
        if (u == dst) break;
        for (std::size_t e : g.out_edges(u)) {
            const NodeId v = g.edges()[e].dst;
            const double nd = d + weights[e];
            if (nd < dist[v] || (nd == dist[v] && !done[v] && u < prev[v])) {
                dist[v] = nd;
                prev[v] = u;
                pq.emplace(nd, v);
            }
        }
    }
    if (dist[dst] == inf)
        throw Error("shortest_path: node " + std::to_string(dst) + " unreachable from " + std::to_string(src));
    std::vector<NodeId> path;
    for (NodeId v = dst; v != src; v = prev[v]) path.push_back(v);
    path.push_back(src);
    std::reverse(path.begin(), path.end());
    return path;
}

/// Sum of edge weights along a node path.
inline double path_weight(const RoadGraph& g, std::span<const double> weights, std::span<const NodeId> path) {
    double total = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        bool found = false;
        for (std::size_t e : g.out_edges(path[i - 1])) {
            if (g.edges()[e].dst == path[i]) {
                total += weights[e];
                found = true;
                break;
            }
        }
        if (!found)
            throw Error("path step " + std::to_string(path[i - 1]) + "->" + std::to_string(path[i]) +
                        " is not an edge");
    }
    return total;
}

/// Cost of the cheapest closed walk leaving v and returning to it.
inline std::vector<double> cycle_costs(const RoadGraph& g, std::span<const double> weights, const Matrix& D) {
    std::vector<double> c(g.size(), std::numeric_limits<double>::infinity());
    for (NodeId v = 0; v < g.size(); ++v)
        for (std::size_t e : g.out_edges(v)) c[v] = std::min(c[v], weights[e] + D(g.edges()[e].dst, v));
    return c;
}

/// Route actually driven to reach `dst` from `src`. Re-entering the current
/// segment requires leaving it, so src == dst becomes the cheapest loop.
inline std::vector<NodeId> route(const RoadGraph& g, std::span<const double> weights, const Matrix& D, NodeId src,
                                 NodeId dst) {
    if (src != dst) return shortest_path(g, weights, src, dst);
    double best = std::numeric_limits<double>::infinity();
    NodeId via = g.size();
    for (std::size_t e : g.out_edges(src)) {
        const NodeId u = g.edges()[e].dst;
        const double c = weights[e] + D(u, src);
        if (c < best || (c == best && u < via)) {
            best = c;
            via = u;
        }
    }
    auto back = shortest_path(g, weights, via, src);
    back.insert(back.begin(), src);
    return back;
}

/// Binary connectivity matrix (1 where an edge i->j exists).
inline Matrix connectivity_matrix(const RoadGraph& g) {
    Matrix b(g.size(), g.size(), 0.0);
    for (const auto& e : g.edges()) b(e.src, e.dst) = 1.0;
    return b;
}

/// Everything static the planner and the simulator derive from a graph once.
struct GraphContext {
    RoadGraph graph;
    std::vector<double> base_weights;
    Matrix D;
    NormalizedDistance norm;
    std::vector<double> cycle;  // cheapest return loop per node

    explicit GraphContext(RoadGraph g) : graph(std::move(g)) {
        base_weights = base_edge_weights(graph);
        D = floyd_warshall(graph, base_weights);
        norm = normalize_distance(D);
        cycle = cycle_costs(graph, base_weights, D);
    }

    std::size_t size() const { return graph.size(); }

    /// Planner distance for choosing `dst` from `src`, including the loop cost
    /// when they coincide.
    double travel(NodeId src, NodeId dst) const { return src == dst ? cycle[src] : D(src, dst); }
};

// ---------------------------------------------------------------------------
// Synthetic road-like graphs

namespace detail {

inline bool still_strongly_connected(std::size_t n, const std::vector<Edge>& edges) {
    return !strong_connectivity_witness(n, edges).has_value();
}

}  // namespace detail

/// Perturbed grid of two-way streets with random one-way conversions and a few
/// diagonal shortcuts. Every deletion keeps the graph strongly connected.
inline RoadGraph generate_graph(std::size_t n_nodes, std::uint64_t seed) {
    if (n_nodes < 2) throw Error("generate_graph: n_nodes must be >= 2");
    Rng rng(derive_seed(seed, 0x6a09e667));
    const std::size_t cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_nodes))));
    auto pos = [&](NodeId v) { return std::make_pair(v / cols, v % cols); };

    std::vector<Edge> edges;
    for (NodeId v = 0; v < n_nodes; ++v) {
        auto [r, c] = pos(v);
        if (c + 1 < cols && v + 1 < n_nodes) {
            edges.push_back({v, v + 1});
            edges.push_back({v + 1, v});
        }
        if (v + cols < n_nodes) {
            edges.push_back({v, v + cols});
            edges.push_back({v + cols, v});
        }
        (void)r;
    }
    // Occasional diagonal shortcut (one-way).
    for (NodeId v = 0; v < n_nodes; ++v) {
        auto [r, c] = pos(v);
        (void)r;
        if (c + 1 < cols && v + cols + 1 < n_nodes && uniform01(rng) < 0.12) {
            if (uniform01(rng) < 0.5)
                edges.push_back({v, v + cols + 1});
            else
                edges.push_back({v + cols + 1, v});
        }
    }
    // Turn some two-way streets into one-way streets, or drop them.
    std::vector<std::size_t> order(edges.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<char> removed(edges.size(), 0);
    const double drop_prob = 0.3;
    for (std::size_t idx : order) {
        if (uniform01(rng) >= drop_prob) continue;
        removed[idx] = 1;
        std::vector<Edge> trial;
        trial.reserve(edges.size());
        for (std::size_t e = 0; e < edges.size(); ++e)
            if (!removed[e]) trial.push_back(edges[e]);
        if (!detail::still_strongly_connected(n_nodes, trial)) removed[idx] = 0;
    }
    std::vector<Edge> kept;
    for (std::size_t e = 0; e < edges.size(); ++e)
        if (!removed[e]) kept.push_back(edges[e]);
    std::sort(kept.begin(), kept.end());

    static constexpr double kSpeeds[] = {8.3, 13.9, 16.7};
    std::vector<NodeAttr> nodes(n_nodes);
    for (auto& a : nodes) {
        a.length_m = 50.0 + 450.0 * uniform01(rng);
        a.speed_mps = kSpeeds[uniform_index(rng, 3)];
        a.lanes_in = 1 + static_cast<int>(uniform_index(rng, 3));
        a.lanes_out = 1 + static_cast<int>(uniform_index(rng, 3));
    }
    return RoadGraph(std::move(nodes), std::move(kept));
}

}  // namespace marvin
