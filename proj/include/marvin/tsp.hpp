#pragma once

// Toy Euclidean TSP: construction heuristics, local search, and
// model-guided tours (fixed start, self-starting, sampling).

#include <algorithm>
#include <chrono>
#include <limits>
#include <numeric>

#include "marvin/model.hpp"

namespace marvin::tsp {

using Tour = std::vector<std::size_t>;  // closed: the return edge is implied

inline std::vector<Point2> random_points(std::size_t k, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x7590));
    std::vector<Point2> p(k);
    for (auto& q : p) {
        q.x = uniform01(rng);
        q.y = uniform01(rng);
    }
    return p;
}

inline Matrix distance_matrix(std::span<const Point2> pts) {
    const std::size_t k = pts.size();
    Matrix d(k, k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) d(i, j) = std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y);
    return d;
}

inline double tour_length(const Matrix& d, const Tour& t) {
    double total = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) total += d(t[i], t[(i + 1) % t.size()]);
    return total;
}

inline bool is_tour(const Tour& t, std::size_t k) {
    if (t.size() != k) return false;
    Tour s = t;
    std::sort(s.begin(), s.end());
    for (std::size_t i = 0; i < k; ++i)
        if (s[i] != i) return false;
    return true;
}

inline void require_size(const Matrix& d) {
    if (d.rows < 3) throw Error("tsp: need at least 3 points, got " + std::to_string(d.rows));
}

inline Tour nearest_neighbour(const Matrix& d, std::size_t start = 0) {
    require_size(d);
    const std::size_t k = d.rows;
    std::vector<char> used(k, 0);
    Tour t{start};
    used[start] = 1;
    while (t.size() < k) {
        const std::size_t cur = t.back();
        std::size_t best = k;
        for (std::size_t v = 0; v < k; ++v)
            if (!used[v] && (best == k || d(cur, v) < d(cur, best))) best = v;
        t.push_back(best);
        used[best] = 1;
    }
    return t;
}

enum class Insertion { Nearest, Farthest, Random };

inline std::string to_string(Insertion i) {
    switch (i) {
        case Insertion::Nearest: return "nearest-insertion";
        case Insertion::Farthest: return "farthest-insertion";
        case Insertion::Random: return "random-insertion";
    }
    return "?";
}

/// Classic insertion construction from node 0: pick the next node by the
/// rule, then insert it where it lengthens the tour least.
inline Tour insertion(const Matrix& d, Insertion rule, std::uint64_t seed = 0) {
    require_size(d);
    const std::size_t k = d.rows;
    Rng rng(derive_seed(seed, 0x1175));
    std::vector<char> used(k, 0);
    std::vector<double> to_tour(k, std::numeric_limits<double>::infinity());
    Tour t{0};
    used[0] = 1;
    for (std::size_t v = 0; v < k; ++v) to_tour[v] = d(0, v);
    std::vector<std::size_t> random_order;
    if (rule == Insertion::Random) {
        for (std::size_t v = 1; v < k; ++v) random_order.push_back(v);
        std::shuffle(random_order.begin(), random_order.end(), rng);
    }
    for (std::size_t step = 1; step < k; ++step) {
        std::size_t pick = k;
        if (rule == Insertion::Random) {
            pick = random_order[step - 1];
        } else {
            for (std::size_t v = 0; v < k; ++v) {
                if (used[v]) continue;
                if (pick == k || (rule == Insertion::Nearest ? to_tour[v] < to_tour[pick] : to_tour[v] > to_tour[pick]))
                    pick = v;
            }
        }
        double best = std::numeric_limits<double>::infinity();
        std::size_t pos = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const std::size_t a = t[i], b = t[(i + 1) % t.size()];
            const double delta = d(a, pick) + d(pick, b) - (t.size() == 1 ? 0.0 : d(a, b));
            if (delta < best) {
                best = delta;
                pos = i + 1;
            }
        }
        t.insert(t.begin() + static_cast<std::ptrdiff_t>(pos), pick);
        used[pick] = 1;
        for (std::size_t v = 0; v < k; ++v) to_tour[v] = std::min(to_tour[v], d(pick, v));
    }
    return t;
}

/// Symmetric 2-opt to a local optimum. Every applied move strictly shortens
/// the tour.
inline std::size_t two_opt(const Matrix& d, Tour& t) {
    const std::size_t k = t.size();
    std::size_t moves = 0;
    bool improved = true;
    while (improved) {
        improved = false;
        for (std::size_t i = 0; i + 2 < k; ++i) {
            for (std::size_t j = i + 2; j < k; ++j) {
                if (i == 0 && j == k - 1) continue;
                const std::size_t a = t[i], b = t[i + 1], c = t[j], e = t[(j + 1) % k];
                const double delta = d(a, c) + d(b, e) - d(a, b) - d(c, e);
                if (delta < -1e-12) {
                    std::reverse(t.begin() + static_cast<std::ptrdiff_t>(i + 1),
                                 t.begin() + static_cast<std::ptrdiff_t>(j + 1));
                    ++moves;
                    improved = true;
                }
            }
        }
    }
    return moves;
}

/// Or-opt: move segments of 1-3 cities (either orientation) to a better spot.
inline std::size_t or_opt(const Matrix& d, Tour& t) {
    const std::size_t k = t.size();
    std::size_t moves = 0;
    bool improved = true;
    while (improved) {
        improved = false;
        for (std::size_t len = 1; len <= 3 && !improved; ++len) {
            for (std::size_t i = 0; i < k && !improved; ++i) {
                // segment t[i..i+len-1] (cyclic); rotate so the segment starts at index 1
                Tour r(k);
                for (std::size_t q = 0; q < k; ++q) r[q] = t[(i + q + k - 1) % k];
                const std::size_t p = r[0], s0 = r[1], s1 = r[len], nx = r[(len + 1) % k];
                if (len + 2 > k) continue;
                const double removal = d(p, s0) + d(s1, nx) - d(p, nx);
                for (std::size_t q = len + 1; q < k; ++q) {
                    const std::size_t a = r[q], b = r[(q + 1) % k];
                    const double fwd = d(a, s0) + d(s1, b) - d(a, b);
                    const double rev = d(a, s1) + d(s0, b) - d(a, b);
                    const double ins = std::min(fwd, rev);
                    if (ins < removal - 1e-12) {
                        Tour seg(r.begin() + 1, r.begin() + static_cast<std::ptrdiff_t>(len + 1));
                        if (rev < fwd) std::reverse(seg.begin(), seg.end());
                        Tour rest{r[0]};
                        rest.insert(rest.end(), r.begin() + static_cast<std::ptrdiff_t>(len + 1), r.end());
                        const std::size_t at = q - len + 1;  // position of `a` in rest is q - len
                        rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(at), seg.begin(), seg.end());
                        t = rest;
                        ++moves;
                        improved = true;
                        break;
                    }
                }
            }
        }
    }
    return moves;
}

inline void local_search(const Matrix& d, Tour& t) {
    for (;;) {
        two_opt(d, t);
        if (or_opt(d, t) == 0) break;
    }
}

/// Best tour found by local search from several constructions.
inline Tour best_found(const Matrix& d, std::uint64_t seed, std::size_t restarts = 8) {
    std::vector<Tour> cands{insertion(d, Insertion::Farthest), insertion(d, Insertion::Nearest),
                            nearest_neighbour(d, 0)};
    for (std::size_t r = 0; r < restarts; ++r) cands.push_back(insertion(d, Insertion::Random, derive_seed(seed, r)));
    Tour best;
    double best_len = std::numeric_limits<double>::infinity();
    for (auto& t : cands) {
        local_search(d, t);
        const double len = tour_length(d, t);
        if (len < best_len) {
            best_len = len;
            best = t;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Model-guided tours

/// Planner features for a partial tour on the complete graph. Visited cities
/// play the role of covered nodes.
inline Matrix tsp_features(const Matrix& d, const std::vector<char>& visited, std::size_t current) {
    const std::size_t k = d.rows;
    double mean = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            if (i != j) mean += d(i, j);
    mean /= static_cast<double>(k * (k - 1));
    double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
    for (std::size_t v = 0; v < k; ++v) {
        dmin = std::min(dmin, d(current, v));
        dmax = std::max(dmax, d(current, v));
    }
    Matrix X(k, kNodeFeatures, 0.0);
    for (std::size_t v = 0; v < k; ++v) {
        double row = 0.0, col = 0.0;
        for (std::size_t u = 0; u < k; ++u) {
            row += d(v, u);
            col += d(u, v);
        }
        X(v, feat::InWeight) = col / mean / static_cast<double>(k - 1);
        X(v, feat::OutWeight) = row / mean / static_cast<double>(k - 1);
        X(v, feat::InDegree) = 1.0;
        X(v, feat::OutDegree) = 1.0;
        X(v, feat::AgentAt) = v == current ? 1.0 : 0.0;
        X(v, feat::Unexplored) = visited[v] ? 0.0 : 1.0;
        X(v, feat::Covered) = visited[v] ? 1.0 : 0.0;
        X(v, feat::Distance) = dmax > dmin ? (d(current, v) - dmin) / (dmax - dmin) : 0.0;
        X(v, feat::Traffic) = 0.0;
        X(v, feat::Adjacent) = v == current ? 0.0 : 1.0;
    }
    return X;
}

inline PlannerGraph tsp_planner_graph(const Matrix& d, const AblationFlags& f) {
    Matrix conn(d.rows, d.cols, 1.0);
    for (std::size_t i = 0; i < d.rows; ++i) conn(i, i) = 0.0;
    return PlannerGraph::build(normalize_distance(d).A, conn, f);
}

/// Node values for the next city; visited cities are masked.
inline std::vector<double> tsp_values(const MarvinModel& model, const Matrix& d, const PlannerGraph& pg,
                                      const std::vector<char>& visited, std::size_t current) {
    nn::Tape t;
    auto p = model.bind_constants(t);
    const Matrix X = tsp_features(d, visited, current);
    auto f = model.forward(t, p, {X, {}, nullptr, pg, model.config().iterations});
    return t.value(f.values).data;
}

inline Tour model_rollout(const MarvinModel& model, const Matrix& d, const PlannerGraph& pg, std::size_t start,
                          SelectMode mode, Rng* rng) {
    const std::size_t k = d.rows;
    std::vector<char> visited(k, 0);
    visited[start] = 1;
    Tour t{start};
    while (t.size() < k) {
        const auto values = tsp_values(model, d, pg, visited, t.back());
        std::vector<char> allowed(k);
        for (std::size_t v = 0; v < k; ++v) allowed[v] = visited[v] ? 0 : 1;
        const std::size_t next = select_action(values, allowed, mode, rng).chosen;
        visited[next] = 1;
        t.push_back(next);
    }
    return t;
}

struct ModelTours {
    Tour single_start;  // greedy from city 0
    Tour self_start;    // best greedy tour over all start cities
    Tour sampled;       // best of self_start and the sampled rollouts
    double single_ms = 0.0, self_ms = 0.0, sampled_ms = 0.0;
};

/// The three model modes. SS+SP keeps the minimum over SS and the samples,
/// so SS+SP <= SS <= single start holds for every instance.
inline ModelTours model_tours(const MarvinModel& model, const Matrix& d, std::size_t samples, std::uint64_t seed) {
    require_size(d);
    using clock = std::chrono::steady_clock;
    const auto pg = tsp_planner_graph(d, model.config().ablation);
    ModelTours out;
    auto t0 = clock::now();
    out.single_start = model_rollout(model, d, pg, 0, SelectMode::Greedy, nullptr);
    auto t1 = clock::now();
    out.self_start = out.single_start;
    double best = tour_length(d, out.self_start);
    for (std::size_t s = 1; s < d.rows; ++s) {
        auto t = model_rollout(model, d, pg, s, SelectMode::Greedy, nullptr);
        const double len = tour_length(d, t);
        if (len < best) {
            best = len;
            out.self_start = std::move(t);
        }
    }
    auto t2 = clock::now();
    out.sampled = out.self_start;
    Rng rng(derive_seed(seed, 0x5a3));
    for (std::size_t s = 0; s < samples; ++s) {
        auto t = model_rollout(model, d, pg, uniform_index(rng, d.rows), SelectMode::Sample, &rng);
        const double len = tour_length(d, t);
        if (len < best) {
            best = len;
            out.sampled = std::move(t);
        }
    }
    auto t3 = clock::now();
    auto ms = [](auto a, auto b) { return std::chrono::duration<double, std::milli>(b - a).count(); };
    out.single_ms = ms(t0, t1);
    out.self_ms = ms(t0, t2);
    out.sampled_ms = ms(t0, t3);
    return out;
}

/// Teacher-forced imitation of a reference tour; returns summed
/// cross-entropy and leaves weighted gradients in `grads`.
inline double tsp_imitation(const MarvinModel& model, const Matrix& d, const Tour& expert,
                            std::vector<std::vector<double>>& grads, double weight) {
    const std::size_t k = d.rows;
    const auto pg = tsp_planner_graph(d, model.config().ablation);
    std::vector<char> visited(k, 0);
    visited[expert[0]] = 1;
    double total = 0.0;
    for (std::size_t step = 1; step < k; ++step) {
        nn::Tape t;
        auto p = model.params().bind(t);
        const Matrix X = tsp_features(d, visited, expert[step - 1]);
        auto f = model.forward(t, p, {X, {}, nullptr, pg, model.config().iterations});
        std::vector<char> allowed(k);
        for (std::size_t v = 0; v < k; ++v) allowed[v] = visited[v] ? 0 : 1;
        auto loss = nn::cross_entropy_logits(t, f.values, allowed, expert[step]);
        total += t.value(loss).data[0];
        t.backward(loss);
        for (std::size_t i = 0; i < grads.size(); ++i) {
            const auto& g = t.grad_of(p[i].id);
            for (std::size_t q = 0; q < g.size(); ++q) grads[i][q] += weight * g[q];
        }
        visited[expert[step]] = 1;
    }
    return total;
}

/// Short imitation run on random instances against local-search tours.
inline void train_tsp_model(MarvinModel& model, std::size_t k, std::size_t epochs, std::size_t batch,
                            std::uint64_t seed, const nn::AdamConfig& adam = {}) {
    for (std::size_t e = 0; e < epochs; ++e) {
        std::vector<std::vector<double>> g;
        for (const auto& prm : model.params().params()) g.emplace_back(prm.value.size(), 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
            const auto s = derive_seed(seed, e * batch + b);
            const Matrix d = distance_matrix(random_points(k, s));
            tsp_imitation(model, d, best_found(d, s, 2), g, 1.0 / static_cast<double>(batch));
        }
        model.params().set_grads(g);
        nn::adam_step(model.params(), nn::decayed_lr(adam, e), adam);
    }
}

}  // namespace marvin::tsp
