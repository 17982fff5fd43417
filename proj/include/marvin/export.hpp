#pragma once

// Route and value-function exports: JSON documents plus SVG renderings on a
// seeded force-directed layout (or stored coordinates when the graph has them).

#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "marvin/sim.hpp"

namespace marvin {

/// Fruchterman-Reingold layout in the unit square, deterministic in `seed`.
inline std::vector<Point2> force_layout(const RoadGraph& g, std::uint64_t seed, int iterations = 300) {
    if (g.coords()) return *g.coords();
    const std::size_t n = g.size();
    Rng rng(derive_seed(seed, 0x1a7));
    std::vector<Point2> p(n);
    for (auto& q : p) q = {uniform01(rng), uniform01(rng)};
    const double k = std::sqrt(1.0 / static_cast<double>(n));
    double temp = 0.1;
    for (int it = 0; it < iterations; ++it) {
        std::vector<Point2> disp(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                double dx = p[i].x - p[j].x, dy = p[i].y - p[j].y;
                const double dist = std::max(1e-6, std::hypot(dx, dy));
                const double f = k * k / dist;
                disp[i].x += dx / dist * f;
                disp[i].y += dy / dist * f;
            }
        for (const auto& e : g.edges()) {
            double dx = p[e.src].x - p[e.dst].x, dy = p[e.src].y - p[e.dst].y;
            const double dist = std::max(1e-6, std::hypot(dx, dy));
            const double f = dist * dist / k;
            disp[e.src].x -= dx / dist * f;
            disp[e.src].y -= dy / dist * f;
            disp[e.dst].x += dx / dist * f;
            disp[e.dst].y += dy / dist * f;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double len = std::max(1e-9, std::hypot(disp[i].x, disp[i].y));
            p[i].x += disp[i].x / len * std::min(len, temp);
            p[i].y += disp[i].y / len * std::min(len, temp);
        }
        temp *= 0.985;
    }
    double minx = p[0].x, maxx = p[0].x, miny = p[0].y, maxy = p[0].y;
    for (const auto& q : p) {
        minx = std::min(minx, q.x);
        maxx = std::max(maxx, q.x);
        miny = std::min(miny, q.y);
        maxy = std::max(maxy, q.y);
    }
    const double sx = maxx > minx ? maxx - minx : 1.0, sy = maxy > miny ? maxy - miny : 1.0;
    for (auto& q : p) q = {(q.x - minx) / sx, (q.y - miny) / sy};
    return p;
}

// ---------------------------------------------------------------------------
// Routes

struct RouteStop {
    NodeId node = 0;
    double time = 0.0;  // seconds since episode start
    bool operator==(const RouteStop&) const = default;
};

struct RouteExport {
    std::string graph;  // reference (file name or label)
    std::size_t nodes = 0;
    std::vector<std::vector<RouteStop>> agents;  // traversed segments, start first
    std::vector<int> visits;

    bool operator==(const RouteExport&) const = default;
};

/// Routes from recorded steps, each path expanded segment by segment with
/// cumulative entry times.
inline RouteExport make_route_export(const RoadGraph& g, std::span<const NodeId> starts,
                                     std::span<const StepRecord> steps, std::string label, std::size_t max_steps) {
    RouteExport r;
    r.graph = std::move(label);
    r.nodes = g.size();
    r.visits.assign(g.size(), 0);
    r.agents.resize(starts.size());
    for (std::size_t a = 0; a < starts.size(); ++a) r.agents[a].push_back({starts[a], 0.0});
    const std::size_t limit = std::min(max_steps, steps.size());
    for (std::size_t s = 0; s < limit; ++s) {
        const auto& st = steps[s];
        for (std::size_t i = 1; i < st.path.size(); ++i) r.visits[st.path[i]] += 1;
        // Entry times split the move's duration in proportion to base segment times.
        double base_total = 0.0;
        for (std::size_t i = 1; i < st.path.size(); ++i) base_total += g.node(st.path[i]).base_time();
        double acc = 0.0;
        for (std::size_t i = 1; i < st.path.size(); ++i) {
            acc += g.node(st.path[i]).base_time();
            const double t = st.start_time + (base_total > 0 ? (st.end_time - st.start_time) * acc / base_total : 0.0);
            r.agents[st.agent].push_back({st.path[i], t});
        }
    }
    return r;
}

inline nlohmann::json to_json(const RouteExport& r) {
    nlohmann::json agents = nlohmann::json::array();
    for (std::size_t a = 0; a < r.agents.size(); ++a) {
        nlohmann::json stops = nlohmann::json::array();
        for (const auto& s : r.agents[a]) stops.push_back({{"node", s.node}, {"t", s.time}});
        agents.push_back({{"agent", a}, {"route", stops}});
    }
    return {{"graph", r.graph}, {"nodes", r.nodes}, {"agents", agents}, {"visits", r.visits}};
}

inline RouteExport route_export_from_json(const nlohmann::json& j) {
    RouteExport r;
    r.graph = j.at("graph").get<std::string>();
    r.nodes = j.at("nodes").get<std::size_t>();
    r.visits = j.at("visits").get<std::vector<int>>();
    if (r.visits.size() != r.nodes) throw Error("route export: visits length does not match node count");
    for (const auto& a : j.at("agents")) {
        std::vector<RouteStop> stops;
        double last = 0.0;
        for (const auto& s : a.at("route")) {
            RouteStop st{s.at("node").get<NodeId>(), s.at("t").get<double>()};
            if (st.node >= r.nodes) throw Error("route export: node id out of range");
            if (st.time < last) throw Error("route export: timestamps must be non-decreasing");
            last = st.time;
            stops.push_back(st);
        }
        r.agents.push_back(std::move(stops));
    }
    return r;
}

namespace detail {

inline const char* agent_colour(std::size_t a) {
    static const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd",
                                     "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};
    return kPalette[a % (sizeof kPalette / sizeof kPalette[0])];
}

struct SvgCanvas {
    double size = 600.0, margin = 30.0;
    double x(const Point2& p) const { return margin + p.x * (size - 2 * margin); }
    double y(const Point2& p) const { return margin + p.y * (size - 2 * margin); }
};

inline void svg_edges(std::ostringstream& s, const RoadGraph& g, const std::vector<Point2>& pos, const SvgCanvas& c) {
    for (const auto& e : g.edges())
        s << "<line x1=\"" << c.x(pos[e.src]) << "\" y1=\"" << c.y(pos[e.src]) << "\" x2=\"" << c.x(pos[e.dst])
          << "\" y2=\"" << c.y(pos[e.dst]) << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
}

}  // namespace detail

inline std::string routes_svg(const RoadGraph& g, const RouteExport& r, const std::vector<Point2>& pos) {
    detail::SvgCanvas c;
    std::ostringstream s;
    s << std::fixed << std::setprecision(2);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << c.size << "\" height=\"" << c.size << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    detail::svg_edges(s, g, pos, c);
    for (std::size_t a = 0; a < r.agents.size(); ++a) {
        const auto& route = r.agents[a];
        if (route.size() < 2) continue;
        const double off = (static_cast<double>(a) - 0.5 * static_cast<double>(r.agents.size() - 1)) * 3.0;
        s << "<polyline class=\"agent-" << a << "\" fill=\"none\" stroke=\"" << detail::agent_colour(a)
          << "\" stroke-width=\"2\" stroke-opacity=\"0.8\" points=\"";
        for (const auto& st : route) s << c.x(pos[st.node]) + off << "," << c.y(pos[st.node]) + off << " ";
        s << "\"/>\n";
    }
    for (NodeId v = 0; v < g.size(); ++v) {
        const int visits = v < r.visits.size() ? r.visits[v] : 0;
        s << "<circle cx=\"" << c.x(pos[v]) << "\" cy=\"" << c.y(pos[v]) << "\" r=\"6\" fill=\""
          << (visits > 0 ? "#444444" : "#ffffff") << "\" stroke=\"#444444\"/>\n";
    }
    for (std::size_t a = 0; a < r.agents.size(); ++a)
        if (!r.agents[a].empty()) {
            const auto& p = pos[r.agents[a].front().node];
            s << "<rect x=\"" << c.x(p) - 7 << "\" y=\"" << c.y(p) - 7 << "\" width=\"14\" height=\"14\" fill=\"none\" "
              << "stroke=\"" << detail::agent_colour(a) << "\" stroke-width=\"2\"/>\n";
        }
    s << "</svg>\n";
    return s.str();
}

// ---------------------------------------------------------------------------
// Value heatmaps

struct ValueMap {
    std::size_t step = 0;
    std::size_t agent = 0;
    NodeId position = 0;
    std::vector<std::optional<double>> values;  // empty for masked nodes
};

inline nlohmann::json to_json(const ValueMap& m) {
    nlohmann::json vals = nlohmann::json::array();
    for (std::size_t v = 0; v < m.values.size(); ++v) {
        if (m.values[v])
            vals.push_back({{"node", v}, {"value", *m.values[v]}});
        else
            vals.push_back({{"node", v}, {"value", "masked"}});
    }
    return {{"step", m.step}, {"agent", m.agent}, {"position", m.position}, {"values", vals}};
}

inline std::string heatmap_svg(const RoadGraph& g, const ValueMap& m, const std::vector<Point2>& pos) {
    detail::SvgCanvas c;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& v : m.values)
        if (v) {
            lo = std::min(lo, *v);
            hi = std::max(hi, *v);
        }
    std::ostringstream s;
    s << std::fixed << std::setprecision(2);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << c.size << "\" height=\"" << c.size << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    detail::svg_edges(s, g, pos, c);
    for (NodeId v = 0; v < g.size(); ++v) {
        std::string fill = "#bbbbbb";
        if (m.values[v]) {
            const double t = hi > lo ? (*m.values[v] - lo) / (hi - lo) : 0.5;
            const int r = static_cast<int>(std::lround(255 * t)), b = static_cast<int>(std::lround(255 * (1 - t)));
            char buf[16];
            std::snprintf(buf, sizeof buf, "#%02x40%02x", r, b);
            fill = buf;
        }
        s << "<circle cx=\"" << c.x(pos[v]) << "\" cy=\"" << c.y(pos[v]) << "\" r=\"8\" fill=\"" << fill
          << "\" stroke=\"" << (v == m.position ? "#000000" : "#666666") << "\" stroke-width=\""
          << (v == m.position ? 3 : 1) << "\"><title>" << v << ": "
          << (m.values[v] ? std::to_string(*m.values[v]) : std::string("masked")) << "</title></circle>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace marvin
