#pragma once

// Graph file format:
//   {"nodes": [{"id": 0, "length_m": 120.0, "speed_mps": 13.9,
//               "lanes_in": 2, "lanes_out": 1, "x": 0.0, "y": 0.0}, ...],
//    "edges": [[0, 1], [1, 0], ...]}
// "x"/"y" are optional but must be given for every node or for none.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "marvin/graph.hpp"
#include "marvin/io.hpp"
#include "marvin/json_lines.hpp"

namespace marvin {

namespace detail {

[[noreturn]] inline void graph_error(const JsonLineIndex& idx, const std::string& pointer, const std::string& what) {
    throw Error("line " + std::to_string(idx.line_of(pointer)) + ": " + what + " (at " +
                (pointer.empty() ? std::string("/") : pointer) + ")");
}

inline double positive_number(const nlohmann::json& obj, const char* key, const JsonLineIndex& idx,
                              const std::string& ptr) {
    if (!obj.contains(key)) graph_error(idx, ptr, std::string("missing field \"") + key + "\"");
    const auto& v = obj.at(key);
    if (!v.is_number()) graph_error(idx, ptr + "/" + key, std::string("\"") + key + "\" must be a number");
    const double x = v.get<double>();
    if (!(x > 0.0) || !std::isfinite(x))
        graph_error(idx, ptr + "/" + key, std::string("\"") + key + "\" must be positive and finite");
    return x;
}

inline int positive_int(const nlohmann::json& obj, const char* key, const JsonLineIndex& idx, const std::string& ptr) {
    if (!obj.contains(key)) graph_error(idx, ptr, std::string("missing field \"") + key + "\"");
    const auto& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 1)
        graph_error(idx, ptr + "/" + key, std::string("\"") + key + "\" must be a positive integer");
    return static_cast<int>(v.get<long long>());
}

}  // namespace detail

inline RoadGraph parse_graph_json(const std::string& text) {
    JsonLineIndex idx(text);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        // Convert the byte offset to a line number.
        std::size_t line = 1;
        for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i)
            if (text[i] == '\n') ++line;
        throw Error("line " + std::to_string(line) + ": malformed JSON: " + e.what());
    }
    if (!doc.is_object()) detail::graph_error(idx, "", "graph document must be an object");
    if (!doc.contains("nodes") || !doc["nodes"].is_array()) detail::graph_error(idx, "", "missing \"nodes\" array");
    if (!doc.contains("edges") || !doc["edges"].is_array()) detail::graph_error(idx, "", "missing \"edges\" array");

    const auto& jn = doc["nodes"];
    const std::size_t n = jn.size();
    std::vector<NodeAttr> nodes(n);
    std::vector<char> seen(n, 0);
    std::vector<Point2> coords(n);
    std::size_t with_coords = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string ptr = "/nodes/" + std::to_string(i);
        const auto& o = jn[i];
        if (!o.is_object()) detail::graph_error(idx, ptr, "node entry must be an object");
        if (!o.contains("id") || !o["id"].is_number_integer())
            detail::graph_error(idx, ptr, "node needs an integer \"id\"");
        const long long id = o["id"].get<long long>();
        if (id < 0 || static_cast<std::size_t>(id) >= n)
            detail::graph_error(idx, ptr + "/id", "node id " + std::to_string(id) + " outside [0," + std::to_string(n) + ")");
        if (seen[id]) detail::graph_error(idx, ptr + "/id", "duplicate node id " + std::to_string(id));
        seen[id] = 1;
        NodeAttr a;
        a.length_m = detail::positive_number(o, "length_m", idx, ptr);
        a.speed_mps = detail::positive_number(o, "speed_mps", idx, ptr);
        a.lanes_in = detail::positive_int(o, "lanes_in", idx, ptr);
        a.lanes_out = detail::positive_int(o, "lanes_out", idx, ptr);
        nodes[id] = a;
        const bool hx = o.contains("x"), hy = o.contains("y");
        if (hx != hy) detail::graph_error(idx, ptr, "node gives only one of \"x\"/\"y\"");
        if (hx) {
            if (!o["x"].is_number() || !o["y"].is_number()) detail::graph_error(idx, ptr, "coordinates must be numbers");
            coords[id] = {o["x"].get<double>(), o["y"].get<double>()};
            ++with_coords;
        }
    }
    if (n < 2) detail::graph_error(idx, "/nodes", "road graph needs at least 2 nodes");
    if (with_coords != 0 && with_coords != n)
        detail::graph_error(idx, "/nodes", "coordinates must be given for all nodes or none");

    const auto& je = doc["edges"];
    std::vector<Edge> edges;
    std::set<Edge> dup;
    for (std::size_t k = 0; k < je.size(); ++k) {
        const std::string ptr = "/edges/" + std::to_string(k);
        const auto& e = je[k];
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
            detail::graph_error(idx, ptr, "edge must be a [src, dst] pair of integers");
        const long long s = e[0].get<long long>(), d = e[1].get<long long>();
        if (s < 0 || d < 0 || static_cast<std::size_t>(s) >= n || static_cast<std::size_t>(d) >= n)
            detail::graph_error(idx, ptr, "edge references unknown node");
        if (s == d) detail::graph_error(idx, ptr, "self-loop on node " + std::to_string(s));
        Edge ed{static_cast<NodeId>(s), static_cast<NodeId>(d)};
        if (!dup.insert(ed).second) detail::graph_error(idx, ptr, "duplicate edge");
        edges.push_back(ed);
    }
    if (auto w = strong_connectivity_witness(n, edges))
        detail::graph_error(idx, "/edges",
                            "graph not strongly connected: no path from " + std::to_string(w->first) + " to " +
                                std::to_string(w->second));
    std::optional<std::vector<Point2>> c;
    if (with_coords == n) c = std::move(coords);
    return RoadGraph(std::move(nodes), std::move(edges), std::move(c));
}

inline RoadGraph load_graph(const std::filesystem::path& path) {
    try {
        return parse_graph_json(read_file(path));
    } catch (const Error& e) {
        throw Error(path.string() + ":" + e.what());
    }
}

inline nlohmann::json graph_to_json(const RoadGraph& g) {
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t v = 0; v < g.size(); ++v) {
        const auto& a = g.node(v);
        nlohmann::json o = {{"id", v},
                            {"length_m", a.length_m},
                            {"speed_mps", a.speed_mps},
                            {"lanes_in", a.lanes_in},
                            {"lanes_out", a.lanes_out}};
        if (g.coords()) {
            o["x"] = (*g.coords())[v].x;
            o["y"] = (*g.coords())[v].y;
        }
        nodes.push_back(std::move(o));
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : g.edges()) edges.push_back({e.src, e.dst});
    return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

/// One node per line so that loader errors point somewhere useful.
inline std::string graph_to_text(const RoadGraph& g) {
    const auto j = graph_to_json(g);
    std::string out = "{\"nodes\": [\n";
    for (std::size_t i = 0; i < j["nodes"].size(); ++i)
        out += "  " + j["nodes"][i].dump() + (i + 1 < j["nodes"].size() ? ",\n" : "\n");
    out += "],\n\"edges\": [\n";
    for (std::size_t i = 0; i < j["edges"].size(); ++i)
        out += "  " + j["edges"][i].dump() + (i + 1 < j["edges"].size() ? ",\n" : "\n");
    out += "]}\n";
    return out;
}

inline void save_graph(const std::filesystem::path& path, const RoadGraph& g) {
    write_file_atomic(path, graph_to_text(g));
}

}  // namespace marvin
