#pragma once

// Graph corpora: deterministic generation, the on-disk manifest, and loading.
//
// manifest.json:
//   {"version": 1,
//    "generator": {"count", "test_count", "nodes_min", "nodes_max", "seed"},
//    "graphs": [{"file": "graphs/train_00000.json", "split": "train"|"val"|"test",
//                "seed": <generator seed>, "nodes": <n>}, ...]}

#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <numeric>
#include <set>

#include <json.hpp>

#include "marvin/graph_io.hpp"

namespace marvin {

struct GeneratorSpec {
    std::size_t count = 2000;       // train + validation graphs
    std::size_t test_count = 100;   // held-out test graphs
    std::size_t nodes_min = 25;
    std::size_t nodes_max = 25;
    std::uint64_t seed = 0;
    double val_fraction = 0.1;

    nlohmann::json to_json() const {
        return {{"count", count},         {"test_count", test_count}, {"nodes_min", nodes_min},
                {"nodes_max", nodes_max}, {"seed", seed},             {"val_fraction", val_fraction}};
    }
    static GeneratorSpec from_json(const nlohmann::json& j) {
        GeneratorSpec s;
        s.count = j.value("count", s.count);
        s.test_count = j.value("test_count", s.test_count);
        s.nodes_min = j.value("nodes_min", s.nodes_min);
        s.nodes_max = j.value("nodes_max", s.nodes_max);
        s.seed = j.value("seed", s.seed);
        s.val_fraction = j.value("val_fraction", s.val_fraction);
        s.validate();
        return s;
    }
    void validate() const {
        if (nodes_min < 2 || nodes_max < nodes_min) throw Error("generator: need 2 <= nodes_min <= nodes_max");
        if (val_fraction < 0.0 || val_fraction >= 1.0) throw Error("generator: val_fraction must be in [0,1)");
    }
};

enum class Split { Train, Val, Test };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw Error("unknown split \"" + s + "\"");
}

struct GraphEntry {
    std::string file;
    Split split = Split::Train;
    std::uint64_t seed = 0;
    std::size_t nodes = 0;
};

struct Corpus {
    using Ptr = std::shared_ptr<const GraphContext>;
    std::vector<Ptr> train, val, test;
    std::vector<GraphEntry> entries;
};

/// Seeds and splits of a generated corpus, without building the graphs.
inline std::vector<GraphEntry> plan_corpus(const GeneratorSpec& spec) {
    spec.validate();
    std::vector<GraphEntry> out;
    Rng rng(derive_seed(spec.seed, 0x5be0cd19));
    const std::size_t span = spec.nodes_max - spec.nodes_min + 1;
    std::vector<std::size_t> order(spec.count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(spec.count)));
    std::vector<char> is_val(spec.count, 0);
    for (std::size_t k = 0; k < n_val; ++k) is_val[order[k]] = 1;
    auto entry = [&](Split split, std::size_t idx, std::uint64_t seed) {
        GraphEntry e;
        e.split = split;
        e.seed = seed;
        e.nodes = spec.nodes_min + static_cast<std::size_t>(derive_seed(seed, 7) % span);
        char name[64];
        std::snprintf(name, sizeof name, "graphs/%s_%05zu.json", to_string(split).c_str(), idx);
        e.file = name;
        return e;
    };
    // Graph seeds depend only on the global index, so the split never changes a graph.
    std::size_t n_train = 0, n_v = 0;
    for (std::size_t i = 0; i < spec.count; ++i) {
        const std::uint64_t seed = derive_seed(spec.seed, i);
        out.push_back(is_val[i] ? entry(Split::Val, n_v++, seed) : entry(Split::Train, n_train++, seed));
    }
    for (std::size_t t = 0; t < spec.test_count; ++t)
        out.push_back(entry(Split::Test, t, derive_seed(spec.seed ^ 0x7e57ULL, t)));
    return out;
}

inline Corpus build_corpus(const std::vector<GraphEntry>& entries,
                           const std::function<RoadGraph(const GraphEntry&)>& make) {
    Corpus c;
    c.entries = entries;
    for (const auto& e : entries) {
        auto ctx = std::make_shared<const GraphContext>(make(e));
        switch (e.split) {
            case Split::Train: c.train.push_back(ctx); break;
            case Split::Val: c.val.push_back(ctx); break;
            case Split::Test: c.test.push_back(ctx); break;
        }
    }
    return c;
}

/// In-memory corpus, identical to what `generate_dataset` writes.
inline Corpus generate_corpus(const GeneratorSpec& spec) {
    return build_corpus(plan_corpus(spec), [](const GraphEntry& e) { return generate_graph(e.nodes, e.seed); });
}

inline nlohmann::json manifest_json(const GeneratorSpec& spec, const std::vector<GraphEntry>& entries) {
    nlohmann::json graphs = nlohmann::json::array();
    for (const auto& e : entries)
        graphs.push_back({{"file", e.file}, {"split", to_string(e.split)}, {"seed", e.seed}, {"nodes", e.nodes}});
    return {{"version", 1}, {"generator", spec.to_json()}, {"graphs", graphs}};
}

/// Writes graphs/ and manifest.json under `out_dir`.
inline std::vector<GraphEntry> generate_dataset(const GeneratorSpec& spec, const std::filesystem::path& out_dir) {
    auto entries = plan_corpus(spec);
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "graphs", ec);
    if (ec) throw Error("cannot create " + (out_dir / "graphs").string() + ": " + ec.message());
    for (const auto& e : entries) save_graph(out_dir / e.file, generate_graph(e.nodes, e.seed));
    write_file_atomic(out_dir / "manifest.json", manifest_json(spec, entries).dump(2) + "\n");
    return entries;
}

inline Corpus load_dataset(const std::filesystem::path& manifest_path) {
    const auto text = read_file(manifest_path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(manifest_path.string() + ": " + e.what());
    }
    if (j.value("version", 0) != 1) throw Error(manifest_path.string() + ": unsupported manifest version");
    const auto base = manifest_path.parent_path();
    std::vector<GraphEntry> entries;
    std::set<std::string> seen;
    for (const auto& g : j.at("graphs")) {
        GraphEntry e;
        e.file = g.at("file").get<std::string>();
        e.split = split_from_string(g.at("split").get<std::string>());
        e.seed = g.value("seed", std::uint64_t{0});
        e.nodes = g.value("nodes", std::size_t{0});
        if (!seen.insert(e.file).second) throw Error(manifest_path.string() + ": graph " + e.file + " listed twice");
        if (!std::filesystem::exists(base / e.file)) throw Error("missing graph file " + (base / e.file).string());
        entries.push_back(e);
    }
    return build_corpus(entries, [&](const GraphEntry& e) {
        auto g = load_graph(base / e.file);
        if (e.nodes && g.size() != e.nodes)
            throw Error((base / e.file).string() + ": manifest says " + std::to_string(e.nodes) + " nodes, file has " +
                        std::to_string(g.size()));
        return g;
    });
}

}  // namespace marvin
