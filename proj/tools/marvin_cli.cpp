// marvin: dataset generation, training, evaluation, sweeps, the toy TSP
// benchmark, and route/value exports.

#include <iostream>

#include <CLI11.hpp>

#include "marvin/marvin.hpp"

namespace {

using namespace marvin;

void write_out(const std::string& path, const std::string& contents) {
    if (path.empty() || path == "-")
        std::cout << contents;
    else
        write_file_atomic(path, contents);
}

std::vector<Corpus::Ptr> pick_split(const Corpus& c, const std::string& split) {
    switch (split_from_string(split)) {
        case Split::Train: return c.train;
        case Split::Val: return c.val;
        case Split::Test: return c.test;
    }
    return {};
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

struct EpisodeArgs {
    std::string dataset, graph, split = "test";
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::size_t agents = 2;
    std::string distribution = "uniform:1:3";
    bool no_traffic = false;

    void attach(CLI::App* app) {
        app->add_option("--dataset", dataset, "dataset manifest");
        app->add_option("--graph", graph, "single graph JSON file (instead of --dataset)");
        app->add_option("--split", split, "split of the dataset to draw from")->check(CLI::IsMember({"train", "val", "test"}));
        app->add_option("--index", index, "graph index within the split");
        app->add_option("--seed", seed, "episode seed");
        app->add_option("--agents", agents, "number of agents")->check(CLI::PositiveNumber);
        app->add_option("--dist", distribution, "multi-pass distribution, e.g. uniform:1:3");
        app->add_flag("--no-traffic", no_traffic, "disable congestion");
    }

    std::pair<EpisodeSpec, std::string> episode() const {
        if (graph.empty() == dataset.empty()) throw Error("give exactly one of --dataset or --graph");
        if (!graph.empty()) return {{std::make_shared<const GraphContext>(load_graph(graph)), seed, 0}, graph};
        auto c = load_dataset(dataset);
        auto graphs = pick_split(c, split);
        if (index >= graphs.size())
            throw Error("--index " + std::to_string(index) + " out of range for split with " +
                        std::to_string(graphs.size()) + " graphs");
        return {{graphs[index], seed, index}, dataset + "#" + split + "/" + std::to_string(index)};
    }

    EpisodeSetup setup() const { return {MultiPassDistribution::parse(distribution), agents, !no_traffic}; }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent coverage routing with learned value iteration"};
    app.require_subcommand(1);

    // generate
    GeneratorSpec gen;
    std::string gen_out;
    auto* g = app.add_subcommand("generate", "write a deterministic graph corpus and manifest");
    g->add_option("--count", gen.count, "train + validation graphs");
    g->add_option("--test-count", gen.test_count, "held-out test graphs");
    g->add_option("--nodes-min", gen.nodes_min, "smallest graph");
    g->add_option("--nodes-max", gen.nodes_max, "largest graph");
    g->add_option("--seed", gen.seed, "corpus seed");
    g->add_option("--out", gen_out, "output directory")->required();

    // train
    std::string cfg_path, train_out;
    std::optional<std::size_t> epochs_override;
    auto* t = app.add_subcommand("train", "train a model from a JSON config");
    t->add_option("--config", cfg_path, "training config JSON")->required()->check(CLI::ExistingFile);
    t->add_option("--out", train_out, "output directory for checkpoints and curve.csv")->required();
    t->add_option("--epochs", epochs_override, "override the configured epoch count");

    // evaluate
    std::string ckpt, dataset, split = "test", metrics_out, runtime_out, table_out, baselines = "oracle,iterative-vrp,greedy,random";
    EvalOptions eo;
    bool sync_mode = false, no_traffic = false;
    auto* e = app.add_subcommand("evaluate", "evaluate a checkpoint and baselines on a dataset split");
    e->add_option("--ckpt", ckpt, "checkpoint (omit to run baselines only)");
    e->add_option("--dataset", dataset, "dataset manifest")->required()->check(CLI::ExistingFile);
    e->add_option("--split", split, "dataset split")->check(CLI::IsMember({"train", "val", "test"}));
    e->add_option("--agents", eo.agents, "number of agents")->check(CLI::PositiveNumber);
    e->add_option("--iters", eo.iterations, "value-iteration rounds K at evaluation (0: as trained)");
    e->add_option("--episodes", eo.episodes, "number of episodes");
    e->add_option("--seed", eo.seed, "episode seed");
    e->add_option("--dist", eo.distribution, "multi-pass distribution");
    e->add_option("--baselines", baselines, "comma-separated baselines (oracle,iterative-vrp,greedy,random or none)");
    e->add_option("--metrics", metrics_out, "per-episode metrics JSONL (deterministic)");
    e->add_option("--runtime", runtime_out, "per-episode runtime JSONL");
    e->add_option("--table", table_out, "summary CSV (default stdout)");
    e->add_flag("--sync", sync_mode, "synchronous round-robin execution instead of event-driven");
    e->add_flag("--no-traffic", no_traffic, "disable congestion");

    // sweep-agents
    std::string sweep_agents = "1,2,3,4,5,6,7,8,9", sweep_out;
    EvalOptions so;
    std::string sweep_ckpt, sweep_dataset, sweep_split = "test";
    auto* sw = app.add_subcommand("sweep-agents", "cost against the number of agents");
    sw->add_option("--ckpt", sweep_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    sw->add_option("--dataset", sweep_dataset, "dataset manifest")->required()->check(CLI::ExistingFile);
    sw->add_option("--split", sweep_split, "dataset split");
    sw->add_option("--agents", sweep_agents, "comma-separated agent counts");
    sw->add_option("--episodes", so.episodes, "episodes per count");
    sw->add_option("--seed", so.seed, "episode seed");
    sw->add_option("--iters", so.iterations, "value-iteration rounds K");
    sw->add_option("--out", sweep_out, "CSV output (default stdout)");

    // dist-shift
    EvalOptions dso;
    std::string ds_ckpt, ds_dataset, ds_split = "test", ds_out;
    auto* ds = app.add_subcommand("dist-shift", "evaluate across the multi-pass distribution suite");
    ds->add_option("--ckpt", ds_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    ds->add_option("--dataset", ds_dataset, "dataset manifest")->required()->check(CLI::ExistingFile);
    ds->add_option("--split", ds_split, "dataset split");
    ds->add_option("--agents", dso.agents, "number of agents");
    ds->add_option("--episodes", dso.episodes, "episodes per distribution");
    ds->add_option("--seed", dso.seed, "episode seed");
    ds->add_option("--out", ds_out, "CSV output (default stdout)");

    // bench-tsp
    TspBenchOptions to;
    std::string tsp_ckpt, tsp_out;
    std::size_t tsp_train_epochs = 0;
    bool tsp_runtime = false;
    auto* bt = app.add_subcommand("bench-tsp", "single-agent Euclidean TSP benchmark");
    bt->add_option("--k", to.k, "cities per instance")->check(CLI::Range(3, 100000));
    bt->add_option("--instances", to.instances, "instances");
    bt->add_option("--model-instances", to.model_instances, "instances that also run the model modes");
    bt->add_option("--samples", to.samples, "sampled rollouts per instance for SS+SP");
    bt->add_option("--seed", to.seed, "instance seed");
    bt->add_option("--ckpt", tsp_ckpt, "model checkpoint for the model-guided rows");
    bt->add_option("--train-epochs", tsp_train_epochs, "train a fresh model by tour imitation first");
    bt->add_flag("--runtime", tsp_runtime, "include the runtime column");
    bt->add_option("--out", tsp_out, "CSV output (default stdout)");

    // export-routes
    EpisodeArgs ra;
    std::string route_method = "greedy", route_ckpt, route_prefix;
    std::size_t route_steps = std::numeric_limits<std::size_t>::max();
    auto* er = app.add_subcommand("export-routes", "run one episode and export routes as JSON and SVG");
    ra.attach(er);
    er->add_option("--method", route_method, "marvin, oracle, iterative-vrp, greedy or random");
    er->add_option("--ckpt", route_ckpt, "checkpoint for --method marvin");
    er->add_option("--steps", route_steps, "export only the first N moves");
    er->add_option("--out-prefix", route_prefix, "writes <prefix>.json and <prefix>.svg")->required();

    // export-heatmap
    EpisodeArgs ha;
    std::string heat_ckpt, heat_prefix;
    std::size_t heat_step = 0;
    auto* eh = app.add_subcommand("export-heatmap", "per-node values at one decision of a replayed episode");
    ha.attach(eh);
    eh->add_option("--ckpt", heat_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    eh->add_option("--step", heat_step, "decision index");
    eh->add_option("--out-prefix", heat_prefix, "writes <prefix>.json and <prefix>.svg")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (g->parsed()) {
            auto entries = generate_dataset(gen, gen_out);
            std::cerr << "wrote " << entries.size() << " graphs to " << gen_out << "\n";
        } else if (t->parsed()) {
            auto cfg = TrainConfig::from_json(nlohmann::json::parse(read_file(cfg_path)));
            if (epochs_override) cfg.epochs = *epochs_override;
            Corpus corpus = cfg.manifest.empty() ? generate_corpus(cfg.data) : load_dataset(cfg.manifest);
            MarvinModel model = cfg.init_checkpoint.empty() ? MarvinModel(cfg.model, cfg.seed)
                                                            : load_model(cfg.init_checkpoint);
            std::cerr << "parameters: " << model.params().scalar_count() << " (" << model.params().megabytes()
                      << " MB)\n";
            auto res = train(model, cfg, corpus, train_out, [](const TrainRow& r) {
                if (r.val_metric)
                    std::cerr << "epoch " << r.epoch << " loss " << r.loss << " val " << *r.val_metric << "\n";
            });
            std::cerr << "best validation " << res.best_val << " at epoch " << res.best_epoch << "\n";
        } else if (e->parsed()) {
            auto corpus = load_dataset(dataset);
            std::optional<MarvinModel> model;
            if (!ckpt.empty()) model.emplace(load_model(ckpt));
            eo.baselines = baselines == "none" ? std::vector<std::string>{} : split_list(baselines);
            eo.async = !sync_mode;
            eo.traffic = !no_traffic;
            auto out = cmd_evaluate(model ? &*model : nullptr, pick_split(corpus, split), eo);
            if (!metrics_out.empty()) write_file_atomic(metrics_out, metrics_jsonl(out.records));
            if (!runtime_out.empty()) write_file_atomic(runtime_out, runtime_jsonl(out.records));
            write_out(table_out, summary_csv(out.summary));
            std::cerr << runtime_csv(out.summary);
        } else if (sw->parsed()) {
            auto model = load_model(sweep_ckpt);
            std::vector<std::size_t> Ls;
            for (const auto& s : split_list(sweep_agents)) Ls.push_back(std::stoul(s));
            write_out(sweep_out, cmd_sweep_agents(&model, pick_split(load_dataset(sweep_dataset), sweep_split), Ls, so));
        } else if (ds->parsed()) {
            auto model = load_model(ds_ckpt);
            write_out(ds_out, cmd_distribution_shift(&model, pick_split(load_dataset(ds_dataset), ds_split), dso));
        } else if (bt->parsed()) {
            std::optional<MarvinModel> model;
            if (!tsp_ckpt.empty()) model.emplace(load_model(tsp_ckpt));
            if (tsp_train_epochs > 0) {
                if (!model) model.emplace(ModelConfig{}, to.seed);
                tsp::train_tsp_model(*model, to.k, tsp_train_epochs, 16, to.seed);
            }
            write_out(tsp_out, tsp_bench_csv(cmd_bench_tsp(to, model ? &*model : nullptr), tsp_runtime));
        } else if (er->parsed()) {
            auto [ep, label] = ra.episode();
            std::optional<MarvinModel> model;
            PolicyFactory factory;
            if (route_method == "marvin") {
                if (route_ckpt.empty()) throw Error("--method marvin needs --ckpt");
                model.emplace(load_model(route_ckpt));
                factory = marvin_factory(*model);
            } else {
                factory = baseline_factory(route_method);
            }
            auto files = cmd_export_routes(ep, ra.setup(), factory, label, route_steps);
            write_file_atomic(route_prefix + ".json", files.json);
            write_file_atomic(route_prefix + ".svg", files.svg);
        } else if (eh->parsed()) {
            auto [ep, label] = ha.episode();
            auto model = load_model(heat_ckpt);
            auto files = cmd_export_value_heatmap(model, ep, ha.setup(), heat_step);
            write_file_atomic(heat_prefix + ".json", files.json);
            write_file_atomic(heat_prefix + ".svg", files.svg);
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
