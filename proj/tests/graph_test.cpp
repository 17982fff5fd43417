#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "helpers.hpp"

using namespace marvin;
using marvin::testing::timed_graph;

namespace {

RoadGraph cycle3() { return timed_graph({3, 1, 2}, {{0, 1}, {1, 2}, {2, 0}}); }

/// Minimum over all simple paths, by depth-first enumeration.
double brute_force_distance(const RoadGraph& g, const std::vector<double>& w, NodeId s, NodeId t) {
    if (s == t) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    std::vector<char> on(g.size(), 0);
    std::function<void(NodeId, double)> dfs = [&](NodeId u, double acc) {
        if (u == t) {
            best = std::min(best, acc);
            return;
        }
        on[u] = 1;
        for (std::size_t e : g.out_edges(u)) {
            const NodeId v = g.edges()[e].dst;
            if (!on[v]) dfs(v, acc + w[e]);
        }
        on[u] = 0;
    };
    dfs(s, 0.0);
    return best;
}

}  // namespace

TEST(FloydWarshall, DirectedCycleDistances) {
    const auto g = cycle3();
    const auto w = base_edge_weights(g);
    EXPECT_EQ(w, (std::vector<double>{1, 2, 3}));
    const Matrix D = floyd_warshall(g, w);
    EXPECT_DOUBLE_EQ(D(0, 2), 3.0);
    EXPECT_DOUBLE_EQ(D(2, 1), 4.0);
    EXPECT_DOUBLE_EQ(D(1, 0), 5.0);
    for (NodeId i = 0; i < 3; ++i)
        for (NodeId j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(D(i, j), brute_force_distance(g, w, i, j));
}

TEST(FloydWarshall, TwoNodeBidirectional) {
    const auto g = timed_graph({1, 1}, {{0, 1}, {1, 0}});
    const Matrix D = floyd_warshall(g, base_edge_weights(g));
    EXPECT_EQ(D.data, (std::vector<double>{0, 1, 1, 0}));
}

TEST(FloydWarshall, MatchesBruteForceOnSmallGeneratedGraphs) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto g = generate_graph(7, seed);
        const auto w = base_edge_weights(g);
        const Matrix D = floyd_warshall(g, w);
        for (NodeId i = 0; i < g.size(); ++i)
            for (NodeId j = 0; j < g.size(); ++j)
                EXPECT_NEAR(D(i, j), brute_force_distance(g, w, i, j), 1e-9);
    }
}

TEST(FloydWarshall, RejectsWeightCountMismatchAndNonPositiveWeights) {
    const auto g = cycle3();
    EXPECT_THROW(floyd_warshall(g, std::vector<double>{1, 2}), Error);
    EXPECT_THROW(floyd_warshall(g, std::vector<double>{1, 0, 3}), Error);
}

TEST(FloydWarshall, TriangleInequalityExhaustive) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto g = generate_graph(30, seed);
        const Matrix D = floyd_warshall(g, base_edge_weights(g));
        for (NodeId i = 0; i < 30; ++i) {
            EXPECT_EQ(D(i, i), 0.0);
            for (NodeId k = 0; k < 30; ++k)
                for (NodeId j = 0; j < 30; ++j) ASSERT_LE(D(i, j), D(i, k) + D(k, j) + 1e-9);
        }
    }
}

TEST(NormalizeDistance, TwoByTwoExample) {
    Matrix D(2, 2);
    D.data = {0, 1, 1, 0};
    const auto n = normalize_distance(D);
    EXPECT_DOUBLE_EQ(n.mu, 0.5);
    EXPECT_DOUBLE_EQ(n.sigma, 0.5);
    EXPECT_EQ(n.A.data, (std::vector<double>{-1, 1, 1, -1}));
    EXPECT_FALSE(n.degenerate);
}

TEST(NormalizeDistance, ConstantMatrixIsDegenerate) {
    const auto n = normalize_distance(Matrix(2, 2, 0.0));
    EXPECT_TRUE(n.degenerate);
    EXPECT_EQ(n.A.data, std::vector<double>(4, 0.0));
}

TEST(NormalizeDistance, StandardizesAndRoundTrips) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto g = generate_graph(25, seed);
        const GraphContext ctx(g);
        const auto& A = ctx.norm.A;
        double mean = 0.0, sq = 0.0;
        for (double x : A.data) mean += x;
        mean /= static_cast<double>(A.data.size());
        for (double x : A.data) sq += (x - mean) * (x - mean);
        EXPECT_NEAR(mean, 0.0, 1e-9);
        EXPECT_NEAR(std::sqrt(sq / static_cast<double>(A.data.size())), 1.0, 1e-9);
        for (std::size_t k = 0; k < A.data.size(); ++k)
            EXPECT_NEAR(A.data[k] * ctx.norm.sigma + ctx.norm.mu, ctx.D.data[k], 1e-9);
    }
}

TEST(ShortestPath, IdentityAndCycleRoute) {
    const auto g = cycle3();
    const auto w = base_edge_weights(g);
    EXPECT_EQ(shortest_path(g, w, 2, 2), (std::vector<NodeId>{2}));
    EXPECT_EQ(shortest_path(g, w, 0, 2), (std::vector<NodeId>{0, 1, 2}));
    EXPECT_THROW(shortest_path(g, w, 0, 5), Error);
}

TEST(ShortestPath, WeightMatchesDistanceOnRandomPairs) {
    Rng rng(11);
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; checked < 1000; ++seed) {
        const GraphContext ctx(generate_graph(25, seed));
        for (int k = 0; k < 100; ++k, ++checked) {
            const NodeId s = uniform_index(rng, 25), t = uniform_index(rng, 25);
            const auto p = shortest_path(ctx.graph, ctx.base_weights, s, t);
            ASSERT_EQ(p.front(), s);
            ASSERT_EQ(p.back(), t);
            ASSERT_NEAR(path_weight(ctx.graph, ctx.base_weights, p), ctx.D(s, t), 1e-9);
        }
    }
}

TEST(Route, SameNodeTakesCheapestLoop) {
    const auto ctx = marvin::testing::context(timed_graph({1, 2, 5}, {{0, 1}, {1, 0}, {0, 2}, {2, 0}}));
    const auto r = route(ctx->graph, ctx->base_weights, ctx->D, 0, 0);
    EXPECT_EQ(r, (std::vector<NodeId>{0, 1, 0}));
    EXPECT_DOUBLE_EQ(ctx->cycle[0], 3.0);
    EXPECT_DOUBLE_EQ(ctx->travel(0, 0), 3.0);
    EXPECT_DOUBLE_EQ(ctx->travel(0, 2), 5.0);
}

TEST(EdgeTimeWeight, BaseAndCongestedFactors) {
    const NodeAttr a{100.0, 10.0, 1, 1};
    EXPECT_DOUBLE_EQ(edge_time_weight(a), 10.0);
    EXPECT_NEAR(congestion_factor(0.5), 1.0 / (1.0 - 0.125), 1e-12);
    EXPECT_NEAR(edge_time_weight(a, 0.5), 10.0 / 0.875, 1e-12);
    EXPECT_DOUBLE_EQ(congestion_factor(0.999), 4.0);
    EXPECT_DOUBLE_EQ(congestion_factor(1.0), 4.0);
    EXPECT_DOUBLE_EQ(congestion_factor(0.0), 1.0);
    for (double rho = 0.0; rho <= 1.0; rho += 0.01) {
        EXPECT_GE(congestion_factor(rho), 1.0);
        EXPECT_LE(congestion_factor(rho), 4.0);
    }
}

TEST(RoadGraph, RejectsInvalidStructure) {
    const NodeAttr a{};
    EXPECT_THROW(RoadGraph({a}, {}), Error);
    EXPECT_THROW(RoadGraph({a, a}, {{0, 0}, {0, 1}, {1, 0}}), Error);
    EXPECT_THROW(RoadGraph({a, a}, {{0, 1}, {0, 1}, {1, 0}}), Error);
    EXPECT_THROW(RoadGraph({a, a}, {{0, 1}, {1, 2}}), Error);
    EXPECT_THROW(RoadGraph({{-1.0, 10.0, 1, 1}, a}, {{0, 1}, {1, 0}}), Error);
    EXPECT_THROW(RoadGraph({{1.0, 10.0, 0, 1}, a}, {{0, 1}, {1, 0}}), Error);
    try {
        RoadGraph({a, a, a}, {{0, 1}, {1, 0}, {1, 2}});
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("graph not strongly connected: no path from 2 to 0"), std::string::npos)
            << e.what();
    }
}

TEST(Features, LayoutAndBinaryColumns) {
    const GraphContext ctx(generate_graph(12, 3));
    CoverageState cov(12);
    cov.visits[5] = 2;
    cov.covered[5] = 1;
    cov.observed_factor[5] = 1.7;
    cov.visits[6] = 1;
    cov.observed_factor[6] = 1.2;
    const Matrix U(12, kCommChannels, 0.25);
    const auto f = build_features(ctx, cov, 3, U);
    EXPECT_EQ(f.X.cols + f.U.cols, 26u);
    for (NodeId v = 0; v < 12; ++v) {
        for (auto c : {feat::AgentAt, feat::Unexplored, feat::Covered, feat::Adjacent}) {
            const double x = f.X(v, c);
            EXPECT_TRUE(x == 0.0 || x == 1.0);
        }
        EXPECT_EQ(f.X(v, feat::AgentAt), v == 3 ? 1.0 : 0.0);
        EXPECT_EQ(f.X(v, feat::Adjacent), ctx.graph.has_edge(3, v) ? 1.0 : 0.0);
        EXPECT_EQ(f.X(v, feat::InDegree), static_cast<double>(ctx.graph.in(v).size()));
        EXPECT_EQ(f.X(v, feat::OutDegree), static_cast<double>(ctx.graph.out(v).size()));
        EXPECT_GE(f.X(v, feat::Distance), 0.0);
        EXPECT_LE(f.X(v, feat::Distance), 1.0);
    }
    EXPECT_EQ(f.X(3, feat::Distance), 0.0);
    EXPECT_EQ(f.X(5, feat::Covered), 1.0);
    EXPECT_EQ(f.X(5, feat::Unexplored), 0.0);
    EXPECT_EQ(f.X(5, feat::Traffic), 1.7);
    EXPECT_EQ(f.X(6, feat::Traffic), 1.2);
    EXPECT_EQ(f.X(7, feat::Traffic), 0.0);
    EXPECT_EQ(f.X(7, feat::Unexplored), 1.0);
    EXPECT_EQ(f.U, U);
}

TEST(Features, RejectsMismatchedCommunicationShape) {
    const GraphContext ctx(generate_graph(6, 1));
    EXPECT_THROW(build_features(ctx, CoverageState(6), 0, Matrix(5, kCommChannels)), Error);
}

TEST(Generator, DeterministicInSeed) {
    EXPECT_EQ(generate_graph(25, 42), generate_graph(25, 42));
    EXPECT_FALSE(generate_graph(25, 42) == generate_graph(25, 43));
}

TEST(Generator, AttributeRanges) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto g = generate_graph(25, seed);
        ASSERT_EQ(g.size(), 25u);
        for (const auto& a : g.nodes()) {
            EXPECT_GE(a.length_m, 50.0);
            EXPECT_LE(a.length_m, 500.0);
            EXPECT_TRUE(a.speed_mps == 8.3 || a.speed_mps == 13.9 || a.speed_mps == 16.7);
            EXPECT_GE(a.lanes_in, 1);
            EXPECT_LE(a.lanes_in, 3);
            EXPECT_GE(a.lanes_out, 1);
            EXPECT_LE(a.lanes_out, 3);
        }
    }
}

TEST(Generator, StronglyConnectedOverManySeeds) {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const std::size_t n = 2 + seed % 40;
        const auto g = generate_graph(n, seed);
        ASSERT_FALSE(strong_connectivity_witness(g.size(), g.edges()).has_value()) << "seed " << seed;
    }
}

TEST(Generator, MeanDegreeInRoadLikeRange) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto g = generate_graph(25, seed);
        // Street segments per intersection: a two-way street counts once.
        std::set<std::pair<NodeId, NodeId>> streets;
        for (const auto& e : g.edges()) streets.insert({std::min(e.src, e.dst), std::max(e.src, e.dst)});
        const double mean_degree = 2.0 * static_cast<double>(streets.size()) / static_cast<double>(g.size());
        EXPECT_GE(mean_degree, 2.0) << seed;
        EXPECT_LE(mean_degree, 5.0) << seed;
    }
}

TEST(GraphIo, RoundTripThroughFile) {
    const auto g = generate_graph(15, 9);
    const auto path = std::filesystem::temp_directory_path() / "marvin_graph_io_test.json";
    save_graph(path, g);
    EXPECT_EQ(load_graph(path), g);
    std::filesystem::remove(path);
}

TEST(GraphIo, ErrorsNameTheLine) {
    const std::string text =
        "{\"nodes\": [\n"
        "  {\"id\": 0, \"length_m\": 100, \"speed_mps\": 10, \"lanes_in\": 1, \"lanes_out\": 1},\n"
        "  {\"id\": 1, \"length_m\": -5, \"speed_mps\": 10, \"lanes_in\": 1, \"lanes_out\": 1}\n"
        "],\n\"edges\": [[0, 1], [1, 0]]}\n";
    try {
        parse_graph_json(text);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("length_m"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_graph_json("{\"nodes\": [], \"edges\": []}"), Error);
    EXPECT_THROW(parse_graph_json("{\"nodes\": [\n"), Error);
}

TEST(GraphIo, CoordinatesAreAllOrNothing) {
    const std::string partial =
        "{\"nodes\": [{\"id\": 0, \"length_m\": 1, \"speed_mps\": 1, \"lanes_in\": 1, \"lanes_out\": 1, \"x\": 0, "
        "\"y\": 0},\n{\"id\": 1, \"length_m\": 1, \"speed_mps\": 1, \"lanes_in\": 1, \"lanes_out\": 1}],\n"
        "\"edges\": [[0,1],[1,0]]}";
    EXPECT_THROW(parse_graph_json(partial), Error);
}
