#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "lignn/densify.hpp"
#include "lignn/synthetic.hpp"

using namespace lignn;

namespace {

Schema schema() {
    Schema s;
    s.edge_kinds[0] = EdgeKind::engagement;
    return s;
}

NodeRef ref(NodeId id) { return {0, id, kNoIndex}; }

}  // namespace

TEST(DegreeThreshold, EqualDegrees) {
    std::vector<std::size_t> d(10, 4);
    EXPECT_EQ(degree_threshold(d, 0.3), 4u);
    EXPECT_EQ(degree_threshold(d, 0.9), 4u);
}

TEST(DegreeThreshold, NearestRank) {
    std::vector<std::size_t> d(100);
    std::iota(d.begin(), d.end(), 1);
    std::reverse(d.begin(), d.end());
    EXPECT_EQ(degree_threshold(d, 0.9), 90u);
    EXPECT_EQ(degree_threshold(d, 0.3), 30u);
    EXPECT_EQ(degree_threshold(d, 0.0), 1u);
    EXPECT_EQ(degree_threshold(d, 1.0), 100u);
}

TEST(DegreeThreshold, Errors) {
    EXPECT_THROW(degree_threshold(std::vector<std::size_t>{}, 0.5), std::invalid_argument);
    EXPECT_THROW(degree_threshold(std::vector<std::size_t>{1}, 1.5), std::invalid_argument);
}

TEST(DegreeThreshold, FromGraph) {
    GraphBuilder b(schema());
    for (NodeId v = 0; v < 10; ++v)
        for (NodeId k = 0; k < v; ++k) b.add_edge({0, v, 0, 0, (v + k + 1) % 10, 1.0, 0});
    auto g = b.build();
    EXPECT_EQ(degree_threshold(g, 0.5), 4u);
    EXPECT_EQ(degree_threshold(g, 0.0), 0u);
}

TEST(ExactKnn, QueryRowComesFirst) {
    ExternalEmbeddingTable t(3);
    Rng rng(2);
    std::vector<NodeRef> cands;
    for (NodeId v = 0; v < 20; ++v) {
        t.set(ref(v), {rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5});
        cands.push_back(ref(v));
    }
    for (NodeId v = 0; v < 20; ++v) {
        auto hits = exact_knn(t, cands, *t.find(ref(v)), 3);
        ASSERT_EQ(hits.size(), 3u);
        EXPECT_EQ(hits[0].node, ref(v));
        EXPECT_NEAR(hits[0].similarity, 1.0, 1e-12);
    }
}

TEST(ExactKnn, TiesGoToSmallerId) {
    ExternalEmbeddingTable t(2);
    for (NodeId v : {7u, 3u, 5u}) t.set(ref(v), {1.0, 1.0});
    t.set(ref(1), {-1.0, 0.0});
    std::vector<NodeRef> cands{ref(7), ref(1), ref(5), ref(3)};
    const double q[] = {2.0, 2.0};
    auto hits = exact_knn(t, cands, q, 3);
    ASSERT_EQ(hits.size(), 3u);
    EXPECT_EQ(hits[0].node.id, 3u);
    EXPECT_EQ(hits[1].node.id, 5u);
    EXPECT_EQ(hits[2].node.id, 7u);
}

TEST(ExactKnn, MatchesFullSort) {
    ExternalEmbeddingTable t(8);
    Rng rng(3);
    std::vector<NodeRef> cands;
    for (NodeId v = 0; v < 500; ++v) {
        std::vector<double> x(8);
        for (auto& e : x) e = synthetic::normal(rng);
        t.set(ref(v), x);
        cands.push_back(ref(v));
    }
    std::vector<double> q(8);
    for (auto& e : q) e = synthetic::normal(rng);
    std::vector<std::pair<double, NodeId>> all;
    for (NodeId v = 0; v < 500; ++v) {
        const auto& x = *t.find(ref(v));
        double dot = 0, nx = 0, nq = 0;
        for (int i = 0; i < 8; ++i) {
            dot += x[static_cast<std::size_t>(i)] * q[static_cast<std::size_t>(i)];
            nx += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
            nq += q[static_cast<std::size_t>(i)] * q[static_cast<std::size_t>(i)];
        }
        all.push_back({-dot / std::sqrt(nx * nq), v});
    }
    std::sort(all.begin(), all.end());
    auto hits = exact_knn(t, cands, q, 25);
    ASSERT_EQ(hits.size(), 25u);
    for (std::size_t k = 0; k < 25; ++k) {
        EXPECT_EQ(hits[k].node.id, all[k].second);
        EXPECT_NEAR(hits[k].similarity, -all[k].first, 1e-12);
    }
}

TEST(ExactKnn, SkipsUncoveredAndZeroRows) {
    ExternalEmbeddingTable t(2);
    t.set(ref(0), {0.0, 0.0});
    t.set(ref(1), {1.0, 0.0});
    std::vector<NodeRef> cands{ref(0), ref(1), ref(2)};
    const double q[] = {1.0, 1.0};
    auto hits = exact_knn(t, cands, q, 5);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].node.id, 1u);
    const double zero[] = {0.0, 0.0};
    EXPECT_THROW(exact_knn(t, cands, zero, 1), std::invalid_argument);
    const double wrong[] = {1.0};
    EXPECT_THROW(exact_knn(t, cands, wrong, 1), std::invalid_argument);
}

TEST(EmbeddingTable, ReadRejectsBadLines) {
    std::istringstream in("# comment\n0\t1\t0.5,0.5\n0\t2\t1,2,3\n0\tx\t1,1\n0\t3\t1,nan\n0\t4\t-1,0\n");
    ExternalEmbeddingTable t;
    std::vector<std::string> errors;
    EXPECT_EQ(t.read(in, &errors), 3u);
    EXPECT_EQ(errors.size(), 3u);
    EXPECT_EQ(t.size(), 2u);
    EXPECT_TRUE(t.covers(ref(1)));
    EXPECT_TRUE(t.covers(ref(4)));
    EXPECT_EQ(t.dim(), 2u);
}

// One low node (degree 0) and one high node (degree 3).
TEST(Densify, SingleLowSingleHigh) {
    GraphBuilder b(schema());
    for (NodeId v = 10; v < 13; ++v) b.add_edge({0, 1, 0, 0, v, 1.0, 0});
    b.add_node(0, 0);
    auto g = b.build();
    ExternalEmbeddingTable t(2);
    t.set(ref(0), {1.0, 0.0});
    t.set(ref(1), {0.5, 0.5});
    DensifyConfig cfg;
    cfg.k = 5;
    cfg.lower_quantile = 0.2;
    cfg.upper_quantile = 1.0;
    auto r = densify(g, t, cfg);
    ASSERT_EQ(r.edges.size(), 1u);
    EXPECT_EQ(r.edges[0].src_id, 0u);
    EXPECT_EQ(r.edges[0].dst_id, 1u);
    EXPECT_EQ(r.edges[0].edge_type, 100);
    EXPECT_EQ(r.edges[0].weight, 1.0);
    EXPECT_EQ(r.graph.edge_count(), g.edge_count() + 1);
    EXPECT_EQ(r.graph.out_edges(*r.graph.find(0, 0), 100).size(), 1u);
}

TEST(Densify, ExistingEdgeKeptAlongsideArtificialOne) {
    GraphBuilder b(schema());
    for (NodeId v = 10; v < 14; ++v) b.add_edge({0, 1, 0, 0, v, 1.0, 0});
    b.add_edge({0, 0, 0, 0, 1, 2.5, 7});
    auto g = b.build();
    ExternalEmbeddingTable t(2);
    t.set(ref(0), {1.0, 0.0});
    t.set(ref(1), {1.0, 0.1});
    DensifyConfig cfg;
    cfg.k = 1;
    cfg.lower_quantile = 0.9;  // every degree-1 node
    cfg.upper_quantile = 1.0;
    auto r = densify(g, t, cfg);
    auto n0 = *r.graph.find(0, 0);
    auto original = r.graph.out_edges(n0, 0);
    ASSERT_EQ(original.size(), 1u);
    EXPECT_EQ(original.weight[0], 2.5);
    auto added = r.graph.out_edges(n0, 100);
    ASSERT_EQ(added.size(), 1u);
    EXPECT_EQ(added.dst[0].id, 1u);
}

TEST(Densify, HighNodeNeverLinksToItself) {
    GraphBuilder b(schema());
    for (NodeId v = 0; v < 4; ++v) b.add_edge({0, v, 0, 0, (v + 1) % 4, 1.0, 0});
    auto g = b.build();
    ExternalEmbeddingTable t(2);
    for (NodeId v = 0; v < 4; ++v) t.set(ref(v), {1.0, static_cast<double>(v)});
    DensifyConfig cfg;
    cfg.k = 10;
    auto r = densify(g, t, cfg);
    EXPECT_EQ(r.low_count, 4u);
    for (auto& e : r.edges) EXPECT_NE(e.src_id, e.dst_id);
    EXPECT_EQ(r.edges.size(), 12u);
}

TEST(Densify, PlantedClustersStayWithinCluster) {
    auto data = synthetic::planted_clusters(300, 4, 16, 0.1, 5);
    DensifyConfig cfg;
    cfg.k = 5;
    auto r = densify(data.graph, data.table, cfg);
    ASSERT_FALSE(r.edges.empty());
    std::size_t same = 0;
    for (auto& e : r.edges) same += data.cluster.at(e.src_id) == data.cluster.at(e.dst_id);
    EXPECT_GT(static_cast<double>(same) / static_cast<double>(r.edges.size()), 0.9);
    for (auto& e : r.edges) EXPECT_EQ(e.weight, 1.0);
}

TEST(Densify, NoCoveredHighNodesThrows) {
    GraphBuilder b(schema());
    for (NodeId v = 10; v < 13; ++v) b.add_edge({0, 1, 0, 0, v, 1.0, 0});
    auto g = b.build();
    ExternalEmbeddingTable t(2);
    t.set(ref(10), {1.0, 0.0});
    DensifyConfig cfg;
    cfg.upper_quantile = 1.0;
    EXPECT_THROW(densify(g, t, cfg), std::runtime_error);
}

TEST(Densify, UncoveredLowNodesSkipped) {
    GraphBuilder b(schema());
    for (NodeId v = 10; v < 13; ++v) b.add_edge({0, 1, 0, 0, v, 1.0, 0});
    auto g = b.build();
    ExternalEmbeddingTable t(2);
    t.set(ref(1), {1.0, 0.0});
    t.set(ref(10), {1.0, 1.0});
    DensifyConfig cfg;
    cfg.upper_quantile = 1.0;
    auto r = densify(g, t, cfg);
    EXPECT_EQ(r.low_count, 1u);
    ASSERT_EQ(r.edges.size(), 1u);
    EXPECT_EQ(r.edges[0].src_id, 10u);
    std::set<NodeId> skipped;
    for (auto& s : r.skipped) skipped.insert(s.node.id);
    EXPECT_EQ(skipped, (std::set<NodeId>{11, 12}));
}

TEST(Densify, InputOrderAndThreadsDoNotMatter) {
    auto data = synthetic::planted_clusters(200, 3, 8, 0.2, 9);
    DensifyConfig cfg;
    cfg.k = 4;
    auto base = densify(data.graph, data.table, cfg);

    // Same nodes, edges and vectors inserted in reverse order.
    GraphBuilder b(Schema{data.graph.schema()});
    auto recs = data.graph.edge_records();
    std::reverse(recs.begin(), recs.end());
    auto nodes = data.graph.all_nodes();
    std::reverse(nodes.begin(), nodes.end());
    for (auto& n : nodes) b.add_node(n.type, n.id);
    for (auto& e : recs) b.add_edge(e);
    auto g2 = b.build();
    ExternalEmbeddingTable t2(data.table.dim());
    for (auto& n : nodes)
        if (auto* v = data.table.find(n)) t2.set(n, *v);
    cfg.threads = 3;
    auto other = densify(g2, t2, cfg);
    ASSERT_EQ(base.edges.size(), other.edges.size());
    for (std::size_t i = 0; i < base.edges.size(); ++i) {
        EXPECT_EQ(base.edges[i].src_id, other.edges[i].src_id);
        EXPECT_EQ(base.edges[i].dst_id, other.edges[i].dst_id);
    }
}

TEST(Densify, ConfigValidation) {
    DensifyConfig cfg;
    cfg.lower_quantile = 0.9;
    cfg.upper_quantile = 0.3;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.k = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
