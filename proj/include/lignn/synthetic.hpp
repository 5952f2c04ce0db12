#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "lignn/core.hpp"
#include "lignn/densify.hpp"
#include "lignn/graph.hpp"
#include "lignn/training.hpp"

// Small generated datasets for examples, benchmarks and end-to-end checks.
namespace lignn::synthetic {

inline constexpr NodeType kMember = 0;
inline constexpr NodeType kItem = 1;
inline constexpr EdgeType kMemberToItem = 0;
inline constexpr EdgeType kItemToMember = 1;

inline double normal(Rng& rng) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * rng.uniform());
}

inline std::vector<double> centroid(std::size_t dim, std::uint64_t seed, std::uint64_t which) {
    Rng rng(mix64(seed ^ mix64(which + 77)));
    std::vector<double> c(dim);
    double norm = 0.0;
    for (auto& x : c) {
        x = normal(rng);
        norm += x * x;
    }
    for (auto& x : c) x /= std::sqrt(norm);
    return c;
}

inline Schema bipartite_schema(std::size_t member_dim, std::size_t item_dim) {
    Schema s;
    s.edge_kinds[kMemberToItem] = EdgeKind::engagement;
    s.edge_kinds[kItemToMember] = EdgeKind::engagement;
    s.feature_dims[kMember] = member_dim;
    s.feature_dims[kItem] = item_dim;
    return s;
}

struct Dataset {
    HeteroGraph graph;
    std::vector<TrainingRecord> train;
    std::vector<TrainingRecord> valid;
    std::vector<std::uint32_t> member_group;
    std::vector<std::uint32_t> item_group;
};

struct CommunityConfig {
    std::size_t members = 2000;
    std::size_t items = 2000;
    std::size_t communities = 10;
    std::size_t history = 8;        // graph interactions per member
    std::size_t train_pairs = 4;    // positives per member, each with one negative
    std::size_t valid_pairs = 1;
    double p_in = 0.85;             // chance an interaction stays in the member's community
    std::size_t feature_dim = 8;
    double feature_noise = 1.0;     // stddev per coordinate around a unit centroid
    std::size_t favorites = 0;      // items a member keeps returning to, outside the community
    std::uint64_t seed = 1;
};

/// Bipartite graph with planted communities. Graph edges and training records
/// are drawn independently from the same process, so no record is a graph edge
/// by construction (duplicates can occur by chance).
inline Dataset planted_communities(const CommunityConfig& c) {
    Dataset d;
    Rng rng(mix64(c.seed));
    GraphBuilder b(bipartite_schema(c.feature_dim, c.feature_dim));
    std::vector<std::vector<NodeId>> by_group(c.communities);
    for (NodeId i = 0; i < c.items; ++i) {
        auto g = static_cast<std::uint32_t>(rng.below(c.communities));
        d.item_group.push_back(g);
        by_group[g].push_back(i);
    }
    for (auto& v : by_group)
        if (v.empty()) v.push_back(rng.below(c.items));
    auto features = [&](std::uint32_t g, std::uint64_t side) {
        auto f = centroid(c.feature_dim, c.seed + side, g);
        for (auto& x : f) x += c.feature_noise * normal(rng);
        return f;
    };
    for (NodeId m = 0; m < c.members; ++m) {
        auto g = static_cast<std::uint32_t>(rng.below(c.communities));
        d.member_group.push_back(g);
        b.add_node(kMember, m, features(g, 0));
    }
    for (NodeId i = 0; i < c.items; ++i) b.add_node(kItem, i, features(d.item_group[i], 1));

    std::vector<std::vector<NodeId>> favorites(c.members);
    for (NodeId m = 0; m < c.members; ++m)
        for (std::size_t k = 0; k < c.favorites; ++k) favorites[m].push_back(rng.below(c.items));

    auto positive = [&](NodeId m) -> NodeId {
        if (!favorites[m].empty() && rng.uniform() < 0.5) return favorites[m][rng.below(favorites[m].size())];
        const auto& pool = rng.uniform() < c.p_in ? by_group[d.member_group[m]] : by_group[rng.below(c.communities)];
        return pool[rng.below(pool.size())];
    };
    Timestamp ts = 1'000'000;
    for (NodeId m = 0; m < c.members; ++m)
        for (std::size_t k = 0; k < c.history; ++k) {
            NodeId i = positive(m);
            ts += 1 + static_cast<Timestamp>(rng.below(1000));
            b.add_edge({kMember, m, kMemberToItem, kItem, i, 1.0, ts});
            b.add_edge({kItem, i, kItemToMember, kMember, m, 1.0, ts});
        }
    const Timestamp record_ts = ts + 1000;
    auto emit = [&](std::vector<TrainingRecord>& out, std::size_t per_member) {
        for (NodeId m = 0; m < c.members; ++m)
            for (std::size_t k = 0; k < per_member; ++k) {
                const NodeRef mr{kMember, m, kNoIndex};
                out.push_back({mr, {kItem, positive(m), kNoIndex}, 1.0, record_ts});
                out.push_back({mr, {kItem, rng.below(c.items), kNoIndex}, 0.0, record_ts});
            }
    };
    emit(d.train, c.train_pairs);
    emit(d.valid, c.valid_pairs);
    d.graph = b.build();
    return d;
}

struct DriftConfig {
    std::size_t members = 600;
    std::size_t items = 600;
    std::size_t communities = 6;
    std::size_t history = 24;  // interactions per member, oldest first
    std::size_t recent = 8;    // trailing interactions drawn from the member's new community
    std::size_t train_pairs = 3;
    std::size_t valid_pairs = 1;
    std::size_t feature_dim = 4;
    double feature_noise = 0.3;
    std::uint64_t seed = 1;
};

/// Members whose interest moves from one community to another near the end of
/// their history. Positives come from the new community, negatives from the old
/// one, and member features carry no signal, so telling them apart requires the
/// recent activity sequence rather than the aggregated neighborhood.
inline Dataset temporal_drift(const DriftConfig& c) {
    Dataset d;
    Rng rng(mix64(c.seed ^ 0xd1f7));
    GraphBuilder b(bipartite_schema(c.feature_dim, c.feature_dim));
    std::vector<std::vector<NodeId>> by_group(c.communities);
    for (NodeId i = 0; i < c.items; ++i) {
        auto g = static_cast<std::uint32_t>(i % c.communities);
        d.item_group.push_back(g);
        by_group[g].push_back(i);
        auto f = centroid(c.feature_dim, c.seed, g);
        for (auto& x : f) x += c.feature_noise * normal(rng);
        b.add_node(kItem, i, std::move(f));
    }
    std::vector<std::uint32_t> old_group(c.members);
    for (NodeId m = 0; m < c.members; ++m) {
        std::vector<double> f(c.feature_dim);
        for (auto& x : f) x = normal(rng);
        b.add_node(kMember, m, std::move(f));
        old_group[m] = static_cast<std::uint32_t>(rng.below(c.communities));
        auto now = static_cast<std::uint32_t>((old_group[m] + 1 + rng.below(c.communities - 1)) % c.communities);
        d.member_group.push_back(now);
    }
    auto pick = [&](std::uint32_t g) { return by_group[g][rng.below(by_group[g].size())]; };
    Timestamp end = 0;
    for (NodeId m = 0; m < c.members; ++m) {
        Timestamp ts = 1'000'000;
        for (std::size_t k = 0; k < c.history; ++k) {
            const bool recent = k + c.recent >= c.history;
            NodeId i = pick(recent ? d.member_group[m] : old_group[m]);
            ts += 1000 + static_cast<Timestamp>(rng.below(1000));
            b.add_edge({kMember, m, kMemberToItem, kItem, i, 1.0, ts});
            b.add_edge({kItem, i, kItemToMember, kMember, m, 1.0, ts});
        }
        end = std::max(end, ts);
    }
    auto emit = [&](std::vector<TrainingRecord>& out, std::size_t per_member) {
        for (NodeId m = 0; m < c.members; ++m)
            for (std::size_t k = 0; k < per_member; ++k) {
                const NodeRef mr{kMember, m, kNoIndex};
                out.push_back({mr, {kItem, pick(d.member_group[m]), kNoIndex}, 1.0, end + 1000});
                out.push_back({mr, {kItem, pick(old_group[m]), kNoIndex}, 0.0, end + 1000});
            }
    };
    emit(d.train, c.train_pairs);
    emit(d.valid, c.valid_pairs);
    d.graph = b.build();
    return d;
}

/// `n` records whose members follow a Zipf law with the given exponent.
inline std::vector<TrainingRecord> power_law_records(const HeteroGraph& g, std::size_t n, double exponent,
                                                     std::uint64_t seed, NodeType member_type = kMember,
                                                     NodeType item_type = kItem) {
    auto members = g.nodes(member_type);
    auto items = g.nodes(item_type);
    if (members.empty() || items.empty()) throw std::invalid_argument("power_law_records: empty node type");
    std::vector<double> cdf;
    double acc = 0.0;
    for (std::size_t r = 0; r < members.size(); ++r) cdf.push_back(acc += std::pow(static_cast<double>(r + 1), -exponent));
    Rng rng(mix64(seed ^ 0x5eed));
    std::vector<TrainingRecord> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        auto it = std::upper_bound(cdf.begin(), cdf.end(), rng.uniform() * acc);
        auto m = members[std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), members.size() - 1)];
        auto i = items[rng.below(items.size())];
        out.push_back({m, i, rng.uniform() < 0.5 ? 1.0 : 0.0, static_cast<Timestamp>(k)});
    }
    return out;
}

struct ClusterData {
    HeteroGraph graph;
    ExternalEmbeddingTable table;
    std::vector<std::uint32_t> cluster;  // by node id
};

/// One node type with power-law out-degrees and embeddings clustered around
/// `clusters` random directions. Edges stay inside a node's cluster.
inline ClusterData planted_clusters(std::size_t n, std::size_t clusters, std::size_t dim, double noise,
                                    std::uint64_t seed) {
    ClusterData d;
    d.table = ExternalEmbeddingTable(dim);
    Rng rng(mix64(seed ^ 0xc1u));
    Schema s;
    s.edge_kinds[0] = EdgeKind::engagement;
    GraphBuilder b(s);
    std::vector<std::vector<NodeId>> members(clusters);
    for (NodeId v = 0; v < n; ++v) {
        auto c = static_cast<std::uint32_t>(v % clusters);
        d.cluster.push_back(c);
        members[c].push_back(v);
        b.add_node(0, v);
        auto e = centroid(dim, seed, c);
        for (auto& x : e) x += noise * normal(rng);
        d.table.set({0, v, kNoIndex}, std::move(e));
    }
    for (NodeId v = 0; v < n; ++v) {
        const double u = std::max(rng.uniform(), 1e-9);
        const auto deg = std::min<std::size_t>(static_cast<std::size_t>(std::pow(u, -0.9)) - 1, 60);
        const auto& pool = members[d.cluster[v]];
        for (std::size_t k = 0; k < deg; ++k) {
            NodeId w = pool[rng.below(pool.size())];
            if (w != v) b.add_edge({0, v, 0, 0, w, 1.0, static_cast<Timestamp>(k)});
        }
    }
    d.graph = b.build();
    return d;
}

}  // namespace lignn::synthetic
