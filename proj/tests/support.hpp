#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "lignn/graph.hpp"
#include "lignn/model.hpp"
#include "lignn/nearline.hpp"
#include "lignn/samplers.hpp"
#include "lignn/synthetic.hpp"

namespace support {

using namespace lignn;

inline Schema small_schema() {
    Schema s;
    s.edge_kinds[0] = EdgeKind::engagement;  // member -> item
    s.edge_kinds[1] = EdgeKind::engagement;  // item -> member
    s.edge_kinds[2] = EdgeKind::attribute;
    s.feature_dims[0] = 3;
    s.feature_dims[1] = 2;
    return s;
}

/// 6 members, 5 items, timestamped interactions in both directions.
inline HeteroGraph small_graph(std::uint64_t seed = 7) {
    GraphBuilder b(small_schema());
    Rng rng(seed);
    for (NodeId m = 0; m < 6; ++m) b.add_node(0, m, {rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5});
    for (NodeId i = 0; i < 5; ++i) b.add_node(1, i, {rng.uniform() - 0.5, rng.uniform() - 0.5});
    Timestamp ts = 1000;
    for (NodeId m = 0; m < 6; ++m)
        for (NodeId i = 0; i < 5; ++i)
            if ((m + 2 * i) % 3 != 0) {
                double w = 0.5 + rng.uniform();
                ts += 17;
                b.add_edge({0, m, 0, 1, i, w, ts});
                b.add_edge({1, i, 1, 0, m, w, ts});
            }
    return b.build();
}

inline ModelConfig small_config(const HeteroGraph& g, bool dual, Aggregator agg, DecoderKind dec, bool temporal) {
    ModelConfig c;
    c.dual_encoder = dual;
    c.aggregator = agg;
    c.decoder = dec;
    c.hops = 2;
    c.proj_dim = 2;
    c.out_dim = 4;
    c.attn_dim = 3;
    c.id_embeddings = true;
    c.id_dim = 2;
    c.mlp_hidden = {3};
    c.cosine_scale = 5.0;
    c.temperature = 0.7;
    c.feature_dims = {{0, 3}, {1, 2}};
    c.node_counts = {{0, g.node_count(0)}, {1, g.node_count(1)}};
    if (temporal) {
        TemporalConfig t;
        t.heads = 2;
        t.dim = 2;
        t.length = 4;
        t.first_part = 2;
        t.mask = MaskMode::prefix_causal;
        t.positions = PositionMode::sinusoidal;
        t.long_term_weight = 0.5;
        c.temporal = t;
    }
    return c;
}

/// Batch of 3 distinct members and 3 items, 5 pairs (the last one padded).
inline LinkBatch small_batch(const HeteroGraph& g, std::uint64_t rng_seed = 3) {
    LinkBatch batch;
    std::size_t fan[] = {2, 2};
    for (NodeId m : {0, 1, 4}) {
        auto ref = *g.find(0, m);
        auto s = sample_multihop_one(g, ref, fan, rng_seed);
        SrcInput in;
        in.tree = tree_from_multihop(*s.value);
        for (auto& e : sample_temporal_last_n(g, ref, 0, kTimeInfinity, 4)) {
            in.activities.push_back(e.node);
            in.activity_ts.push_back(e.ts);
        }
        in.query_ts = 5000;
        batch.srcs.push_back(std::move(in));
    }
    for (NodeId i : {0, 2, 3}) {
        auto s = sample_multihop_one(g, *g.find(1, i), fan, rng_seed);
        batch.dsts.push_back(tree_from_multihop(*s.value));
    }
    batch.pairs = {{0, 0, 1.0, true}, {1, 1, 0.0, true}, {2, 2, 1.0, true}, {1, 2, 1.0, true}, {0, 1, 1.0, false}};
    return batch;
}

struct GradCheck {
    double worst = 0.0;
    std::string worst_name;
    std::size_t checked = 0;
};

/// Central differences (step h) against the analytic gradient, error measured
/// as |analytic - numeric| / max(1, |analytic|).
template <typename LossFn>
GradCheck finite_difference(ParamSet params, const ParamSet& analytic, LossFn&& loss, double h = 1e-5) {
    GradCheck r;
    for (auto& [name, m] : params) {
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double keep = m.data()[i];
            m.data()[i] = keep + h;
            const double up = loss(params);
            m.data()[i] = keep - h;
            const double down = loss(params);
            m.data()[i] = keep;
            const double numeric = (up - down) / (2 * h);
            const double a = analytic.at(name).data()[i];
            const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            ++r.checked;
            if (err > r.worst) {
                r.worst = err;
                r.worst_name = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return r;
}

inline GradCheck check_model_gradients(const HeteroGraph& g, const ModelConfig& cfg, std::uint64_t seed = 11) {
    ParamSet p = init_params(cfg, seed);
    // Non-zero biases so their gradients are exercised away from the origin.
    Rng rng(seed + 1);
    for (auto& [name, m] : p)
        if (name.find(".b") != std::string::npos)
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.2 * (rng.uniform() - 0.5);
    auto batch = small_batch(g);
    ParamSet grad = p.zeros_like();
    batch_loss(g, batch, cfg, p, &grad);
    return finite_difference(p, grad, [&](const ParamSet& q) { return batch_loss(g, batch, cfg, q).loss; });
}

struct NearlineFixture {
    std::shared_ptr<const HeteroGraph> base;
    Model model;
    RefreshConfig refresh;
    std::vector<InteractionEvent> events;
};

/// Small bipartite graph, a randomly initialized temporal model and a stream of
/// `n_events` interactions that starts after the last graph edge.
inline NearlineFixture nearline_fixture(std::size_t n_events = 100, std::uint64_t seed = 21) {
    synthetic::CommunityConfig cc;
    cc.members = 80;
    cc.items = 60;
    cc.communities = 4;
    cc.history = 4;
    cc.train_pairs = 0;
    cc.valid_pairs = 0;
    cc.seed = seed;
    NearlineFixture fx;
    auto g = std::make_shared<HeteroGraph>(synthetic::planted_communities(cc).graph);
    fx.base = g;

    ModelConfig mc;
    mc.hops = 1;
    mc.proj_dim = 4;
    mc.out_dim = 8;
    mc.id_embeddings = true;
    mc.id_dim = 2;
    mc.feature_dims = {{0, 8}, {1, 8}};
    mc.node_counts = {{0, g->node_count(0)}, {1, g->node_count(1)}};
    TemporalConfig tc;
    tc.heads = 2;
    tc.dim = 4;
    tc.length = 6;
    tc.first_part = 4;
    mc.temporal = tc;
    fx.model = {mc, init_params(mc, seed)};

    fx.refresh.inference.walk.num_walks = 300;
    fx.refresh.inference.walk.top_k = 8;
    fx.refresh.kind_weights = {{EventKind::apply, 2.0}, {EventKind::connect, 1.5}};

    Timestamp ts = 0;
    for (const auto& e : g->edge_records()) ts = std::max(ts, e.ts);
    Rng rng(seed + 5);
    for (std::size_t k = 0; k < n_events; ++k) {
        ts += 1 + static_cast<Timestamp>(rng.below(50));
        fx.events.push_back({ts, static_cast<EventKind>(rng.below(4)), {0, rng.below(cc.members), kNoIndex},
                             {1, rng.below(cc.items), kNoIndex}});
    }
    return fx;
}

/// The graph an offline rebuild would produce after the events.
inline HeteroGraph replay_graph(const HeteroGraph& base, std::span<const InteractionEvent> events,
                                const RefreshConfig& rc) {
    GraphBuilder b = GraphBuilder::from(base);
    for (const auto& e : events) {
        auto it = rc.kind_weights.find(e.kind);
        const double w = it == rc.kind_weights.end() ? 1.0 : it->second;
        b.add_edge({e.member.type, e.member.id, rc.member_item_edge, e.item.type, e.item.id, w, e.ts});
        b.add_edge({e.item.type, e.item.id, rc.item_member_edge, e.member.type, e.member.id, w, e.ts});
    }
    return b.build();
}

}  // namespace support
