#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lignn/model.hpp"
#include "support.hpp"

using namespace lignn;

namespace {

Vec vec(std::initializer_list<double> xs) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

Vec random_vec(Rng& rng, Eigen::Index d) {
    Vec v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = 2 * rng.uniform() - 1;
    return v;
}

Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2 * rng.uniform() - 1;
    return m;
}

// Recursive reference encoder: the tree is walked top-down, every call recomputes
// the subtree from scratch.
Vec naive_h(const HeteroGraph& g, const ComputeTree& t, std::size_t level, const ModelConfig& cfg, const ParamSet& p,
            const std::string& tower) {
    if (level == 0) {
        auto f = g.features(t.node);
        Vec x = Eigen::Map<const Vec>(f.data(), static_cast<Eigen::Index>(f.size()));
        const auto ty = std::to_string(t.node.type);
        Vec z = p.at(tower + "proj.W." + ty) * x + p.at(tower + "proj.b." + ty);
        if (!cfg.id_embeddings) return z;
        Vec h(static_cast<Eigen::Index>(cfg.base_dim()));
        h << z, p.at(tower + "id." + ty).row(t.node.index).transpose();
        return h;
    }
    Vec self = naive_h(g, t, level - 1, cfg, p, tower);
    Vec agg = Vec::Zero(self.size());
    for (const auto& c : t.children) agg += naive_h(g, c, level - 1, cfg, p, tower);
    if (!t.children.empty()) agg /= static_cast<double>(t.children.size());
    Vec cat(self.size() * 2);
    cat << self, agg;
    const auto l = std::to_string(level);
    return (p.at(tower + "layer" + l + ".W") * cat + p.at(tower + "layer" + l + ".b")).array().tanh().matrix();
}

ComputeTree sampled_tree(const HeteroGraph& g, NodeType t, NodeId id, std::uint64_t seed = 3) {
    const std::size_t fan[] = {3, 2};
    return tree_from_multihop(*sample_multihop_one(g, *g.find(t, id), fan, seed).value);
}

}  // namespace

// ---------------------------------------------------------------------------
// Aggregators

TEST(MeanAggregate, TwoUnitVectors) {
    auto r = mean_aggregate({vec({1, 0}), vec({0, 1})});
    EXPECT_FALSE(r.empty_neighborhood);
    EXPECT_DOUBLE_EQ(r.value(0), 0.5);
    EXPECT_DOUBLE_EQ(r.value(1), 0.5);
}

TEST(MeanAggregate, MatchesCompensatedSum) {
    Rng rng(5);
    std::vector<Vec> xs;
    for (int i = 0; i < 10; ++i) xs.push_back(random_vec(rng, 7));
    auto r = mean_aggregate(xs);
    for (Eigen::Index d = 0; d < 7; ++d) {
        double sum = 0.0, comp = 0.0;
        for (auto& x : xs) {
            const double y = x(d) - comp;
            const double t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        EXPECT_NEAR(r.value(d), sum / 10.0, 1e-15);
    }
}

TEST(MeanAggregate, EmptyAndWeighted) {
    auto e = mean_aggregate({}, nullptr, 3);
    EXPECT_TRUE(e.empty_neighborhood);
    EXPECT_EQ(e.value, Vec::Zero(3));
    std::vector<double> w{3.0, 1.0};
    auto r = mean_aggregate({vec({4, 0}), vec({0, 4})}, &w);
    EXPECT_DOUBLE_EQ(r.value(0), 3.0);
    EXPECT_DOUBLE_EQ(r.value(1), 1.0);
    EXPECT_THROW(mean_aggregate({vec({1}), vec({1, 2})}), std::invalid_argument);
}

TEST(AttentionAggregate, IdenticalNeighborsReturnThatVector) {
    Rng rng(6);
    Mat wq = random_mat(rng, 3, 4), wk = random_mat(rng, 3, 4);
    Vec n = random_vec(rng, 4);
    auto r = attention_aggregate(random_vec(rng, 4), {n, n, n}, wq, wk);
    EXPECT_LT((r.value - n).norm(), 1e-14);
}

TEST(AttentionAggregate, SingleNeighbor) {
    Rng rng(7);
    Mat wq = random_mat(rng, 2, 3), wk = random_mat(rng, 2, 3);
    Vec n = random_vec(rng, 3);
    EXPECT_LT((attention_aggregate(random_vec(rng, 3), {n}, wq, wk).value - n).norm(), 1e-15);
}

TEST(AttentionAggregate, EmptyFallsBackToCenter) {
    Mat w = Mat::Identity(2, 2);
    auto r = attention_aggregate(vec({0.3, -1}), {}, w, w);
    EXPECT_TRUE(r.empty_neighborhood);
    EXPECT_EQ(r.value, vec({0.3, -1}));
}

TEST(AttentionAggregate, MatchesScalarOracle) {
    Rng rng(8);
    const int da = 3, d = 4;
    Mat wq = random_mat(rng, da, d), wk = random_mat(rng, da, d);
    Vec c = random_vec(rng, d);
    std::vector<Vec> nbrs;
    for (int i = 0; i < 5; ++i) nbrs.push_back(random_vec(rng, d));
    for (bool with_center : {false, true}) {
        std::vector<Vec> members = nbrs;
        if (with_center) members.insert(members.begin(), c);
        std::vector<double> score;
        for (auto& m : members) {
            double s = 0.0;
            for (int a = 0; a < da; ++a) {
                double q = 0.0, k = 0.0;
                for (int j = 0; j < d; ++j) {
                    q += wq(a, j) * c(j);
                    k += wk(a, j) * m(j);
                }
                s += q * k;
            }
            score.push_back(s / std::sqrt(static_cast<double>(da)));
        }
        double z = 0.0;
        for (double s : score) z += std::exp(s);
        Vec expect = Vec::Zero(d);
        for (std::size_t i = 0; i < members.size(); ++i) expect += std::exp(score[i]) / z * members[i];
        auto r = attention_aggregate(c, nbrs, wq, wk, with_center);
        EXPECT_LT((r.value - expect).cwiseAbs().maxCoeff(), 1e-10);
    }
}

// ---------------------------------------------------------------------------
// Encoder

TEST(SageEncode, ZeroHopsIsProjection) {
    auto g = support::small_graph();
    auto cfg = support::small_config(g, false, Aggregator::mean, DecoderKind::cosine, false);
    cfg.hops = 0;
    auto p = init_params(cfg, 4);
    auto tree = sampled_tree(g, 0, 2);
    auto tr = sage_encode(g, tree, cfg, p, Side::src);
    EXPECT_EQ(tr.output().size(), static_cast<Eigen::Index>(cfg.base_dim()));
    EXPECT_LT((tr.output() - naive_h(g, tree, 0, cfg, p, "enc.")).norm(), 1e-14);
}

TEST(SageEncode, MatchesNaiveRecursion) {
    auto g = support::small_graph();
    for (bool ids : {false, true}) {
        auto cfg = support::small_config(g, false, Aggregator::mean, DecoderKind::cosine, false);
        cfg.id_embeddings = ids;
        auto p = init_params(cfg, 9);
        for (NodeId m = 0; m < 6; ++m) {
            auto tree = sampled_tree(g, 0, m, m);
            auto tr = sage_encode(g, tree, cfg, p, Side::src);
            EXPECT_EQ(tr.missing_features, 0u);
            EXPECT_LT((tr.output() - naive_h(g, tree, cfg.hops, cfg, p, "enc.")).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(SageEncode, ChildOrderDoesNotMatter) {
    auto g = support::small_graph();
    for (auto agg : {Aggregator::mean, Aggregator::attention, Aggregator::self_attention}) {
        auto cfg = support::small_config(g, false, agg, DecoderKind::cosine, false);
        auto p = init_params(cfg, 2);
        auto tree = sampled_tree(g, 0, 1);
        auto shuffled = tree;
        std::reverse(shuffled.children.begin(), shuffled.children.end());
        for (auto& c : shuffled.children) std::reverse(c.children.begin(), c.children.end());
        auto a = sage_encode(g, tree, cfg, p, Side::src).output();
        auto b = sage_encode(g, shuffled, cfg, p, Side::src).output();
        EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(SageEncode, MissingFeaturesCounted) {
    auto g = support::small_graph();
    auto cfg = support::small_config(g, false, Aggregator::mean, DecoderKind::cosine, false);
    cfg.feature_dims[0] = 5;  // graph rows have 3 columns
    auto p = init_params(cfg, 2);
    auto tr = sage_encode(g, sampled_tree(g, 0, 0), cfg, p, Side::src);
    EXPECT_GT(tr.missing_features, 0u);
    EXPECT_TRUE(tr.output().allFinite());
}

// ---------------------------------------------------------------------------
// Decoders and losses

TEST(Cosine, KnownValues) {
    EXPECT_DOUBLE_EQ(decode_cosine(vec({1, 2}), vec({2, 4})), 1.0);
    EXPECT_DOUBLE_EQ(decode_cosine(vec({1, 0}), vec({0, 3})), 0.0);
    EXPECT_DOUBLE_EQ(decode_cosine(vec({1, -1}), vec({-2, 2})), -1.0);
    Rng rng(1);
    Vec u = random_vec(rng, 6), v = random_vec(rng, 6);
    EXPECT_NEAR(decode_cosine(u, v), decode_cosine(3.5 * u, 0.25 * v), 1e-15);
}

TEST(Cosine, Errors) {
    EXPECT_THROW(decode_cosine(vec({0, 0}), vec({1, 0})), std::invalid_argument);
    EXPECT_THROW(decode_cosine(vec({1}), vec({1, 0})), std::invalid_argument);
}

TEST(InBatch, OneHotTriple) {
    std::vector<Vec> e{vec({1, 0, 0}), vec({0, 1, 0}), vec({0, 0, 1})};
    auto r = decode_in_batch_negatives(e, e, 1.0);
    EXPECT_NEAR(r.loss, std::log(1.0 + 2.0 / std::exp(1.0)), 1e-12);
    EXPECT_NEAR(r.loss, 0.5514, 5e-5);
}

TEST(InBatch, IdenticalEmbeddingsGiveLogB) {
    for (int b : {2, 5, 16}) {
        std::vector<Vec> e(static_cast<std::size_t>(b), vec({0.3, -0.2}));
        EXPECT_NEAR(decode_in_batch_negatives(e, e, 0.5).loss, std::log(static_cast<double>(b)), 1e-12);
    }
}

TEST(InBatch, GradientMatchesFiniteDifference) {
    Rng rng(3);
    std::vector<Vec> u, v;
    for (int i = 0; i < 4; ++i) {
        u.push_back(random_vec(rng, 3));
        v.push_back(random_vec(rng, 3));
    }
    auto r = decode_in_batch_negatives(u, v, 0.7);
    // d loss / d u_0[0] through the logits of row 0.
    double analytic = 0.0;
    for (int j = 0; j < 4; ++j) analytic += r.dlogits(0, j) * v[static_cast<std::size_t>(j)](0) / 0.7;
    const double h = 1e-6;
    auto up = u, down = u;
    up[0](0) += h;
    down[0](0) -= h;
    const double numeric =
        (decode_in_batch_negatives(up, v, 0.7).loss - decode_in_batch_negatives(down, v, 0.7).loss) / (2 * h);
    EXPECT_NEAR(analytic, numeric, 1e-8);
}

TEST(InBatch, SingleRowRejected) {
    std::vector<Vec> e{vec({1, 0})};
    EXPECT_THROW(decode_in_batch_negatives(e, e, 1.0), std::invalid_argument);
}

TEST(Bce, KnownValues) {
    auto z = bce_loss(0.0, 1.0);
    EXPECT_NEAR(z.loss, std::log(2.0), 1e-15);
    EXPECT_NEAR(z.grad, -0.5, 1e-15);
    auto n = bce_loss(1.5, 0.0);
    EXPECT_NEAR(n.loss, 1.7014, 5e-5);
    EXPECT_NEAR(n.loss, std::log1p(std::exp(1.5)), 1e-14);
}

TEST(Bce, SaturatesWithoutOverflow) {
    auto hit = bce_loss(40.0, 1.0);
    EXPECT_LT(hit.loss, 1e-16);
    EXPECT_LT(std::abs(hit.grad), 1e-16);
    auto miss = bce_loss(-800.0, 1.0);
    EXPECT_NEAR(miss.loss, 800.0, 1e-9);
    EXPECT_NEAR(miss.grad, -1.0, 1e-15);
    EXPECT_TRUE(std::isfinite(bce_loss(800.0, 0.0).loss));
}

// ---------------------------------------------------------------------------
// Gradients of the full batch loss

struct GradCase {
    bool dual;
    Aggregator agg;
    DecoderKind dec;
    bool temporal;
};

class ModelGradient : public ::testing::TestWithParam<GradCase> {};

TEST_P(ModelGradient, FiniteDifference) {
    auto g = support::small_graph();
    auto c = GetParam();
    auto cfg = support::small_config(g, c.dual, c.agg, c.dec, c.temporal);
    auto r = support::check_model_gradients(g, cfg);
    EXPECT_GT(r.checked, 0u);
    EXPECT_LT(r.worst, 1e-6) << r.worst_name;
}

INSTANTIATE_TEST_SUITE_P(
    Configs, ModelGradient,
    ::testing::Values(GradCase{false, Aggregator::mean, DecoderKind::cosine, false},
                      GradCase{true, Aggregator::mean, DecoderKind::cosine, false},
                      GradCase{false, Aggregator::attention, DecoderKind::mlp, false},
                      GradCase{true, Aggregator::self_attention, DecoderKind::mlp, false},
                      GradCase{false, Aggregator::mean, DecoderKind::in_batch, false},
                      GradCase{true, Aggregator::attention, DecoderKind::in_batch, false},
                      GradCase{false, Aggregator::mean, DecoderKind::cosine, true},
                      GradCase{true, Aggregator::self_attention, DecoderKind::mlp, true}));

TEST(BatchLoss, DuplicatedPairsLeaveMeanUnchanged) {
    auto g = support::small_graph();
    auto cfg = support::small_config(g, true, Aggregator::mean, DecoderKind::cosine, false);
    auto p = init_params(cfg, 12);
    auto batch = support::small_batch(g);
    auto doubled = batch;
    doubled.pairs.insert(doubled.pairs.end(), batch.pairs.begin(), batch.pairs.end());
    ParamSet g1 = p.zeros_like(), g2 = p.zeros_like();
    auto a = batch_loss(g, batch, cfg, p, &g1);
    auto b = batch_loss(g, doubled, cfg, p, &g2);
    EXPECT_NEAR(a.loss, b.loss, 1e-14);
    EXPECT_EQ(b.real_pairs, 2 * a.real_pairs);
    ParamSet diff = g1;
    diff.add_scaled(g2, -1.0);
    EXPECT_LT(std::sqrt(diff.squared_norm()), 1e-13);
}

TEST(BatchLoss, PaddedPairsIgnored) {
    auto g = support::small_graph();
    auto cfg = support::small_config(g, false, Aggregator::mean, DecoderKind::mlp, false);
    auto p = init_params(cfg, 1);
    auto batch = support::small_batch(g);
    auto trimmed = batch;
    trimmed.pairs.pop_back();
    auto a = batch_loss(g, batch, cfg, p);
    auto b = batch_loss(g, trimmed, cfg, p);
    EXPECT_DOUBLE_EQ(a.loss, b.loss);
    EXPECT_TRUE(std::isnan(a.scores.back()));
    trimmed.pairs.clear();
    EXPECT_EQ(batch_loss(g, trimmed, cfg, p).loss, 0.0);
}

TEST(BatchLoss, SgdReducesLoss) {
    auto g = support::small_graph();
    auto cfg = support::small_config(g, false, Aggregator::mean, DecoderKind::cosine, false);
    auto p = init_params(cfg, 2);
    auto batch = support::small_batch(g);
    const double before = batch_loss(g, batch, cfg, p).loss;
    for (int step = 0; step < 20; ++step) {
        ParamSet grad = p.zeros_like();
        batch_loss(g, batch, cfg, p, &grad);
        sgd_update(p, grad, 0.05);
    }
    EXPECT_LT(batch_loss(g, batch, cfg, p).loss, before);
}

// ---------------------------------------------------------------------------
// Parameters and persistence

TEST(Params, DualEncoderDoublesTowers) {
    auto g = support::small_graph();
    auto single = init_params(support::small_config(g, false, Aggregator::attention, DecoderKind::cosine, false), 1);
    auto dual = init_params(support::small_config(g, true, Aggregator::attention, DecoderKind::cosine, false), 1);
    const auto enc = tower_param_count(single, "enc.");
    EXPECT_GT(enc, 0u);
    EXPECT_EQ(tower_param_count(single, "src."), 0u);
    EXPECT_EQ(tower_param_count(dual, "src."), enc);
    EXPECT_EQ(tower_param_count(dual, "dst."), enc);
    EXPECT_EQ(dual.size(), 2 * single.size());
}

TEST(Params, InitIsDeterministic) {
    auto g = support::small_graph();
    auto cfg = support::small_config(g, true, Aggregator::mean, DecoderKind::mlp, true);
    EXPECT_TRUE(init_params(cfg, 4) == init_params(cfg, 4));
    EXPECT_FALSE(init_params(cfg, 4) == init_params(cfg, 5));
}

TEST(Params, ConfigValidation) {
    auto g = support::small_graph();
    auto cfg = support::small_config(g, false, Aggregator::mean, DecoderKind::cosine, true);
    cfg.out_dim = 5;  // must equal H * d = 4
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = support::small_config(g, false, Aggregator::mean, DecoderKind::cosine, false);
    cfg.temperature = 0.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Checkpoint, ModelRoundTrip) {
    auto g = support::small_graph();
    Model m{support::small_config(g, true, Aggregator::self_attention, DecoderKind::mlp, true), {}};
    m.params = init_params(m.config, 8);
    std::stringstream ss;
    save_model(ss, m);
    auto back = load_model(ss);
    EXPECT_TRUE(back.params == m.params);
    EXPECT_EQ(back.config.dual_encoder, true);
    EXPECT_EQ(back.config.aggregator, Aggregator::self_attention);
    EXPECT_EQ(back.config.decoder, DecoderKind::mlp);
    EXPECT_EQ(back.config.hops, m.config.hops);
    EXPECT_EQ(back.config.mlp_hidden, m.config.mlp_hidden);
    EXPECT_EQ(back.config.feature_dims, m.config.feature_dims);
    EXPECT_EQ(back.config.node_counts, m.config.node_counts);
    ASSERT_TRUE(back.config.temporal);
    EXPECT_EQ(back.config.temporal->first_part, 2u);
    EXPECT_EQ(back.config.temporal->mask, MaskMode::prefix_causal);
}

TEST(Checkpoint, CorruptFilesRejected) {
    auto g = support::small_graph();
    Model m{support::small_config(g, false, Aggregator::mean, DecoderKind::cosine, false), {}};
    m.params = init_params(m.config, 8);
    std::stringstream ss;
    save_model(ss, m);
    const std::string bytes = ss.str();
    std::stringstream bad_magic("XXXX" + bytes.substr(4));
    EXPECT_THROW(load_model(bad_magic), Error);
    std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(load_model(truncated), Error);
    ParamSet only;
    only["enc.layer1.W"] = Mat::Zero(1, 1);
    std::stringstream no_meta;
    checkpoint::write(no_meta, only);
    EXPECT_THROW(load_model(no_meta), Error);
}
