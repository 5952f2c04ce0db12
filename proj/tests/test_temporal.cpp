#include <gtest/gtest.h>

#include <cmath>

#include "lignn/temporal.hpp"

using namespace lignn;

namespace {

Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2 * rng.uniform() - 1;
    return m;
}

TemporalConfig config(std::size_t heads, std::size_t dim, std::size_t length, std::size_t first) {
    TemporalConfig c;
    c.heads = heads;
    c.dim = dim;
    c.length = length;
    c.first_part = first;
    return c;
}

}  // namespace

TEST(Mask, PrefixCausalPattern) {
    auto m = build_prefix_causal_mask(2, 3);
    ASSERT_EQ(m.size(), 5u);
    const char* rows[] = {"11111", "11111", "11100", "11110", "11111"};
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(m.row_string(i), rows[i]) << i;
}

TEST(Mask, NoActivitiesIsFullyVisible) {
    auto m = build_prefix_causal_mask(3, 0);
    ASSERT_EQ(m.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(m.row_count(i), 3u);
}

TEST(Mask, RegularCausalIsLowerTriangular) {
    auto m = build_attention_mask(2, 6, MaskMode::regular_causal);
    for (std::size_t i = 0; i < m.size(); ++i) {
        EXPECT_EQ(m.row_count(i), i + 1);
        for (std::size_t j = 0; j < m.size(); ++j) EXPECT_EQ(m(i, j), j <= i);
    }
}

TEST(Mask, PrefixRowsAgainstDefinition) {
    const std::size_t H = 4, N = 9;
    auto m = build_prefix_causal_mask(H, N);
    for (std::size_t i = 0; i < H + N; ++i)
        for (std::size_t j = 0; j < H + N; ++j) EXPECT_EQ(m(i, j), i < H || j < H || j <= i);
    EXPECT_THROW(build_prefix_causal_mask(0, 3), std::invalid_argument);
}

TEST(Positions, KnownRows) {
    auto pe = sinusoidal_positions(3, 6);
    for (Eigen::Index c = 0; c < 6; ++c) EXPECT_DOUBLE_EQ(pe(0, c), c % 2 == 0 ? 0.0 : 1.0);
    EXPECT_DOUBLE_EQ(pe(1, 0), std::sin(1.0));
    EXPECT_DOUBLE_EQ(pe(1, 1), std::cos(1.0));
    EXPECT_NEAR(pe(2, 2), std::sin(2.0 / std::pow(10000.0, 2.0 / 6.0)), 1e-15);
    EXPECT_NEAR(pe(2, 5), std::cos(2.0 / std::pow(10000.0, 4.0 / 6.0)), 1e-15);
}

TEST(Positions, OddWidthRejected) { EXPECT_THROW(sinusoidal_positions(4, 5), std::invalid_argument); }

TEST(Positions, AgeBuckets) {
    EXPECT_EQ(age_bucket(0), 0u);
    EXPECT_EQ(age_bucket(-50), 0u);
    EXPECT_EQ(age_bucket(1000), 1u);
    EXPECT_EQ(age_bucket(3000), 2u);
    EXPECT_EQ(age_bucket(7000), 3u);
}

TEST(Assemble, HeadsReshapeRowMajor) {
    auto cfg = config(2, 2, 1, 1);
    cfg.positions = PositionMode::none;
    Vec out(4);
    out << 1, 2, 3, 4;
    Vec act(2);
    act << 9, 8;
    auto seq = assemble_temporal_sequence(out, {act}, cfg);
    ASSERT_EQ(seq.tokens.rows(), 3);
    EXPECT_EQ(seq.tokens(0, 0), 1);
    EXPECT_EQ(seq.tokens(0, 1), 2);
    EXPECT_EQ(seq.tokens(1, 0), 3);
    EXPECT_EQ(seq.tokens(1, 1), 4);
    EXPECT_EQ(seq.tokens(2, 0), 9);
    EXPECT_EQ(seq.flatten_heads(), out);
}

TEST(Assemble, SingleHead) {
    auto cfg = config(1, 2, 2, 1);
    cfg.positions = PositionMode::none;
    Vec out(2);
    out << 0.5, -0.5;
    Vec a(2), b(2);
    a << 1, 1;
    b << 2, 2;
    auto seq = assemble_temporal_sequence(out, {a, b}, cfg);
    EXPECT_EQ(seq.tokens.row(0), out.transpose());
    EXPECT_EQ(seq.tokens.row(1), a.transpose());
    EXPECT_EQ(seq.tokens.row(2), b.transpose());
    for (bool r : seq.real) EXPECT_TRUE(r);
}

TEST(Assemble, PaddingIsMaskedOut) {
    auto cfg = config(2, 2, 4, 2);
    Vec out = Vec::Ones(4);
    Vec a(2);
    a << 3, 4;
    auto seq = assemble_temporal_sequence(out, {a}, cfg);
    // Left padding: the single activity lands in the last slot.
    EXPECT_FALSE(seq.real[2]);
    EXPECT_FALSE(seq.real[4]);
    EXPECT_TRUE(seq.real[5]);
    for (std::size_t i = 0; i < seq.mask.size(); ++i)
        for (std::size_t j = 2; j < 5; ++j) EXPECT_FALSE(seq.mask(i, j));
    // Sinusoidal term of slot 3 added to the activity.
    EXPECT_NEAR(seq.tokens(5, 0), 3 + std::sin(3.0), 1e-15);
    EXPECT_NEAR(seq.tokens(5, 1), 4 + std::cos(3.0), 1e-15);
    EXPECT_EQ(seq.positions[0], -1);
    EXPECT_EQ(seq.positions[5], 3);
}

TEST(Assemble, KeepsMostRecentActivities) {
    auto cfg = config(1, 2, 2, 1);
    cfg.positions = PositionMode::none;
    std::vector<Vec> acts;
    for (int k = 0; k < 5; ++k) acts.push_back(Vec::Constant(2, k));
    auto seq = assemble_temporal_sequence(Vec::Zero(2), acts, cfg);
    EXPECT_EQ(seq.tokens(1, 0), 3);
    EXPECT_EQ(seq.tokens(2, 0), 4);
}

TEST(Assemble, InputValidation) {
    auto cfg = config(2, 2, 3, 2);
    EXPECT_THROW(assemble_temporal_sequence(Vec::Zero(3), {}, cfg), std::invalid_argument);
    EXPECT_THROW(assemble_temporal_sequence(Vec::Zero(4), {Vec::Zero(3)}, cfg), std::invalid_argument);
    cfg.positions = PositionMode::timestamp;
    EXPECT_THROW(assemble_temporal_sequence(Vec::Zero(4), {Vec::Zero(2)}, cfg), std::invalid_argument);
    std::vector<Timestamp> ages{2000};
    EXPECT_NO_THROW(assemble_temporal_sequence(Vec::Zero(4), {Vec::Zero(2)}, cfg, &ages));
}

TEST(Attention, DiagonalMaskReturnsOwnValue) {
    Rng rng(1);
    Mat t = random_mat(rng, 5, 3);
    Mat wq = random_mat(rng, 3, 3), wk = random_mat(rng, 3, 3), wv = random_mat(rng, 3, 3);
    AttentionMask eye(5);
    for (std::size_t i = 0; i < 5; ++i) eye.set(i, i, true);
    Mat out = masked_attention_forward(t, eye, wq, wk, wv);
    Mat v = t * wv.transpose();
    EXPECT_LT((out - v).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attention, EqualTokensGiveEqualRows) {
    Rng rng(2);
    Mat row = random_mat(rng, 1, 4);
    Mat t = row.replicate(6, 1);
    Mat wq = random_mat(rng, 4, 4), wk = random_mat(rng, 4, 4), wv = random_mat(rng, 4, 4);
    Mat out = masked_attention_forward(t, build_prefix_causal_mask(2, 4), wq, wk, wv);
    Mat v = row * wv.transpose();
    for (Eigen::Index i = 0; i < 6; ++i) EXPECT_LT((out.row(i) - v).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Attention, MaskedTokensHaveNoInfluence) {
    Rng rng(3);
    const std::size_t H = 2, N = 5;
    Mat t = random_mat(rng, H + N, 4);
    Mat wq = random_mat(rng, 4, 4), wk = random_mat(rng, 4, 4), wv = random_mat(rng, 4, 4);
    auto mask = build_prefix_causal_mask(H, N);
    Mat base = masked_attention_forward(t, mask, wq, wk, wv);
    for (std::size_t j = 0; j < H + N; ++j) {
        Mat moved = t;
        moved.row(static_cast<Eigen::Index>(j)).array() += 10.0;
        Mat out = masked_attention_forward(moved, mask, wq, wk, wv);
        for (std::size_t i = 0; i < H + N; ++i) {
            if (i == j || mask(i, j)) continue;
            EXPECT_EQ(out.row(static_cast<Eigen::Index>(i)), base.row(static_cast<Eigen::Index>(i))) << i << "," << j;
        }
    }
}

TEST(Attention, OutputInsideConvexHullOfVisibleValues) {
    Rng rng(4);
    const std::size_t H = 3, N = 6;
    Mat t = random_mat(rng, H + N, 5);
    Mat wq = random_mat(rng, 4, 5), wk = random_mat(rng, 4, 5), wv = random_mat(rng, 5, 5);
    auto mask = build_prefix_causal_mask(H, N);
    AttentionCache cache;
    Mat out = masked_attention_forward(t, mask, wq, wk, wv, &cache);
    Mat v = t * wv.transpose();
    for (std::size_t i = 0; i < H + N; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < H + N; ++j) {
            const double w = cache.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (!mask(i, j)) {
                EXPECT_EQ(w, 0.0);
            }
            EXPECT_GE(w, 0.0);
            total += w;
        }
        EXPECT_NEAR(total, 1.0, 1e-14);
        for (Eigen::Index c = 0; c < 5; ++c) {
            double lo = INFINITY, hi = -INFINITY;
            for (std::size_t j = 0; j < H + N; ++j)
                if (mask(i, j)) {
                    lo = std::min(lo, v(static_cast<Eigen::Index>(j), c));
                    hi = std::max(hi, v(static_cast<Eigen::Index>(j), c));
                }
            EXPECT_GE(out(static_cast<Eigen::Index>(i), c), lo - 1e-14);
            EXPECT_LE(out(static_cast<Eigen::Index>(i), c), hi + 1e-14);
        }
    }
}

TEST(Attention, EmptyRowRejected) {
    Mat t = Mat::Ones(2, 2);
    AttentionMask m(2);
    m.set(0, 0, true);
    Mat w = Mat::Identity(2, 2);
    EXPECT_THROW(masked_attention_forward(t, m, w, w, w), std::invalid_argument);
}

TEST(Attention, BackwardMatchesFiniteDifference) {
    Rng rng(5);
    const std::size_t H = 2, N = 3;
    Mat t = random_mat(rng, H + N, 3);
    Mat wq = random_mat(rng, 3, 3), wk = random_mat(rng, 3, 3), wv = random_mat(rng, 3, 3);
    Mat probe = random_mat(rng, H + N, 3);
    auto mask = build_prefix_causal_mask(H, N);
    auto loss = [&](const Mat& tk, const Mat& q, const Mat& k, const Mat& v) {
        return (masked_attention_forward(tk, mask, q, k, v).array() * probe.array()).sum();
    };
    AttentionCache cache;
    masked_attention_forward(t, mask, wq, wk, wv, &cache);
    Mat dt = Mat::Zero(t.rows(), t.cols()), dq = Mat::Zero(3, 3), dk = Mat::Zero(3, 3), dv = Mat::Zero(3, 3);
    masked_attention_backward(t, mask, wq, wk, wv, cache, probe, dt, dq, dk, dv);
    const double h = 1e-6;
    auto check = [&](Mat& x, const Mat& analytic) {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double keep = x.data()[i];
            x.data()[i] = keep + h;
            const double up = loss(t, wq, wk, wv);
            x.data()[i] = keep - h;
            const double down = loss(t, wq, wk, wv);
            x.data()[i] = keep;
            EXPECT_NEAR(analytic.data()[i], (up - down) / (2 * h), 1e-7);
        }
    };
    check(t, dt);
    check(wq, dq);
    check(wk, dk);
    check(wv, dv);
}

TEST(LongTerm, TargetPairs) {
    auto p = long_term_target_pairs(config(1, 2, 30, 20));
    ASSERT_EQ(p.size(), 10u);
    for (std::size_t k = 0; k < p.size(); ++k) EXPECT_EQ(p[k], (std::pair<std::size_t, std::size_t>{19, 20 + k}));
    auto one = long_term_target_pairs(config(1, 2, 50, 49));
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0], (std::pair<std::size_t, std::size_t>{48, 49}));
    EXPECT_EQ(long_term_target_pairs(config(1, 2, 50, 40)).size(), 10u);
    EXPECT_TRUE(long_term_target_pairs(config(1, 2, 20, 20)).empty());
}

TEST(TemporalConfigCheck, Validation) {
    EXPECT_NO_THROW(config(2, 4, 10, 10).validate());
    EXPECT_THROW(config(0, 4, 10, 5).validate(), std::invalid_argument);
    EXPECT_THROW(config(2, 4, 10, 0).validate(), std::invalid_argument);
    EXPECT_THROW(config(2, 4, 10, 11).validate(), std::invalid_argument);
    EXPECT_EQ(config(4, 64, 100, 90).tokens(), 104u);
}
