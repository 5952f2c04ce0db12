#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lignn/core.hpp"
#include "lignn/params.hpp"

namespace lignn {

enum class MaskMode : std::uint8_t { regular_causal = 0, prefix_causal = 1 };
enum class PositionMode : std::uint8_t { none = 0, sinusoidal = 1, timestamp = 2 };

/// Sequence model on top of the graph encoder: the encoder output is split into
/// `heads` tokens of width `dim`, followed by up to `length` activity tokens.
struct TemporalConfig {
    std::size_t heads = 4;
    std::size_t dim = 64;
    std::size_t length = 100;  // N
    std::size_t first_part = 90;  // N1; N2 = length - first_part
    MaskMode mask = MaskMode::prefix_causal;
    PositionMode positions = PositionMode::sinusoidal;
    double long_term_weight = 1.0;
    EdgeType activity_edge_type = 0;
    bool use_dst_neighbors = false;

    std::size_t second_part() const noexcept { return length - first_part; }
    std::size_t tokens() const noexcept { return heads + length; }

    void validate() const {
        if (heads < 1) throw std::invalid_argument("TemporalConfig: heads must be >= 1");
        if (dim < 1) throw std::invalid_argument("TemporalConfig: dim must be >= 1");
        if (first_part < 1 || first_part > length)
            throw std::invalid_argument("TemporalConfig: need 1 <= N1 <= N");
        if (positions == PositionMode::sinusoidal || positions == PositionMode::timestamp)
            if (dim % 2 != 0) throw std::invalid_argument("TemporalConfig: positional encoding needs even dim");
    }
};

/// Row-major boolean matrix; true = may attend.
class AttentionMask {
public:
    AttentionMask() = default;
    explicit AttentionMask(std::size_t n, bool value = false) : n_(n), bits_(n * n, value ? 1 : 0) {}

    std::size_t size() const noexcept { return n_; }
    bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v) { bits_[i * n_ + j] = v ? 1 : 0; }

    std::size_t row_count(std::size_t i) const {
        std::size_t c = 0;
        for (std::size_t j = 0; j < n_; ++j) c += bits_[i * n_ + j];
        return c;
    }

    std::string row_string(std::size_t i) const {
        std::string s;
        for (std::size_t j = 0; j < n_; ++j) s += (*this)(i, j) ? '1' : '0';
        return s;
    }

    friend bool operator==(const AttentionMask&, const AttentionMask&) = default;

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// prefix_causal: the first H rows see everything; activity row H+i sees the H
/// prefix tokens and activities 0..i. regular_causal: row i sees columns 0..i.
inline AttentionMask build_attention_mask(std::size_t heads, std::size_t n, MaskMode mode) {
    if (heads < 1) throw std::invalid_argument("build_attention_mask: H must be >= 1");
    const std::size_t total = heads + n;
    AttentionMask m(total);
    for (std::size_t i = 0; i < total; ++i) {
        for (std::size_t j = 0; j < total; ++j) {
            bool allow = false;
            if (mode == MaskMode::regular_causal)
                allow = j <= i;
            else
                allow = i < heads || j < heads || j <= i;
            m.set(i, j, allow);
        }
    }
    return m;
}

inline AttentionMask build_prefix_causal_mask(std::size_t heads, std::size_t n) {
    return build_attention_mask(heads, n, MaskMode::prefix_causal);
}

inline void sinusoid_row(double pos, std::size_t d, double* out) {
    for (std::size_t i = 0; i < d; i += 2) {
        double freq = std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
        out[i] = std::sin(pos / freq);
        if (i + 1 < d) out[i + 1] = std::cos(pos / freq);
    }
}

/// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(pos / 10000^(2i/d)).
inline Mat sinusoidal_positions(std::size_t length, std::size_t d) {
    if (d % 2 != 0) throw std::invalid_argument("sinusoidal_positions: d must be even");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> pe(length, d);
    for (std::size_t p = 0; p < length; ++p) sinusoid_row(static_cast<double>(p), d, pe.row(p).data());
    return pe;
}

/// Log-scale age bucket used by the timestamp positional mode.
inline std::size_t age_bucket(Timestamp age_ms) {
    double seconds = std::max<Timestamp>(age_ms, 0) / 1000.0;
    return static_cast<std::size_t>(std::floor(std::log2(1.0 + seconds)));
}

struct TemporalSequence {
    Mat tokens;  // (H + N) x d, one token per row
    AttentionMask mask;
    std::vector<int> positions;  // -1 for the H encoder tokens
    std::vector<bool> real;      // false for padded activity slots
    std::size_t heads = 0;

    Vec flatten_heads() const {
        Vec out(static_cast<Eigen::Index>(heads * tokens.cols()));
        for (std::size_t h = 0; h < heads; ++h)
            out.segment(static_cast<Eigen::Index>(h) * tokens.cols(), tokens.cols()) = tokens.row(h).transpose();
        return out;
    }
};

/// Splits `sage_output` row-major into H tokens, appends the most recent N
/// activities left-padded to N slots, adds positional terms to real activity
/// tokens and masks padded slots out of every row.
inline TemporalSequence assemble_temporal_sequence(const Vec& sage_output, const std::vector<Vec>& activities,
                                                   const TemporalConfig& cfg,
                                                   const std::vector<Timestamp>* ages_ms = nullptr) {
    const auto d = static_cast<Eigen::Index>(cfg.dim);
    if (static_cast<std::size_t>(sage_output.size()) != cfg.heads * cfg.dim)
        throw std::invalid_argument("assemble_temporal_sequence: encoder output is not H*d");
    for (const auto& a : activities)
        if (a.size() != d) throw std::invalid_argument("assemble_temporal_sequence: activity dim mismatch");
    if (cfg.positions == PositionMode::timestamp && (!ages_ms || ages_ms->size() != activities.size()))
        throw std::invalid_argument("assemble_temporal_sequence: timestamp positions need one age per activity");

    TemporalSequence seq;
    seq.heads = cfg.heads;
    const std::size_t total = cfg.tokens();
    seq.tokens = Mat::Zero(static_cast<Eigen::Index>(total), d);
    seq.positions.assign(total, -1);
    seq.real.assign(total, true);
    for (std::size_t h = 0; h < cfg.heads; ++h)
        seq.tokens.row(static_cast<Eigen::Index>(h)) = sage_output.segment(static_cast<Eigen::Index>(h) * d, d).transpose();

    const std::size_t kept = std::min(activities.size(), cfg.length);
    const std::size_t skip = activities.size() - kept;
    const std::size_t pad = cfg.length - kept;
    std::vector<double> pe(cfg.dim);
    for (std::size_t s = 0; s < cfg.length; ++s) {
        const std::size_t row = cfg.heads + s;
        seq.positions[row] = static_cast<int>(s);
        if (s < pad) {
            seq.real[row] = false;
            continue;
        }
        const std::size_t a = skip + (s - pad);
        seq.tokens.row(static_cast<Eigen::Index>(row)) = activities[a].transpose();
        if (cfg.positions != PositionMode::none) {
            double pos = cfg.positions == PositionMode::sinusoidal ? static_cast<double>(s)
                                                                   : static_cast<double>(age_bucket((*ages_ms)[a]));
            sinusoid_row(pos, cfg.dim, pe.data());
            for (Eigen::Index c = 0; c < d; ++c) seq.tokens(static_cast<Eigen::Index>(row), c) += pe[static_cast<std::size_t>(c)];
        }
    }
    seq.mask = build_attention_mask(cfg.heads, cfg.length, cfg.mask);
    for (std::size_t i = 0; i < total; ++i)
        for (std::size_t j = 0; j < total; ++j)
            if (!seq.real[j]) seq.mask.set(i, j, false);
    return seq;
}

struct AttentionCache {
    Mat q, k, v;
    Mat weights;  // softmax weights, exactly zero where masked
};

/// out_i = sum_{j: mask(i,j)} softmax_j(q_i . k_j / sqrt(d)) v_j with q = W_q t,
/// k = W_k t, v = W_v t. Masked pairs never enter the computation.
inline Mat masked_attention_forward(const Mat& tokens, const AttentionMask& mask, const Mat& wq, const Mat& wk,
                                    const Mat& wv, AttentionCache* cache = nullptr) {
    const auto n = tokens.rows();
    if (mask.size() != static_cast<std::size_t>(n)) throw std::invalid_argument("masked_attention: mask shape");
    Mat q = tokens * wq.transpose();
    Mat k = tokens * wk.transpose();
    Mat v = tokens * wv.transpose();
    const double scale = 1.0 / std::sqrt(static_cast<double>(wq.rows()));
    Mat w = Mat::Zero(n, n);
    Mat out = Mat::Zero(n, v.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!mask(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) continue;
            w(i, j) = q.row(i).dot(k.row(j)) * scale;
            best = std::max(best, w(i, j));
            any = true;
        }
        if (!any) throw std::invalid_argument("masked_attention: row " + std::to_string(i) + " attends nothing");
        double z = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!mask(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) continue;
            w(i, j) = std::exp(w(i, j) - best);
            z += w(i, j);
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!mask(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) continue;
            w(i, j) /= z;
            out.row(i).noalias() += w(i, j) * v.row(j);
        }
    }
    if (cache) {
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->weights = std::move(w);
    }
    return out;
}

/// Accumulates gradients of masked_attention_forward given d(out).
inline void masked_attention_backward(const Mat& tokens, const AttentionMask& mask, const Mat& wq, const Mat& wk,
                                      const Mat& wv, const AttentionCache& c, const Mat& dout, Mat& dtokens,
                                      Mat& dwq, Mat& dwk, Mat& dwv) {
    const auto n = tokens.rows();
    const double scale = 1.0 / std::sqrt(static_cast<double>(wq.rows()));
    Mat dq = Mat::Zero(n, c.q.cols());
    Mat dk = Mat::Zero(n, c.k.cols());
    Mat dv = Mat::Zero(n, c.v.cols());
    Vec da(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double weighted = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!mask(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) continue;
            da(j) = dout.row(i).dot(c.v.row(j));
            weighted += c.weights(i, j) * da(j);
            dv.row(j).noalias() += c.weights(i, j) * dout.row(i);
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!mask(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) continue;
            double ds = c.weights(i, j) * (da(j) - weighted) * scale;
            dq.row(i).noalias() += ds * c.k.row(j);
            dk.row(j).noalias() += ds * c.q.row(i);
        }
    }
    dwq.noalias() += dq.transpose() * tokens;
    dwk.noalias() += dk.transpose() * tokens;
    dwv.noalias() += dv.transpose() * tokens;
    dtokens.noalias() += dq * wq + dk * wk + dv * wv;
}

/// (predictor, target) pairs in activity-index space: the last token of the first
/// part predicts every token of the second part.
inline std::vector<std::pair<std::size_t, std::size_t>> long_term_target_pairs(const TemporalConfig& cfg) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (cfg.second_part() == 0) return out;
    for (std::size_t t = cfg.first_part; t < cfg.length; ++t) out.push_back({cfg.first_part - 1, t});
    return out;
}

}  // namespace lignn
