#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lignn/core.hpp"
#include "lignn/params.hpp"
#include "lignn/samplers.hpp"
#include "lignn/temporal.hpp"

namespace lignn {

enum class Aggregator : std::uint8_t { mean = 0, attention = 1, self_attention = 2 };
enum class DecoderKind : std::uint8_t { cosine = 0, mlp = 1, in_batch = 2 };
enum class Side : std::uint8_t { src, dst };

struct ModelConfig {
    bool dual_encoder = false;
    Aggregator aggregator = Aggregator::mean;
    DecoderKind decoder = DecoderKind::cosine;
    std::size_t hops = 1;
    std::size_t proj_dim = 16;
    std::size_t out_dim = 16;
    std::size_t attn_dim = 8;
    bool id_embeddings = false;
    std::size_t id_dim = 32;
    std::vector<std::size_t> mlp_hidden{16};
    double cosine_scale = 5.0;
    double temperature = 1.0;
    std::optional<TemporalConfig> temporal;
    std::map<NodeType, std::size_t> feature_dims;
    std::map<NodeType, std::size_t> node_counts;  // rows of each ID-embedding table

    std::size_t base_dim() const noexcept { return proj_dim + (id_embeddings ? id_dim : 0); }
    std::size_t embedding_dim() const noexcept { return hops == 0 ? base_dim() : out_dim; }

    std::string tower(Side side) const {
        if (!dual_encoder) return "enc.";
        return side == Side::src ? "src." : "dst.";
    }

    void validate() const {
        if (out_dim == 0 || proj_dim == 0) throw std::invalid_argument("ModelConfig: dimensions must be > 0");
        if (aggregator != Aggregator::mean && attn_dim == 0)
            throw std::invalid_argument("ModelConfig: attention needs attn_dim > 0");
        for (auto h : mlp_hidden)
            if (h == 0) throw std::invalid_argument("ModelConfig: mlp hidden sizes must be positive");
        if (!(temperature > 0.0)) throw std::invalid_argument("ModelConfig: temperature must be > 0");
        if (temporal) {
            temporal->validate();
            if (embedding_dim() != temporal->heads * temporal->dim)
                throw std::invalid_argument("ModelConfig: encoder output must equal H*d in temporal mode");
            if (proj_dim != temporal->dim)
                throw std::invalid_argument("ModelConfig: activity tokens reuse the projection, need proj_dim == d");
        }
    }
};

template <typename F>
concept FeatureView = requires(const F& f, const NodeRef& n) {
    { f.features(n) } -> std::convertible_to<std::span<const double>>;
};

/// Sampled neighborhood of one node, as consumed by the encoder.
struct ComputeTree {
    NodeRef node;
    std::vector<ComputeTree> children;

    std::size_t size() const {
        std::size_t n = 1;
        for (const auto& c : children) n += c.size();
        return n;
    }
};

/// Hop h+1 entries hang under the hop-h entry that reached them.
inline ComputeTree tree_from_multihop(const MultiHopSample& s) {
    ComputeTree root{s.seed, {}};
    std::vector<std::pair<NodeRef, ComputeTree*>> level{{s.seed, &root}};
    for (const auto& hop : s.hops) {
        std::unordered_map<NodeRef, ComputeTree*, NodeRefHash> parents;
        for (auto& [n, t] : level) parents.emplace(n, t);
        // Reserve first so child pointers stay valid while the level is filled.
        std::unordered_map<ComputeTree*, std::size_t> counts;
        for (const auto& e : hop.entries) ++counts[parents.at(e.parent)];
        for (auto& [t, c] : counts) t->children.reserve(c);
        std::vector<std::pair<NodeRef, ComputeTree*>> next;
        for (const auto& e : hop.entries) {
            auto* parent = parents.at(e.parent);
            parent->children.push_back({e.node, {}});
            next.push_back({e.node, &parent->children.back()});
        }
        level = std::move(next);
    }
    return root;
}

/// One-level tree: every sampled entry is a direct child of the seed.
inline ComputeTree tree_from_sample(const NeighborSample& s) {
    ComputeTree root{s.seed, {}};
    for (const auto& e : s.entries) root.children.push_back({e.node, {}});
    return root;
}

// ---------------------------------------------------------------------------
// Stand-alone building blocks

struct AggregateResult {
    Vec value;
    bool empty_neighborhood = false;
};

/// Arithmetic (or weight-normalized) mean; empty input gives a zero vector of `dim`.
inline AggregateResult mean_aggregate(const std::vector<Vec>& neighbors, const std::vector<double>* weights = nullptr,
                                      Eigen::Index dim = 0) {
    if (neighbors.empty()) return {Vec::Zero(dim), true};
    const auto d = neighbors.front().size();
    Vec acc = Vec::Zero(d);
    double total = 0.0;
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        if (neighbors[i].size() != d) throw std::invalid_argument("mean_aggregate: dimension mismatch");
        const double w = weights ? (*weights)[i] : 1.0;
        acc.noalias() += w * neighbors[i];
        total += w;
    }
    if (weights && weights->size() != neighbors.size())
        throw std::invalid_argument("mean_aggregate: one weight per neighbor");
    if (!(total > 0.0)) throw std::invalid_argument("mean_aggregate: weights sum to zero");
    return {acc / total, false};
}

/// softmax_i((W_q c).(W_k n_i) / sqrt(d_a)) weighted sum of the neighbors. With
/// `include_center` the center itself joins the key/value set.
inline AggregateResult attention_aggregate(const Vec& center, const std::vector<Vec>& neighbors, const Mat& wq,
                                           const Mat& wk, bool include_center = false) {
    std::vector<const Vec*> members;
    if (include_center) members.push_back(&center);
    for (const auto& n : neighbors) {
        if (n.size() != center.size()) throw std::invalid_argument("attention_aggregate: dimension mismatch");
        members.push_back(&n);
    }
    if (neighbors.empty()) return {center, true};
    const Vec q = wq * center;
    const double scale = 1.0 / std::sqrt(static_cast<double>(wq.rows()));
    Vec s(static_cast<Eigen::Index>(members.size()));
    for (std::size_t j = 0; j < members.size(); ++j) s(static_cast<Eigen::Index>(j)) = q.dot(wk * *members[j]) * scale;
    s = (s.array() - s.maxCoeff()).exp();
    s /= s.sum();
    Vec out = Vec::Zero(center.size());
    for (std::size_t j = 0; j < members.size(); ++j) out.noalias() += s(static_cast<Eigen::Index>(j)) * *members[j];
    return {out, false};
}

inline double decode_cosine(const Vec& u, const Vec& v) {
    if (u.size() != v.size()) throw std::invalid_argument("decode_cosine: dimension mismatch");
    const double nu = u.norm(), nv = v.norm();
    if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("decode_cosine: zero-norm vector");
    return u.dot(v) / (nu * nv);
}

struct BceResult {
    double loss;
    double grad;  // d loss / d score
};

/// Binary cross-entropy on a logit: softplus(s) - y*s, gradient sigmoid(s) - y.
inline BceResult bce_loss(double score, double label) {
    const double softplus = std::max(score, 0.0) + std::log1p(std::exp(-std::abs(score)));
    const double sigmoid = score >= 0 ? 1.0 / (1.0 + std::exp(-score)) : std::exp(score) / (1.0 + std::exp(score));
    return {softplus - label * score, sigmoid - label};
}

struct InBatchResult {
    Mat logits;
    double loss = 0.0;
    Mat dlogits;  // d loss / d logits
};

/// logits[i][j] = src_i . dst_j / temperature; loss = mean_i CE(row i, target i).
inline InBatchResult decode_in_batch_negatives(const std::vector<Vec>& src, const std::vector<Vec>& dst,
                                               double temperature) {
    if (src.size() != dst.size()) throw std::invalid_argument("in-batch decoder: src/dst batch sizes differ");
    if (src.size() < 2) throw std::invalid_argument("in-batch decoder: need B >= 2 for negatives");
    const auto b = static_cast<Eigen::Index>(src.size());
    InBatchResult r;
    r.logits.resize(b, b);
    for (Eigen::Index i = 0; i < b; ++i)
        for (Eigen::Index j = 0; j < b; ++j)
            r.logits(i, j) = src[static_cast<std::size_t>(i)].dot(dst[static_cast<std::size_t>(j)]) / temperature;
    r.dlogits.resize(b, b);
    for (Eigen::Index i = 0; i < b; ++i) {
        const double m = r.logits.row(i).maxCoeff();
        Eigen::RowVectorXd e = (r.logits.row(i).array() - m).exp();
        const double z = e.sum();
        r.loss += (m + std::log(z)) - r.logits(i, i);
        r.dlogits.row(i) = e / z;
        r.dlogits(i, i) -= 1.0;
    }
    r.loss /= static_cast<double>(b);
    r.dlogits /= static_cast<double>(b);
    return r;
}

// ---------------------------------------------------------------------------
// Parameters

namespace detail {

inline void glorot(Mat& m, Rng& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * rng.uniform() - 1.0) * s;
}

inline void uniform(Mat& m, Rng& rng, double s) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * rng.uniform() - 1.0) * s;
}

inline std::string layer_name(const std::string& tower, std::size_t l, const char* what) {
    return tower + "layer" + std::to_string(l) + "." + what;
}

}  // namespace detail

/// Fresh parameters for `cfg`. Towers are "enc." (shared) or "src."/"dst." (dual).
inline ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(mix64(seed ^ 0x5eed));
    ParamSet p;
    std::vector<std::string> towers{cfg.tower(Side::src)};
    if (cfg.dual_encoder) towers.push_back(cfg.tower(Side::dst));
    const auto pd = static_cast<Eigen::Index>(cfg.proj_dim);
    for (const auto& t : towers) {
        for (auto [type, fdim] : cfg.feature_dims) {
            Mat w(pd, static_cast<Eigen::Index>(fdim));
            detail::glorot(w, rng);
            p[t + "proj.W." + std::to_string(type)] = w;
            p[t + "proj.b." + std::to_string(type)] = Mat::Zero(pd, 1);
        }
        if (cfg.id_embeddings) {
            for (auto [type, count] : cfg.node_counts) {
                Mat e(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(cfg.id_dim));
                detail::uniform(e, rng, 0.1);
                p[t + "id." + std::to_string(type)] = e;
            }
        }
        auto in = static_cast<Eigen::Index>(cfg.base_dim());
        for (std::size_t l = 1; l <= cfg.hops; ++l) {
            Mat w(static_cast<Eigen::Index>(cfg.out_dim), 2 * in);
            detail::glorot(w, rng);
            p[detail::layer_name(t, l, "W")] = w;
            p[detail::layer_name(t, l, "b")] = Mat::Zero(static_cast<Eigen::Index>(cfg.out_dim), 1);
            if (cfg.aggregator != Aggregator::mean) {
                Mat q(static_cast<Eigen::Index>(cfg.attn_dim), in), k(static_cast<Eigen::Index>(cfg.attn_dim), in);
                detail::uniform(q, rng, 0.1);
                detail::uniform(k, rng, 0.1);
                p[detail::layer_name(t, l, "Wq")] = q;
                p[detail::layer_name(t, l, "Wk")] = k;
            }
            in = static_cast<Eigen::Index>(cfg.out_dim);
        }
    }
    if (cfg.decoder == DecoderKind::mlp) {
        auto in = static_cast<Eigen::Index>(3 * cfg.embedding_dim());
        for (std::size_t k = 0; k < cfg.mlp_hidden.size(); ++k) {
            Mat w(static_cast<Eigen::Index>(cfg.mlp_hidden[k]), in);
            detail::glorot(w, rng);
            p["dec.mlp.W" + std::to_string(k)] = w;
            p["dec.mlp.b" + std::to_string(k)] = Mat::Zero(w.rows(), 1);
            in = w.rows();
        }
        Mat w(1, in);
        detail::glorot(w, rng);
        p["dec.mlp.Wout"] = w;
        p["dec.mlp.bout"] = Mat::Zero(1, 1);
    }
    if (cfg.temporal) {
        const auto d = static_cast<Eigen::Index>(cfg.temporal->dim);
        for (const char* n : {"tmp.Wq", "tmp.Wk", "tmp.Wv"}) {
            Mat w(d, d);
            detail::glorot(w, rng);
            p[n] = w;
        }
    }
    return p;
}

/// Re-draws the attention query/key matrices (used after feature-only pretraining).
inline void reinit_aggregator_params(const ModelConfig& cfg, ParamSet& p, std::uint64_t seed) {
    Rng rng(mix64(seed ^ 0xa99));
    for (auto& [name, m] : p)
        if (name.find(".layer") != std::string::npos && (name.ends_with(".Wq") || name.ends_with(".Wk")))
            detail::uniform(m, rng, 0.1);
    (void)cfg;
}

// ---------------------------------------------------------------------------
// Encoder

struct EncodeTrace {
    std::vector<NodeRef> nodes;
    std::vector<int> depth;
    std::vector<std::vector<int>> children;
    std::vector<Vec> x;
    std::vector<std::vector<Vec>> h;  // h[level][node]
    std::vector<std::vector<Vec>> agg;

    struct Attention {
        std::vector<int> members;
        Vec q;
        Mat keys;  // one key per member, as rows
        Vec alpha;
        bool empty = true;
    };
    std::vector<std::vector<Attention>> att;
    std::size_t missing_features = 0;

    const Vec& output() const { return h.back()[0]; }
};

namespace detail {

inline void flatten(const ComputeTree& root, EncodeTrace& tr) {
    std::vector<const ComputeTree*> order{&root};
    tr.nodes.push_back(root.node);
    tr.depth.push_back(0);
    tr.children.emplace_back();
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (const auto& c : order[i]->children) {
            tr.children[i].push_back(static_cast<int>(order.size()));
            order.push_back(&c);
            tr.nodes.push_back(c.node);
            tr.depth.push_back(tr.depth[i] + 1);
            tr.children.emplace_back();
        }
    }
}

template <FeatureView F>
Vec node_features(const F& fv, const ModelConfig& cfg, const NodeRef& n, std::size_t* missing) {
    auto it = cfg.feature_dims.find(n.type);
    const auto dim = static_cast<Eigen::Index>(it == cfg.feature_dims.end() ? 0 : it->second);
    std::span<const double> f = fv.features(n);
    if (static_cast<Eigen::Index>(f.size()) != dim) {
        if (missing) ++*missing;
        return Vec::Zero(dim);
    }
    return Eigen::Map<const Vec>(f.data(), dim);
}

inline Vec project(const ParamSet& p, const std::string& tower, NodeType type, const Vec& x) {
    const auto t = std::to_string(type);
    return p.at(tower + "proj.W." + t) * x + p.at(tower + "proj.b." + t);
}

}  // namespace detail

/// GraphSAGE-style encoding of the tree root: node features are projected per
/// type (optionally concatenated with an ID embedding), then each of the L
/// layers combines a node with the aggregate of its children through
/// tanh(W [self; aggregate] + b). Evaluated bottom-up over the flattened tree.
template <FeatureView F>
EncodeTrace sage_encode(const F& fv, const ComputeTree& tree, const ModelConfig& cfg, const ParamSet& p, Side side) {
    const std::string tower = cfg.tower(side);
    EncodeTrace tr;
    detail::flatten(tree, tr);
    const std::size_t n = tr.nodes.size();
    const auto L = cfg.hops;
    tr.x.resize(n);
    tr.h.assign(L + 1, std::vector<Vec>(n));
    tr.agg.assign(L + 1, std::vector<Vec>(n));
    tr.att.assign(L + 1, std::vector<EncodeTrace::Attention>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<std::size_t>(tr.depth[i]) > L) continue;
        const auto& node = tr.nodes[i];
        tr.x[i] = detail::node_features(fv, cfg, node, &tr.missing_features);
        Vec z = detail::project(p, tower, node.type, tr.x[i]);
        if (cfg.id_embeddings) {
            Vec h0(static_cast<Eigen::Index>(cfg.base_dim()));
            h0.head(z.size()) = z;
            const auto name = tower + "id." + std::to_string(node.type);
            if (p.contains(name) && node.index != kNoIndex && node.index < p.at(name).rows())
                h0.tail(static_cast<Eigen::Index>(cfg.id_dim)) = p.at(name).row(node.index).transpose();
            else
                h0.tail(static_cast<Eigen::Index>(cfg.id_dim)).setZero();
            tr.h[0][i] = std::move(h0);
        } else {
            tr.h[0][i] = std::move(z);
        }
    }
    for (std::size_t l = 1; l <= L; ++l) {
        const Mat& w = p.at(detail::layer_name(tower, l, "W"));
        const Mat& b = p.at(detail::layer_name(tower, l, "b"));
        for (std::size_t i = 0; i < n; ++i) {
            if (static_cast<std::size_t>(tr.depth[i]) > L - l) continue;
            const Vec& c = tr.h[l - 1][i];
            const auto& kids = tr.children[i];
            Vec a;
            if (cfg.aggregator == Aggregator::mean) {
                a = Vec::Zero(c.size());
                for (int k : kids) a += tr.h[l - 1][static_cast<std::size_t>(k)];
                if (!kids.empty()) a /= static_cast<double>(kids.size());
            } else {
                auto& at = tr.att[l][i];
                if (cfg.aggregator == Aggregator::self_attention) at.members.push_back(static_cast<int>(i));
                at.members.insert(at.members.end(), kids.begin(), kids.end());
                if (kids.empty()) {
                    a = c;
                    at.empty = true;
                } else {
                    at.empty = false;
                    const Mat& wq = p.at(detail::layer_name(tower, l, "Wq"));
                    const Mat& wk = p.at(detail::layer_name(tower, l, "Wk"));
                    const double scale = 1.0 / std::sqrt(static_cast<double>(wq.rows()));
                    at.q = wq * c;
                    at.keys.resize(static_cast<Eigen::Index>(at.members.size()), wk.rows());
                    Vec s(static_cast<Eigen::Index>(at.members.size()));
                    for (std::size_t j = 0; j < at.members.size(); ++j) {
                        at.keys.row(static_cast<Eigen::Index>(j)) =
                            (wk * tr.h[l - 1][static_cast<std::size_t>(at.members[j])]).transpose();
                        s(static_cast<Eigen::Index>(j)) = at.q.dot(at.keys.row(static_cast<Eigen::Index>(j))) * scale;
                    }
                    s = (s.array() - s.maxCoeff()).exp();
                    at.alpha = s / s.sum();
                    a = Vec::Zero(c.size());
                    for (std::size_t j = 0; j < at.members.size(); ++j)
                        a.noalias() += at.alpha(static_cast<Eigen::Index>(j)) * tr.h[l - 1][static_cast<std::size_t>(at.members[j])];
                }
            }
            Vec cat(c.size() + a.size());
            cat << c, a;
            tr.h[l][i] = (w * cat + b).array().tanh().matrix();
            tr.agg[l][i] = std::move(a);
        }
    }
    return tr;
}

/// Accumulates d(loss)/d(params) for one encoding given d(loss)/d(output).
inline void sage_backward(const EncodeTrace& tr, const Vec& dout, const ModelConfig& cfg, const ParamSet& p,
                          Side side, ParamSet& grad) {
    const std::string tower = cfg.tower(side);
    const std::size_t n = tr.nodes.size();
    const auto L = cfg.hops;
    std::vector<std::vector<Vec>> dh(L + 1, std::vector<Vec>(n));
    dh[L][0] = dout;
    auto add = [](Vec& acc, const Vec& v) {
        if (acc.size() == 0)
            acc = v;
        else
            acc += v;
    };
    for (std::size_t l = L; l >= 1; --l) {
        const Mat& w = p.at(detail::layer_name(tower, l, "W"));
        Mat& gw = grad.at(detail::layer_name(tower, l, "W"));
        Mat& gb = grad.at(detail::layer_name(tower, l, "b"));
        for (std::size_t i = 0; i < n; ++i) {
            if (dh[l][i].size() == 0) continue;
            const Vec& hv = tr.h[l][i];
            const Vec& c = tr.h[l - 1][i];
            const Vec& a = tr.agg[l][i];
            Vec dpre = dh[l][i].array() * (1.0 - hv.array().square());
            Vec cat(c.size() + a.size());
            cat << c, a;
            gw.noalias() += dpre * cat.transpose();
            gb.col(0) += dpre;
            Vec dcat = w.transpose() * dpre;
            add(dh[l - 1][i], dcat.head(c.size()));
            Vec da = dcat.tail(a.size());
            const auto& kids = tr.children[i];
            if (cfg.aggregator == Aggregator::mean) {
                if (kids.empty()) continue;
                Vec share = da / static_cast<double>(kids.size());
                for (int k : kids) add(dh[l - 1][static_cast<std::size_t>(k)], share);
            } else {
                const auto& at = tr.att[l][i];
                if (at.empty) {
                    add(dh[l - 1][i], da);
                    continue;
                }
                const Mat& wq = p.at(detail::layer_name(tower, l, "Wq"));
                const Mat& wk = p.at(detail::layer_name(tower, l, "Wk"));
                Mat& gq = grad.at(detail::layer_name(tower, l, "Wq"));
                Mat& gk = grad.at(detail::layer_name(tower, l, "Wk"));
                const double scale = 1.0 / std::sqrt(static_cast<double>(wq.rows()));
                const auto m = at.members.size();
                Vec dalpha(static_cast<Eigen::Index>(m));
                for (std::size_t j = 0; j < m; ++j)
                    dalpha(static_cast<Eigen::Index>(j)) = da.dot(tr.h[l - 1][static_cast<std::size_t>(at.members[j])]);
                const double mean = at.alpha.dot(dalpha);
                Vec dq = Vec::Zero(at.q.size());
                for (std::size_t j = 0; j < m; ++j) {
                    const auto jj = static_cast<Eigen::Index>(j);
                    const double ds = at.alpha(jj) * (dalpha(jj) - mean) * scale;
                    const Vec& hj = tr.h[l - 1][static_cast<std::size_t>(at.members[j])];
                    dq.noalias() += ds * at.keys.row(jj).transpose();
                    Vec dk = ds * at.q;
                    gk.noalias() += dk * hj.transpose();
                    add(dh[l - 1][static_cast<std::size_t>(at.members[j])], at.alpha(jj) * da + wk.transpose() * dk);
                }
                gq.noalias() += dq * c.transpose();
                add(dh[l - 1][i], wq.transpose() * dq);
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (dh[0][i].size() == 0) continue;
        const auto& node = tr.nodes[i];
        const auto t = std::to_string(node.type);
        const auto pd = static_cast<Eigen::Index>(cfg.proj_dim);
        Vec dz = dh[0][i].head(pd);
        grad.at(tower + "proj.W." + t).noalias() += dz * tr.x[i].transpose();
        grad.at(tower + "proj.b." + t).col(0) += dz;
        if (cfg.id_embeddings) {
            const auto name = tower + "id." + t;
            if (grad.contains(name) && node.index != kNoIndex && node.index < grad.at(name).rows())
                grad.at(name).row(node.index) += dh[0][i].tail(static_cast<Eigen::Index>(cfg.id_dim)).transpose();
        }
    }
}

// ---------------------------------------------------------------------------
// Link prediction

/// Source-side input: the compute tree plus, in temporal mode, the activity history
/// (oldest first) observed before `query_ts`.
struct SrcInput {
    ComputeTree tree;
    std::vector<NodeRef> activities;
    std::vector<Timestamp> activity_ts;
    Timestamp query_ts = 0;
};

struct LinkPair {
    std::size_t src = 0;
    std::size_t dst = 0;
    double label = 0.0;
    bool real = true;  // false for padded slots, excluded from the loss
};

/// Pairs index into de-duplicated source and destination inputs so a source
/// shared by several pairs is encoded once.
struct LinkBatch {
    std::vector<SrcInput> srcs;
    std::vector<ComputeTree> dsts;
    std::vector<LinkPair> pairs;
};

struct TemporalTrace {
    TemporalSequence seq;
    AttentionCache cache;
    Mat out;
    std::vector<Vec> act_x;     // activity features
    std::vector<Vec> act_proj;  // pre-attention activity tokens (long-term targets)
    std::vector<NodeType> act_type;
    std::vector<std::ptrdiff_t> slot_activity;  // per activity slot: activity index or -1
    bool long_term = false;
    double long_term_loss = 0.0;
};

struct SrcEncoding {
    EncodeTrace enc;
    std::optional<TemporalTrace> temporal;
    Vec embedding;
};

template <FeatureView F>
SrcEncoding encode_src(const F& fv, const SrcInput& in, const ModelConfig& cfg, const ParamSet& p) {
    SrcEncoding out;
    out.enc = sage_encode(fv, in.tree, cfg, p, Side::src);
    if (!cfg.temporal) {
        out.embedding = out.enc.output();
        return out;
    }
    const auto& tc = *cfg.temporal;
    const std::string tower = cfg.tower(Side::src);
    TemporalTrace tt;
    std::vector<Timestamp> ages;
    for (std::size_t a = 0; a < in.activities.size(); ++a) {
        const auto& node = in.activities[a];
        tt.act_x.push_back(detail::node_features(fv, cfg, node, &out.enc.missing_features));
        tt.act_proj.push_back(detail::project(p, tower, node.type, tt.act_x.back()));
        tt.act_type.push_back(node.type);
        ages.push_back(in.query_ts - (a < in.activity_ts.size() ? in.activity_ts[a] : in.query_ts));
    }
    tt.seq = assemble_temporal_sequence(out.enc.output(), tt.act_proj, tc, &ages);
    const std::size_t kept = std::min(in.activities.size(), tc.length);
    const std::size_t skip = in.activities.size() - kept;
    const std::size_t pad = tc.length - kept;
    tt.slot_activity.assign(tc.length, -1);
    for (std::size_t s = pad; s < tc.length; ++s) tt.slot_activity[s] = static_cast<std::ptrdiff_t>(skip + s - pad);

    tt.out = tt.seq.tokens +
             masked_attention_forward(tt.seq.tokens, tt.seq.mask, p.at("tmp.Wq"), p.at("tmp.Wk"), p.at("tmp.Wv"), &tt.cache);
    const auto d = static_cast<Eigen::Index>(tc.dim);
    out.embedding.resize(static_cast<Eigen::Index>(tc.heads) * d);
    for (std::size_t h = 0; h < tc.heads; ++h)
        out.embedding.segment(static_cast<Eigen::Index>(h) * d, d) = tt.out.row(static_cast<Eigen::Index>(h)).transpose();

    if (tc.second_part() > 0 && tc.long_term_weight != 0.0 && tt.slot_activity[tc.first_part - 1] >= 0) {
        const Vec o = tt.out.row(static_cast<Eigen::Index>(tc.heads + tc.first_part - 1)).transpose();
        double total = 0.0;
        std::size_t count = 0;
        for (auto [pred, target] : long_term_target_pairs(tc)) {
            (void)pred;
            auto a = tt.slot_activity[target];
            if (a < 0) continue;
            total += (o - tt.act_proj[static_cast<std::size_t>(a)]).squaredNorm() / static_cast<double>(tc.dim);
            ++count;
        }
        if (count) {
            tt.long_term = true;
            tt.long_term_loss = total / static_cast<double>(count);
        }
    }
    out.temporal = std::move(tt);
    return out;
}

/// Backward through the temporal head (if any) and the source encoder.
/// `dlong_term` scales the gradient of this source's long-term loss.
inline void src_backward(const SrcEncoding& e, const Vec& demb, double dlong_term, const ModelConfig& cfg,
                         const ParamSet& p, ParamSet& grad) {
    if (!cfg.temporal) {
        sage_backward(e.enc, demb, cfg, p, Side::src, grad);
        return;
    }
    const auto& tc = *cfg.temporal;
    const auto& tt = *e.temporal;
    const std::string tower = cfg.tower(Side::src);
    const auto d = static_cast<Eigen::Index>(tc.dim);
    Mat dout = Mat::Zero(tt.out.rows(), tt.out.cols());
    for (std::size_t h = 0; h < tc.heads; ++h)
        dout.row(static_cast<Eigen::Index>(h)) = demb.segment(static_cast<Eigen::Index>(h) * d, d).transpose();
    std::vector<Vec> dproj(tt.act_proj.size(), Vec::Zero(d));
    if (tt.long_term && dlong_term != 0.0) {
        const auto pred_row = static_cast<Eigen::Index>(tc.heads + tc.first_part - 1);
        const Vec o = tt.out.row(pred_row).transpose();
        std::vector<std::size_t> targets;
        for (auto [pred, target] : long_term_target_pairs(tc)) {
            (void)pred;
            if (tt.slot_activity[target] >= 0) targets.push_back(static_cast<std::size_t>(tt.slot_activity[target]));
        }
        const double coef = dlong_term * 2.0 / (static_cast<double>(tc.dim) * static_cast<double>(targets.size()));
        for (auto a : targets) {
            Vec diff = coef * (o - tt.act_proj[a]);
            dout.row(pred_row) += diff.transpose();
            dproj[a] -= diff;
        }
    }
    Mat dtokens = dout;  // residual path
    masked_attention_backward(tt.seq.tokens, tt.seq.mask, p.at("tmp.Wq"), p.at("tmp.Wk"), p.at("tmp.Wv"), tt.cache,
                              dout, dtokens, grad.at("tmp.Wq"), grad.at("tmp.Wk"), grad.at("tmp.Wv"));
    Vec dg(static_cast<Eigen::Index>(tc.heads) * d);
    for (std::size_t h = 0; h < tc.heads; ++h)
        dg.segment(static_cast<Eigen::Index>(h) * d, d) = dtokens.row(static_cast<Eigen::Index>(h)).transpose();
    for (std::size_t s = 0; s < tc.length; ++s) {
        auto a = tt.slot_activity[s];
        if (a >= 0) dproj[static_cast<std::size_t>(a)] += dtokens.row(static_cast<Eigen::Index>(tc.heads + s)).transpose();
    }
    for (std::size_t a = 0; a < dproj.size(); ++a) {
        const auto t = std::to_string(tt.act_type[a]);
        grad.at(tower + "proj.W." + t).noalias() += dproj[a] * tt.act_x[a].transpose();
        grad.at(tower + "proj.b." + t).col(0) += dproj[a];
    }
    sage_backward(e.enc, dg, cfg, p, Side::src, grad);
}

struct MlpTrace {
    std::vector<Vec> act;  // act[0] = [u; v; u*v], act[k] = hidden k
    double logit = 0.0;
};

inline MlpTrace mlp_forward(const ModelConfig& cfg, const ParamSet& p, const Vec& u, const Vec& v) {
    MlpTrace t;
    Vec x(3 * u.size());
    x << u, v, u.cwiseProduct(v);
    t.act.push_back(std::move(x));
    for (std::size_t k = 0; k < cfg.mlp_hidden.size(); ++k) {
        const auto s = std::to_string(k);
        t.act.push_back((p.at("dec.mlp.W" + s) * t.act.back() + p.at("dec.mlp.b" + s)).array().tanh().matrix());
    }
    t.logit = (p.at("dec.mlp.Wout") * t.act.back())(0, 0) + p.at("dec.mlp.bout")(0, 0);
    return t;
}

/// Returns (du, dv) and accumulates decoder gradients for d(loss)/d(logit) = g.
inline std::pair<Vec, Vec> mlp_backward(const ModelConfig& cfg, const ParamSet& p, const MlpTrace& t, const Vec& u,
                                        const Vec& v, double g, ParamSet& grad) {
    grad.at("dec.mlp.Wout").noalias() += g * t.act.back().transpose();
    grad.at("dec.mlp.bout")(0, 0) += g;
    Vec dact = g * p.at("dec.mlp.Wout").row(0).transpose();
    for (std::size_t k = cfg.mlp_hidden.size(); k-- > 0;) {
        const auto s = std::to_string(k);
        const Vec& out = t.act[k + 1];
        Vec dpre = dact.array() * (1.0 - out.array().square());
        grad.at("dec.mlp.W" + s).noalias() += dpre * t.act[k].transpose();
        grad.at("dec.mlp.b" + s).col(0) += dpre;
        dact = p.at("dec.mlp.W" + s).transpose() * dpre;
    }
    const auto n = u.size();
    Vec du = dact.head(n) + dact.tail(n).cwiseProduct(v);
    Vec dv = dact.segment(n, n) + dact.tail(n).cwiseProduct(u);
    return {du, dv};
}

/// Score used for ranking: cosine similarity, MLP logit, or scaled dot product.
inline double link_score(const ModelConfig& cfg, const ParamSet& p, const Vec& u, const Vec& v) {
    switch (cfg.decoder) {
        case DecoderKind::cosine: return decode_cosine(u, v);
        case DecoderKind::mlp: return mlp_forward(cfg, p, u, v).logit;
        case DecoderKind::in_batch: return u.dot(v) / cfg.temperature;
    }
    return 0.0;
}

struct BatchLoss {
    double loss = 0.0;
    double main_loss = 0.0;
    double long_term_loss = 0.0;
    std::size_t real_pairs = 0;
    std::vector<double> scores;  // per pair, NaN for padded pairs
    std::size_t missing_features = 0;
};

/// Mean link-prediction loss over the real pairs of a batch, plus the weighted
/// mean long-term loss over sources that have one. Accumulates gradients into
/// `grad` (shaped like `p`) when given.
template <FeatureView F>
BatchLoss batch_loss(const F& fv, const LinkBatch& batch, const ModelConfig& cfg, const ParamSet& p,
                     ParamSet* grad = nullptr) {
    BatchLoss r;
    std::vector<bool> src_used(batch.srcs.size(), false), dst_used(batch.dsts.size(), false);
    for (const auto& pr : batch.pairs) {
        if (!pr.real) continue;
        ++r.real_pairs;
        src_used.at(pr.src) = true;
        dst_used.at(pr.dst) = true;
    }
    r.scores.assign(batch.pairs.size(), std::numeric_limits<double>::quiet_NaN());
    if (r.real_pairs == 0) return r;

    std::vector<std::optional<SrcEncoding>> src(batch.srcs.size());
    std::vector<std::optional<EncodeTrace>> dst(batch.dsts.size());
    for (std::size_t i = 0; i < src.size(); ++i)
        if (src_used[i]) {
            src[i] = encode_src(fv, batch.srcs[i], cfg, p);
            r.missing_features += src[i]->enc.missing_features;
        }
    for (std::size_t i = 0; i < dst.size(); ++i)
        if (dst_used[i]) {
            dst[i] = sage_encode(fv, batch.dsts[i], cfg, p, Side::dst);
            r.missing_features += dst[i]->missing_features;
        }

    std::vector<Vec> dsrc(src.size()), ddst(dst.size());
    for (std::size_t i = 0; i < src.size(); ++i)
        if (src[i]) dsrc[i] = Vec::Zero(src[i]->embedding.size());
    for (std::size_t i = 0; i < dst.size(); ++i)
        if (dst[i]) ddst[i] = Vec::Zero(dst[i]->output().size());
    const double inv = 1.0 / static_cast<double>(r.real_pairs);

    if (cfg.decoder == DecoderKind::in_batch) {
        std::vector<std::size_t> rows;
        std::vector<Vec> us, vs;
        for (std::size_t k = 0; k < batch.pairs.size(); ++k) {
            const auto& pr = batch.pairs[k];
            if (!pr.real) continue;
            if (pr.label <= 0.5) {
                r.scores[k] = src[pr.src]->embedding.dot(dst[pr.dst]->output()) / cfg.temperature;
                continue;
            }
            rows.push_back(k);
            us.push_back(src[pr.src]->embedding);
            vs.push_back(dst[pr.dst]->output());
        }
        // Labels only select the positives; every other positive is a negative.
        InBatchResult ib;
        if (rows.size() >= 2) ib = decode_in_batch_negatives(us, vs, cfg.temperature);
        r.main_loss = ib.loss;
        if (rows.size() < 2) rows.clear();
        for (std::size_t a = 0; a < rows.size(); ++a) {
            r.scores[rows[a]] = ib.logits(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a));
            if (!grad) continue;
            for (std::size_t b = 0; b < rows.size(); ++b) {
                const double g = ib.dlogits(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) / cfg.temperature;
                dsrc[batch.pairs[rows[a]].src] += g * vs[b];
                ddst[batch.pairs[rows[b]].dst] += g * us[a];
            }
        }
    } else {
        for (std::size_t k = 0; k < batch.pairs.size(); ++k) {
            const auto& pr = batch.pairs[k];
            if (!pr.real) continue;
            const Vec& u = src[pr.src]->embedding;
            const Vec& v = dst[pr.dst]->output();
            if (cfg.decoder == DecoderKind::cosine) {
                const double nu = u.norm(), nv = v.norm();
                if (nu == 0.0 || nv == 0.0) throw std::domain_error("cosine decoder: zero-norm embedding");
                const double c = u.dot(v) / (nu * nv);
                r.scores[k] = c;
                auto bce = bce_loss(cfg.cosine_scale * c, pr.label);
                r.main_loss += bce.loss * inv;
                if (grad) {
                    const double dc = bce.grad * cfg.cosine_scale * inv;
                    dsrc[pr.src] += dc * (v / (nu * nv) - c * u / (nu * nu));
                    ddst[pr.dst] += dc * (u / (nu * nv) - c * v / (nv * nv));
                }
            } else {
                auto t = mlp_forward(cfg, p, u, v);
                r.scores[k] = t.logit;
                auto bce = bce_loss(t.logit, pr.label);
                r.main_loss += bce.loss * inv;
                if (grad) {
                    auto [du, dv] = mlp_backward(cfg, p, t, u, v, bce.grad * inv, *grad);
                    dsrc[pr.src] += du;
                    ddst[pr.dst] += dv;
                }
            }
        }
    }

    double lt_weight = 0.0;
    if (cfg.temporal) {
        std::size_t count = 0;
        double total = 0.0;
        for (const auto& s : src)
            if (s && s->temporal && s->temporal->long_term) {
                total += s->temporal->long_term_loss;
                ++count;
            }
        if (count) {
            r.long_term_loss = total / static_cast<double>(count);
            lt_weight = cfg.temporal->long_term_weight / static_cast<double>(count);
        }
    }
    r.loss = r.main_loss + (cfg.temporal ? cfg.temporal->long_term_weight * r.long_term_loss : 0.0);

    if (grad) {
        for (std::size_t i = 0; i < src.size(); ++i)
            if (src[i]) src_backward(*src[i], dsrc[i], lt_weight, cfg, p, *grad);
        for (std::size_t i = 0; i < dst.size(); ++i)
            if (dst[i]) sage_backward(*dst[i], ddst[i], cfg, p, Side::dst, *grad);
    }
    return r;
}

/// Plain SGD step.
inline void sgd_update(ParamSet& p, const ParamSet& grad, double lr) { p.add_scaled(grad, -lr); }

// ---------------------------------------------------------------------------
// Model files: the checkpoint carries the configuration as a "meta.config" tensor.

namespace detail {

inline Mat encode_config(const ModelConfig& c) {
    std::vector<double> v{1.0,
                          c.dual_encoder ? 1.0 : 0.0,
                          static_cast<double>(c.aggregator),
                          static_cast<double>(c.decoder),
                          static_cast<double>(c.hops),
                          static_cast<double>(c.proj_dim),
                          static_cast<double>(c.out_dim),
                          static_cast<double>(c.attn_dim),
                          c.id_embeddings ? 1.0 : 0.0,
                          static_cast<double>(c.id_dim),
                          c.cosine_scale,
                          c.temperature,
                          static_cast<double>(c.mlp_hidden.size())};
    for (auto h : c.mlp_hidden) v.push_back(static_cast<double>(h));
    v.push_back(c.temporal ? 1.0 : 0.0);
    if (c.temporal) {
        const auto& t = *c.temporal;
        for (double x : {static_cast<double>(t.heads), static_cast<double>(t.dim), static_cast<double>(t.length),
                         static_cast<double>(t.first_part), static_cast<double>(t.mask),
                         static_cast<double>(t.positions), t.long_term_weight,
                         static_cast<double>(t.activity_edge_type), t.use_dst_neighbors ? 1.0 : 0.0})
            v.push_back(x);
    }
    v.push_back(static_cast<double>(c.feature_dims.size()));
    for (auto [t, d] : c.feature_dims) {
        v.push_back(t);
        v.push_back(static_cast<double>(d));
    }
    v.push_back(static_cast<double>(c.node_counts.size()));
    for (auto [t, n] : c.node_counts) {
        v.push_back(t);
        v.push_back(static_cast<double>(n));
    }
    Mat m(1, static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
    return m;
}

inline ModelConfig decode_config(const Mat& m) {
    std::size_t i = 0;
    auto next = [&]() {
        if (static_cast<Eigen::Index>(i) >= m.cols()) throw Error("model file: truncated meta.config");
        return m(0, static_cast<Eigen::Index>(i++));
    };
    auto size = [&]() { return static_cast<std::size_t>(next()); };
    if (next() != 1.0) throw Error("model file: unknown meta.config version");
    ModelConfig c;
    c.dual_encoder = next() != 0.0;
    c.aggregator = static_cast<Aggregator>(size());
    c.decoder = static_cast<DecoderKind>(size());
    c.hops = size();
    c.proj_dim = size();
    c.out_dim = size();
    c.attn_dim = size();
    c.id_embeddings = next() != 0.0;
    c.id_dim = size();
    c.cosine_scale = next();
    c.temperature = next();
    c.mlp_hidden.resize(size());
    for (auto& h : c.mlp_hidden) h = size();
    if (next() != 0.0) {
        TemporalConfig t;
        t.heads = size();
        t.dim = size();
        t.length = size();
        t.first_part = size();
        t.mask = static_cast<MaskMode>(size());
        t.positions = static_cast<PositionMode>(size());
        t.long_term_weight = next();
        t.activity_edge_type = static_cast<EdgeType>(size());
        t.use_dst_neighbors = next() != 0.0;
        c.temporal = t;
    }
    for (auto n = size(); n > 0; --n) {
        auto t = static_cast<NodeType>(size());
        c.feature_dims[t] = size();
    }
    for (auto n = size(); n > 0; --n) {
        auto t = static_cast<NodeType>(size());
        c.node_counts[t] = size();
    }
    return c;
}

}  // namespace detail

struct Model {
    ModelConfig config;
    ParamSet params;
};

inline void save_model(std::ostream& out, const Model& m) {
    ParamSet all = m.params;
    all["meta.config"] = detail::encode_config(m.config);
    checkpoint::write(out, all);
}

inline Model load_model(std::istream& in) {
    ParamSet all = checkpoint::read(in);
    if (!all.contains("meta.config")) throw Error("model file: missing meta.config");
    Model m;
    m.config = detail::decode_config(all.at("meta.config"));
    m.config.validate();
    ParamSet expected = init_params(m.config, 0);
    for (auto& [name, t] : expected) {
        if (!all.contains(name)) throw Error("model file: missing tensor " + name);
        const Mat& got = all.at(name);
        if (got.rows() != t.rows() || got.cols() != t.cols()) throw Error("model file: shape mismatch for " + name);
        m.params[name] = got;
    }
    return m;
}

/// Parameter names owned by each encoder tower (for dual/single accounting).
inline std::size_t tower_param_count(const ParamSet& p, const std::string& tower) {
    std::size_t n = 0;
    for (auto& [name, m] : p)
        if (name.starts_with(tower)) n += static_cast<std::size_t>(m.size());
    return n;
}

}  // namespace lignn
