#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lignn/core.hpp"
#include "lignn/model.hpp"
#include "lignn/samplers.hpp"
#include "lignn/tsv.hpp"

namespace lignn {

struct TrainingRecord {
    NodeRef member;
    NodeRef item;
    double label = 0.0;
    Timestamp ts = 0;

    friend bool operator==(const TrainingRecord&, const TrainingRecord&) = default;
};

/// `member_type<TAB>member_id<TAB>item_type<TAB>item_id<TAB>label<TAB>timestamp_ms`.
inline std::vector<TrainingRecord> read_records(std::istream& in, std::vector<std::string>* errors = nullptr) {
    std::vector<TrainingRecord> out;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (tsv::skippable(line)) continue;
        auto f = tsv::split(line);
        if (f.size() == 6) {
            auto mt = tsv::parse<NodeType>(f[0]);
            auto mi = tsv::parse<NodeId>(f[1]);
            auto it = tsv::parse<NodeType>(f[2]);
            auto ii = tsv::parse<NodeId>(f[3]);
            auto lb = tsv::parse<double>(f[4]);
            auto ts = tsv::parse<Timestamp>(f[5]);
            if (mt && mi && it && ii && lb && ts && (*lb == 0.0 || *lb == 1.0)) {
                out.push_back({{*mt, *mi, kNoIndex}, {*it, *ii, kNoIndex}, *lb, *ts});
                continue;
            }
        }
        if (errors) errors->push_back("records:" + std::to_string(no) + " malformed");
    }
    return out;
}

inline void write_records(std::ostream& out, std::span<const TrainingRecord> records) {
    for (const auto& r : records)
        out << r.member.type << '\t' << r.member.id << '\t' << r.item.type << '\t' << r.item.id << '\t'
            << (r.label > 0.5 ? 1 : 0) << '\t' << r.ts << '\n';
}

/// Area under the ROC curve (Mann-Whitney U with averaged tie ranks).
/// NaN when either class is absent.
inline double auc(std::span<const double> scores, std::span<const double> labels) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] > 0.5) {
                pos_rank_sum += rank;
                ++pos;
            }
        i = j;
    }
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();
    const double p = static_cast<double>(pos);
    return (pos_rank_sum - p * (p + 1) / 2) / (p * static_cast<double>(neg));
}

struct SamplerSpec {
    Strategy strategy = Strategy::random;
    std::vector<std::size_t> fanouts{10};
    std::map<EdgeType, double> multipliers;
    PPRConfig ppr;
    WalkConfig walk;
    std::uint64_t rng_seed = 1;
    std::vector<EdgeType> edge_types;
};

/// Counts what a graph engine would be asked for.
struct EngineCounters {
    std::atomic<std::uint64_t> member_queries{0};
    std::atomic<std::uint64_t> item_queries{0};
    std::atomic<std::uint64_t> sampled_neighbors{0};

    std::uint64_t queries() const { return member_queries + item_queries; }
    void reset() {
        member_queries = 0;
        item_queries = 0;
        sampled_neighbors = 0;
    }
};

/// Fetches compute trees through a sampler. Thread-safe for concurrent callers
/// as long as the neighbor count is not changed meanwhile.
template <GraphView G>
class ComputeGraphSource {
public:
    ComputeGraphSource(const G& g, SamplerSpec spec) : g_(g), spec_(std::move(spec)) {}

    const G& graph() const noexcept { return g_; }
    const SamplerSpec& spec() const noexcept { return spec_; }
    EngineCounters& counters() noexcept { return counters_; }
    const EngineCounters& counters() const noexcept { return counters_; }

    /// First-hop fan-out (or top-k for PPR strategies).
    void set_neighbor_count(std::size_t n) {
        if (!spec_.fanouts.empty()) spec_.fanouts[0] = n;
        spec_.ppr.top_k = std::max<std::size_t>(1, n);
        spec_.walk.top_k = std::max<std::size_t>(1, n);
    }
    std::size_t neighbor_count() const { return spec_.fanouts.empty() ? 0 : spec_.fanouts[0]; }

    ComputeTree tree(const NodeRef& node, Timestamp before = kTimeInfinity) const {
        auto resolved = g_.resolve(node);
        if (!resolved) return {node, {}};
        ComputeTree t;
        switch (spec_.strategy) {
            case Strategy::random:
            case Strategy::weighted: {
                if (spec_.fanouts.empty()) return {*resolved, {}};
                auto s = sample_multihop_one(g_, *resolved, spec_.fanouts, spec_.rng_seed, spec_.edge_types,
                                             spec_.strategy == Strategy::weighted ? &spec_.multipliers : nullptr);
                t = tree_from_multihop(*s.value);
                break;
            }
            case Strategy::ppr_push: {
                auto cfg = spec_.ppr;
                cfg.edge_types = spec_.edge_types;
                t = tree_from_sample(ppr_forward_push(g_, *resolved, cfg).sample);
                break;
            }
            case Strategy::ppr_two_hop: {
                auto cfg = spec_.walk;
                cfg.edge_types = spec_.edge_types;
                t = tree_from_sample(ppr_two_hop_random_walk(g_, *resolved, cfg).sample);
                break;
            }
            case Strategy::temporal: {
                const EdgeType et = spec_.edge_types.empty() ? EdgeType{0} : spec_.edge_types.front();
                const std::size_t n = spec_.fanouts.empty() ? 1 : std::max<std::size_t>(1, spec_.fanouts[0]);
                t = tree_from_sample(to_sample(*resolved, sample_temporal_last_n(g_, *resolved, et, before, n)));
                break;
            }
        }
        counters_.sampled_neighbors += t.size() - 1;
        return t;
    }

    ComputeTree member_tree(const NodeRef& node, Timestamp before = kTimeInfinity) const {
        ++counters_.member_queries;
        return tree(node, before);
    }
    ComputeTree item_tree(const NodeRef& node, Timestamp before = kTimeInfinity) const {
        ++counters_.item_queries;
        return tree(node, before);
    }

private:
    const G& g_;
    SamplerSpec spec_;
    mutable EngineCounters counters_;
};

/// Source-side input for one member at query time `ts`. In temporal mode the
/// activity history is the member's last N interactions strictly before `ts`.
template <GraphView G>
SrcInput make_src_input(const ComputeGraphSource<G>& src, const ModelConfig& cfg, const NodeRef& member,
                        Timestamp ts, const ComputeTree* dst_tree = nullptr) {
    SrcInput in;
    in.tree = src.member_tree(member);
    in.query_ts = ts;
    if (cfg.temporal) {
        auto resolved = src.graph().resolve(member);
        if (resolved) {
            for (auto& e : sample_temporal_last_n(src.graph(), *resolved, cfg.temporal->activity_edge_type, ts,
                                                  cfg.temporal->length)) {
                in.activities.push_back(e.node);
                in.activity_ts.push_back(e.ts);
            }
        }
        if (cfg.temporal->use_dst_neighbors && dst_tree) {
            for (const auto& c : dst_tree->children) {
                in.activities.push_back(c.node);
                in.activity_ts.push_back(ts);
            }
        }
    }
    return in;
}

/// One pair per record; every record fetches its own member and item trees.
template <GraphView G>
LinkBatch make_pair_batch(const ComputeGraphSource<G>& src, const ModelConfig& cfg,
                          std::span<const TrainingRecord> records) {
    LinkBatch b;
    for (const auto& r : records) {
        b.dsts.push_back(src.item_tree(r.item));
        b.srcs.push_back(make_src_input(src, cfg, r.member, r.ts, &b.dsts.back()));
        b.pairs.push_back({b.srcs.size() - 1, b.dsts.size() - 1, r.label, true});
    }
    return b;
}

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 5;
    std::size_t batch_size = 32;
    std::uint64_t shuffle_seed = 1;
};

/// Deterministic Fisher-Yates shuffle keyed by (seed, epoch).
template <typename T>
void keyed_shuffle(std::vector<T>& v, std::uint64_t seed, std::uint64_t epoch) {
    Rng rng(mix64(seed ^ mix64(epoch + 1)));
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng.below(i))]);
}

/// Scores every record with the current parameters. Destination trees (and source
/// embeddings outside temporal mode) are computed once per node.
template <GraphView G>
std::vector<double> score_records(const ComputeGraphSource<G>& src, const ModelConfig& cfg, const ParamSet& p,
                                  std::span<const TrainingRecord> records) {
    const auto& g = src.graph();
    std::map<NodeRef, Vec> dst_cache, src_cache;
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        auto dit = dst_cache.find(r.item);
        ComputeTree dtree;
        if (dit == dst_cache.end() || (cfg.temporal && cfg.temporal->use_dst_neighbors)) {
            dtree = src.item_tree(r.item);
            if (dit == dst_cache.end())
                dit = dst_cache.emplace(r.item, sage_encode(g, dtree, cfg, p, Side::dst).output()).first;
        }
        Vec u;
        if (cfg.temporal) {
            u = encode_src(g, make_src_input(src, cfg, r.member, r.ts, &dtree), cfg, p).embedding;
        } else {
            auto sit = src_cache.find(r.member);
            if (sit == src_cache.end())
                sit = src_cache.emplace(r.member, encode_src(g, make_src_input(src, cfg, r.member, r.ts), cfg, p).embedding)
                          .first;
            u = sit->second;
        }
        double s = 0.0;
        try {
            s = link_score(cfg, p, u, dit->second);
        } catch (const std::invalid_argument&) {
            s = 0.0;  // zero-norm embedding under the cosine decoder
        }
        out.push_back(s);
    }
    return out;
}

template <GraphView G>
double evaluate_auc(const ComputeGraphSource<G>& src, const ModelConfig& cfg, const ParamSet& p,
                    std::span<const TrainingRecord> records) {
    auto scores = score_records(src, cfg, p, records);
    std::vector<double> labels;
    for (const auto& r : records) labels.push_back(r.label);
    return auc(scores, labels);
}

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::size_t updates = 0;
};

/// Plain per-pair mini-batch SGD over shuffled records.
template <GraphView G>
EpochStats train_epoch(const ComputeGraphSource<G>& src, const ModelConfig& cfg, ParamSet& p,
                       std::vector<TrainingRecord> records, const TrainConfig& tc, std::size_t epoch) {
    keyed_shuffle(records, tc.shuffle_seed, epoch);
    EpochStats st;
    st.epoch = epoch;
    const std::size_t bs = std::max<std::size_t>(1, tc.batch_size);
    for (std::size_t i = 0; i < records.size(); i += bs) {
        auto slice = std::span<const TrainingRecord>(records).subspan(i, std::min(bs, records.size() - i));
        if (cfg.decoder == DecoderKind::in_batch && slice.size() < 2) continue;
        auto batch = make_pair_batch(src, cfg, slice);
        ParamSet grad = p.zeros_like();
        auto r = batch_loss(src.graph(), batch, cfg, p, &grad);
        sgd_update(p, grad, tc.learning_rate);
        st.mean_loss += r.loss;
        ++st.updates;
    }
    if (st.updates) st.mean_loss /= static_cast<double>(st.updates);
    return st;
}

}  // namespace lignn
