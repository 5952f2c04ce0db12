#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "lignn/model.hpp"
#include "lignn/training.hpp"

namespace lignn {

// ---------------------------------------------------------------------------
// Grouping & slicing

inline constexpr NodeId kDummyItem = std::numeric_limits<NodeId>::max();

/// One member with `group_size` item slots; padded slots carry kDummyItem and mask=false.
struct GroupedBatch {
    NodeRef member;
    std::vector<NodeRef> items;
    std::vector<double> labels;
    std::vector<Timestamp> timestamps;
    std::vector<bool> mask;

    std::size_t real_count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)); }
};

/// Groups records by member (members in first-appearance order, records in input
/// order) and cuts each group into ceil(count / group_size) padded batches.
inline std::vector<GroupedBatch> group_and_slice(std::span<const TrainingRecord> records, std::size_t group_size) {
    if (group_size < 1) throw std::invalid_argument("group_and_slice: group_size must be >= 1");
    std::vector<NodeRef> order;
    std::map<NodeRef, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto [it, fresh] = groups.try_emplace(records[i].member);
        if (fresh) order.push_back(records[i].member);
        it->second.push_back(i);
    }
    std::vector<GroupedBatch> out;
    for (const auto& m : order) {
        const auto& idx = groups.at(m);
        for (std::size_t start = 0; start < idx.size(); start += group_size) {
            GroupedBatch b;
            b.member = m;
            NodeType item_type = records[idx[start]].item.type;
            for (std::size_t s = 0; s < group_size; ++s) {
                if (start + s < idx.size()) {
                    const auto& r = records[idx[start + s]];
                    b.items.push_back(r.item);
                    b.labels.push_back(r.label);
                    b.timestamps.push_back(r.ts);
                    b.mask.push_back(true);
                } else {
                    b.items.push_back({item_type, kDummyItem, kNoIndex});
                    b.labels.push_back(0.0);
                    b.timestamps.push_back(0);
                    b.mask.push_back(false);
                }
            }
            out.push_back(std::move(b));
        }
    }
    return out;
}

/// The real slots of every batch, in batch order.
inline std::vector<TrainingRecord> flatten(std::span<const GroupedBatch> batches) {
    std::vector<TrainingRecord> out;
    for (const auto& b : batches)
        for (std::size_t s = 0; s < b.items.size(); ++s)
            if (b.mask[s]) out.push_back({b.member, b.items[s], b.labels[s], b.timestamps[s]});
    return out;
}

struct QueryCount {
    std::uint64_t member_before = 0;
    std::uint64_t item_before = 0;
    std::uint64_t member_after = 0;
    std::uint64_t item_after = 0;

    std::uint64_t before() const { return member_before + item_before; }
    std::uint64_t after() const { return member_after + item_after; }
};

/// Ungrouped: one member and one item query per record. Grouped: one member query
/// per batch, one item query per real slot.
inline QueryCount engine_query_count(std::span<const TrainingRecord> records, std::size_t group_size) {
    if (group_size < 1) throw std::invalid_argument("engine_query_count: group_size must be >= 1");
    QueryCount q;
    q.member_before = records.size();
    q.item_before = records.size();
    std::map<NodeRef, std::uint64_t> per_member;
    for (const auto& r : records) ++per_member[r.member];
    for (auto& [_, c] : per_member) q.member_after += (c + group_size - 1) / group_size;
    q.item_after = records.size();
    return q;
}

/// Fetched compute graphs for one grouped batch; the member tree is fetched once.
struct FetchedGroup {
    const GroupedBatch* batch = nullptr;
    SrcInput member;
    std::vector<ComputeTree> items;  // dummy slots get a bare leaf, never fetched
};

template <GraphView G>
FetchedGroup fetch_group(const ComputeGraphSource<G>& src, const ModelConfig& cfg, const GroupedBatch& b) {
    FetchedGroup f;
    f.batch = &b;
    Timestamp first = kTimeInfinity;
    for (std::size_t s = 0; s < b.items.size(); ++s)
        if (b.mask[s]) first = std::min(first, b.timestamps[s]);
    f.member = make_src_input(src, cfg, b.member, first);
    for (std::size_t s = 0; s < b.items.size(); ++s)
        f.items.push_back(b.mask[s] ? src.item_tree(b.items[s]) : ComputeTree{b.items[s], {}});
    return f;
}

/// Pairs for item slots [begin, end) of every group, padded slots kept but masked.
inline LinkBatch grouped_link_batch(std::span<const FetchedGroup> groups, std::size_t begin, std::size_t end) {
    LinkBatch lb;
    for (const auto& g : groups) {
        lb.srcs.push_back(g.member);
        const std::size_t si = lb.srcs.size() - 1;
        for (std::size_t s = begin; s < end; ++s) {
            lb.dsts.push_back(g.items[s]);
            lb.pairs.push_back({si, lb.dsts.size() - 1, g.batch->labels[s], static_cast<bool>(g.batch->mask[s])});
        }
    }
    return lb;
}

struct GroupedStepResult {
    std::size_t updates = 0;
    double mean_loss = 0.0;
    std::vector<std::vector<std::size_t>> visit_order;  // real slot indices per update
};

/// Splits each group's items into `gradient_step` contiguous slices of
/// group_size / gradient_step and runs forward, masked loss, backward and an SGD
/// update per slice. The member tree is fetched once and re-encoded per slice.
template <GraphView G>
GroupedStepResult grouped_step(const ComputeGraphSource<G>& src, const ModelConfig& cfg, ParamSet& p,
                               std::span<const GroupedBatch> rows, std::size_t gradient_step, double lr) {
    GroupedStepResult res;
    if (rows.empty()) return res;
    const std::size_t gs = rows.front().items.size();
    if (gradient_step < 1 || gs % gradient_step != 0)
        throw std::invalid_argument("grouped_step: gradient_step must divide group_size");
    const std::size_t local = gs / gradient_step;
    std::vector<FetchedGroup> groups;
    groups.reserve(rows.size());
    for (const auto& b : rows) {
        if (b.items.size() != gs) throw std::invalid_argument("grouped_step: mixed group sizes");
        groups.push_back(fetch_group(src, cfg, b));
    }
    for (std::size_t s = 0; s < gradient_step; ++s) {
        auto lb = grouped_link_batch(groups, s * local, (s + 1) * local);
        std::vector<std::size_t> visited;
        for (std::size_t k = 0; k < lb.pairs.size(); ++k)
            if (lb.pairs[k].real) visited.push_back(s * local + k % local);
        if (visited.empty()) continue;
        ParamSet grad = p.zeros_like();
        auto r = batch_loss(src.graph(), lb, cfg, p, &grad);
        sgd_update(p, grad, lr);
        res.mean_loss += r.loss;
        res.visit_order.push_back(std::move(visited));
        ++res.updates;
    }
    if (res.updates) res.mean_loss /= static_cast<double>(res.updates);
    return res;
}

// ---------------------------------------------------------------------------
// Adaptive neighbor sampling

struct AdaptiveState {
    std::size_t current_neighbor_count = 2;
    std::size_t final_neighbor_count = 200;
    double tolerance = 0.001;
    double tolerance_decay = 0.95;
    std::size_t stride = 20;
    std::size_t min_update_freq = 5;
    double last_metric = -std::numeric_limits<double>::infinity();
    std::size_t epoch = 1;

    void validate() const {
        if (current_neighbor_count > final_neighbor_count)
            throw std::invalid_argument("AdaptiveState: start above final neighbor count");
        if (!(tolerance >= 0.0)) throw std::invalid_argument("AdaptiveState: tolerance must be >= 0");
        if (stride < 1 || min_update_freq < 1) throw std::invalid_argument("AdaptiveState: stride and frequency >= 1");
    }
};

/// Grows the neighbor count by `stride` (capped) when the metric failed to beat
/// the previous one by more than the tolerance, or on every min_update_freq-th epoch.
inline AdaptiveState adaptive_step(AdaptiveState s, double current_metric) {
    if (!std::isfinite(current_metric)) throw std::invalid_argument("adaptive_step: metric must be finite");
    if (current_metric <= s.last_metric + s.tolerance || s.epoch % s.min_update_freq == 0)
        s.current_neighbor_count = std::min(s.current_neighbor_count + s.stride, s.final_neighbor_count);
    s.last_metric = current_metric;
    s.tolerance *= s.tolerance_decay;
    ++s.epoch;
    return s;
}

// ---------------------------------------------------------------------------
// MLP-init

struct MlpInitConfig {
    std::size_t epochs = 3;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
};

/// Feature-only link predictor over bare (childless) trees: no sampler is ever
/// consulted. Trains the projections, ID tables and layer weights with empty
/// neighborhoods, then redraws the attention matrices.
template <FeatureView F>
ParamSet mlp_init(std::span<const TrainingRecord> records, const F& features, const ModelConfig& cfg,
                  const MlpInitConfig& mc, ParamSet p) {
    if (mc.epochs == 0) return p;
    ModelConfig flat = cfg;
    flat.temporal.reset();
    std::vector<TrainingRecord> recs(records.begin(), records.end());
    // The temporal head is left as initialized.
    ParamSet tmp;
    for (auto& [name, m] : p)
        if (name.starts_with("tmp.")) tmp[name] = m;
    ParamSet q;
    for (auto& [name, m] : p)
        if (!name.starts_with("tmp.")) q[name] = m;
    for (std::size_t e = 0; e < mc.epochs; ++e) {
        keyed_shuffle(recs, mc.seed, e);
        for (std::size_t i = 0; i < recs.size(); i += mc.batch_size) {
            LinkBatch lb;
            for (std::size_t k = i; k < std::min(recs.size(), i + mc.batch_size); ++k) {
                SrcInput in;
                in.tree = {features.resolve(recs[k].member).value_or(recs[k].member), {}};
                lb.srcs.push_back(std::move(in));
                lb.dsts.push_back({features.resolve(recs[k].item).value_or(recs[k].item), {}});
                lb.pairs.push_back({lb.srcs.size() - 1, lb.dsts.size() - 1, recs[k].label, true});
            }
            ParamSet grad = q.zeros_like();
            batch_loss(features, lb, flat, q, &grad);
            sgd_update(q, grad, mc.learning_rate);
        }
    }
    for (auto& [name, m] : tmp) q[name] = m;
    reinit_aggregator_params(cfg, q, mc.seed);
    return q;
}

// ---------------------------------------------------------------------------
// Local gradient aggregation

/// Size-weighted mean of micro-batch gradients.
inline ParamSet local_gradient_aggregate(std::span<const ParamSet> grads, std::span<const std::size_t> sizes) {
    if (grads.empty()) throw std::invalid_argument("local_gradient_aggregate: no gradients");
    if (grads.size() != sizes.size()) throw std::invalid_argument("local_gradient_aggregate: one size per gradient");
    std::size_t total = 0;
    for (auto s : sizes) total += s;
    if (total == 0) throw std::invalid_argument("local_gradient_aggregate: empty micro-batches");
    ParamSet out = grads.front().zeros_like();
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i].same_shape(out)) throw std::invalid_argument("local_gradient_aggregate: shape mismatch");
        out.add_scaled(grads[i], static_cast<double>(sizes[i]) / static_cast<double>(total));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prefetch queue

/// Bounded blocking MPSC queue. Tracks the deepest occupancy ever observed.
template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {
        if (capacity_ < 1) throw std::invalid_argument("BoundedQueue: capacity must be >= 1");
    }

    /// Blocks while full. Returns false if the queue was closed.
    bool push(T item) {
        std::unique_lock lock(mu_);
        not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
        if (closed_) return false;
        items_.push_back(std::move(item));
        max_depth_ = std::max(max_depth_, items_.size());
        not_empty_.notify_one();
        return true;
    }

    /// Blocks while empty; nullopt once closed and drained.
    std::optional<T> pop() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
        if (items_.empty()) return std::nullopt;
        T item = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return item;
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_full_.notify_all();
        not_empty_.notify_all();
    }

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t max_depth() const {
        std::lock_guard lock(mu_);
        return max_depth_;
    }
    std::size_t size() const {
        std::lock_guard lock(mu_);
        return items_.size();
    }

private:
    const std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable not_full_, not_empty_;
    std::deque<T> items_;
    std::size_t max_depth_ = 0;
    bool closed_ = false;
};

struct PrefetchConfig {
    std::size_t capacity = 10;
    std::size_t producers = 1;
};

/// P producer threads prepare batches 0..total-1 (producer p takes indices
/// p, p+P, ...) via producer(p, index) and feed a bounded queue drained by one
/// consumer through next(). A producer exception stops production; the
/// consumer receives everything already queued, then the exception.
template <typename T>
class PrefetchPipeline {
public:
    using Producer = std::function<T(std::size_t shard, std::size_t index)>;

    PrefetchPipeline(Producer producer, std::size_t total, PrefetchConfig cfg)
        : queue_(cfg.capacity), remaining_(std::max<std::size_t>(1, cfg.producers)) {
        if (cfg.producers < 1) throw std::invalid_argument("PrefetchPipeline: need at least one producer");
        for (std::size_t p = 0; p < cfg.producers; ++p) {
            threads_.emplace_back([this, p, total, producer, n = cfg.producers] {
                try {
                    for (std::size_t i = p; i < total && !stop_; i += n)
                        if (!queue_.push(producer(p, i))) break;
                } catch (...) {
                    std::lock_guard lock(err_mu_);
                    if (!error_) error_ = std::current_exception();
                    stop_ = true;
                }
                if (--remaining_ == 0) queue_.close();
            });
        }
    }

    PrefetchPipeline(const PrefetchPipeline&) = delete;
    PrefetchPipeline& operator=(const PrefetchPipeline&) = delete;

    ~PrefetchPipeline() {
        stop_ = true;
        queue_.close();
        for (auto& t : threads_) t.join();
    }

    /// Next batch, or nullopt as the end marker.
    std::optional<T> next() {
        auto item = queue_.pop();
        if (!item) {
            std::lock_guard lock(err_mu_);
            if (error_) std::rethrow_exception(std::exchange(error_, nullptr));
        }
        return item;
    }

    std::size_t max_depth() const { return queue_.max_depth(); }
    std::size_t capacity() const { return queue_.capacity(); }

private:
    BoundedQueue<T> queue_;
    std::atomic<std::size_t> remaining_;
    std::atomic<bool> stop_{false};
    std::mutex err_mu_;
    std::exception_ptr error_;
    std::vector<std::thread> threads_;
};

// ---------------------------------------------------------------------------
// Epoch driver used by the CLI and the end-to-end checks

struct PipelineConfig {
    TrainConfig train;
    std::size_t group_size = 0;  // 0 = ungrouped pairs
    std::size_t gradient_step = 1;
    std::size_t rows_per_batch = 8;  // grouped batches per update
    PrefetchConfig prefetch;
    std::size_t micro_batches = 1;  // >1: local gradient aggregation per update
    bool lr_scaling = false;        // multiply the learning rate by micro_batches
};

struct PipelineEpoch {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::size_t updates = 0;
    std::size_t queue_depth_max = 0;
    std::uint64_t ge_queries = 0;
};

/// One training epoch. Batches (fetched compute graphs) are prepared by the
/// prefetch producers and consumed by a single training loop.
template <GraphView G>
PipelineEpoch run_epoch(const ComputeGraphSource<G>& src, const ModelConfig& cfg, ParamSet& p,
                        std::vector<TrainingRecord> records, const PipelineConfig& pc, std::size_t epoch) {
    PipelineEpoch out;
    out.epoch = epoch;
    const auto q0 = src.counters().queries();
    keyed_shuffle(records, pc.train.shuffle_seed, epoch);

    if (pc.group_size > 0) {
        auto rows = group_and_slice(records, pc.group_size);
        keyed_shuffle(rows, pc.train.shuffle_seed ^ 0x9e37, epoch);
        const std::size_t per = std::max<std::size_t>(1, pc.rows_per_batch);
        const std::size_t total = (rows.size() + per - 1) / per;
        PrefetchPipeline<std::vector<GroupedBatch>> pipe(
            [&](std::size_t, std::size_t i) {
                auto first = rows.begin() + static_cast<std::ptrdiff_t>(i * per);
                auto last = rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), (i + 1) * per));
                return std::vector<GroupedBatch>(first, last);
            },
            total, pc.prefetch);
        while (auto b = pipe.next()) {
            auto r = grouped_step(src, cfg, p, *b, pc.gradient_step, pc.train.learning_rate);
            out.mean_loss += r.mean_loss * static_cast<double>(r.updates);
            out.updates += r.updates;
        }
        out.queue_depth_max = pipe.max_depth();
    } else {
        const std::size_t bs = std::max<std::size_t>(1, pc.train.batch_size);
        const std::size_t total = (records.size() + bs - 1) / bs;
        PrefetchPipeline<LinkBatch> pipe(
            [&](std::size_t, std::size_t i) {
                auto slice = std::span<const TrainingRecord>(records).subspan(i * bs, std::min(bs, records.size() - i * bs));
                return make_pair_batch(src, cfg, slice);
            },
            total, pc.prefetch);
        while (auto b = pipe.next()) {
            const std::size_t m = std::max<std::size_t>(1, std::min(pc.micro_batches, b->pairs.size()));
            double lr = pc.train.learning_rate * (pc.lr_scaling ? static_cast<double>(m) : 1.0);
            if (m == 1) {
                ParamSet grad = p.zeros_like();
                out.mean_loss += batch_loss(src.graph(), *b, cfg, p, &grad).loss;
                sgd_update(p, grad, lr);
            } else {
                std::vector<ParamSet> grads;
                std::vector<std::size_t> sizes;
                double loss = 0.0;
                const std::size_t n = b->pairs.size();
                for (std::size_t k = 0; k < m; ++k) {
                    LinkBatch mb = *b;
                    mb.pairs.assign(b->pairs.begin() + static_cast<std::ptrdiff_t>(k * n / m),
                                    b->pairs.begin() + static_cast<std::ptrdiff_t>((k + 1) * n / m));
                    grads.push_back(p.zeros_like());
                    auto r = batch_loss(src.graph(), mb, cfg, p, &grads.back());
                    sizes.push_back(r.real_pairs);
                    loss += r.loss * static_cast<double>(r.real_pairs);
                }
                std::size_t total_pairs = 0;
                for (auto s : sizes) total_pairs += s;
                if (total_pairs == 0) continue;
                sgd_update(p, local_gradient_aggregate(grads, sizes), lr);
                out.mean_loss += loss / static_cast<double>(total_pairs);
            }
            ++out.updates;
        }
        out.queue_depth_max = pipe.max_depth();
    }
    if (out.updates) out.mean_loss /= static_cast<double>(out.updates);
    out.ge_queries = src.counters().queries() - q0;
    return out;
}

}  // namespace lignn
