#pragma once

#include <algorithm>
#include <array>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lignn/core.hpp"
#include "lignn/graph.hpp"
#include "lignn/model.hpp"
#include "lignn/samplers.hpp"
#include "lignn/tsv.hpp"

namespace lignn {

// ---------------------------------------------------------------------------
// Live graph: immutable base plus copy-on-write adjacency overrides

struct LiveRun {
    std::vector<NodeRef> dst;
    std::vector<double> weight;
    std::vector<Timestamp> ts;
};

/// One immutable version of the live graph. Readers keep a shared_ptr to the
/// epoch they started with; writers publish a new one.
class GraphEpoch {
public:
    static constexpr std::size_t kBuckets = 256;
    using Key = std::tuple<NodeType, NodeId, EdgeType>;
    using Bucket = std::map<Key, std::shared_ptr<const LiveRun>>;

    std::optional<NodeRef> resolve(const NodeRef& n) const { return base_->resolve(n); }

    EdgeRun out_edges(const NodeRef& n, EdgeType t) const {
        const auto& b = buckets_[bucket_of(n, t)];
        if (b) {
            auto it = b->find({n.type, n.id, t});
            if (it != b->end()) return {it->second->dst, it->second->weight, it->second->ts};
        }
        return base_->out_edges(n, t);
    }

    std::span<const EdgeType> edge_types() const { return edge_types_; }
    std::span<const double> features(const NodeRef& n) const { return base_->features(n); }

    const HeteroGraph& base() const noexcept { return *base_; }
    std::uint64_t number() const noexcept { return number_; }

private:
    friend class LiveGraph;

    static std::size_t bucket_of(const NodeRef& n, EdgeType t) noexcept {
        return static_cast<std::size_t>(mix64(node_key(n) ^ (static_cast<std::uint64_t>(t) << 56)) % kBuckets);
    }

    std::shared_ptr<const HeteroGraph> base_;
    std::vector<EdgeType> edge_types_;
    std::array<std::shared_ptr<const Bucket>, kBuckets> buckets_;
    std::uint64_t number_ = 0;
};

/// Single writer, any number of readers. An insert copies only the touched
/// adjacency run and its bucket, then swaps the epoch pointer.
class LiveGraph {
public:
    explicit LiveGraph(std::shared_ptr<const HeteroGraph> base) {
        auto e = std::make_shared<GraphEpoch>();
        e->base_ = std::move(base);
        e->edge_types_.assign(e->base_->edge_types().begin(), e->base_->edge_types().end());
        current_ = std::move(e);
    }

    std::shared_ptr<const GraphEpoch> snapshot() const {
        std::lock_guard lock(mu_);
        return current_;
    }

    /// Inserts e keeping the run ordered by (ts, dst). An edge with the same dst
    /// and ts as an existing one keeps the larger weight, as the builder does.
    void insert_edge(const EdgeRecord& e) {
        auto cur = snapshot();
        const auto& base = cur->base();
        auto src = base.find(e.src_type, e.src_id);
        auto dst = base.find(e.dst_type, e.dst_id);
        if (!src || !dst) throw NodeNotFound(src ? NodeRef{e.dst_type, e.dst_id, kNoIndex} : NodeRef{e.src_type, e.src_id, kNoIndex});

        auto run = std::make_shared<LiveRun>();
        auto old = cur->out_edges(*src, e.edge_type);
        run->dst.assign(old.dst.begin(), old.dst.end());
        run->weight.assign(old.weight.begin(), old.weight.end());
        run->ts.assign(old.ts.begin(), old.ts.end());

        std::size_t pos = 0;
        while (pos < run->ts.size() &&
               std::tie(run->ts[pos], run->dst[pos].type, run->dst[pos].id) < std::tie(e.ts, dst->type, dst->id))
            ++pos;
        if (pos < run->ts.size() && run->ts[pos] == e.ts && run->dst[pos] == *dst) {
            run->weight[pos] = std::max(run->weight[pos], e.weight);
        } else {
            run->dst.insert(run->dst.begin() + static_cast<std::ptrdiff_t>(pos), *dst);
            run->weight.insert(run->weight.begin() + static_cast<std::ptrdiff_t>(pos), e.weight);
            run->ts.insert(run->ts.begin() + static_cast<std::ptrdiff_t>(pos), e.ts);
        }

        auto next = std::make_shared<GraphEpoch>(*cur);
        const auto b = GraphEpoch::bucket_of(*src, e.edge_type);
        auto bucket = next->buckets_[b] ? std::make_shared<GraphEpoch::Bucket>(*next->buckets_[b])
                                        : std::make_shared<GraphEpoch::Bucket>();
        (*bucket)[{src->type, src->id, e.edge_type}] = std::move(run);
        next->buckets_[b] = std::move(bucket);
        if (std::find(next->edge_types_.begin(), next->edge_types_.end(), e.edge_type) == next->edge_types_.end()) {
            next->edge_types_.push_back(e.edge_type);
            std::sort(next->edge_types_.begin(), next->edge_types_.end());
        }
        next->number_ = cur->number_ + 1;
        std::lock_guard lock(mu_);
        current_ = std::move(next);
    }

private:
    mutable std::mutex mu_;
    std::shared_ptr<const GraphEpoch> current_;
};

// ---------------------------------------------------------------------------
// Embedding store

struct EmbeddingEntry {
    std::vector<double> values;
    std::uint64_t version = 0;
    Timestamp updated_at = 0;
};

/// Entries are immutable once published, so a reader holding one never sees a
/// partially written vector.
class EmbeddingStore {
public:
    std::uint64_t put(const NodeRef& n, std::vector<double> values, Timestamp ts) {
        std::unique_lock lock(mu_);
        auto& slot = entries_[NodeRef{n.type, n.id, kNoIndex}];
        auto e = std::make_shared<EmbeddingEntry>();
        e->values = std::move(values);
        e->version = slot ? slot->version + 1 : 1;
        e->updated_at = ts;
        slot = std::move(e);
        return slot->version;
    }

    std::shared_ptr<const EmbeddingEntry> get(const NodeRef& n) const {
        std::shared_lock lock(mu_);
        auto it = entries_.find(NodeRef{n.type, n.id, kNoIndex});
        return it == entries_.end() ? nullptr : it->second;
    }

    std::uint64_t version(const NodeRef& n) const {
        auto e = get(n);
        return e ? e->version : 0;
    }
    bool contains(const NodeRef& n) const { return get(n) != nullptr; }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return entries_.size();
    }

    std::vector<NodeRef> nodes() const {
        std::shared_lock lock(mu_);
        std::vector<NodeRef> out;
        for (const auto& [n, _] : entries_) out.push_back(n);
        return out;
    }

    /// `type<TAB>id<TAB>version<TAB>e1,e2,...`, sorted by node.
    void dump(std::ostream& out) const {
        std::shared_lock lock(mu_);
        for (const auto& [n, e] : entries_)
            out << n.type << '\t' << n.id << '\t' << e->version << '\t' << tsv::format_vector(e->values.data(), e->values.size()) << '\n';
    }

    /// Reads a dump back; versions are kept.
    void load(std::istream& in) {
        std::unique_lock lock(mu_);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (tsv::skippable(line)) continue;
            auto f = tsv::split(line, '\t');
            auto type = f.size() == 4 ? tsv::parse<NodeType>(f[0]) : std::nullopt;
            auto id = f.size() == 4 ? tsv::parse<NodeId>(f[1]) : std::nullopt;
            auto ver = f.size() == 4 ? tsv::parse<std::uint64_t>(f[2]) : std::nullopt;
            auto vals = f.size() == 4 ? tsv::parse_vector(f[3]) : std::nullopt;
            if (!type || !id || !ver || !vals) throw Error("embedding dump line " + std::to_string(line_no) + ": malformed");
            auto e = std::make_shared<EmbeddingEntry>();
            e->values = std::move(*vals);
            e->version = *ver;
            entries_[NodeRef{*type, *id, kNoIndex}] = std::move(e);
        }
    }

private:
    mutable std::shared_mutex mu_;
    std::map<NodeRef, std::shared_ptr<const EmbeddingEntry>> entries_;
};

// ---------------------------------------------------------------------------
// Events

enum class EventKind : std::uint8_t { click, apply, like, connect };

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
    if (s == "click") return EventKind::click;
    if (s == "apply") return EventKind::apply;
    if (s == "like") return EventKind::like;
    if (s == "connect") return EventKind::connect;
    return std::nullopt;
}

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::click: return "click";
        case EventKind::apply: return "apply";
        case EventKind::like: return "like";
        case EventKind::connect: return "connect";
    }
    return "?";
}

struct InteractionEvent {
    Timestamp ts = 0;
    EventKind kind = EventKind::click;
    NodeRef member;
    NodeRef item;

    friend bool operator==(const InteractionEvent&, const InteractionEvent&) = default;
};

/// `ts_ms<TAB>kind<TAB>member_type<TAB>member_id<TAB>item_type<TAB>item_id`
inline std::optional<InteractionEvent> parse_event(std::string_view line, std::string* why = nullptr) {
    auto f = tsv::split(line, '\t');
    auto fail = [&](const char* m) -> std::optional<InteractionEvent> {
        if (why) *why = m;
        return std::nullopt;
    };
    if (f.size() != 6) return fail("expected 6 tab-separated fields");
    auto ts = tsv::parse<Timestamp>(f[0]);
    auto kind = parse_event_kind(tsv::trim(f[1]));
    auto mt = tsv::parse<NodeType>(f[2]);
    auto mid = tsv::parse<NodeId>(f[3]);
    auto it = tsv::parse<NodeType>(f[4]);
    auto iid = tsv::parse<NodeId>(f[5]);
    if (!ts) return fail("bad timestamp");
    if (!kind) return fail("unknown event kind");
    if (!mt || !mid || !it || !iid) return fail("bad node reference");
    return InteractionEvent{*ts, *kind, {*mt, *mid, kNoIndex}, {*it, *iid, kNoIndex}};
}

inline std::string format_event(const InteractionEvent& e) {
    return std::to_string(e.ts) + '\t' + to_string(e.kind) + '\t' + std::to_string(e.member.type) + '\t' +
           std::to_string(e.member.id) + '\t' + std::to_string(e.item.type) + '\t' + std::to_string(e.item.id);
}

inline std::vector<InteractionEvent> read_events(std::istream& in, std::vector<std::string>* errors = nullptr) {
    std::vector<InteractionEvent> out;
    std::string line, why;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (tsv::skippable(line)) continue;
        if (auto e = parse_event(line, &why))
            out.push_back(*e);
        else if (errors)
            errors->push_back("events line " + std::to_string(line_no) + ": " + why);
        else
            throw Error("events line " + std::to_string(line_no) + ": " + why);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Inference

struct InferenceSpec {
    NodeType member_type = 0;
    WalkConfig walk{1000, 0.15, 20, 0, true, false, {}};
};

/// Embedding of one node from a 2-hop random-walk PPR sample. Members go
/// through the source tower (with their full activity history in temporal
/// models); every other node type through the destination tower.
template <typename G>
    requires GraphView<G> && FeatureView<G>
Vec infer_embedding(const G& g, const Model& m, const NodeRef& n, const InferenceSpec& spec) {
    auto node = g.resolve(n);
    if (!node) throw NodeNotFound(n);
    auto tree = tree_from_sample(ppr_two_hop_random_walk(g, *node, spec.walk).sample);
    if (node->type != spec.member_type) return sage_encode(g, tree, m.config, m.params, Side::dst).output();
    SrcInput in;
    in.tree = std::move(tree);
    if (m.config.temporal) {
        for (auto& e : sample_temporal_last_n(g, *node, m.config.temporal->activity_edge_type, kTimeInfinity,
                                              m.config.temporal->length)) {
            in.activities.push_back(e.node);
            in.activity_ts.push_back(e.ts);
        }
        in.query_ts = in.activity_ts.empty() ? 0 : *std::max_element(in.activity_ts.begin(), in.activity_ts.end());
    }
    return encode_src(g, in, m.config, m.params).embedding;
}

inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

// ---------------------------------------------------------------------------
// Refresher

enum class Cascade : std::uint8_t {
    endpoints,  // re-infer only the event's member and item
    two_hop,    // also re-infer stored nodes whose 2-hop sample can reach a changed run
};

struct RefreshConfig {
    InferenceSpec inference;
    EdgeType member_item_edge = 0;
    EdgeType item_member_edge = 1;
    std::map<EventKind, double> kind_weights;  // missing kinds weigh 1.0
    Cascade cascade = Cascade::two_hop;
    std::size_t recent_interactors = 50;
};

struct RefreshReport {
    std::size_t events = 0;
    std::size_t applied = 0;
    std::size_t skipped = 0;
    std::size_t out_of_order = 0;
    std::size_t embeddings_written = 0;
    std::vector<std::string> messages;
};

class NearlineRefresher {
public:
    /// Throws if the model's feature dims disagree with the graph's schema or the
    /// event edge types are absent from it.
    NearlineRefresher(std::shared_ptr<const HeteroGraph> base, Model model, EmbeddingStore& store, RefreshConfig cfg)
        : live_(base), model_(std::move(model)), store_(store), cfg_(std::move(cfg)) {
        model_.config.validate();
        for (const auto& [t, dim] : model_.config.feature_dims)
            if (base->feature_dim(t) != dim)
                throw Error("nearline: model expects feature dim " + std::to_string(dim) + " for node type " +
                            std::to_string(t) + ", graph has " + std::to_string(base->feature_dim(t)));
        for (auto et : {cfg_.member_item_edge, cfg_.item_member_edge})
            if (!base->schema().kind(et))
                throw Error("nearline: edge type " + std::to_string(et) + " is not in the graph schema");
        for (const auto& e : base->edge_records())
            in_[{e.dst_type, e.dst_id, kNoIndex}].insert({e.src_type, e.src_id, kNoIndex});
    }

    /// Applies one event: inserts both directed edges, publishes a new epoch and
    /// re-infers the affected nodes. Returns false if the event was skipped.
    bool apply(const InteractionEvent& ev) {
        ++report_.events;
        auto snap = live_.snapshot();
        for (const auto& n : {ev.member, ev.item}) {
            if (!snap->resolve(n) || snap->features(n).empty()) {
                ++report_.skipped;
                report_.messages.push_back("skipped event at ts " + std::to_string(ev.ts) + ": node " +
                                           std::to_string(n.type) + ":" + std::to_string(n.id) +
                                           " is unknown or has no features");
                return false;
            }
        }
        if (ev.member.type != cfg_.inference.member_type) {
            ++report_.skipped;
            report_.messages.push_back("skipped event at ts " + std::to_string(ev.ts) + ": member has node type " +
                                       std::to_string(ev.member.type));
            return false;
        }
        if (last_ts_ && ev.ts < *last_ts_) {
            ++report_.out_of_order;
            report_.messages.push_back("out-of-order event at ts " + std::to_string(ev.ts) + " (previous " +
                                       std::to_string(*last_ts_) + "), applied");
        }
        last_ts_ = last_ts_ ? std::max(*last_ts_, ev.ts) : ev.ts;

        auto it = cfg_.kind_weights.find(ev.kind);
        const double w = it == cfg_.kind_weights.end() ? 1.0 : it->second;
        const NodeRef m{ev.member.type, ev.member.id, kNoIndex};
        const NodeRef i{ev.item.type, ev.item.id, kNoIndex};
        live_.insert_edge({m.type, m.id, cfg_.member_item_edge, i.type, i.id, w, ev.ts});
        live_.insert_edge({i.type, i.id, cfg_.item_member_edge, m.type, m.id, w, ev.ts});
        in_[i].insert(m);
        in_[m].insert(i);

        auto& recent = recent_[i];
        std::erase(recent, m);
        recent.insert(recent.begin(), m);
        if (recent.size() > cfg_.recent_interactors) recent.resize(cfg_.recent_interactors);

        std::set<NodeRef> targets{m, i};
        if (cfg_.cascade == Cascade::two_hop) {
            for (const auto& a : {m, i}) {
                std::set<NodeRef> ring{a};
                for (int d = 0; d < 2; ++d) {
                    std::set<NodeRef> next;
                    for (const auto& x : ring) {
                        auto f = in_.find(x);
                        if (f == in_.end()) continue;
                        for (const auto& s : f->second)
                            if (store_.contains(s)) targets.insert(s);
                        next.insert(f->second.begin(), f->second.end());
                    }
                    ring = std::move(next);
                }
            }
        }
        auto now = live_.snapshot();
        for (const auto& n : targets) {
            store_.put(n, to_std(infer_embedding(*now, model_, n, cfg_.inference)), ev.ts);
            ++report_.embeddings_written;
        }
        ++report_.applied;
        return true;
    }

    const RefreshReport& run(std::span<const InteractionEvent> events) {
        for (const auto& e : events) apply(e);
        return report_;
    }

    const RefreshReport& run(std::istream& in) {
        std::vector<std::string> errors;
        auto events = read_events(in, &errors);
        report_.skipped += errors.size();
        report_.messages.insert(report_.messages.end(), errors.begin(), errors.end());
        return run(events);
    }

    /// Members who most recently interacted with an item, newest first.
    std::vector<NodeRef> recent_interactors(const NodeRef& item) const {
        auto it = recent_.find({item.type, item.id, kNoIndex});
        return it == recent_.end() ? std::vector<NodeRef>{} : it->second;
    }

    const LiveGraph& graph() const noexcept { return live_; }
    const Model& model() const noexcept { return model_; }
    const RefreshReport& report() const noexcept { return report_; }

private:
    LiveGraph live_;
    Model model_;
    EmbeddingStore& store_;
    RefreshConfig cfg_;
    RefreshReport report_;
    std::optional<Timestamp> last_ts_;
    std::map<NodeRef, std::set<NodeRef>> in_;
    std::map<NodeRef, std::vector<NodeRef>> recent_;
};

}  // namespace lignn
