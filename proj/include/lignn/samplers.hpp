#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lignn/core.hpp"
#include "lignn/graph.hpp"

namespace lignn {

/// Anything the samplers can walk: the in-memory graph, a nearline epoch snapshot,
/// or a remote view that fetches adjacency from partitioned engine servers.
template <typename G>
concept GraphView = requires(const G& g, const NodeRef& n, EdgeType e) {
    { g.resolve(n) } -> std::same_as<std::optional<NodeRef>>;
    { g.out_edges(n, e) } -> std::same_as<EdgeRun>;
    { g.edge_types() };
};

/// Views backed by a remote store load adjacency for a batch of nodes up front.
template <GraphView G>
void prefetch(const G& g, std::span<const NodeRef> nodes) {
    if constexpr (requires { g.prefetch(nodes); }) g.prefetch(nodes);
}

enum class Strategy : std::uint8_t { random = 0, weighted = 1, ppr_push = 2, ppr_two_hop = 3, temporal = 4 };

inline std::optional<Strategy> parse_strategy(std::string_view s) {
    if (s == "random") return Strategy::random;
    if (s == "weighted") return Strategy::weighted;
    if (s == "ppr-push") return Strategy::ppr_push;
    if (s == "ppr-2hop") return Strategy::ppr_two_hop;
    if (s == "temporal") return Strategy::temporal;
    return std::nullopt;
}

struct SampleEntry {
    NodeRef node;
    double score = 0.0;  // edge weight for fan-out strategies, PPR estimate otherwise
    std::uint32_t hop = 1;
    NodeRef parent;  // node whose adjacency produced this entry

    friend bool operator==(const SampleEntry& a, const SampleEntry& b) {
        return a.node == b.node && a.score == b.score && a.hop == b.hop && a.parent == b.parent;
    }
};

struct NeighborSample {
    NodeRef seed;
    Strategy strategy = Strategy::random;
    std::vector<SampleEntry> entries;
    bool truncated = false;

    friend bool operator==(const NeighborSample& a, const NeighborSample& b) {
        return a.seed == b.seed && a.strategy == b.strategy && a.entries == b.entries && a.truncated == b.truncated;
    }
};

/// Per-seed outcome of a batched call: a value or an error message.
template <typename T>
struct SeedResult {
    NodeRef seed;
    std::optional<T> value;
    std::string error;

    bool ok() const noexcept { return value.has_value(); }
};

struct MultiHopSample {
    NodeRef seed;
    std::vector<NeighborSample> hops;  // hops[h] holds hop h+1
};

namespace detail {

template <GraphView G>
std::vector<EdgeType> edge_type_list(const G& g, std::span<const EdgeType> filter) {
    if (!filter.empty()) return {filter.begin(), filter.end()};
    auto all = g.edge_types();
    return {all.begin(), all.end()};
}

template <GraphView G>
std::size_t degree(const G& g, const NodeRef& n, std::span<const EdgeType> types) {
    std::size_t d = 0;
    for (auto t : types) d += g.out_edges(n, t).size();
    return d;
}

struct Candidate {
    NodeRef node;
    NodeRef parent;
    double first_weight = 0.0;
    double mass = 0.0;  // sum of weight * multiplier over every edge reaching the node
};

/// Distinct out-neighbors of a frontier, in first-reach order.
template <GraphView G>
std::vector<Candidate> collect_candidates(const G& g, std::span<const NodeRef> frontier,
                                          std::span<const EdgeType> types,
                                          const std::map<EdgeType, double>* multipliers) {
    std::vector<Candidate> out;
    std::unordered_map<NodeRef, std::size_t, NodeRefHash> pos;
    for (const auto& f : frontier) {
        for (auto t : types) {
            double mult = 1.0;
            if (multipliers) {
                auto it = multipliers->find(t);
                if (it != multipliers->end()) mult = it->second;
            }
            auto run = g.out_edges(f, t);
            for (std::size_t i = 0; i < run.size(); ++i) {
                auto [it, inserted] = pos.try_emplace(run.dst[i], out.size());
                if (inserted) out.push_back({run.dst[i], f, run.weight[i], 0.0});
                out[it->second].mass += run.weight[i] * mult;
            }
        }
    }
    return out;
}

inline bool score_order(const SampleEntry& a, const SampleEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.node < b.node;
}

}  // namespace detail

/// Multi-hop fan-out sampling. Hop h draws up to fanouts[h-1] distinct nodes from
/// the union of the previous hop's out-neighbors: uniformly when `multipliers` is
/// null, otherwise with probability proportional to weight * multiplier(edge type)
/// (Efraimidis-Spirakis keys). Draws are keyed by (rng_seed, seed, hop).
template <GraphView G>
SeedResult<MultiHopSample> sample_multihop_one(const G& g, const NodeRef& seed_in,
                                               std::span<const std::size_t> fanouts, std::uint64_t rng_seed,
                                               std::span<const EdgeType> edge_types = {},
                                               const std::map<EdgeType, double>* multipliers = nullptr) {
    if (fanouts.empty()) throw std::invalid_argument("sample_multihop: empty fanout list");
    if (multipliers)
        for (auto& [t, m] : *multipliers)
            if (!(m >= 0.0) || !std::isfinite(m)) throw std::invalid_argument("sample_multihop: bad multiplier");
    SeedResult<MultiHopSample> result{seed_in, std::nullopt, {}};
    NodeRef probe[] = {seed_in};
    prefetch(g, std::span<const NodeRef>(probe));
    auto seed = g.resolve(seed_in);
    if (!seed) {
        result.error = "unknown seed";
        return result;
    }
    auto types = detail::edge_type_list(g, edge_types);
    const Strategy strategy = multipliers ? Strategy::weighted : Strategy::random;
    MultiHopSample sample{*seed, {}};
    std::vector<NodeRef> frontier{*seed};
    for (std::size_t h = 0; h < fanouts.size(); ++h) {
        prefetch(g, std::span<const NodeRef>(frontier));
        auto cands = detail::collect_candidates(g, frontier, types, multipliers);
        auto rng = Rng::keyed(rng_seed, *seed, h + 1);
        std::vector<std::size_t> chosen;
        const std::size_t k = fanouts[h];
        if (!multipliers) {
            std::vector<std::size_t> idx(cands.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            const std::size_t take = std::min(k, idx.size());
            for (std::size_t i = 0; i < take; ++i) {
                auto j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
                std::swap(idx[i], idx[j]);
            }
            chosen.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
        } else {
            std::vector<std::pair<double, std::size_t>> keyed;
            for (std::size_t i = 0; i < cands.size(); ++i) {
                double u = rng.uniform();
                if (cands[i].mass <= 0.0) continue;
                // log(u) / w orders identically to u^(1/w) without underflow.
                double key = std::log(u > 0.0 ? u : std::numeric_limits<double>::min()) / cands[i].mass;
                keyed.push_back({key, i});
            }
            const std::size_t take = std::min(k, keyed.size());
            std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(take), keyed.end(),
                              [](auto& a, auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
            for (std::size_t i = 0; i < take; ++i) chosen.push_back(keyed[i].second);
        }
        std::sort(chosen.begin(), chosen.end());
        NeighborSample hop{*seed, strategy, {}, false};
        frontier.clear();
        for (auto i : chosen) {
            hop.entries.push_back({cands[i].node, cands[i].first_weight, static_cast<std::uint32_t>(h + 1), cands[i].parent});
            frontier.push_back(cands[i].node);
        }
        sample.hops.push_back(std::move(hop));
    }
    result.value = std::move(sample);
    return result;
}

template <GraphView G>
std::vector<SeedResult<MultiHopSample>> sample_random_multihop(const G& g, std::span<const NodeRef> seeds,
                                                               std::span<const std::size_t> fanouts,
                                                               std::uint64_t rng_seed,
                                                               std::span<const EdgeType> edge_types = {}) {
    std::vector<SeedResult<MultiHopSample>> out;
    out.reserve(seeds.size());
    for (const auto& s : seeds) out.push_back(sample_multihop_one(g, s, fanouts, rng_seed, edge_types));
    return out;
}

template <GraphView G>
std::vector<SeedResult<MultiHopSample>> sample_weighted_multihop(const G& g, std::span<const NodeRef> seeds,
                                                                 std::span<const std::size_t> fanouts,
                                                                 const std::map<EdgeType, double>& multipliers,
                                                                 std::uint64_t rng_seed,
                                                                 std::span<const EdgeType> edge_types = {}) {
    std::vector<SeedResult<MultiHopSample>> out;
    out.reserve(seeds.size());
    for (const auto& s : seeds) out.push_back(sample_multihop_one(g, s, fanouts, rng_seed, edge_types, &multipliers));
    return out;
}

// ---------------------------------------------------------------------------
// Personalized PageRank

struct PPRConfig {
    double alpha = 0.15;
    double r_max = 1e-4;
    std::size_t top_k = 200;
    std::size_t max_pushes = 10'000'000;
    bool weighted = true;
    bool include_seed = false;
    std::vector<EdgeType> edge_types;  // empty = all

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("PPRConfig: alpha must be in (0,1)");
        if (!(r_max > 0.0)) throw std::invalid_argument("PPRConfig: r_max must be > 0");
        if (top_k < 1) throw std::invalid_argument("PPRConfig: top_k must be >= 1");
    }
};

/// Dense PPR vector over a HeteroGraph; position = global node ordinal.
struct PprVector {
    std::vector<NodeRef> nodes;
    std::vector<double> mass;
    double last_l1_change = 0.0;

    double at(const NodeRef& n) const {
        auto it = std::lower_bound(nodes.begin(), nodes.end(), n);
        return (it != nodes.end() && *it == n) ? mass[static_cast<std::size_t>(it - nodes.begin())] : 0.0;
    }
};

/// Power iteration pi <- alpha*e_seed + (1-alpha)*pi*P. Dangling nodes keep their
/// mass (implicit self-loop).
inline PprVector ppr_exact(const HeteroGraph& g, const NodeRef& seed_in, double alpha, std::size_t num_iterations,
                           bool weighted = true, std::span<const EdgeType> edge_types = {}) {
    if (num_iterations < 1) throw std::invalid_argument("ppr_exact: num_iterations must be >= 1");
    auto seed = g.require(seed_in);
    auto types = detail::edge_type_list(g, edge_types);
    PprVector out;
    out.nodes = g.all_nodes();
    std::sort(out.nodes.begin(), out.nodes.end());
    const std::size_t n = out.nodes.size();
    std::unordered_map<NodeRef, std::size_t, NodeRefHash> pos;
    for (std::size_t i = 0; i < n; ++i) pos.emplace(out.nodes[i], i);

    struct Row {
        std::vector<std::pair<std::size_t, double>> out;
    };
    std::vector<Row> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (auto t : types) {
            auto run = g.out_edges(out.nodes[i], t);
            for (std::size_t e = 0; e < run.size(); ++e) {
                double w = weighted ? run.weight[e] : 1.0;
                rows[i].out.push_back({pos.at(run.dst[e]), w});
                total += w;
            }
        }
        for (auto& [_, w] : rows[i].out) w /= total;
    }

    const std::size_t s = pos.at(seed);
    std::vector<double> pi(n, 0.0), next(n, 0.0);
    pi[s] = 1.0;
    for (std::size_t it = 0; it < num_iterations; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        next[s] = alpha;
        for (std::size_t i = 0; i < n; ++i) {
            if (pi[i] == 0.0) continue;
            const double spread = (1.0 - alpha) * pi[i];
            if (rows[i].out.empty()) {
                next[i] += spread;
            } else {
                for (auto [j, p] : rows[i].out) next[j] += spread * p;
            }
        }
        double l1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) l1 += std::abs(next[i] - pi[i]);
        pi.swap(next);
        out.last_l1_change = l1;
    }
    out.mass = std::move(pi);
    return out;
}

struct PprPushResult {
    NeighborSample sample;
    std::unordered_map<NodeRef, double, NodeRefHash> estimate;
    std::unordered_map<NodeRef, double, NodeRefHash> residual;
    std::size_t pushes = 0;
};

namespace detail {

/// Forward-push state for one seed. Each step pushes the active node with the
/// largest residual; ties go to the smaller (type, id).
template <GraphView G>
class PushState {
public:
    PushState(const G& g, const NodeRef& seed, const PPRConfig& cfg, const std::vector<EdgeType>& types)
        : g_(g), cfg_(cfg), types_(types), seed_(seed) {
        result_.sample.seed = seed;
        result_.sample.strategy = Strategy::ppr_push;
        result_.residual[seed] = 1.0;
        hop_[seed] = 0;
        touched_.push_back(seed);
    }

    bool done() const noexcept { return done_; }

    /// Nodes whose adjacency must be visible before activate().
    std::span<const NodeRef> touched() const noexcept { return touched_; }

    /// Queues every touched node whose residual now exceeds r_max * outdeg.
    void activate() {
        for (const auto& u : touched_) {
            double r = result_.residual[u];
            if (r > cfg_.r_max * static_cast<double>(degree(g_, u, types_))) heap_.push({r, u});
        }
        touched_.clear();
        select();
    }

    /// The node the next push() will process; valid while !done().
    const NodeRef& next() const noexcept { return next_; }

    void push() {
        const NodeRef v = next_;
        double rv = result_.residual[v];
        result_.residual[v] = 0.0;
        double total = 0.0;
        std::size_t deg = 0;
        for (auto t : types_) {
            auto run = g_.out_edges(v, t);
            deg += run.size();
            for (std::size_t e = 0; e < run.size(); ++e) total += cfg_.weighted ? run.weight[e] : 1.0;
        }
        if (deg == 0) {
            // Self-loop limit: every unit of residual eventually settles on v.
            result_.estimate[v] += rv;
        } else {
            result_.estimate[v] += cfg_.alpha * rv;
            const double spread = (1.0 - cfg_.alpha) * rv;
            const auto hv = hop_.at(v);
            for (auto t : types_) {
                auto run = g_.out_edges(v, t);
                for (std::size_t e = 0; e < run.size(); ++e) {
                    const NodeRef& u = run.dst[e];
                    result_.residual[u] += spread * (cfg_.weighted ? run.weight[e] : 1.0) / total;
                    hop_.try_emplace(u, hv + 1);
                    touched_.push_back(u);
                }
            }
        }
        touched_.push_back(v);
        ++result_.pushes;
        if (result_.pushes >= cfg_.max_pushes) {
            result_.sample.truncated = true;
            finish();
        }
    }

    PprPushResult take() {
        if (!finished_) finish();
        return std::move(result_);
    }

private:
    struct Item {
        double r;
        NodeRef node;
        bool operator<(const Item& o) const {
            if (r != o.r) return r < o.r;
            return o.node < node;
        }
    };

    void select() {
        while (!heap_.empty()) {
            auto top = heap_.top();
            heap_.pop();
            auto r = result_.residual[top.node];
            if (r != top.r) continue;  // stale entry
            next_ = top.node;
            return;
        }
        finish();
    }

    void finish() {
        if (finished_) return;
        done_ = finished_ = true;
        std::vector<SampleEntry> entries;
        for (auto& [node, p] : result_.estimate) {
            if (p <= 0.0) continue;
            if (node == seed_ && !cfg_.include_seed) continue;
            entries.push_back({node, p, hop_.at(node), seed_});
        }
        std::sort(entries.begin(), entries.end(), score_order);
        if (entries.size() > cfg_.top_k) entries.resize(cfg_.top_k);
        result_.sample.entries = std::move(entries);
    }

    const G& g_;
    const PPRConfig& cfg_;
    const std::vector<EdgeType>& types_;
    NodeRef seed_;
    NodeRef next_;
    PprPushResult result_;
    std::unordered_map<NodeRef, std::uint32_t, NodeRefHash> hop_;
    std::vector<NodeRef> touched_;
    std::priority_queue<Item> heap_;
    bool done_ = false;
    bool finished_ = false;
};

}  // namespace detail

/// Forward push from one seed: on return every residual satisfies
/// r(v) <= r_max * outdeg(v) unless the result is flagged truncated.
template <GraphView G>
PprPushResult ppr_forward_push(const G& g, const NodeRef& seed_in, const PPRConfig& cfg) {
    cfg.validate();
    NodeRef probe[] = {seed_in};
    prefetch(g, std::span<const NodeRef>(probe));
    auto seed = g.resolve(seed_in);
    if (!seed) throw NodeNotFound(seed_in);
    auto types = detail::edge_type_list(g, cfg.edge_types);
    detail::PushState<G> state(g, *seed, cfg, types);
    while (true) {
        prefetch(g, state.touched());
        state.activate();
        if (state.done()) break;
        state.push();
        if (state.done()) break;
    }
    return state.take();
}

/// Forward push for many seeds at once. Every iteration advances each live seed by
/// one push, and the adjacency needed by all of them is requested as one batch.
/// Per-seed results are identical to ppr_forward_push.
template <GraphView G>
std::vector<SeedResult<PprPushResult>> ppr_forward_push_batch(const G& g, std::span<const NodeRef> seeds,
                                                             const PPRConfig& cfg) {
    cfg.validate();
    if (seeds.empty()) throw std::invalid_argument("ppr_forward_push_batch: no seeds");
    auto types = detail::edge_type_list(g, cfg.edge_types);
    prefetch(g, seeds);
    std::vector<SeedResult<PprPushResult>> out(seeds.size());
    std::vector<std::optional<detail::PushState<G>>> states(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        out[i].seed = seeds[i];
        auto r = g.resolve(seeds[i]);
        if (!r) {
            out[i].error = "unknown seed";
            continue;
        }
        states[i].emplace(g, *r, cfg, types);
    }
    std::vector<NodeRef> batch;
    while (true) {
        batch.clear();
        for (auto& s : states)
            if (s && !s->done()) batch.insert(batch.end(), s->touched().begin(), s->touched().end());
        prefetch(g, std::span<const NodeRef>(batch));
        bool any = false;
        for (auto& s : states) {
            if (!s || s->done()) continue;
            s->activate();
            if (s->done()) continue;
            s->push();
            any = true;
        }
        if (!any) break;
    }
    for (std::size_t i = 0; i < seeds.size(); ++i)
        if (states[i]) out[i].value = states[i]->take();
    return out;
}

struct WalkConfig {
    std::size_t num_walks = 10'000;
    double alpha = 0.15;
    std::size_t top_k = 200;
    std::uint64_t rng_seed = 0;
    bool weighted = true;
    bool include_seed = false;
    std::vector<EdgeType> edge_types;

    void validate() const {
        if (num_walks < 1) throw std::invalid_argument("WalkConfig: num_walks must be >= 1");
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("WalkConfig: alpha must be in (0,1)");
        if (top_k < 1) throw std::invalid_argument("WalkConfig: top_k must be >= 1");
    }
};

struct TwoHopWalkResult {
    NeighborSample sample;
    std::unordered_map<NodeRef, double, NodeRefHash> visit_fraction;  // every visited node, seed included
    std::size_t total_visits = 0;
};

/// Monte-Carlo PPR restricted to the 2-hop ball: alpha-restart walks from the seed,
/// a step that would leave the ball ends the walk. Scores are visit fractions.
template <GraphView G>
TwoHopWalkResult ppr_two_hop_random_walk(const G& g, const NodeRef& seed_in, const WalkConfig& cfg) {
    cfg.validate();
    NodeRef probe[] = {seed_in};
    prefetch(g, std::span<const NodeRef>(probe));
    auto seed = g.resolve(seed_in);
    if (!seed) throw NodeNotFound(seed_in);
    auto types = detail::edge_type_list(g, cfg.edge_types);

    std::unordered_map<NodeRef, std::uint32_t, NodeRefHash> dist{{*seed, 0}};
    std::vector<NodeRef> frontier{*seed};
    for (std::uint32_t d = 1; d <= 2; ++d) {
        prefetch(g, std::span<const NodeRef>(frontier));
        std::vector<NodeRef> next;
        for (const auto& f : frontier)
            for (auto t : types) {
                auto run = g.out_edges(f, t);
                for (const auto& u : run.dst)
                    if (dist.try_emplace(u, d).second) next.push_back(u);
            }
        frontier = std::move(next);
    }
    // Only nodes at distance <= 1 ever step, but the last ring's adjacency decides
    // where a walk standing at distance 2 tries to go.
    prefetch(g, std::span<const NodeRef>(frontier));

    struct Out {
        std::vector<NodeRef> dst;
        std::vector<double> cumulative;
    };
    std::unordered_map<NodeRef, Out, NodeRefHash> table;
    auto transitions = [&](const NodeRef& v) -> const Out& {
        auto [it, inserted] = table.try_emplace(v);
        if (inserted) {
            double acc = 0.0;
            for (auto t : types) {
                auto run = g.out_edges(v, t);
                for (std::size_t e = 0; e < run.size(); ++e) {
                    acc += cfg.weighted ? run.weight[e] : 1.0;
                    it->second.dst.push_back(run.dst[e]);
                    it->second.cumulative.push_back(acc);
                }
            }
        }
        return it->second;
    };

    std::unordered_map<NodeRef, std::size_t, NodeRefHash> visits;
    std::size_t total = 0;
    auto rng = Rng::keyed(cfg.rng_seed, *seed, 0);
    for (std::size_t w = 0; w < cfg.num_walks; ++w) {
        NodeRef cur = *seed;
        ++visits[cur];
        ++total;
        while (rng.uniform() >= cfg.alpha) {
            const auto& out = transitions(cur);
            NodeRef next = cur;
            if (!out.dst.empty()) {
                double x = rng.uniform() * out.cumulative.back();
                auto it = std::upper_bound(out.cumulative.begin(), out.cumulative.end(), x);
                if (it == out.cumulative.end()) --it;
                next = out.dst[static_cast<std::size_t>(it - out.cumulative.begin())];
            }
            if (!dist.contains(next)) break;
            cur = next;
            ++visits[cur];
            ++total;
        }
    }

    TwoHopWalkResult res;
    res.total_visits = total;
    res.sample.seed = *seed;
    res.sample.strategy = Strategy::ppr_two_hop;
    for (auto& [node, count] : visits) {
        double frac = static_cast<double>(count) / static_cast<double>(total);
        res.visit_fraction[node] = frac;
        if (node == *seed && !cfg.include_seed) continue;
        res.sample.entries.push_back({node, frac, dist.at(node), *seed});
    }
    std::sort(res.sample.entries.begin(), res.sample.entries.end(), detail::score_order);
    if (res.sample.entries.size() > cfg.top_k) res.sample.entries.resize(cfg.top_k);
    return res;
}

struct TemporalEvent {
    NodeRef node;
    Timestamp ts = 0;
    double weight = 1.0;

    friend bool operator==(const TemporalEvent&, const TemporalEvent&) = default;
};

template <GraphView G>
EdgeRun temporal_prefix(const G& g, const NodeRef& node, EdgeType edge_type, Timestamp before) {
    auto run = g.out_edges(node, edge_type);
    auto it = std::lower_bound(run.ts.begin(), run.ts.end(), before);
    return run.prefix(static_cast<std::size_t>(it - run.ts.begin()));
}

/// The n most recent edges strictly before `before`, oldest first.
template <GraphView G>
std::vector<TemporalEvent> sample_temporal_last_n(const G& g, const NodeRef& node_in, EdgeType edge_type,
                                                  Timestamp before, std::size_t n) {
    if (n < 1) throw std::invalid_argument("sample_temporal_last_n: n must be >= 1");
    NodeRef probe[] = {node_in};
    prefetch(g, std::span<const NodeRef>(probe));
    auto node = g.resolve(node_in);
    if (!node) throw NodeNotFound(node_in);
    auto run = temporal_prefix(g, *node, edge_type, before);
    const std::size_t start = run.size() > n ? run.size() - n : 0;
    std::vector<TemporalEvent> out;
    out.reserve(run.size() - start);
    for (std::size_t i = start; i < run.size(); ++i) out.push_back({run.dst[i], run.ts[i], run.weight[i]});
    return out;
}

inline NeighborSample to_sample(const NodeRef& seed, const std::vector<TemporalEvent>& events) {
    NeighborSample s{seed, Strategy::temporal, {}, false};
    for (const auto& e : events) s.entries.push_back({e.node, static_cast<double>(e.ts), 1, seed});
    return s;
}

}  // namespace lignn
