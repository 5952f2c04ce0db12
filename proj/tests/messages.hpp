#pragma once

#include <string>

#include "lignn/wire.hpp"

// Random well-formed protocol messages for round-trip checks.
namespace messages {

using namespace lignn;
using namespace lignn::wire;

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    std::uint64_t u(std::uint64_t n) { return rng_.below(n); }
    double real() {
        // Mix of ordinary values, exact integers and extremes.
        switch (u(4)) {
            case 0: return rng_.uniform();
            case 1: return static_cast<double>(u(1000)) - 500.0;
            case 2: return (rng_.uniform() - 0.5) * 1e300;
            default: return -rng_.uniform() * 1e-300;
        }
    }
    NodeRef node(bool indexed = false) {
        NodeRef n{static_cast<NodeType>(u(65536)), rng_(), kNoIndex};
        if (u(8) == 0) n.id = std::numeric_limits<NodeId>::max();
        if (indexed) n.index = static_cast<std::uint32_t>(u(1u << 31));
        return n;
    }
    std::string text() {
        std::string s(u(20), ' ');
        for (auto& c : s) c = static_cast<char>(u(256));
        return s;
    }
    std::vector<EdgeType> types() {
        std::vector<EdgeType> t(u(4));
        for (auto& e : t) e = static_cast<EdgeType>(u(65536));
        return t;
    }

    NeighborSample sample() {
        NeighborSample s;
        s.seed = node(true);
        s.strategy = static_cast<Strategy>(u(5));
        s.truncated = u(2) == 1;
        s.entries.resize(u(6));
        for (auto& e : s.entries) e = {node(true), real(), static_cast<std::uint32_t>(u(5)), node(true)};
        return s;
    }

    Request request() {
        switch (u(6)) {
            case 0: {
                SampleNeighborsReq m;
                m.strategy = static_cast<std::uint8_t>(u(6));
                m.seed = node();
                auto& p = m.params;
                switch (m.strategy) {
                    case 0:
                    case 1:
                        p.fanouts.resize(u(4));
                        for (auto& f : p.fanouts) f = static_cast<std::uint32_t>(u(1000));
                        p.rng_seed = rng_();
                        if (m.strategy == 1)
                            for (std::uint64_t k = u(3); k > 0; --k) p.multipliers[static_cast<EdgeType>(u(100))] = real();
                        p.edge_types = types();
                        break;
                    case 2:
                        p.alpha = real();
                        p.r_max = real();
                        p.top_k = static_cast<std::uint32_t>(u(1000));
                        p.weighted = u(2) == 1;
                        p.include_seed = u(2) == 1;
                        p.edge_types = types();
                        break;
                    case 3:
                        p.alpha = real();
                        p.walks = static_cast<std::uint32_t>(u(100000));
                        p.top_k = static_cast<std::uint32_t>(u(1000));
                        p.rng_seed = rng_();
                        p.weighted = u(2) == 1;
                        p.include_seed = u(2) == 1;
                        p.edge_types = types();
                        break;
                    case 4:
                        p.edge_type = static_cast<EdgeType>(u(65536));
                        p.before = static_cast<Timestamp>(rng_());
                        p.n = static_cast<std::uint32_t>(u(500));
                        break;
                    default:
                        p.edge_types = types();
                }
                return m;
            }
            case 1: return GetFeaturesReq{node()};
            case 2: return Ppr2HopReq{node(), real(), static_cast<std::uint32_t>(u(1u << 20)), static_cast<std::uint32_t>(u(500)), rng_()};
            case 3: {
                PprPushBatchReq m;
                m.seeds.resize(u(8));
                for (auto& s : m.seeds) s = node();
                m.alpha = real();
                m.r_max = real();
                m.top_k = static_cast<std::uint32_t>(u(500));
                return m;
            }
            case 4:
                return TemporalLastNReq{node(), static_cast<EdgeType>(u(65536)), static_cast<Timestamp>(rng_()),
                                        static_cast<std::uint32_t>(u(500))};
            default: return HealthReq{};
        }
    }

    Response response() {
        Response r;
        const auto kind = u(7);
        static constexpr Op ops[] = {Op::sample_neighbors, Op::sample_neighbors, Op::get_features, Op::ppr_push_batch,
                                     Op::temporal_last_n, Op::health, Op::ppr_two_hop};
        r.op = ops[kind];
        if (u(6) == 0) {
            r.status = static_cast<Status>(1 + u(3));
            r.error = text();
            return r;
        }
        switch (kind) {
            case 0:
            case 6: {
                SampleResp s;
                s.strategy = static_cast<std::uint8_t>(u(5));
                s.hops.resize(u(3));
                for (auto& h : s.hops) h = sample();
                r.body = std::move(s);
                break;
            }
            case 1: {
                AdjacencyResp a;
                a.node = node(true);
                for (std::uint64_t k = u(3); k > 0; --k) {
                    auto& run = a.runs[static_cast<EdgeType>(u(65536))];
                    run.resize(u(5));
                    for (auto& e : run) e = {node(true), real(), static_cast<Timestamp>(rng_())};
                }
                r.body = std::move(a);
                break;
            }
            case 2: {
                FeaturesResp f;
                f.node = node();
                f.values.resize(u(10));
                for (auto& v : f.values) v = real();
                r.body = std::move(f);
                break;
            }
            case 3: {
                PprBatchResp b;
                b.results.resize(u(5));
                for (auto& o : b.results) {
                    o.seed = node();
                    if (u(3) == 0) {
                        o.status = static_cast<Status>(1 + u(3));
                        o.error = text();
                    } else {
                        o.sample = sample();
                    }
                }
                r.body = std::move(b);
                break;
            }
            case 4: {
                TemporalResp t;
                t.events.resize(u(6));
                for (auto& e : t.events) e = {node(true), static_cast<Timestamp>(rng_()), real()};
                r.body = std::move(t);
                break;
            }
            default: {
                HealthResp h;
                h.shard = static_cast<std::uint32_t>(u(16));
                h.shards = static_cast<std::uint32_t>(u(16));
                for (std::uint64_t k = u(4); k > 0; --k) h.node_counts[static_cast<NodeType>(u(100))] = rng_();
                for (std::uint64_t k = u(4); k > 0; --k) h.edge_counts[static_cast<EdgeType>(u(100))] = rng_();
                h.edge_types = types();
                r.body = std::move(h);
            }
        }
        return r;
    }

private:
    Rng rng_;
};

}  // namespace messages
