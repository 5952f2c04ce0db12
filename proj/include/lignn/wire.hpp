#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "lignn/core.hpp"
#include "lignn/samplers.hpp"

// Frame: u32 length of everything after the opcode, u8 opcode, payload. All
// integers and floats little-endian. Responses reuse the request opcode and
// start with a status byte; non-OK responses carry only an error string.
namespace lignn::wire {

enum class Op : std::uint8_t {
    sample_neighbors = 0x01,
    get_features = 0x02,
    ppr_two_hop = 0x03,
    ppr_push_batch = 0x04,
    temporal_last_n = 0x05,
    health = 0x06,
};

enum class Status : std::uint8_t { ok = 0, not_owned = 1, bad_request = 2, internal = 3 };

/// SampleNeighbors strategy byte beyond the sampler strategies: raw adjacency of
/// the seed, used by clients that sample over a partitioned graph themselves.
inline constexpr std::uint8_t kAdjacency = 5;

inline constexpr std::uint32_t kMaxFrame = 64u << 20;

class DecodeError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Messages

struct SampleParams {
    std::vector<std::uint32_t> fanouts;         // random, weighted
    std::map<EdgeType, double> multipliers;     // weighted
    std::uint64_t rng_seed = 0;                 // random, weighted, ppr_two_hop
    double alpha = 0.0;                         // ppr_push, ppr_two_hop
    double r_max = 0.0;                         // ppr_push
    std::uint32_t top_k = 0;                    // ppr_push, ppr_two_hop
    std::uint32_t walks = 0;                    // ppr_two_hop
    bool weighted = true;                       // ppr_push, ppr_two_hop
    bool include_seed = false;                  // ppr_push, ppr_two_hop
    EdgeType edge_type = 0;                     // temporal
    Timestamp before = 0;                       // temporal
    std::uint32_t n = 0;                        // temporal
    std::vector<EdgeType> edge_types;           // all but temporal

    friend bool operator==(const SampleParams&, const SampleParams&) = default;
};

struct SampleNeighborsReq {
    std::uint8_t strategy = 0;
    NodeRef seed;
    SampleParams params;
    friend bool operator==(const SampleNeighborsReq&, const SampleNeighborsReq&) = default;
};
struct GetFeaturesReq {
    NodeRef node;
    friend bool operator==(const GetFeaturesReq&, const GetFeaturesReq&) = default;
};
struct Ppr2HopReq {
    NodeRef node;
    double alpha = 0.15;
    std::uint32_t walks = 0;
    std::uint32_t top_k = 0;
    std::uint64_t rng_seed = 0;
    friend bool operator==(const Ppr2HopReq&, const Ppr2HopReq&) = default;
};
struct PprPushBatchReq {
    std::vector<NodeRef> seeds;
    double alpha = 0.15;
    double r_max = 1e-4;
    std::uint32_t top_k = 0;
    friend bool operator==(const PprPushBatchReq&, const PprPushBatchReq&) = default;
};
struct TemporalLastNReq {
    NodeRef node;
    EdgeType edge_type = 0;
    Timestamp before = 0;
    std::uint32_t n = 0;
    friend bool operator==(const TemporalLastNReq&, const TemporalLastNReq&) = default;
};
struct HealthReq {
    friend bool operator==(const HealthReq&, const HealthReq&) = default;
};

using Request = std::variant<SampleNeighborsReq, GetFeaturesReq, Ppr2HopReq, PprPushBatchReq, TemporalLastNReq, HealthReq>;

inline Op op_of(const Request& r) {
    return std::visit(
        [](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, SampleNeighborsReq>) return Op::sample_neighbors;
            if constexpr (std::is_same_v<T, GetFeaturesReq>) return Op::get_features;
            if constexpr (std::is_same_v<T, Ppr2HopReq>) return Op::ppr_two_hop;
            if constexpr (std::is_same_v<T, PprPushBatchReq>) return Op::ppr_push_batch;
            if constexpr (std::is_same_v<T, TemporalLastNReq>) return Op::temporal_last_n;
            if constexpr (std::is_same_v<T, HealthReq>) return Op::health;
        },
        r);
}

struct AdjacencyEdge {
    NodeRef node;
    double weight = 0.0;
    Timestamp ts = 0;
    friend bool operator==(const AdjacencyEdge& a, const AdjacencyEdge& b) {
        return a.node == b.node && a.node.index == b.node.index && a.weight == b.weight && a.ts == b.ts;
    }
};

struct SampleResp {
    std::uint8_t strategy = 0;
    std::vector<NeighborSample> hops;  // one entry for single-hop strategies
    friend bool operator==(const SampleResp&, const SampleResp&) = default;
};
struct AdjacencyResp {
    NodeRef node;  // index carried
    std::map<EdgeType, std::vector<AdjacencyEdge>> runs;
    friend bool operator==(const AdjacencyResp& a, const AdjacencyResp& b) {
        return a.node == b.node && a.node.index == b.node.index && a.runs == b.runs;
    }
};
struct FeaturesResp {
    NodeRef node;
    std::vector<double> values;
    friend bool operator==(const FeaturesResp&, const FeaturesResp&) = default;
};
struct SeedOutcome {
    NodeRef seed;
    Status status = Status::ok;
    NeighborSample sample;
    std::string error;
    friend bool operator==(const SeedOutcome&, const SeedOutcome&) = default;
};
struct PprBatchResp {
    std::vector<SeedOutcome> results;
    friend bool operator==(const PprBatchResp&, const PprBatchResp&) = default;
};
struct TemporalResp {
    std::vector<TemporalEvent> events;
    friend bool operator==(const TemporalResp&, const TemporalResp&) = default;
};
struct HealthResp {
    std::uint32_t shard = 0;
    std::uint32_t shards = 1;
    std::map<NodeType, std::uint64_t> node_counts;
    std::map<EdgeType, std::uint64_t> edge_counts;
    std::vector<EdgeType> edge_types;
    friend bool operator==(const HealthResp&, const HealthResp&) = default;
};

using ResponseBody =
    std::variant<std::monostate, SampleResp, AdjacencyResp, FeaturesResp, PprBatchResp, TemporalResp, HealthResp>;

struct Response {
    Op op = Op::health;
    Status status = Status::ok;
    std::string error;
    ResponseBody body;
    friend bool operator==(const Response&, const Response&) = default;
};

// ---------------------------------------------------------------------------
// Primitive codec

class Writer {
public:
    template <typename T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        static_assert(std::endian::native == std::endian::little, "big-endian hosts not supported");
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.append(p, sizeof(T));
    }
    void u8(std::uint8_t v) { put(v); }
    void u16(std::uint16_t v) { put(v); }
    void u32(std::uint32_t v) { put(v); }
    void u64(std::uint64_t v) { put(v); }
    void i64(std::int64_t v) { put(v); }
    void f64(double v) { put(v); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    void node(const NodeRef& n) {
        u16(n.type);
        u64(n.id);
    }
    void node_indexed(const NodeRef& n) {
        node(n);
        u32(n.index);
    }
    std::string take() { return std::move(buf_); }
    const std::string& data() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    template <typename T>
    T get() {
        if (data_.size() - pos_ < sizeof(T)) throw DecodeError("wire: truncated message");
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::uint8_t u8() { return get<std::uint8_t>(); }
    std::uint16_t u16() { return get<std::uint16_t>(); }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    std::int64_t i64() { return get<std::int64_t>(); }
    double f64() { return get<double>(); }
    bool flag() {
        auto v = u8();
        if (v > 1) throw DecodeError("wire: bad boolean");
        return v == 1;
    }
    std::string str() {
        auto n = count(1);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    /// Reads a u32 element count and checks it against the bytes left.
    std::uint32_t count(std::size_t min_element_size) {
        auto n = u32();
        if (static_cast<std::uint64_t>(n) * min_element_size > data_.size() - pos_)
            throw DecodeError("wire: count exceeds message");
        return n;
    }
    NodeRef node() {
        NodeRef n;
        n.type = u16();
        n.id = u64();
        n.index = kNoIndex;
        return n;
    }
    NodeRef node_indexed() {
        auto n = node();
        n.index = u32();
        return n;
    }
    void finish() const {
        if (pos_ != data_.size()) throw DecodeError("wire: trailing bytes");
    }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

namespace detail {

inline void put_types(Writer& w, const std::vector<EdgeType>& t) {
    w.u32(static_cast<std::uint32_t>(t.size()));
    for (auto e : t) w.u16(e);
}
inline std::vector<EdgeType> get_types(Reader& r) {
    std::vector<EdgeType> out(r.count(2));
    for (auto& e : out) e = r.u16();
    return out;
}

inline void put_sample(Writer& w, const NeighborSample& s) {
    w.node_indexed(s.seed);
    w.u8(static_cast<std::uint8_t>(s.strategy));
    w.u8(s.truncated ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(s.entries.size()));
    for (const auto& e : s.entries) {
        w.node_indexed(e.node);
        w.f64(e.score);
        w.u32(e.hop);
        w.node_indexed(e.parent);
    }
}
inline NeighborSample get_sample(Reader& r) {
    NeighborSample s;
    s.seed = r.node_indexed();
    auto st = r.u8();
    if (st > 4) throw DecodeError("wire: bad strategy");
    s.strategy = static_cast<Strategy>(st);
    s.truncated = r.flag();
    s.entries.resize(r.count(14 + 8 + 4 + 14));
    for (auto& e : s.entries) {
        e.node = r.node_indexed();
        e.score = r.f64();
        e.hop = r.u32();
        e.parent = r.node_indexed();
    }
    return s;
}

inline void put_status(Writer& w, Status s) { w.u8(static_cast<std::uint8_t>(s)); }
inline Status get_status(Reader& r) {
    auto s = r.u8();
    if (s > 3) throw DecodeError("wire: bad status");
    return static_cast<Status>(s);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Payload codecs

inline std::string encode_payload(const Request& req) {
    Writer w;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, SampleNeighborsReq>) {
                w.u8(m.strategy);
                w.node(m.seed);
                const auto& p = m.params;
                switch (m.strategy) {
                    case 0:
                    case 1:
                        w.u32(static_cast<std::uint32_t>(p.fanouts.size()));
                        for (auto f : p.fanouts) w.u32(f);
                        w.u64(p.rng_seed);
                        if (m.strategy == 1) {
                            w.u32(static_cast<std::uint32_t>(p.multipliers.size()));
                            for (auto [t, x] : p.multipliers) {
                                w.u16(t);
                                w.f64(x);
                            }
                        }
                        detail::put_types(w, p.edge_types);
                        break;
                    case 2:
                        w.f64(p.alpha);
                        w.f64(p.r_max);
                        w.u32(p.top_k);
                        w.u8(p.weighted);
                        w.u8(p.include_seed);
                        detail::put_types(w, p.edge_types);
                        break;
                    case 3:
                        w.f64(p.alpha);
                        w.u32(p.walks);
                        w.u32(p.top_k);
                        w.u64(p.rng_seed);
                        w.u8(p.weighted);
                        w.u8(p.include_seed);
                        detail::put_types(w, p.edge_types);
                        break;
                    case 4:
                        w.u16(p.edge_type);
                        w.i64(p.before);
                        w.u32(p.n);
                        break;
                    case kAdjacency:
                        detail::put_types(w, p.edge_types);
                        break;
                    default:
                        throw std::invalid_argument("wire: unknown strategy");
                }
            } else if constexpr (std::is_same_v<T, GetFeaturesReq>) {
                w.node(m.node);
            } else if constexpr (std::is_same_v<T, Ppr2HopReq>) {
                w.node(m.node);
                w.f64(m.alpha);
                w.u32(m.walks);
                w.u32(m.top_k);
                w.u64(m.rng_seed);
            } else if constexpr (std::is_same_v<T, PprPushBatchReq>) {
                w.u32(static_cast<std::uint32_t>(m.seeds.size()));
                for (const auto& s : m.seeds) w.node(s);
                w.f64(m.alpha);
                w.f64(m.r_max);
                w.u32(m.top_k);
            } else if constexpr (std::is_same_v<T, TemporalLastNReq>) {
                w.node(m.node);
                w.u16(m.edge_type);
                w.i64(m.before);
                w.u32(m.n);
            }
        },
        req);
    return w.take();
}

inline Request decode_request(Op op, std::string_view payload) {
    Reader r(payload);
    Request out;
    switch (op) {
        case Op::sample_neighbors: {
            SampleNeighborsReq m;
            m.strategy = r.u8();
            m.seed = r.node();
            auto& p = m.params;
            switch (m.strategy) {
                case 0:
                case 1: {
                    p.fanouts.resize(r.count(4));
                    for (auto& f : p.fanouts) f = r.u32();
                    p.rng_seed = r.u64();
                    if (m.strategy == 1) {
                        for (auto n = r.count(10); n > 0; --n) {
                            auto t = r.u16();
                            p.multipliers[t] = r.f64();
                        }
                    }
                    p.edge_types = detail::get_types(r);
                    break;
                }
                case 2:
                    p.alpha = r.f64();
                    p.r_max = r.f64();
                    p.top_k = r.u32();
                    p.weighted = r.flag();
                    p.include_seed = r.flag();
                    p.edge_types = detail::get_types(r);
                    break;
                case 3:
                    p.alpha = r.f64();
                    p.walks = r.u32();
                    p.top_k = r.u32();
                    p.rng_seed = r.u64();
                    p.weighted = r.flag();
                    p.include_seed = r.flag();
                    p.edge_types = detail::get_types(r);
                    break;
                case 4:
                    p.edge_type = r.u16();
                    p.before = r.i64();
                    p.n = r.u32();
                    break;
                case kAdjacency:
                    p.edge_types = detail::get_types(r);
                    break;
                default:
                    throw DecodeError("wire: unknown strategy");
            }
            out = m;
            break;
        }
        case Op::get_features:
            out = GetFeaturesReq{r.node()};
            break;
        case Op::ppr_two_hop: {
            Ppr2HopReq m;
            m.node = r.node();
            m.alpha = r.f64();
            m.walks = r.u32();
            m.top_k = r.u32();
            m.rng_seed = r.u64();
            out = m;
            break;
        }
        case Op::ppr_push_batch: {
            PprPushBatchReq m;
            m.seeds.resize(r.count(10));
            for (auto& s : m.seeds) s = r.node();
            m.alpha = r.f64();
            m.r_max = r.f64();
            m.top_k = r.u32();
            out = m;
            break;
        }
        case Op::temporal_last_n: {
            TemporalLastNReq m;
            m.node = r.node();
            m.edge_type = r.u16();
            m.before = r.i64();
            m.n = r.u32();
            out = m;
            break;
        }
        case Op::health:
            out = HealthReq{};
            break;
        default:
            throw DecodeError("wire: unknown opcode");
    }
    r.finish();
    return out;
}

inline std::string encode_payload(const Response& resp) {
    Writer w;
    detail::put_status(w, resp.status);
    if (resp.status != Status::ok) {
        w.str(resp.error);
        return w.take();
    }
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, SampleResp>) {
                w.u8(m.strategy);
                w.u32(static_cast<std::uint32_t>(m.hops.size()));
                for (const auto& h : m.hops) detail::put_sample(w, h);
            } else if constexpr (std::is_same_v<T, AdjacencyResp>) {
                w.u8(kAdjacency);
                w.node_indexed(m.node);
                w.u32(static_cast<std::uint32_t>(m.runs.size()));
                for (const auto& [t, edges] : m.runs) {
                    w.u16(t);
                    w.u32(static_cast<std::uint32_t>(edges.size()));
                    for (const auto& e : edges) {
                        w.node_indexed(e.node);
                        w.f64(e.weight);
                        w.i64(e.ts);
                    }
                }
            } else if constexpr (std::is_same_v<T, FeaturesResp>) {
                w.node(m.node);
                w.u32(static_cast<std::uint32_t>(m.values.size()));
                for (double v : m.values) w.f64(v);
            } else if constexpr (std::is_same_v<T, PprBatchResp>) {
                w.u32(static_cast<std::uint32_t>(m.results.size()));
                for (const auto& o : m.results) {
                    w.node(o.seed);
                    detail::put_status(w, o.status);
                    if (o.status == Status::ok)
                        detail::put_sample(w, o.sample);
                    else
                        w.str(o.error);
                }
            } else if constexpr (std::is_same_v<T, TemporalResp>) {
                w.u32(static_cast<std::uint32_t>(m.events.size()));
                for (const auto& e : m.events) {
                    w.node_indexed(e.node);
                    w.i64(e.ts);
                    w.f64(e.weight);
                }
            } else if constexpr (std::is_same_v<T, HealthResp>) {
                w.u32(m.shard);
                w.u32(m.shards);
                w.u32(static_cast<std::uint32_t>(m.node_counts.size()));
                for (auto [t, c] : m.node_counts) {
                    w.u16(t);
                    w.u64(c);
                }
                w.u32(static_cast<std::uint32_t>(m.edge_counts.size()));
                for (auto [t, c] : m.edge_counts) {
                    w.u16(t);
                    w.u64(c);
                }
                detail::put_types(w, m.edge_types);
            }
        },
        resp.body);
    return w.take();
}

inline Response decode_response(Op op, std::string_view payload) {
    Reader r(payload);
    Response out;
    out.op = op;
    out.status = detail::get_status(r);
    if (out.status != Status::ok) {
        out.error = r.str();
        r.finish();
        return out;
    }
    switch (op) {
        case Op::sample_neighbors:
        case Op::ppr_two_hop: {
            auto strategy = r.u8();
            if (strategy == kAdjacency) {
                AdjacencyResp m;
                m.node = r.node_indexed();
                for (auto n = r.count(6); n > 0; --n) {
                    auto t = r.u16();
                    auto& edges = m.runs[t];
                    edges.resize(r.count(30));
                    for (auto& e : edges) {
                        e.node = r.node_indexed();
                        e.weight = r.f64();
                        e.ts = r.i64();
                    }
                }
                out.body = std::move(m);
            } else {
                if (strategy > 4) throw DecodeError("wire: bad strategy");
                SampleResp m;
                m.strategy = strategy;
                m.hops.resize(r.count(20));
                for (auto& h : m.hops) h = detail::get_sample(r);
                out.body = std::move(m);
            }
            break;
        }
        case Op::get_features: {
            FeaturesResp m;
            m.node = r.node();
            m.values.resize(r.count(8));
            for (auto& v : m.values) v = r.f64();
            out.body = std::move(m);
            break;
        }
        case Op::ppr_push_batch: {
            PprBatchResp m;
            m.results.resize(r.count(11));
            for (auto& o : m.results) {
                o.seed = r.node();
                o.status = detail::get_status(r);
                if (o.status == Status::ok)
                    o.sample = detail::get_sample(r);
                else
                    o.error = r.str();
            }
            out.body = std::move(m);
            break;
        }
        case Op::temporal_last_n: {
            TemporalResp m;
            m.events.resize(r.count(30));
            for (auto& e : m.events) {
                e.node = r.node_indexed();
                e.ts = r.i64();
                e.weight = r.f64();
            }
            out.body = std::move(m);
            break;
        }
        case Op::health: {
            HealthResp m;
            m.shard = r.u32();
            m.shards = r.u32();
            for (auto n = r.count(10); n > 0; --n) {
                auto t = r.u16();
                m.node_counts[t] = r.u64();
            }
            for (auto n = r.count(10); n > 0; --n) {
                auto t = r.u16();
                m.edge_counts[t] = r.u64();
            }
            m.edge_types = detail::get_types(r);
            out.body = std::move(m);
            break;
        }
        default:
            throw DecodeError("wire: unknown opcode");
    }
    r.finish();
    return out;
}

// ---------------------------------------------------------------------------
// Framing

inline std::string frame(Op op, std::string_view payload) {
    Writer w;
    w.u32(static_cast<std::uint32_t>(payload.size()));
    w.u8(static_cast<std::uint8_t>(op));
    std::string out = w.take();
    out.append(payload);
    return out;
}

inline std::string encode(const Request& req) { return frame(op_of(req), encode_payload(req)); }
inline std::string encode(const Response& resp) { return frame(resp.op, encode_payload(resp)); }

struct FrameHeader {
    std::uint32_t length = 0;
    Op op = Op::health;
};

inline FrameHeader parse_header(std::string_view five) {
    Reader r(five.substr(0, 5));
    FrameHeader h;
    h.length = r.u32();
    auto op = r.u8();
    if (op < 1 || op > 6) throw DecodeError("wire: unknown opcode " + std::to_string(op));
    if (h.length > kMaxFrame) throw DecodeError("wire: frame too large");
    h.op = static_cast<Op>(op);
    return h;
}

inline Request decode_request(std::string_view frame_bytes) {
    auto h = parse_header(frame_bytes);
    if (frame_bytes.size() != 5 + h.length) throw DecodeError("wire: frame length mismatch");
    return decode_request(h.op, frame_bytes.substr(5));
}

inline Response decode_response(std::string_view frame_bytes) {
    auto h = parse_header(frame_bytes);
    if (frame_bytes.size() != 5 + h.length) throw DecodeError("wire: frame length mismatch");
    return decode_response(h.op, frame_bytes.substr(5));
}

}  // namespace lignn::wire
