#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace lignn {

using NodeType = std::uint16_t;
using EdgeType = std::uint16_t;
using NodeId = std::uint64_t;
using Timestamp = std::int64_t;

/// Sentinel meaning "after every event"; temporal cuts at this value return whole runs.
inline constexpr Timestamp kTimeInfinity = std::numeric_limits<Timestamp>::max();
inline constexpr std::uint32_t kNoIndex = std::numeric_limits<std::uint32_t>::max();

/// A node handle. Identity is (type, id); `index` is the dense per-type position
/// inside the graph that produced the handle, or kNoIndex when the handle came off
/// the wire. Dense indices are assigned in ascending id order, so ordering by
/// (type, id) and by (type, index) agree.
struct NodeRef {
    NodeType type = 0;
    NodeId id = 0;
    std::uint32_t index = kNoIndex;

    friend bool operator==(const NodeRef& a, const NodeRef& b) noexcept {
        return a.type == b.type && a.id == b.id;
    }
    friend std::strong_ordering operator<=>(const NodeRef& a, const NodeRef& b) noexcept {
        if (auto c = a.type <=> b.type; c != 0) return c;
        return a.id <=> b.id;
    }
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NodeNotFound : public Error {
public:
    explicit NodeNotFound(const NodeRef& n)
        : Error("node not found: type=" + std::to_string(n.type) + " id=" + std::to_string(n.id)),
          node(n) {}
    NodeRef node;
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t node_key(const NodeRef& n) noexcept {
    return mix64(n.id ^ (static_cast<std::uint64_t>(n.type) * kGolden));
}

struct NodeRefHash {
    std::size_t operator()(const NodeRef& n) const noexcept { return node_key(n); }
};

/// Counter-based generator. A stream is fully determined by its key, so the same
/// (rng_seed, node, hop) produces the same draws no matter which thread, batch or
/// shard asks for it.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t key) noexcept : state_(key) {}

    static Rng keyed(std::uint64_t seed, const NodeRef& node, std::uint64_t stream = 0) noexcept {
        return Rng(mix64(mix64(seed ^ kGolden) ^ node_key(node)) ^ mix64(stream + 0x632be59bd9b4e019ULL));
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        state_ += kGolden;
        return mix64(state_);
    }

    /// Uniform double in [0, 1).
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound), bound > 0 (Lemire's multiply-shift with rejection).
    std::uint64_t below(std::uint64_t bound) noexcept {
        auto x = (*this)();
        auto m = static_cast<unsigned __int128>(x) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                x = (*this)();
                m = static_cast<unsigned __int128>(x) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

private:
    std::uint64_t state_;
};

}  // namespace lignn
