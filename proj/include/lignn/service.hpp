#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "lignn/core.hpp"
#include "lignn/graph.hpp"
#include "lignn/samplers.hpp"
#include "lignn/wire.hpp"

namespace lignn {

// ---------------------------------------------------------------------------
// Partitioning

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
};

/// instance = mix64(node_id ^ (node_type * 0x9e3779b97f4a7c15)) mod P.
struct PartitionMap {
    std::uint32_t instances = 1;
    std::vector<Endpoint> endpoints;

    static std::uint64_t hash(NodeType type, NodeId id) noexcept {
        return mix64(id ^ (static_cast<std::uint64_t>(type) * kGolden));
    }
    std::uint32_t owner(const NodeRef& n) const noexcept {
        return static_cast<std::uint32_t>(hash(n.type, n.id) % instances);
    }
};

class NotOwned : public Error {
public:
    explicit NotOwned(const NodeRef& n)
        : Error("node " + std::to_string(n.type) + ":" + std::to_string(n.id) + " is not owned by this shard"), node(n) {}
    NodeRef node;
};

/// One instance's slice: every node of the full graph (so internal indices agree
/// across shards) but only the adjacency and features of owned nodes.
struct Shard {
    HeteroGraph graph;
    PartitionMap map;
    std::uint32_t index = 0;

    bool owns(const NodeRef& n) const noexcept { return map.owner(n) == index; }
};

inline Shard make_shard(const HeteroGraph& full, const PartitionMap& map, std::uint32_t index) {
    if (index >= map.instances) throw std::invalid_argument("make_shard: index outside partition map");
    GraphBuilder b(full.schema());
    for (const auto& n : full.all_nodes()) {
        auto f = full.features(n);
        if (map.owner(n) == index && !f.empty())
            b.add_node(n.type, n.id, std::vector<double>(f.begin(), f.end()));
        else
            b.add_node(n.type, n.id);
    }
    for (const auto& e : full.edge_records())
        if (map.owner({e.src_type, e.src_id, kNoIndex}) == index) b.add_edge(e);
    return {b.build(), map, index};
}

/// Graph view over a shard that refuses to read adjacency it does not own.
class ShardView {
public:
    explicit ShardView(const Shard& s) : s_(s) {}
    std::optional<NodeRef> resolve(const NodeRef& n) const { return s_.graph.resolve(n); }
    EdgeRun out_edges(const NodeRef& n, EdgeType t) const {
        if (!s_.owns(n)) throw NotOwned(n);
        return s_.graph.out_edges(n, t);
    }
    std::span<const EdgeType> edge_types() const { return s_.graph.edge_types(); }
    std::span<const double> features(const NodeRef& n) const {
        if (!s_.owns(n)) throw NotOwned(n);
        return s_.graph.features(n);
    }

private:
    const Shard& s_;
};

// ---------------------------------------------------------------------------
// Request handling (transport independent)

namespace detail {

inline wire::Response fail(wire::Op op, wire::Status s, std::string msg) {
    wire::Response r;
    r.op = op;
    r.status = s;
    r.error = std::move(msg);
    return r;
}

inline PPRConfig push_config(double alpha, double r_max, std::uint32_t top_k, bool weighted, bool include_seed,
                             std::vector<EdgeType> types) {
    PPRConfig c;
    c.alpha = alpha;
    c.r_max = r_max;
    c.top_k = top_k;
    c.weighted = weighted;
    c.include_seed = include_seed;
    c.edge_types = std::move(types);
    return c;
}

inline WalkConfig walk_config(double alpha, std::uint32_t walks, std::uint32_t top_k, std::uint64_t rng,
                              bool weighted, bool include_seed, std::vector<EdgeType> types) {
    WalkConfig c;
    c.alpha = alpha;
    c.num_walks = walks;
    c.top_k = top_k;
    c.rng_seed = rng;
    c.weighted = weighted;
    c.include_seed = include_seed;
    c.edge_types = std::move(types);
    return c;
}

}  // namespace detail

/// Answers one request against any graph view. `owns` decides NOT_OWNED for the
/// request's anchor node; reads of unowned adjacency deeper in a computation
/// surface as NotOwned and map to the same status.
template <GraphView G, typename Owns>
wire::Response handle_request(const G& g, const Owns& owns, const wire::Request& req,
                              const wire::HealthResp& health) {
    using namespace wire;
    const Op op = op_of(req);
    try {
        return std::visit(
            [&](const auto& m) -> Response {
                using T = std::decay_t<decltype(m)>;
                Response resp;
                resp.op = op;
                if constexpr (std::is_same_v<T, HealthReq>) {
                    resp.body = health;
                } else if constexpr (std::is_same_v<T, PprPushBatchReq>) {
                    PprBatchResp body;
                    auto cfg = lignn::detail::push_config(m.alpha, m.r_max, m.top_k, true, false, {});
                    cfg.validate();
                    for (const auto& s : m.seeds) {
                        SeedOutcome o;
                        o.seed = s;
                        if (!owns(s)) {
                            o.status = Status::not_owned;
                            o.error = "seed not owned";
                        } else {
                            try {
                                o.sample = ppr_forward_push(g, s, cfg).sample;
                            } catch (const NotOwned& e) {
                                o.status = Status::not_owned;
                                o.error = e.what();
                            } catch (const NodeNotFound& e) {
                                o.status = Status::bad_request;
                                o.error = e.what();
                            }
                        }
                        body.results.push_back(std::move(o));
                    }
                    resp.body = std::move(body);
                } else {
                    const NodeRef anchor = [&] {
                        if constexpr (std::is_same_v<T, SampleNeighborsReq>)
                            return m.seed;
                        else
                            return m.node;
                    }();
                    if (!owns(anchor)) return lignn::detail::fail(op, Status::not_owned, "node not owned by this shard");
                    if constexpr (std::is_same_v<T, GetFeaturesReq>) {
                        if (!g.resolve(m.node)) throw NodeNotFound(m.node);
                        auto f = g.features(m.node);
                        resp.body = FeaturesResp{m.node, {f.begin(), f.end()}};
                    } else if constexpr (std::is_same_v<T, Ppr2HopReq>) {
                        auto cfg = lignn::detail::walk_config(m.alpha, m.walks, m.top_k, m.rng_seed, true, false, {});
                        resp.body = SampleResp{3, {ppr_two_hop_random_walk(g, m.node, cfg).sample}};
                    } else if constexpr (std::is_same_v<T, TemporalLastNReq>) {
                        resp.body = TemporalResp{sample_temporal_last_n(g, m.node, m.edge_type, m.before, m.n)};
                    } else if constexpr (std::is_same_v<T, SampleNeighborsReq>) {
                        const auto& p = m.params;
                        switch (m.strategy) {
                            case 0:
                            case 1: {
                                std::vector<std::size_t> fan(p.fanouts.begin(), p.fanouts.end());
                                auto s = sample_multihop_one(g, m.seed, fan, p.rng_seed, p.edge_types,
                                                             m.strategy == 1 ? &p.multipliers : nullptr);
                                if (!s.ok()) return lignn::detail::fail(op, Status::bad_request, s.error);
                                resp.body = SampleResp{m.strategy, std::move(s.value->hops)};
                                break;
                            }
                            case 2: {
                                auto cfg = lignn::detail::push_config(p.alpha, p.r_max, p.top_k, p.weighted, p.include_seed,
                                                               p.edge_types);
                                cfg.validate();
                                resp.body = SampleResp{2, {ppr_forward_push(g, m.seed, cfg).sample}};
                                break;
                            }
                            case 3: {
                                auto cfg = lignn::detail::walk_config(p.alpha, p.walks, p.top_k, p.rng_seed, p.weighted,
                                                               p.include_seed, p.edge_types);
                                resp.body = SampleResp{3, {ppr_two_hop_random_walk(g, m.seed, cfg).sample}};
                                break;
                            }
                            case 4: {
                                auto ev = sample_temporal_last_n(g, m.seed, p.edge_type, p.before, p.n);
                                resp.body = SampleResp{4, {to_sample(*g.resolve(m.seed), ev)}};
                                break;
                            }
                            case kAdjacency: {
                                AdjacencyResp body;
                                auto r = g.resolve(m.seed);
                                body.node = r.value_or(NodeRef{m.seed.type, m.seed.id, kNoIndex});
                                if (r) {
                                    auto types = p.edge_types;
                                    if (types.empty()) types.assign(g.edge_types().begin(), g.edge_types().end());
                                    for (auto t : types) {
                                        auto run = g.out_edges(*r, t);
                                        if (run.empty()) continue;
                                        auto& out = body.runs[t];
                                        for (std::size_t e = 0; e < run.size(); ++e)
                                            out.push_back({run.dst[e], run.weight[e], run.ts[e]});
                                    }
                                }
                                resp.body = std::move(body);
                                break;
                            }
                            default:
                                return lignn::detail::fail(op, Status::bad_request, "unknown strategy");
                        }
                    }
                }
                return resp;
            },
            req);
    } catch (const NotOwned& e) {
        return lignn::detail::fail(op, Status::not_owned, e.what());
    } catch (const NodeNotFound& e) {
        return lignn::detail::fail(op, Status::bad_request, e.what());
    } catch (const std::invalid_argument& e) {
        return lignn::detail::fail(op, Status::bad_request, e.what());
    } catch (const std::exception& e) {
        return lignn::detail::fail(op, Status::internal, e.what());
    }
}

inline wire::HealthResp shard_health(const Shard& s) {
    wire::HealthResp h;
    h.shard = s.index;
    h.shards = s.map.instances;
    for (auto t : s.graph.node_types()) h.node_counts[t] = s.graph.node_count(t);
    for (auto t : s.graph.edge_types()) {
        auto c = s.graph.edge_count(t);
        if (c) h.edge_counts[t] = c;
    }
    h.edge_types.assign(s.graph.edge_types().begin(), s.graph.edge_types().end());
    return h;
}

inline wire::Response handle_request(const Shard& s, const wire::Request& req) {
    return handle_request(ShardView(s), [&](const NodeRef& n) { return s.owns(n); }, req, shard_health(s));
}

// ---------------------------------------------------------------------------
// Sockets

namespace net {

inline bool send_all(int fd, std::string_view data) {
    while (!data.empty()) {
        auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return false;
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

enum class ReadResult { ok, eof, timeout, error };

inline ReadResult recv_exact(int fd, char* buf, std::size_t len) {
    std::size_t got = 0;
    while (got < len) {
        auto n = ::recv(fd, buf + got, len - got, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) return ReadResult::timeout;
        if (n < 0) return ReadResult::error;
        if (n == 0) return ReadResult::eof;
        got += static_cast<std::size_t>(n);
    }
    return ReadResult::ok;
}

/// Reads one frame (header + payload).
inline ReadResult read_frame(int fd, std::string& out) {
    out.assign(5, '\0');
    auto r = recv_exact(fd, out.data(), 5);
    if (r != ReadResult::ok) return r;
    std::uint32_t len;
    std::memcpy(&len, out.data(), 4);
    if (len > wire::kMaxFrame) return ReadResult::error;
    out.resize(5 + len);
    return recv_exact(fd, out.data() + 5, len);
}

inline void set_timeout(int fd, std::chrono::milliseconds ms) {
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(ms.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((ms.count() % 1000) * 1000);
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

}  // namespace net

/// Thread-per-connection TCP server answering framed requests for one shard.
class Server {
public:
    using Handler = std::function<wire::Response(const wire::Request&)>;

    explicit Server(std::shared_ptr<const Shard> shard, Endpoint bind = {})
        : shard_(std::move(shard)), bind_(std::move(bind)) {
        handler_ = [s = shard_](const wire::Request& r) { return handle_request(*s, r); };
    }
    Server(Handler handler, Endpoint bind) : handler_(std::move(handler)), bind_(std::move(bind)) {}

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;
    ~Server() { stop(); }

    void start() {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw Error("server: socket() failed");
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(bind_.port);
        if (::inet_pton(AF_INET, bind_.host.c_str(), &addr.sin_addr) != 1) throw Error("server: bad address " + bind_.host);
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
            throw Error("server: bind failed on port " + std::to_string(bind_.port) + ": " + std::strerror(errno));
        if (::listen(listen_fd_, 64) != 0) throw Error("server: listen failed");
        socklen_t len = sizeof(addr);
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        bind_.port = ntohs(addr.sin_port);
        running_ = true;
        acceptor_ = std::thread([this] { accept_loop(); });
    }

    void stop() {
        if (!running_.exchange(false)) return;
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        if (acceptor_.joinable()) acceptor_.join();
        std::vector<std::thread> workers;
        {
            std::lock_guard lock(mu_);
            for (int fd : open_) ::shutdown(fd, SHUT_RDWR);
            workers.swap(workers_);
        }
        for (auto& t : workers) t.join();
    }

    std::uint16_t port() const noexcept { return bind_.port; }
    Endpoint endpoint() const { return bind_; }

    /// Test hook: the next `n` connections are closed (reset) without a reply.
    void drop_next(int n) { drop_ = n; }
    std::uint64_t requests_served() const noexcept { return served_; }
    std::uint64_t connections_dropped() const noexcept { return dropped_; }

private:
    void accept_loop() {
        while (running_) {
            int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) {
                if (!running_) break;
                if (errno == EINTR || errno == ECONNABORTED) continue;
                break;
            }
            if (drop_.load() > 0 && drop_.fetch_sub(1) > 0) {
                linger lg{1, 0};  // RST instead of FIN
                ::setsockopt(fd, SOL_SOCKET, SO_LINGER, &lg, sizeof(lg));
                ::close(fd);
                ++dropped_;
                continue;
            }
            std::lock_guard lock(mu_);
            open_.push_back(fd);
            workers_.emplace_back([this, fd] { serve_connection(fd); });
        }
    }

    void serve_connection(int fd) {
        std::string buf;
        while (running_) {
            if (net::read_frame(fd, buf) != net::ReadResult::ok) break;
            wire::Response resp;
            try {
                auto req = wire::decode_request(buf);
                resp = handler_(req);
            } catch (const wire::DecodeError& e) {
                wire::Op op = wire::Op::health;
                auto raw = static_cast<std::uint8_t>(buf[4]);
                if (raw >= 1 && raw <= 6) op = static_cast<wire::Op>(raw);
                resp = detail::fail(op, wire::Status::bad_request, e.what());
            }
            ++served_;
            if (!net::send_all(fd, wire::encode(resp))) break;
        }
        std::lock_guard lock(mu_);
        std::erase(open_, fd);
        ::close(fd);
    }

    std::shared_ptr<const Shard> shard_;
    Handler handler_;
    Endpoint bind_;
    int listen_fd_ = -1;
    std::atomic<bool> running_{false};
    std::atomic<int> drop_{0};
    std::atomic<std::uint64_t> served_{0}, dropped_{0};
    std::thread acceptor_;
    std::mutex mu_;
    std::vector<int> open_;
    std::vector<std::thread> workers_;
};

// ---------------------------------------------------------------------------
// Client

struct RetryPolicy {
    std::uint32_t max_attempts = 5;
    std::chrono::milliseconds initial_backoff{100};
    double backoff_multiplier = 2.0;
    std::chrono::milliseconds max_backoff{2000};
    std::chrono::milliseconds timeout{5000};

    void validate() const {
        if (max_attempts < 1) throw std::invalid_argument("RetryPolicy: max_attempts must be >= 1");
        if (initial_backoff.count() <= 0 || max_backoff.count() <= 0 || !(backoff_multiplier >= 1.0))
            throw std::invalid_argument("RetryPolicy: backoffs must be positive and non-shrinking");
    }

    /// Wait before attempt k+1 (k = 0 for the first retry).
    std::chrono::milliseconds backoff(std::uint32_t k) const {
        double ms = static_cast<double>(initial_backoff.count()) * std::pow(backoff_multiplier, k);
        ms = std::min(ms, static_cast<double>(max_backoff.count()));
        return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
    }

    std::vector<std::chrono::milliseconds> schedule() const {
        std::vector<std::chrono::milliseconds> out;
        for (std::uint32_t k = 0; k + 1 < max_attempts; ++k) out.push_back(backoff(k));
        return out;
    }
};

class ClientError : public Error {
public:
    ClientError(const std::string& msg, bool retryable, wire::Status status = wire::Status::internal)
        : Error(msg), retryable(retryable), status(status) {}
    bool retryable;
    wire::Status status;
};

/// Connect-per-call client with routing and retry. Safe to share between threads.
class Client {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    Client(PartitionMap map, RetryPolicy policy = {}, Sleeper sleeper = {})
        : map_(std::move(map)), policy_(policy), sleep_(std::move(sleeper)) {
        policy_.validate();
        if (map_.endpoints.size() != map_.instances) throw std::invalid_argument("Client: one endpoint per instance");
        if (!sleep_) sleep_ = [](std::chrono::milliseconds ms) { std::this_thread::sleep_for(ms); };
    }

    const PartitionMap& partition_map() const noexcept { return map_; }
    const RetryPolicy& policy() const noexcept { return policy_; }

    wire::Response call(std::uint32_t instance, const wire::Request& req) {
        const std::string bytes = wire::encode(req);
        for (std::uint32_t attempt = 0;; ++attempt) {
            ++attempts_;
            try {
                return once(instance, bytes);
            } catch (const ClientError& e) {
                if (!e.retryable || attempt + 1 >= policy_.max_attempts) throw;
                auto wait = policy_.backoff(attempt);
                {
                    std::lock_guard lock(mu_);
                    waits_.push_back(wait);
                }
                sleep_(wait);
            }
        }
    }

    wire::Response call_for(const NodeRef& n, const wire::Request& req) { return call(map_.owner(n), req); }

    std::uint64_t attempts() const noexcept { return attempts_; }
    std::vector<std::chrono::milliseconds> waits() const {
        std::lock_guard lock(mu_);
        return waits_;
    }

private:
    wire::Response once(std::uint32_t instance, const std::string& bytes) {
        const auto& ep = map_.endpoints.at(instance);
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw ClientError("client: socket() failed", true);
        struct Closer {
            int fd;
            ~Closer() { ::close(fd); }
        } closer{fd};
        net::set_timeout(fd, policy_.timeout);
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(ep.port);
        if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1)
            throw ClientError("client: bad address " + ep.host, false);
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
            throw ClientError(std::string("client: connect failed: ") + std::strerror(errno), true);
        if (!net::send_all(fd, bytes)) throw ClientError("client: connection reset during send", true);
        std::string frame;
        switch (net::read_frame(fd, frame)) {
            case net::ReadResult::ok: break;
            case net::ReadResult::timeout: throw ClientError("client: timeout", true);
            case net::ReadResult::eof: throw ClientError("client: connection closed by peer", true);
            case net::ReadResult::error: throw ClientError("client: connection reset", true);
        }
        wire::Response resp;
        try {
            resp = wire::decode_response(frame);
        } catch (const wire::DecodeError& e) {
            throw ClientError(std::string("client: malformed response: ") + e.what(), false);
        }
        if (resp.status != wire::Status::ok) throw ClientError("server: " + resp.error, false, resp.status);
        return resp;
    }

    PartitionMap map_;
    RetryPolicy policy_;
    Sleeper sleep_;
    std::atomic<std::uint64_t> attempts_{0};
    mutable std::mutex mu_;
    std::vector<std::chrono::milliseconds> waits_;
};

// ---------------------------------------------------------------------------
// Remote graph view and fan-out

/// GraphView backed by partitioned servers: adjacency and features are fetched
/// from the owning instance on first use and cached.
class RemoteGraphView {
public:
    RemoteGraphView(Client& client, std::vector<EdgeType> edge_types)
        : client_(client), edge_types_(std::move(edge_types)) {}

    /// Uses the edge types advertised by instance 0.
    explicit RemoteGraphView(Client& client) : client_(client) {
        auto h = std::get<wire::HealthResp>(client_.call(0, wire::HealthReq{}).body);
        edge_types_ = h.edge_types;
    }

    std::optional<NodeRef> resolve(const NodeRef& n) const {
        const auto& e = entry(n);
        if (!e.found) return std::nullopt;
        return e.node;
    }

    EdgeRun out_edges(const NodeRef& n, EdgeType t) const {
        const auto& e = entry(n);
        auto it = e.runs.find(t);
        if (it == e.runs.end()) return {};
        return {it->second.dst, it->second.weight, it->second.ts};
    }

    std::span<const EdgeType> edge_types() const { return edge_types_; }

    void prefetch(std::span<const NodeRef> nodes) const {
        for (const auto& n : nodes) entry(n);
    }

    std::span<const double> features(const NodeRef& n) const {
        auto& e = const_cast<Entry&>(entry(n));
        std::call_once(e.features_once, [&] {
            if (!e.found) return;
            auto r = client_.call_for(n, wire::GetFeaturesReq{n});
            e.features = std::get<wire::FeaturesResp>(r.body).values;
        });
        return e.features;
    }

    std::uint64_t adjacency_fetches() const noexcept { return fetches_; }

private:
    struct Run {
        std::vector<NodeRef> dst;
        std::vector<double> weight;
        std::vector<Timestamp> ts;
    };
    struct Entry {
        NodeRef node;
        bool found = false;
        std::map<EdgeType, Run> runs;
        std::once_flag features_once;
        std::vector<double> features;
    };

    const Entry& entry(const NodeRef& n) const {
        {
            std::lock_guard lock(mu_);
            auto it = cache_.find(n);
            if (it != cache_.end()) return *it->second;
        }
        wire::SampleNeighborsReq req;
        req.strategy = wire::kAdjacency;
        req.seed = n;
        req.params.edge_types = edge_types_;
        auto resp = client_.call_for(n, req);
        ++fetches_;
        const auto& adj = std::get<wire::AdjacencyResp>(resp.body);
        auto e = std::make_unique<Entry>();
        e->node = adj.node;
        e->found = adj.node.index != kNoIndex;
        for (const auto& [t, edges] : adj.runs) {
            auto& run = e->runs[t];
            for (const auto& x : edges) {
                run.dst.push_back(x.node);
                run.weight.push_back(x.weight);
                run.ts.push_back(x.ts);
            }
        }
        std::lock_guard lock(mu_);
        auto [it, _] = cache_.try_emplace(n, std::move(e));
        return *it->second;
    }

    Client& client_;
    std::vector<EdgeType> edge_types_;
    mutable std::mutex mu_;
    mutable std::unordered_map<NodeRef, std::unique_ptr<Entry>, NodeRefHash> cache_;
    mutable std::atomic<std::uint64_t> fetches_{0};
};

struct FanOutRequest {
    Strategy strategy = Strategy::random;
    std::vector<std::size_t> fanouts{10};
    std::map<EdgeType, double> multipliers;
    PPRConfig ppr;
    WalkConfig walk;
    EdgeType temporal_edge_type = 0;
    Timestamp before = kTimeInfinity;
    std::size_t last_n = 10;
    std::uint64_t rng_seed = 0;
    std::vector<EdgeType> edge_types;
};

class PartialResultError : public Error {
public:
    PartialResultError(std::vector<NodeRef> missing, std::string reason)
        : Error("fan_out_sample: " + std::to_string(missing.size()) + " seed(s) unavailable: " + reason),
          missing(std::move(missing)) {}
    std::vector<NodeRef> missing;
};

/// Samples for seeds spread over the partitioned servers, in input order.
/// Single-hop fan-out and temporal requests go to the seed's owner; multi-hop
/// and PPR strategies run here over a RemoteGraphView so every hop is routed to
/// the owner of each frontier node. Draws are keyed by node, not shard, so the
/// result does not depend on the partition count. Seeds that could not be
/// served because an instance is unreachable fail the whole call.
inline std::vector<SeedResult<MultiHopSample>> fan_out_sample(Client& client, std::span<const NodeRef> seeds,
                                                              const FanOutRequest& req) {
    std::vector<SeedResult<MultiHopSample>> out(seeds.size());
    std::vector<NodeRef> missing;
    std::string reason;
    auto record_failure = [&](std::size_t i, const ClientError& e) {
        out[i].seed = seeds[i];
        out[i].error = e.what();
        if (e.retryable) {
            missing.push_back(seeds[i]);
            if (reason.empty()) reason = e.what();
        }
    };
    const bool server_side = req.strategy == Strategy::temporal ||
                             ((req.strategy == Strategy::random || req.strategy == Strategy::weighted) &&
                              req.fanouts.size() == 1);
    if (server_side) {
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            wire::SampleNeighborsReq m;
            m.strategy = static_cast<std::uint8_t>(req.strategy);
            m.seed = seeds[i];
            auto& p = m.params;
            if (req.strategy == Strategy::temporal) {
                p.edge_type = req.temporal_edge_type;
                p.before = req.before;
                p.n = static_cast<std::uint32_t>(req.last_n);
            } else {
                p.fanouts.assign(req.fanouts.begin(), req.fanouts.end());
                p.rng_seed = req.rng_seed;
                p.edge_types = req.edge_types;
                if (req.strategy == Strategy::weighted) p.multipliers = req.multipliers;
            }
            try {
                auto r = client.call_for(seeds[i], m);
                auto& body = std::get<wire::SampleResp>(r.body);
                auto seed = body.hops.empty() ? seeds[i] : body.hops.front().seed;
                out[i] = {seeds[i], MultiHopSample{seed, std::move(body.hops)}, {}};
            } catch (const ClientError& e) {
                record_failure(i, e);
            }
        }
    } else {
        std::vector<EdgeType> types = req.edge_types;
        if (types.empty()) {
            try {
                types = std::get<wire::HealthResp>(client.call(0, wire::HealthReq{}).body).edge_types;
            } catch (const ClientError& e) {
                throw PartialResultError(std::vector<NodeRef>(seeds.begin(), seeds.end()), e.what());
            }
        }
        RemoteGraphView view(client, std::move(types));
        if (req.strategy == Strategy::ppr_push) {
            auto cfg = req.ppr;
            cfg.edge_types = req.edge_types;
            try {
                auto res = ppr_forward_push_batch(view, seeds, cfg);
                for (std::size_t i = 0; i < seeds.size(); ++i) {
                    out[i].seed = seeds[i];
                    if (res[i].ok())
                        out[i].value = MultiHopSample{res[i].value->sample.seed, {res[i].value->sample}};
                    else
                        out[i].error = res[i].error;
                }
            } catch (const ClientError& e) {
                // A consolidated batch cannot be split after the fact: every seed fails.
                for (std::size_t i = 0; i < seeds.size(); ++i) record_failure(i, e);
            }
        } else {
            for (std::size_t i = 0; i < seeds.size(); ++i) {
                try {
                    if (req.strategy == Strategy::ppr_two_hop) {
                        auto cfg = req.walk;
                        cfg.edge_types = req.edge_types;
                        auto r = ppr_two_hop_random_walk(view, seeds[i], cfg);
                        out[i] = {seeds[i], MultiHopSample{r.sample.seed, {r.sample}}, {}};
                    } else {
                        out[i] = sample_multihop_one(view, seeds[i], req.fanouts, req.rng_seed, req.edge_types,
                                                     req.strategy == Strategy::weighted ? &req.multipliers : nullptr);
                    }
                } catch (const ClientError& e) {
                    record_failure(i, e);
                } catch (const NodeNotFound& e) {
                    out[i].seed = seeds[i];
                    out[i].error = e.what();
                }
            }
        }
    }
    if (!missing.empty()) throw PartialResultError(std::move(missing), reason);
    return out;
}

}  // namespace lignn
