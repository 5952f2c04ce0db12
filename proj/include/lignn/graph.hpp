#pragma once

#include <algorithm>
#include <cmath>
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
#include "lignn/tsv.hpp"

namespace lignn {

enum class EdgeKind : std::uint8_t { engagement, affinity, attribute };

inline std::optional<EdgeKind> parse_edge_kind(std::string_view s) {
    if (s == "engagement") return EdgeKind::engagement;
    if (s == "affinity") return EdgeKind::affinity;
    if (s == "attribute") return EdgeKind::attribute;
    return std::nullopt;
}

inline const char* to_string(EdgeKind k) {
    switch (k) {
        case EdgeKind::engagement: return "engagement";
        case EdgeKind::affinity: return "affinity";
        case EdgeKind::attribute: return "attribute";
    }
    return "?";
}

/// Edge-type registry plus per-node-type feature dimensions.
///
/// Text form, one `key = value` per line, `#` comments:
///     edge.<edge_type> = engagement|affinity|attribute
///     feature_dim.<node_type> = <D>
struct Schema {
    std::map<EdgeType, EdgeKind> edge_kinds;
    std::map<NodeType, std::size_t> feature_dims;

    std::optional<EdgeKind> kind(EdgeType t) const {
        auto it = edge_kinds.find(t);
        if (it == edge_kinds.end()) return std::nullopt;
        return it->second;
    }

    std::size_t feature_dim(NodeType t) const {
        auto it = feature_dims.find(t);
        return it == feature_dims.end() ? 0 : it->second;
    }

    static Schema parse(std::istream& in) {
        Schema s;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (tsv::skippable(line)) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("schema line " + std::to_string(line_no) + ": expected key=value");
            auto key = tsv::trim(std::string_view(line).substr(0, eq));
            auto value = tsv::trim(std::string_view(line).substr(eq + 1));
            auto bad = [&] {
                return std::invalid_argument("schema line " + std::to_string(line_no) + ": bad entry '" + line + "'");
            };
            if (key.starts_with("edge.")) {
                auto id = tsv::parse<EdgeType>(key.substr(5));
                auto kind = parse_edge_kind(value);
                if (!id || !kind) throw bad();
                s.edge_kinds[*id] = *kind;
            } else if (key.starts_with("feature_dim.")) {
                auto id = tsv::parse<NodeType>(key.substr(12));
                auto dim = tsv::parse<std::size_t>(value);
                if (!id || !dim) throw bad();
                s.feature_dims[*id] = *dim;
            } else {
                throw bad();
            }
        }
        return s;
    }

    void write(std::ostream& out) const {
        for (auto [t, k] : edge_kinds) out << "edge." << t << " = " << to_string(k) << '\n';
        for (auto [t, d] : feature_dims) out << "feature_dim." << t << " = " << d << '\n';
    }
};

/// A node's outgoing edges of one edge type, ascending by timestamp.
struct EdgeRun {
    std::span<const NodeRef> dst;
    std::span<const double> weight;
    std::span<const Timestamp> ts;

    std::size_t size() const noexcept { return dst.size(); }
    bool empty() const noexcept { return dst.empty(); }

    EdgeRun prefix(std::size_t n) const { return {dst.first(n), weight.first(n), ts.first(n)}; }
};

/// One edge in external-id form; the unit of edges.tsv.
struct EdgeRecord {
    NodeType src_type = 0;
    NodeId src_id = 0;
    EdgeType edge_type = 0;
    NodeType dst_type = 0;
    NodeId dst_id = 0;
    double weight = 1.0;
    Timestamp ts = 0;

    friend bool operator==(const EdgeRecord&, const EdgeRecord&) = default;
};

struct GraphBuildReport {
    std::map<NodeType, std::size_t> node_counts;
    std::map<EdgeType, std::size_t> edge_counts;
    std::size_t rejected = 0;
    std::size_t duplicates_collapsed = 0;
    std::map<std::string, std::size_t> rejected_by_reason;
    std::vector<std::string> messages;

    void reject(const std::string& reason, const std::string& detail) {
        ++rejected;
        ++rejected_by_reason[reason];
        messages.push_back(reason + ": " + detail);
    }

    std::size_t total_nodes() const {
        std::size_t n = 0;
        for (auto& [_, c] : node_counts) n += c;
        return n;
    }
    std::size_t total_edges() const {
        std::size_t n = 0;
        for (auto& [_, c] : edge_counts) n += c;
        return n;
    }
};

class GraphBuilder;

/// Immutable heterogeneous graph: per (src_type, edge_type) CSR adjacency with
/// weights and timestamps, per-type dense feature tables.
class HeteroGraph {
public:
    struct Csr {
        std::vector<std::uint64_t> offsets;  // size = node_count(src_type) + 1
        std::vector<NodeRef> dst;
        std::vector<double> weight;
        std::vector<Timestamp> ts;
    };

    HeteroGraph() = default;

    const Schema& schema() const noexcept { return schema_; }

    std::span<const NodeType> node_types() const noexcept { return node_types_; }
    std::span<const EdgeType> edge_types() const noexcept { return edge_types_; }

    std::size_t node_count(NodeType t) const {
        auto it = types_.find(t);
        return it == types_.end() ? 0 : it->second.ids.size();
    }
    std::size_t node_count() const {
        std::size_t n = 0;
        for (auto& [_, info] : types_) n += info.ids.size();
        return n;
    }

    std::optional<NodeRef> find(NodeType type, NodeId id) const {
        auto it = types_.find(type);
        if (it == types_.end()) return std::nullopt;
        auto jt = it->second.index_of.find(id);
        if (jt == it->second.index_of.end()) return std::nullopt;
        return NodeRef{type, id, jt->second};
    }

    /// Fills in the dense index; nullopt if the node is not in the graph.
    std::optional<NodeRef> resolve(const NodeRef& n) const {
        if (n.index != kNoIndex) {
            auto it = types_.find(n.type);
            if (it != types_.end() && n.index < it->second.ids.size() && it->second.ids[n.index] == n.id) return n;
        }
        return find(n.type, n.id);
    }

    NodeRef require(const NodeRef& n) const {
        auto r = resolve(n);
        if (!r) throw NodeNotFound(n);
        return *r;
    }

    bool contains(const NodeRef& n) const { return resolve(n).has_value(); }

    NodeRef node_at(NodeType type, std::uint32_t index) const {
        return NodeRef{type, types_.at(type).ids.at(index), index};
    }

    /// All nodes of a type in dense-index order.
    std::vector<NodeRef> nodes(NodeType type) const {
        std::vector<NodeRef> out;
        auto it = types_.find(type);
        if (it == types_.end()) return out;
        out.reserve(it->second.ids.size());
        for (std::uint32_t i = 0; i < it->second.ids.size(); ++i) out.push_back({type, it->second.ids[i], i});
        return out;
    }

    std::vector<NodeRef> all_nodes() const {
        std::vector<NodeRef> out;
        for (auto t : node_types_) {
            auto part = nodes(t);
            out.insert(out.end(), part.begin(), part.end());
        }
        return out;
    }

    const Csr* csr(NodeType src_type, EdgeType edge_type) const {
        auto it = csr_.find(csr_key(src_type, edge_type));
        return it == csr_.end() ? nullptr : &it->second;
    }

    EdgeRun out_edges(const NodeRef& node, EdgeType edge_type) const {
        auto n = resolve(node);
        if (!n) return {};
        const Csr* c = csr(n->type, edge_type);
        if (!c) return {};
        auto begin = c->offsets[n->index];
        auto end = c->offsets[n->index + 1];
        auto len = static_cast<std::size_t>(end - begin);
        return {std::span(c->dst).subspan(begin, len), std::span(c->weight).subspan(begin, len),
                std::span(c->ts).subspan(begin, len)};
    }

    /// Out-degree over a set of edge types (all types when empty).
    std::size_t out_degree(const NodeRef& node, std::span<const EdgeType> types = {}) const {
        auto n = require(node);
        std::size_t deg = 0;
        auto count = [&](EdgeType t) {
            if (const Csr* c = csr(n.type, t)) deg += c->offsets[n.index + 1] - c->offsets[n.index];
        };
        if (types.empty()) {
            for (auto t : edge_types_) count(t);
        } else {
            for (auto t : types) count(t);
        }
        return deg;
    }

    /// Edges with timestamp strictly before `t`: a prefix of the ascending run.
    EdgeRun temporal_cut(const NodeRef& node, EdgeType edge_type, Timestamp t) const {
        auto run = out_edges(require(node), edge_type);
        auto it = std::lower_bound(run.ts.begin(), run.ts.end(), t);
        return run.prefix(static_cast<std::size_t>(it - run.ts.begin()));
    }

    std::size_t feature_dim(NodeType t) const { return schema_.feature_dim(t); }

    /// Empty span when the node has no feature row.
    std::span<const double> features(const NodeRef& node) const {
        auto n = resolve(node);
        if (!n) return {};
        const auto& info = types_.at(n->type);
        if (info.dim == 0 || !info.has_features[n->index]) return {};
        return std::span(info.features).subspan(static_cast<std::size_t>(n->index) * info.dim, info.dim);
    }

    std::size_t edge_count(EdgeType t) const {
        std::size_t total = 0;
        for (auto& [key, c] : csr_)
            if (static_cast<EdgeType>(key & 0xffff) == t) total += c.dst.size();
        return total;
    }
    std::size_t edge_count() const {
        std::size_t total = 0;
        for (auto& [_, c] : csr_) total += c.dst.size();
        return total;
    }

    /// Edges in (src_type, edge_type, src index, run order) order.
    std::vector<EdgeRecord> edge_records() const {
        std::vector<EdgeRecord> out;
        out.reserve(edge_count());
        for (auto& [key, c] : csr_) {
            auto src_type = static_cast<NodeType>(key >> 16);
            auto et = static_cast<EdgeType>(key & 0xffff);
            const auto& ids = types_.at(src_type).ids;
            for (std::size_t i = 0; i + 1 < c.offsets.size(); ++i)
                for (auto e = c.offsets[i]; e < c.offsets[i + 1]; ++e)
                    out.push_back({src_type, ids[i], et, c.dst[e].type, c.dst[e].id, c.weight[e], c.ts[e]});
        }
        return out;
    }

    /// Writes every edge in edges.tsv format.
    void dump_edges(std::ostream& out) const {
        for (const auto& e : edge_records())
            out << e.src_type << '\t' << e.src_id << '\t' << e.edge_type << '\t' << e.dst_type << '\t' << e.dst_id
                << '\t' << tsv::format(e.weight) << '\t' << e.ts << '\n';
    }

    /// Writes every node with a feature row in nodes.tsv format.
    void dump_nodes(std::ostream& out) const {
        for (auto t : node_types_) {
            for (const auto& n : nodes(t)) {
                auto f = features(n);
                if (f.empty() && feature_dim(t) != 0) continue;
                out << n.type << '\t' << n.id << '\t' << tsv::format_vector(f.data(), f.size()) << '\n';
            }
        }
    }

    GraphBuildReport summary() const {
        GraphBuildReport r;
        for (auto t : node_types_) r.node_counts[t] = node_count(t);
        for (auto t : edge_types_) {
            auto c = edge_count(t);
            if (c) r.edge_counts[t] = c;
        }
        return r;
    }

private:
    friend class GraphBuilder;

    struct TypeInfo {
        std::vector<NodeId> ids;
        std::unordered_map<NodeId, std::uint32_t> index_of;
        std::size_t dim = 0;
        std::vector<double> features;
        std::vector<bool> has_features;
    };

    static constexpr std::uint32_t csr_key(NodeType s, EdgeType e) noexcept {
        return (static_cast<std::uint32_t>(s) << 16) | e;
    }

    Schema schema_;
    std::vector<NodeType> node_types_;
    std::vector<EdgeType> edge_types_;
    std::map<NodeType, TypeInfo> types_;
    std::map<std::uint32_t, Csr> csr_;
};

/// Accumulates node and edge rows, validates them against the schema, and freezes
/// them into a HeteroGraph. Invalid rows are counted in the report, never fatal.
class GraphBuilder {
public:
    explicit GraphBuilder(Schema schema) : schema_(std::move(schema)) {}

    /// Seeds a builder with every node, feature row and edge of an existing graph.
    static GraphBuilder from(const HeteroGraph& g) {
        GraphBuilder b(g.schema());
        for (auto t : g.node_types()) {
            for (const auto& n : g.nodes(t)) {
                auto f = g.features(n);
                if (f.empty())
                    b.add_node(t, n.id);
                else
                    b.add_node(t, n.id, std::vector<double>(f.begin(), f.end()));
            }
        }
        for (const auto& e : g.edge_records()) b.add_edge(e);
        return b;
    }

    Schema& schema() noexcept { return schema_; }
    GraphBuildReport& report() noexcept { return report_; }

    /// Registers a node without features.
    void add_node(NodeType type, NodeId id) { nodes_[type].try_emplace(id); }

    bool add_node(NodeType type, NodeId id, std::vector<double> features, const std::string& where = {}) {
        auto dim = schema_.feature_dim(type);
        if (features.size() != dim) {
            report_.reject("feature_dim", where + " node " + std::to_string(type) + ":" + std::to_string(id) +
                                              " has " + std::to_string(features.size()) + " features, expected " +
                                              std::to_string(dim));
            return false;
        }
        auto& slot = nodes_[type][id];
        if (slot) {
            report_.reject("duplicate_node", where + " node " + std::to_string(type) + ":" + std::to_string(id));
            return false;
        }
        slot = std::move(features);
        return true;
    }

    bool add_edge(const EdgeRecord& e, const std::string& where = {}) {
        auto kind = schema_.kind(e.edge_type);
        if (!kind) {
            report_.reject("unknown_edge_type", where + " edge type " + std::to_string(e.edge_type));
            return false;
        }
        if (!std::isfinite(e.weight) || e.weight <= 0.0) {
            report_.reject("bad_weight", where + " weight " + tsv::format(e.weight));
            return false;
        }
        if (*kind == EdgeKind::attribute && e.weight != 1.0) {
            report_.reject("attribute_weight", where + " attribute edge with weight " + tsv::format(e.weight));
            return false;
        }
        add_node(e.src_type, e.src_id);
        add_node(e.dst_type, e.dst_id);
        edges_.push_back(e);
        return true;
    }

    /// Parses one edges.tsv line. Blank and comment lines are ignored.
    void add_edge_line(std::string_view line, std::size_t line_no = 0) {
        if (tsv::skippable(line)) return;
        auto where = "edges:" + std::to_string(line_no);
        auto f = tsv::split(line);
        if (f.size() != 6 && f.size() != 7) {
            report_.reject("malformed", where + " expected 7 fields, got " + std::to_string(f.size()));
            return;
        }
        auto st = tsv::parse<NodeType>(f[0]);
        auto sid = tsv::parse<NodeId>(f[1]);
        auto et = tsv::parse<EdgeType>(f[2]);
        auto dt = tsv::parse<NodeType>(f[3]);
        auto did = tsv::parse<NodeId>(f[4]);
        auto w = tsv::parse<double>(f[5]);
        std::optional<Timestamp> ts = Timestamp{0};
        if (f.size() == 7 && !tsv::trim(f[6]).empty()) ts = tsv::parse<Timestamp>(f[6]);
        if (!st || !sid || !et || !dt || !did || !w || !ts) {
            report_.reject("malformed", where + " unparsable field");
            return;
        }
        add_edge({*st, *sid, *et, *dt, *did, *w, *ts}, where);
    }

    void add_node_line(std::string_view line, std::size_t line_no = 0) {
        if (tsv::skippable(line)) return;
        auto where = "nodes:" + std::to_string(line_no);
        auto f = tsv::split(line);
        if (f.size() != 3 && f.size() != 2) {
            report_.reject("malformed", where + " expected 3 fields, got " + std::to_string(f.size()));
            return;
        }
        auto t = tsv::parse<NodeType>(f[0]);
        auto id = tsv::parse<NodeId>(f[1]);
        auto feats = f.size() == 3 ? tsv::parse_vector(f[2]) : std::optional<std::vector<double>>{std::vector<double>{}};
        if (!t || !id || !feats) {
            report_.reject("malformed", where + " unparsable field");
            return;
        }
        add_node(*t, *id, std::move(*feats), where);
    }

    void read_edges(std::istream& in) {
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) add_edge_line(line, ++n);
    }

    void read_nodes(std::istream& in) {
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) add_node_line(line, ++n);
    }

    /// Freezes the accumulated rows. Duplicate (src, edge_type, dst, timestamp)
    /// rows collapse to one edge carrying the max weight.
    HeteroGraph build() {
        HeteroGraph g;
        g.schema_ = schema_;
        for (auto& [t, _] : schema_.edge_kinds) g.edge_types_.push_back(t);
        for (auto& [type, rows] : nodes_) {
            g.node_types_.push_back(type);
            auto& info = g.types_[type];
            info.dim = schema_.feature_dim(type);
            info.ids.reserve(rows.size());
            info.has_features.assign(rows.size(), false);
            info.features.assign(rows.size() * info.dim, 0.0);
            std::uint32_t idx = 0;
            for (auto& [id, feats] : rows) {
                info.ids.push_back(id);
                info.index_of.emplace(id, idx);
                if (feats && info.dim) {
                    std::copy(feats->begin(), feats->end(), info.features.begin() + idx * info.dim);
                    info.has_features[idx] = true;
                }
                ++idx;
            }
        }

        std::sort(edges_.begin(), edges_.end(), [](const EdgeRecord& a, const EdgeRecord& b) {
            return std::tie(a.src_type, a.edge_type, a.src_id, a.ts, a.dst_type, a.dst_id, b.weight) <
                   std::tie(b.src_type, b.edge_type, b.src_id, b.ts, b.dst_type, b.dst_id, a.weight);
        });
        std::vector<EdgeRecord> unique;
        unique.reserve(edges_.size());
        for (const auto& e : edges_) {
            if (!unique.empty()) {
                auto& last = unique.back();
                if (last.src_type == e.src_type && last.edge_type == e.edge_type && last.src_id == e.src_id &&
                    last.ts == e.ts && last.dst_type == e.dst_type && last.dst_id == e.dst_id) {
                    last.weight = std::max(last.weight, e.weight);
                    ++report_.duplicates_collapsed;
                    continue;
                }
            }
            unique.push_back(e);
        }

        for (std::size_t i = 0; i < unique.size();) {
            auto st = unique[i].src_type;
            auto et = unique[i].edge_type;
            auto& c = g.csr_[HeteroGraph::csr_key(st, et)];
            const auto& info = g.types_.at(st);
            c.offsets.assign(info.ids.size() + 1, 0);
            std::size_t j = i;
            for (; j < unique.size() && unique[j].src_type == st && unique[j].edge_type == et; ++j) {
                const auto& e = unique[j];
                ++c.offsets[info.index_of.at(e.src_id) + 1];
                c.dst.push_back(*g.find(e.dst_type, e.dst_id));
                c.weight.push_back(e.weight);
                c.ts.push_back(e.ts);
            }
            for (std::size_t k = 1; k < c.offsets.size(); ++k) c.offsets[k] += c.offsets[k - 1];
            i = j;
        }

        for (auto t : g.node_types_) report_.node_counts[t] = g.node_count(t);
        report_.edge_counts.clear();
        for (auto t : g.edge_types_) {
            auto c = g.edge_count(t);
            if (c) report_.edge_counts[t] = c;
        }
        return g;
    }

private:
    Schema schema_;
    std::map<NodeType, std::map<NodeId, std::optional<std::vector<double>>>> nodes_;
    std::vector<EdgeRecord> edges_;
    GraphBuildReport report_;
};

struct BuiltGraph {
    HeteroGraph graph;
    GraphBuildReport report;
};

/// Builds a graph from edges.tsv and nodes.tsv streams.
inline BuiltGraph build_graph(std::istream& edges, std::istream& nodes, const Schema& schema) {
    GraphBuilder b(schema);
    b.read_nodes(nodes);
    b.read_edges(edges);
    auto g = b.build();
    return {std::move(g), std::move(b.report())};
}

/// common / (sqrt(deg_u) * sqrt(deg_v)): connection-overlap weight between two members.
inline double connection_affinity_weight(std::size_t common, std::size_t deg_u, std::size_t deg_v) {
    if (deg_u == 0 || deg_v == 0) throw std::invalid_argument("connection_affinity_weight: zero degree");
    if (common > std::min(deg_u, deg_v))
        throw std::invalid_argument("connection_affinity_weight: common count exceeds a degree");
    return static_cast<double>(common) /
           (std::sqrt(static_cast<double>(deg_u)) * std::sqrt(static_cast<double>(deg_v)));
}

}  // namespace lignn
