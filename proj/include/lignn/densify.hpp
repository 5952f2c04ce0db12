#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "lignn/core.hpp"
#include "lignn/graph.hpp"
#include "lignn/tsv.hpp"

namespace lignn {

struct DensifyConfig {
    double lower_quantile = 0.30;
    double upper_quantile = 0.90;
    std::size_t k = 50;
    EdgeType edge_type = 100;              // artificial edges
    std::vector<EdgeType> degree_edge_types;  // empty = all edge types
    std::vector<NodeType> node_types;        // empty = every node type
    std::size_t threads = 1;

    void validate() const {
        if (!(lower_quantile >= 0.0 && lower_quantile < upper_quantile && upper_quantile <= 1.0))
            throw std::invalid_argument("DensifyConfig: need 0 <= lower < upper <= 1");
        if (k < 1) throw std::invalid_argument("DensifyConfig: k must be >= 1");
    }
};

/// Dense external vectors for a subset of nodes.
class ExternalEmbeddingTable {
public:
    explicit ExternalEmbeddingTable(std::size_t dim = 0) : dim_(dim) {}

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return rows_.size(); }

    void set(const NodeRef& node, std::vector<double> v) {
        if (dim_ == 0) dim_ = v.size();
        if (v.size() != dim_) throw std::invalid_argument("embedding table: dimension mismatch");
        for (double x : v)
            if (!std::isfinite(x)) throw std::invalid_argument("embedding table: non-finite entry");
        rows_[key(node)] = std::move(v);
    }

    bool covers(const NodeRef& node) const { return rows_.contains(key(node)); }

    const std::vector<double>* find(const NodeRef& node) const {
        auto it = rows_.find(key(node));
        return it == rows_.end() ? nullptr : &it->second;
    }

    /// Reads `node_type<TAB>node_id<TAB>e1,e2,...` lines. Returns the number of rejected lines.
    std::size_t read(std::istream& in, std::vector<std::string>* errors = nullptr) {
        std::string line;
        std::size_t bad = 0, no = 0;
        while (std::getline(in, line)) {
            ++no;
            if (tsv::skippable(line)) continue;
            auto f = tsv::split(line);
            std::optional<NodeType> t;
            std::optional<NodeId> id;
            std::optional<std::vector<double>> v;
            if (f.size() == 3) {
                t = tsv::parse<NodeType>(f[0]);
                id = tsv::parse<NodeId>(f[1]);
                v = tsv::parse_vector(f[2]);
            }
            try {
                if (!t || !id || !v) throw std::invalid_argument("malformed line");
                set(NodeRef{*t, *id, kNoIndex}, std::move(*v));
            } catch (const std::exception& e) {
                ++bad;
                if (errors) errors->push_back("embeddings:" + std::to_string(no) + " " + e.what());
            }
        }
        return bad;
    }

private:
    static std::pair<NodeType, NodeId> key(const NodeRef& n) { return {n.type, n.id}; }

    std::size_t dim_;
    std::map<std::pair<NodeType, NodeId>, std::vector<double>> rows_;
};

/// Nearest-rank empirical quantile of the out-degree distribution.
inline std::size_t degree_threshold(const std::vector<std::size_t>& degrees, double quantile) {
    if (degrees.empty()) throw std::invalid_argument("degree_threshold: empty graph");
    if (!(quantile >= 0.0 && quantile <= 1.0)) throw std::invalid_argument("degree_threshold: quantile outside [0,1]");
    std::vector<std::size_t> d = degrees;
    std::sort(d.begin(), d.end());
    auto rank = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(d.size())));
    rank = std::clamp<std::size_t>(rank, 1, d.size());
    return d[rank - 1];
}

inline std::vector<NodeRef> densify_nodes(const HeteroGraph& g, std::span<const NodeType> types) {
    std::vector<NodeRef> out;
    if (types.empty()) return g.all_nodes();
    for (auto t : types) {
        auto n = g.nodes(t);
        out.insert(out.end(), n.begin(), n.end());
    }
    return out;
}

inline std::size_t degree_threshold(const HeteroGraph& g, double quantile, std::span<const EdgeType> edge_types = {},
                                    std::span<const NodeType> node_types = {}) {
    std::vector<std::size_t> degrees;
    for (const auto& n : densify_nodes(g, node_types)) degrees.push_back(g.out_degree(n, edge_types));
    return degree_threshold(degrees, quantile);
}

struct KnnHit {
    NodeRef node;
    double similarity = 0.0;
};

/// Exhaustive cosine top-k. Ties go to the smaller (node_type, node_id), which is
/// the same order as (node_type, index). Zero-norm candidates are skipped.
inline std::vector<KnnHit> exact_knn(const ExternalEmbeddingTable& table, std::span<const NodeRef> candidates,
                                     std::span<const double> query, std::size_t k) {
    if (candidates.empty()) throw std::invalid_argument("exact_knn: no candidates");
    if (query.size() != table.dim()) throw std::invalid_argument("exact_knn: query dimension mismatch");
    double qn = 0.0;
    for (double x : query) qn += x * x;
    qn = std::sqrt(qn);
    if (qn == 0.0) throw std::invalid_argument("exact_knn: zero-norm query");
    std::vector<KnnHit> hits;
    hits.reserve(candidates.size());
    for (const auto& c : candidates) {
        const auto* v = table.find(c);
        if (!v) continue;
        double dot = 0.0, n = 0.0;
        for (std::size_t i = 0; i < v->size(); ++i) {
            dot += (*v)[i] * query[i];
            n += (*v)[i] * (*v)[i];
        }
        if (n == 0.0) continue;
        hits.push_back({c, dot / (qn * std::sqrt(n))});
    }
    auto better = [](const KnnHit& a, const KnnHit& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.node < b.node;
    };
    const std::size_t take = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(), better);
    hits.resize(take);
    return hits;
}

struct DensifySkip {
    NodeRef node;
    std::string reason;
};

struct DensifyResult {
    std::vector<EdgeRecord> edges;  // sorted by low node, then similarity rank
    HeteroGraph graph;
    std::size_t lower_threshold = 0;
    std::size_t upper_threshold = 0;
    std::size_t low_count = 0;
    std::size_t high_count = 0;  // covered high-degree nodes used as targets
    std::vector<DensifySkip> skipped;
};

/// Connects each covered low-out-degree node to its k most similar covered
/// high-out-degree nodes with weight-1.0 edges of the configured type.
inline DensifyResult densify(const HeteroGraph& g, const ExternalEmbeddingTable& table, const DensifyConfig& cfg) {
    cfg.validate();
    DensifyResult r;
    auto nodes = densify_nodes(g, cfg.node_types);
    std::sort(nodes.begin(), nodes.end());
    std::vector<std::size_t> degrees;
    degrees.reserve(nodes.size());
    for (const auto& n : nodes) degrees.push_back(g.out_degree(n, cfg.degree_edge_types));
    r.lower_threshold = degree_threshold(degrees, cfg.lower_quantile);
    r.upper_threshold = degree_threshold(degrees, cfg.upper_quantile);

    std::vector<NodeRef> low, high;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (degrees[i] >= r.upper_threshold) {
            if (table.covers(nodes[i]))
                high.push_back(nodes[i]);
            else
                r.skipped.push_back({nodes[i], "high node without embedding"});
        }
        if (degrees[i] <= r.lower_threshold) low.push_back(nodes[i]);
    }
    r.high_count = high.size();
    if (high.empty()) throw std::runtime_error("densify: no covered high-degree nodes");

    std::vector<std::vector<KnnHit>> found(low.size());
    std::vector<std::string> errors(low.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        std::vector<NodeRef> cands;
        for (std::size_t i = begin; i < end; ++i) {
            const auto* q = table.find(low[i]);
            if (!q) {
                errors[i] = "no embedding";
                continue;
            }
            cands.clear();
            for (const auto& h : high)
                if (h != low[i]) cands.push_back(h);
            if (cands.empty()) {
                errors[i] = "no high-degree candidates";
                continue;
            }
            try {
                found[i] = exact_knn(table, cands, *q, cfg.k);
            } catch (const std::invalid_argument& e) {
                errors[i] = e.what();
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(cfg.threads, low.size()));
    if (threads == 1) {
        work(0, low.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (low.size() + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back(work, std::min(low.size(), t * chunk), std::min(low.size(), (t + 1) * chunk));
        for (auto& th : pool) th.join();
    }

    for (std::size_t i = 0; i < low.size(); ++i) {
        if (!errors[i].empty()) {
            r.skipped.push_back({low[i], errors[i]});
            continue;
        }
        ++r.low_count;
        for (const auto& h : found[i])
            r.edges.push_back({low[i].type, low[i].id, cfg.edge_type, h.node.type, h.node.id, 1.0, 0});
    }

    GraphBuilder b = GraphBuilder::from(g);
    if (!b.schema().kind(cfg.edge_type)) b.schema().edge_kinds[cfg.edge_type] = EdgeKind::attribute;
    for (const auto& e : r.edges) b.add_edge(e);
    r.graph = b.build();
    return r;
}

}  // namespace lignn
