// lignn: command-line front end for the graph engine, densifier, trainer,
// server and nearline refresher.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lignn/densify.hpp"
#include "lignn/nearline.hpp"
#include "lignn/pipeline.hpp"
#include "lignn/service.hpp"
#include "lignn/synthetic.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace lignn;

namespace {

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return in;
}

std::ofstream open_out(const std::string& path) {
    if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

std::string node_str(const NodeRef& n) { return std::to_string(n.type) + ":" + std::to_string(n.id); }

void write_edge(std::ostream& out, const EdgeRecord& e) {
    out << e.src_type << '\t' << e.src_id << '\t' << e.edge_type << '\t' << e.dst_type << '\t' << e.dst_id << '\t'
        << tsv::format(e.weight) << '\t' << e.ts << '\n';
}

json report_json(const GraphBuildReport& r) {
    json j;
    j["nodes"] = r.total_nodes();
    j["edges"] = r.total_edges();
    for (auto [t, c] : r.node_counts) j["node_counts"][std::to_string(t)] = c;
    for (auto [t, c] : r.edge_counts) j["edge_counts"][std::to_string(t)] = c;
    j["rejected"] = r.rejected;
    j["duplicates_collapsed"] = r.duplicates_collapsed;
    for (auto& [reason, c] : r.rejected_by_reason) j["rejected_by_reason"][reason] = c;
    return j;
}

// A data directory holds schema.txt, edges.tsv and nodes.tsv.
HeteroGraph load_graph(const std::string& dir) {
    auto schema_in = open_in(dir + "/schema.txt");
    auto schema = Schema::parse(schema_in);
    auto edges = open_in(dir + "/edges.tsv");
    auto nodes = open_in(dir + "/nodes.tsv");
    auto built = build_graph(edges, nodes, schema);
    spdlog::info("loaded {}: {} nodes, {} edges ({} lines rejected)", dir, built.report.total_nodes(),
                 built.report.total_edges(), built.report.rejected);
    for (std::size_t i = 0; i < std::min<std::size_t>(built.report.messages.size(), 5); ++i)
        spdlog::warn("{}", built.report.messages[i]);
    return std::move(built.graph);
}

std::vector<NodeRef> read_seeds(const std::string& path) {
    auto in = open_in(path);
    std::vector<NodeRef> out;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (tsv::skippable(line)) continue;
        auto f = tsv::split(line);
        auto t = f.size() >= 2 ? tsv::parse<NodeType>(f[0]) : std::nullopt;
        auto id = f.size() >= 2 ? tsv::parse<NodeId>(f[1]) : std::nullopt;
        if (!t || !id) throw std::runtime_error(path + ":" + std::to_string(no) + ": expected node_type<TAB>node_id");
        out.push_back({*t, *id, kNoIndex});
    }
    return out;
}

std::vector<Endpoint> parse_endpoints(const std::string& list) {
    std::vector<Endpoint> out;
    for (auto part : tsv::split(list, ',')) {
        auto s = tsv::trim(part);
        auto colon = s.rfind(':');
        auto port = colon == std::string_view::npos ? std::nullopt : tsv::parse<std::uint16_t>(s.substr(colon + 1));
        if (!port) throw std::runtime_error("bad endpoint '" + std::string(s) + "', expected host:port");
        out.push_back({std::string(s.substr(0, colon)), *port});
    }
    return out;
}

// Options shared by `sample`, `train` and `bench`.
struct SamplerFlags {
    std::string strategy = "random";
    std::vector<std::size_t> fanout{10};
    double alpha = 0.15;
    double rmax = 1e-4;
    std::size_t topk = 20;
    std::size_t walks = 1000;
    Timestamp before = kTimeInfinity;
    std::uint64_t rng_seed = 1;
    std::vector<EdgeType> edge_types;
    std::vector<std::string> multipliers;  // edge_type=value

    void add(CLI::App* app) {
        app->add_option("--strategy", strategy, "random|weighted|ppr-push|ppr-2hop|temporal")
            ->check(CLI::IsMember({"random", "weighted", "ppr-push", "ppr-2hop", "temporal"}));
        app->add_option("--fanout", fanout, "per-hop fan-out, e.g. 20,10")->delimiter(',');
        app->add_option("--alpha", alpha, "PPR restart probability");
        app->add_option("--rmax", rmax, "forward-push residual threshold");
        app->add_option("--topk", topk, "PPR top-k, or the number of events for temporal");
        app->add_option("--walks", walks, "random walks per seed for ppr-2hop");
        app->add_option("--before-ts", before, "temporal cut-off (exclusive)");
        app->add_option("--rng-seed", rng_seed);
        app->add_option("--edge-types", edge_types, "restrict to these edge types")->delimiter(',');
        app->add_option("--multiplier", multipliers, "weighted sampling multiplier, edge_type=value");
    }

    Strategy parsed() const { return *parse_strategy(strategy); }

    std::map<EdgeType, double> multiplier_map() const {
        std::map<EdgeType, double> m;
        for (const auto& s : multipliers) {
            auto eq = s.find('=');
            auto t = eq == std::string::npos ? std::nullopt : tsv::parse<EdgeType>(std::string_view(s).substr(0, eq));
            auto v = eq == std::string::npos ? std::nullopt : tsv::parse<double>(std::string_view(s).substr(eq + 1));
            if (!t || !v) throw std::runtime_error("bad --multiplier '" + s + "'");
            m[*t] = *v;
        }
        return m;
    }

    FanOutRequest request() const {
        FanOutRequest r;
        r.strategy = parsed();
        r.fanouts = fanout;
        r.multipliers = multiplier_map();
        r.ppr.alpha = alpha;
        r.ppr.r_max = rmax;
        r.ppr.top_k = topk;
        r.walk.alpha = alpha;
        r.walk.top_k = topk;
        r.walk.num_walks = walks;
        r.walk.rng_seed = rng_seed;
        r.temporal_edge_type = edge_types.empty() ? EdgeType{0} : edge_types.front();
        r.before = before;
        r.last_n = topk;
        r.rng_seed = rng_seed;
        if (r.strategy != Strategy::temporal) r.edge_types = edge_types;
        return r;
    }

    SamplerSpec spec() const {
        auto r = request();
        SamplerSpec s;
        s.strategy = r.strategy;
        s.fanouts = r.strategy == Strategy::temporal ? std::vector<std::size_t>{topk} : fanout;
        s.multipliers = r.multipliers;
        s.ppr = r.ppr;
        s.walk = r.walk;
        s.rng_seed = rng_seed;
        s.edge_types = edge_types;
        return s;
    }
};

std::vector<SeedResult<MultiHopSample>> sample_local(const HeteroGraph& g, std::span<const NodeRef> seeds,
                                                     const FanOutRequest& r) {
    std::vector<SeedResult<MultiHopSample>> out;
    for (const auto& s : seeds) {
        SeedResult<MultiHopSample> res;
        res.seed = s;
        auto node = g.resolve(s);
        if (!node) {
            res.error = "node not found";
            out.push_back(std::move(res));
            continue;
        }
        switch (r.strategy) {
            case Strategy::random:
            case Strategy::weighted:
                res = sample_multihop_one(g, *node, r.fanouts, r.rng_seed, r.edge_types,
                                          r.strategy == Strategy::weighted ? &r.multipliers : nullptr);
                break;
            case Strategy::ppr_push: {
                auto cfg = r.ppr;
                cfg.edge_types = r.edge_types;
                res.value = MultiHopSample{*node, {ppr_forward_push(g, *node, cfg).sample}};
                break;
            }
            case Strategy::ppr_two_hop: {
                auto cfg = r.walk;
                cfg.edge_types = r.edge_types;
                res.value = MultiHopSample{*node, {ppr_two_hop_random_walk(g, *node, cfg).sample}};
                break;
            }
            case Strategy::temporal:
                res.value = MultiHopSample{
                    *node, {to_sample(*node, sample_temporal_last_n(g, *node, r.temporal_edge_type, r.before, r.last_n))}};
                break;
        }
        out.push_back(std::move(res));
    }
    return out;
}

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

// ---------------------------------------------------------------------------
// Subcommands

struct BuildCmd {
    std::string data, out;
    bool synthetic = false;
    synthetic::CommunityConfig cc;

    void add(CLI::App& root) {
        auto* c = root.add_subcommand("build", "validate and normalize a graph, or generate a synthetic one");
        c->add_option("--data", data, "input directory (schema.txt, edges.tsv, nodes.tsv)");
        c->add_option("--out", out, "output directory")->required();
        c->add_flag("--synthetic", synthetic, "generate a planted-community bipartite dataset instead");
        c->add_option("--members", cc.members);
        c->add_option("--items", cc.items);
        c->add_option("--communities", cc.communities);
        c->add_option("--history", cc.history, "graph interactions per member");
        c->add_option("--feature-dim", cc.feature_dim);
        c->add_option("--seed", cc.seed);
        c->callback([this] { run(); });
    }

    void run() {
        fs::create_directories(out);
        HeteroGraph g;
        if (synthetic) {
            auto d = synthetic::planted_communities(cc);
            g = std::move(d.graph);
            auto tr = open_out(out + "/records.tsv");
            write_records(tr, d.train);
            auto va = open_out(out + "/valid.tsv");
            write_records(va, d.valid);
            spdlog::info("wrote {} training and {} validation records", d.train.size(), d.valid.size());
        } else {
            if (data.empty()) throw std::runtime_error("build: --data or --synthetic is required");
            g = load_graph(data);
        }
        auto schema = open_out(out + "/schema.txt");
        g.schema().write(schema);
        auto edges = open_out(out + "/edges.tsv");
        g.dump_edges(edges);
        auto nodes = open_out(out + "/nodes.tsv");
        g.dump_nodes(nodes);
        std::cout << report_json(g.summary()).dump() << '\n';
    }
};

struct DensifyCmd {
    std::string data, embeddings, out = ".";
    DensifyConfig cfg;

    void add(CLI::App& root) {
        auto* c = root.add_subcommand("densify", "add similarity edges for low-degree nodes");
        c->add_option("--data", data)->required();
        c->add_option("--embeddings", embeddings, "node_type<TAB>node_id<TAB>e1,e2,...")->required();
        c->add_option("--lower-q", cfg.lower_quantile);
        c->add_option("--upper-q", cfg.upper_quantile);
        c->add_option("--k", cfg.k);
        c->add_option("--edge-type", cfg.edge_type, "edge type of the new edges");
        c->add_option("--degree-edge-types", cfg.degree_edge_types)->delimiter(',');
        c->add_option("--node-types", cfg.node_types)->delimiter(',');
        c->add_option("--threads", cfg.threads);
        c->add_option("--out", out, "output directory");
        c->callback([this] { run(); });
    }

    void run() {
        auto g = load_graph(data);
        ExternalEmbeddingTable table;
        auto in = open_in(embeddings);
        std::vector<std::string> errors;
        if (auto bad = table.read(in, &errors)) spdlog::warn("{} embedding lines rejected, first: {}", bad, errors[0]);
        auto r = densify(g, table, cfg);
        auto edges = open_out(out + "/artificial_edges.tsv");
        for (const auto& e : r.edges) write_edge(edges, e);
        auto skipped = open_out(out + "/densify_skipped.jsonl");
        for (const auto& s : r.skipped)
            skipped << json{{"node_type", s.node.type}, {"node_id", s.node.id}, {"reason", s.reason}}.dump() << '\n';
        std::cout << json{{"lower_threshold", r.lower_threshold},
                          {"upper_threshold", r.upper_threshold},
                          {"low_nodes", r.low_count},
                          {"high_nodes", r.high_count},
                          {"edges", r.edges.size()},
                          {"skipped", r.skipped.size()}}
                         .dump()
                  << '\n';
    }
};

struct SampleCmd {
    std::string data, seeds, endpoints, out;
    std::uint32_t max_attempts = 5;
    SamplerFlags s;

    void add(CLI::App& root) {
        auto* c = root.add_subcommand("sample", "sample neighbors for a list of seeds");
        c->add_option("--data", data, "sample from a local graph");
        c->add_option("--endpoints", endpoints, "or from servers: host:port,... in partition order");
        c->add_option("--seeds", seeds, "node_type<TAB>node_id per line")->required();
        c->add_option("--out", out, "output TSV (default stdout)");
        c->add_option("--max-attempts", max_attempts, "client retry budget");
        s.add(c);
        c->callback([this] { run(); });
    }

    void run() {
        if (data.empty() == endpoints.empty()) throw std::runtime_error("sample: give exactly one of --data, --endpoints");
        auto seed_list = read_seeds(seeds);
        auto req = s.request();
        std::vector<SeedResult<MultiHopSample>> res;
        if (!data.empty()) {
            auto g = load_graph(data);
            res = sample_local(g, seed_list, req);
        } else {
            PartitionMap map;
            map.endpoints = parse_endpoints(endpoints);
            map.instances = static_cast<std::uint32_t>(map.endpoints.size());
            RetryPolicy rp;
            rp.max_attempts = max_attempts;
            Client client(map, rp);
            res = fan_out_sample(client, seed_list, req);
        }
        std::ofstream file;
        if (!out.empty()) file = open_out(out);
        std::ostream& os = out.empty() ? std::cout : file;
        std::size_t failed = 0;
        for (const auto& r : res) {
            if (!r.ok()) {
                ++failed;
                spdlog::warn("seed {}: {}", node_str(r.seed), r.error);
                continue;
            }
            for (const auto& hop : r.value->hops)
                for (const auto& e : hop.entries)
                    os << node_str(r.seed) << '\t' << node_str(e.node) << '\t' << tsv::format(e.score) << '\t' << e.hop
                       << '\n';
        }
        spdlog::info("sampled {} seeds ({} failed)", res.size(), failed);
    }
};

struct TrainCmd {
    std::string data, records, valid, checkpoint = "model.lgnn", metrics;
    std::string encoder = "single", aggregator = "mean", decoder = "cosine", mask = "prefix", pos = "sin";
    bool id_embeddings = false, temporal = false, adaptive = false;
    std::size_t heads = 4, d = 64, n = 100, future_len = 10;
    std::size_t proj_dim = 16, out_dim = 16, id_dim = 8;
    EdgeType activity_edge_type = 0;
    std::size_t group_size = 0, gradient_step = 1, rows_per_batch = 8, micro_batches = 1, prefetch = 10, producers = 1;
    std::size_t mlp_init_epochs = 0;
    AdaptiveState adapt;
    TrainConfig tc;
    std::uint64_t init_seed = 1;
    SamplerFlags s;

    void add(CLI::App& root) {
        auto* c = root.add_subcommand("train", "train a link-prediction model");
        c->add_option("--data", data)->required();
        c->add_option("--records", records, "training records.tsv")->required();
        c->add_option("--valid", valid, "validation records (AUC is reported on training records otherwise)");
        c->add_option("--checkpoint", checkpoint, "model output file");
        c->add_option("--metrics", metrics, "JSON-lines metrics log");
        c->add_option("--encoder", encoder)->check(CLI::IsMember({"single", "dual"}));
        c->add_option("--aggregator", aggregator)->check(CLI::IsMember({"mean", "attention", "self-attention"}));
        c->add_option("--decoder", decoder)->check(CLI::IsMember({"cosine", "mlp", "inbatch"}));
        c->add_flag("--id-embeddings", id_embeddings);
        c->add_option("--id-dim", id_dim);
        c->add_option("--proj-dim", proj_dim);
        c->add_option("--out-dim", out_dim);
        c->add_flag("--temporal", temporal);
        c->add_option("--H", heads, "temporal heads");
        c->add_option("--d", d, "temporal head width");
        c->add_option("--N", n, "activity sequence length");
        c->add_option("--future-len", future_len, "tokens reserved for long-term targets");
        c->add_option("--mask", mask)->check(CLI::IsMember({"regular", "prefix"}));
        c->add_option("--pos", pos)->check(CLI::IsMember({"none", "sin", "ts"}));
        c->add_option("--activity-edge-type", activity_edge_type);
        c->add_option("--epochs", tc.epochs);
        c->add_option("--lr", tc.learning_rate);
        c->add_option("--batch-size", tc.batch_size);
        c->add_option("--shuffle-seed", tc.shuffle_seed);
        c->add_option("--init-seed", init_seed);
        c->add_option("--group-size", group_size, "member grouping; 0 trains on plain pairs");
        c->add_option("--gradient-step", gradient_step);
        c->add_option("--rows-per-batch", rows_per_batch);
        c->add_option("--micro-batches", micro_batches, "local gradient aggregation");
        c->add_option("--prefetch", prefetch, "prefetch queue capacity");
        c->add_option("--producers", producers, "prefetch producer threads");
        c->add_option("--mlp-init-epochs", mlp_init_epochs);
        c->add_flag("--adaptive", adaptive, "grow the neighbor count during training");
        c->add_option("--adaptive-start", adapt.current_neighbor_count);
        c->add_option("--adaptive-final", adapt.final_neighbor_count);
        c->add_option("--adaptive-stride", adapt.stride);
        c->add_option("--adaptive-tolerance", adapt.tolerance);
        c->add_option("--adaptive-decay", adapt.tolerance_decay);
        c->add_option("--adaptive-every", adapt.min_update_freq);
        s.add(c);
        c->callback([this] { run(); });
    }

    ModelConfig model_config(const HeteroGraph& g) const {
        ModelConfig m;
        m.dual_encoder = encoder == "dual";
        m.aggregator = aggregator == "mean"        ? Aggregator::mean
                       : aggregator == "attention" ? Aggregator::attention
                                                   : Aggregator::self_attention;
        m.decoder = decoder == "cosine" ? DecoderKind::cosine : decoder == "mlp" ? DecoderKind::mlp : DecoderKind::in_batch;
        const auto st = s.parsed();
        m.hops = st == Strategy::random || st == Strategy::weighted ? s.fanout.size() : 1;
        m.proj_dim = proj_dim;
        m.out_dim = out_dim;
        m.id_embeddings = id_embeddings;
        m.id_dim = id_dim;
        m.feature_dims = g.schema().feature_dims;
        for (auto t : g.node_types()) m.node_counts[t] = g.node_count(t);
        if (temporal) {
            if (future_len >= n) throw std::runtime_error("train: --future-len must be below --N");
            TemporalConfig t;
            t.heads = heads;
            t.dim = d;
            t.length = n;
            t.first_part = n - future_len;
            t.mask = mask == "prefix" ? MaskMode::prefix_causal : MaskMode::regular_causal;
            t.positions = pos == "none" ? PositionMode::none : pos == "sin" ? PositionMode::sinusoidal : PositionMode::timestamp;
            t.activity_edge_type = activity_edge_type;
            m.temporal = t;
            m.proj_dim = d;
            m.out_dim = heads * d;
        }
        m.validate();
        return m;
    }

    void run() {
        auto g = load_graph(data);
        auto read = [](const std::string& path) {
            auto in = open_in(path);
            std::vector<std::string> errors;
            auto r = read_records(in, &errors);
            if (!errors.empty()) spdlog::warn("{}: {} malformed lines, first: {}", path, errors.size(), errors[0]);
            return r;
        };
        auto train = read(records);
        auto eval = valid.empty() ? train : read(valid);
        if (train.empty()) throw std::runtime_error("train: no training records");

        auto cfg = model_config(g);
        auto p = init_params(cfg, init_seed);
        spdlog::info("model: {} parameter tensors, embedding dim {}", p.size(), cfg.embedding_dim());
        if (mlp_init_epochs > 0) {
            MlpInitConfig mc;
            mc.epochs = mlp_init_epochs;
            mc.learning_rate = tc.learning_rate;
            mc.batch_size = tc.batch_size;
            mc.seed = init_seed;
            p = mlp_init(train, g, cfg, mc, std::move(p));
        }

        ComputeGraphSource src(g, s.spec());
        if (adaptive) {
            adapt.validate();
            src.set_neighbor_count(adapt.current_neighbor_count);
        }
        PipelineConfig pc;
        pc.train = tc;
        pc.group_size = group_size;
        pc.gradient_step = gradient_step;
        pc.rows_per_batch = rows_per_batch;
        pc.micro_batches = micro_batches;
        pc.prefetch.capacity = prefetch;
        pc.prefetch.producers = producers;

        std::ofstream log;
        if (!metrics.empty()) log = open_out(metrics);
        for (std::size_t e = 0; e < tc.epochs; ++e) {
            const auto neighbors = s.parsed() == Strategy::ppr_push ? src.spec().ppr.top_k
                                   : s.parsed() == Strategy::ppr_two_hop ? src.spec().walk.top_k
                                                                         : src.neighbor_count();
            auto ep = run_epoch(src, cfg, p, train, pc, e);
            const double a = evaluate_auc(src, cfg, p, eval);
            json line{{"epoch", e + 1},
                      {"auc", a},
                      {"neighbor_count", neighbors},
                      {"queue_depth_max", ep.queue_depth_max},
                      {"ge_queries", ep.ge_queries},
                      {"loss", ep.mean_loss},
                      {"updates", ep.updates}};
            spdlog::info("{}", line.dump());
            if (log) log << line.dump() << '\n' << std::flush;
            if (adaptive && std::isfinite(a)) {
                adapt = adaptive_step(adapt, a);
                src.set_neighbor_count(adapt.current_neighbor_count);
            }
        }
        auto out = open_out(checkpoint);
        save_model(out, Model{cfg, p});
        spdlog::info("wrote {}", checkpoint);
    }
};

struct ServeCmd {
    std::string data, host = "127.0.0.1";
    std::uint32_t instances = 1;
    int shard = -1;
    std::uint16_t port = 7400;

    void add(CLI::App& root) {
        auto* c = root.add_subcommand("serve", "serve graph shards over TCP until interrupted");
        c->add_option("--data", data)->required();
        c->add_option("--instances", instances, "partition count P");
        c->add_option("--shard", shard, "serve only this shard (default: all of them in one process)");
        c->add_option("--host", host);
        c->add_option("--port", port, "port of shard 0; shard i listens on port+i (0 = ephemeral)");
        c->callback([this] { run(); });
    }

    void run() {
        auto g = load_graph(data);
        PartitionMap map;
        map.instances = instances;
        std::vector<std::unique_ptr<Server>> servers;
        for (std::uint32_t i = 0; i < instances; ++i) {
            if (shard >= 0 && static_cast<std::uint32_t>(shard) != i) continue;
            auto s = std::make_shared<const Shard>(make_shard(g, map, i));
            const std::uint16_t p = port == 0 ? 0 : static_cast<std::uint16_t>(port + i);
            servers.push_back(std::make_unique<Server>(s, Endpoint{host, p}));
            servers.back()->start();
            const auto ep = servers.back()->endpoint();
            std::cout << "shard " << i << '/' << instances << " listening on " << ep.host << ':' << ep.port << std::endl;
        }
        if (servers.empty()) throw std::runtime_error("serve: --shard out of range");
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        std::uint64_t served = 0;
        for (auto& s : servers) {
            served += s->requests_served();
            s->stop();
        }
        spdlog::info("stopped after {} requests", served);
    }
};

struct RefreshCmd {
    std::string data, model, events, store, store_out;
    std::string cascade = "two-hop";
    std::vector<std::string> kind_weights;
    RefreshConfig rc;

    void add(CLI::App& root) {
        auto* c = root.add_subcommand("refresh", "apply an interaction stream and refresh embeddings");
        c->add_option("--data", data)->required();
        c->add_option("--model", model, "checkpoint written by train")->required();
        c->add_option("--events", events, "ts<TAB>kind<TAB>member_type<TAB>member_id<TAB>item_type<TAB>item_id")
            ->required();
        c->add_option("--store", store, "existing embedding dump to start from");
        c->add_option("--store-out", store_out, "where to write the updated dump")->required();
        c->add_option("--cascade", cascade)->check(CLI::IsMember({"endpoints", "two-hop"}));
        c->add_option("--member-type", rc.inference.member_type);
        c->add_option("--walks", rc.inference.walk.num_walks);
        c->add_option("--topk", rc.inference.walk.top_k);
        c->add_option("--alpha", rc.inference.walk.alpha);
        c->add_option("--rng-seed", rc.inference.walk.rng_seed);
        c->add_option("--member-item-edge", rc.member_item_edge);
        c->add_option("--item-member-edge", rc.item_member_edge);
        c->add_option("--kind-weight", kind_weights, "event weight, kind=value (default 1)");
        c->add_option("--recent", rc.recent_interactors, "recent interactors kept per item");
        c->callback([this] { run(); });
    }

    void run() {
        auto g = std::make_shared<const HeteroGraph>(load_graph(data));
        auto min = open_in(model);
        auto m = load_model(min);
        rc.cascade = cascade == "two-hop" ? Cascade::two_hop : Cascade::endpoints;
        for (const auto& s : kind_weights) {
            auto eq = s.find('=');
            auto k = eq == std::string::npos ? std::nullopt : parse_event_kind(std::string_view(s).substr(0, eq));
            auto v = eq == std::string::npos ? std::nullopt : tsv::parse<double>(std::string_view(s).substr(eq + 1));
            if (!k || !v) throw std::runtime_error("bad --kind-weight '" + s + "'");
            rc.kind_weights[*k] = *v;
        }
        EmbeddingStore st;
        if (!store.empty()) {
            auto in = open_in(store);
            st.load(in);
        }
        NearlineRefresher r(g, std::move(m), st, rc);
        auto in = open_in(events);
        const auto& rep = r.run(in);
        for (std::size_t i = 0; i < std::min<std::size_t>(rep.messages.size(), 10); ++i)
            spdlog::warn("{}", rep.messages[i]);
        auto out = open_out(store_out);
        st.dump(out);
        std::cout << json{{"events", rep.events},
                          {"applied", rep.applied},
                          {"skipped", rep.skipped},
                          {"out_of_order", rep.out_of_order},
                          {"embeddings_written", rep.embeddings_written},
                          {"store_size", st.size()},
                          {"graph_epoch", r.graph().snapshot()->number()}}
                         .dump()
                  << '\n';
    }
};

struct BenchCmd {
    std::string data;
    NodeType node_type = 0;
    std::size_t seeds = 200;
    std::uint32_t instances = 0;
    std::uint64_t seed = 7;
    SamplerFlags s;

    void add(CLI::App& root) {
        auto* c = root.add_subcommand("bench", "time each sampling strategy");
        c->add_option("--data", data)->required();
        c->add_option("--node-type", node_type, "seed node type");
        c->add_option("--seeds", seeds, "number of random seeds");
        c->add_option("--instances", instances, "also run fan-out over this many local servers");
        c->add_option("--seed", seed, "seed selection");
        s.add(c);
        c->callback([this] { run(); });
    }

    void run() {
        auto g = load_graph(data);
        auto pool = g.nodes(node_type);
        if (pool.empty()) throw std::runtime_error("bench: no nodes of type " + std::to_string(node_type));
        Rng rng(seed);
        std::vector<NodeRef> seed_list;
        for (std::size_t i = 0; i < seeds; ++i) seed_list.push_back(pool[rng.below(pool.size())]);

        PartitionMap map;
        std::vector<std::unique_ptr<Server>> servers;
        if (instances > 0) {
            map.instances = instances;
            map.endpoints.resize(instances);
            for (std::uint32_t i = 0; i < instances; ++i) {
                servers.push_back(std::make_unique<Server>(std::make_shared<const Shard>(make_shard(g, map, i))));
                servers.back()->start();
                map.endpoints[i] = servers.back()->endpoint();
            }
        }
        for (const char* name : {"random", "weighted", "ppr-push", "ppr-2hop", "temporal"}) {
            auto flags = s;
            flags.strategy = name;
            auto req = flags.request();
            auto time = [&](auto&& fn) {
                auto t0 = std::chrono::steady_clock::now();
                auto res = fn();
                const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                std::size_t neighbors = 0, failed = 0;
                for (const auto& r : res) {
                    if (!r.ok()) {
                        ++failed;
                        continue;
                    }
                    for (const auto& h : r.value->hops) neighbors += h.entries.size();
                }
                return std::tuple{secs, neighbors, failed};
            };
            auto emit = [&](const char* mode, std::tuple<double, std::size_t, std::size_t> t) {
                auto [secs, neighbors, failed] = t;
                std::cout << json{{"strategy", name},
                                  {"mode", mode},
                                  {"seeds", seed_list.size()},
                                  {"seconds", secs},
                                  {"us_per_seed", 1e6 * secs / static_cast<double>(seed_list.size())},
                                  {"neighbors", neighbors},
                                  {"failed", failed}}
                                 .dump()
                          << std::endl;
            };
            emit("local", time([&] { return sample_local(g, seed_list, req); }));
            if (instances > 0) {
                Client client(map);
                emit("fan-out", time([&] { return fan_out_sample(client, seed_list, req); }));
            }
        }
    }
};

// Appends the entries of an INI/TOML config file as `--key=value` arguments
// after the command line ones, so config values take precedence.
std::vector<std::string> with_config(std::vector<std::string> args) {
    std::string path;
    std::vector<std::string> kept;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[++i];
        } else if (args[i].starts_with("--config=")) {
            path = args[i].substr(9);
        } else {
            kept.push_back(args[i]);
        }
    }
    if (path.empty()) return args;
    std::ifstream probe(path);
    if (!probe) throw std::runtime_error("cannot open config " + path);
    const std::string sub = kept.size() > 1 ? kept[1] : "";
    for (const auto& item : CLI::ConfigTOML().from_file(path)) {
        if (item.name == "++" || item.name == "--") continue;
        if (!item.parents.empty() && item.parents.front() != sub) continue;
        std::string value;
        for (std::size_t k = 0; k < item.inputs.size(); ++k) value += (k ? "," : "") + item.inputs[k];
        kept.push_back("--" + item.name + "=" + value);
    }
    return kept;
}

}  // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("lignn");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* lvl = std::getenv("LIGNN_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));

    CLI::App app{"lignn: heterogeneous graph engine and link-prediction trainer"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--config", "INI/TOML file of flag values; its values win over the command line");

    BuildCmd build;
    DensifyCmd dens;
    SampleCmd sample;
    TrainCmd train;
    ServeCmd serve;
    RefreshCmd refresh;
    BenchCmd bench;
    build.add(app);
    dens.add(app);
    sample.add(app);
    train.add(app);
    serve.add(app);
    refresh.add(app);
    bench.add(app);

    try {
        std::vector<std::string> args(argv, argv + argc);
        args = with_config(std::move(args));
        std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
