// Builds a small member/item graph, samples neighbors three ways, trains a
// two-hop GraphSAGE link predictor and serves the graph from two shards.

#include <cstdio>

#include "lignn/pipeline.hpp"
#include "lignn/service.hpp"
#include "lignn/synthetic.hpp"

using namespace lignn;

int main() {
    synthetic::CommunityConfig cc;
    cc.members = 400;
    cc.items = 400;
    cc.communities = 6;
    auto data = synthetic::planted_communities(cc);
    const HeteroGraph& g = data.graph;
    std::printf("graph: %zu nodes, %zu edges\n", g.node_count(), g.edge_count());

    const NodeRef member = *g.find(synthetic::kMember, 7);
    auto two_hop = sample_multihop_one(g, member, std::vector<std::size_t>{5, 3}, 42);
    std::printf("random 5x3 fan-out: %zu + %zu neighbors\n", two_hop.value->hops[0].entries.size(),
                two_hop.value->hops[1].entries.size());

    PPRConfig ppr;
    ppr.top_k = 5;
    for (const auto& e : ppr_forward_push(g, member, ppr).sample.entries)
        std::printf("  ppr  %u:%llu  %.4f\n", e.node.type, static_cast<unsigned long long>(e.node.id), e.score);

    for (const auto& e : sample_temporal_last_n(g, member, synthetic::kMemberToItem, kTimeInfinity, 3))
        std::printf("  last %u:%llu  at %lld\n", e.node.type, static_cast<unsigned long long>(e.node.id),
                    static_cast<long long>(e.ts));

    ModelConfig mc;
    mc.hops = 2;
    mc.feature_dims = g.schema().feature_dims;
    SamplerSpec spec;
    spec.fanouts = {8, 4};
    ComputeGraphSource src(g, spec);
    ParamSet params = init_params(mc, 1);

    PipelineConfig pc;
    pc.group_size = 4;
    pc.train.learning_rate = 0.1;
    for (std::size_t epoch = 0; epoch < 4; ++epoch) {
        auto st = run_epoch(src, mc, params, data.train, pc, epoch);
        std::printf("epoch %zu: loss %.4f, %llu engine queries, valid AUC %.3f\n", epoch + 1, st.mean_loss,
                    static_cast<unsigned long long>(st.ge_queries), evaluate_auc(src, mc, params, data.valid));
    }

    // The same samples through two shard servers on localhost.
    PartitionMap map;
    map.instances = 2;
    map.endpoints.resize(2);
    std::vector<std::unique_ptr<Server>> servers;
    for (std::uint32_t i = 0; i < 2; ++i) {
        servers.push_back(std::make_unique<Server>(std::make_shared<const Shard>(make_shard(g, map, i))));
        servers.back()->start();
        map.endpoints[i] = servers.back()->endpoint();
    }
    Client client(map);
    FanOutRequest req;
    req.fanouts = {5, 3};
    req.rng_seed = 42;
    std::vector<NodeRef> seeds{member};
    auto remote = fan_out_sample(client, seeds, req);
    std::printf("served sample matches local: %s\n", remote[0].value->hops == two_hop.value->hops ? "yes" : "no");
}
