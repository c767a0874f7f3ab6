#include <benchmark/benchmark.h>

#include <map>
#include <string>
#include <vector>

#include "synthqa/analysis.hpp"
#include "synthqa/chunking.hpp"
#include "synthqa/knowledge_graph.hpp"
#include "synthqa/rng.hpp"

using namespace synthqa;

namespace {

// Ring of phrases with random chords, one passage per four phrases.
KnowledgeGraph ring_graph(std::size_t phrases) {
  Rng rng(17);
  std::vector<Node> nodes;
  for (std::size_t i = 0; i < phrases; ++i) nodes.push_back({NodeKind::Phrase, "ph" + std::to_string(i), "", {}});
  const std::size_t passages = phrases / 4;
  for (std::size_t i = 0; i < passages; ++i) {
    nodes.push_back({NodeKind::Passage, "pa" + std::to_string(i), "text", {}});
  }
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < phrases; ++i) {
    edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>((i + 1) % phrases), EdgeKind::Relation, 1.0});
    edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(rng.below(phrases)), EdgeKind::Synonym, 0.5});
  }
  for (std::size_t i = 0; i < passages; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      edges.push_back({static_cast<NodeId>(phrases + i), static_cast<NodeId>(4 * i + k), EdgeKind::Containment, 1.0});
    }
  }
  std::erase_if(edges, [](const Edge& e) { return e.u == e.v; });
  return KnowledgeGraph::from_parts(std::move(nodes), std::move(edges));
}

void BM_PersonalizedPageRank(benchmark::State& state) {
  const auto g = ring_graph(static_cast<std::size_t>(state.range(0)));
  std::map<NodeId, double> seeds;
  for (NodeId i = 0; i < 5; ++i) seeds[i * 7] = 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(personalized_pagerank(g, seeds));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PersonalizedPageRank)->RangeMultiplier(4)->Range(256, 16384)->Complexity();

void BM_PairwiseDiversity(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  std::vector<Vector> vs(n, Vector(64));
  for (auto& v : vs) {
    for (auto& x : v) x = rng.unit() - 0.5;
    v = normalized(v);
  }
  for (auto _ : state) benchmark::DoNotOptimize(diversity_from_embeddings(vs));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PairwiseDiversity)->RangeMultiplier(2)->Range(64, 1024)->Complexity(benchmark::oNSquared);

void BM_UniformChunking(benchmark::State& state) {
  Rng rng(5);
  Document doc;
  doc.doc_id = "bench";
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    if (i) doc.body += (i % 13 == 0) ? ".\n" : " ";
    doc.body += "token" + std::to_string(rng.below(1000));
  }
  ChunkingConfig cfg;
  cfg.strategy = ChunkStrategy::Uniform;
  for (auto _ : state) benchmark::DoNotOptimize(chunk_document(doc, cfg));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * doc.body.size()));
}
BENCHMARK(BM_UniformChunking)->Range(1 << 10, 1 << 16);

}  // namespace

BENCHMARK_MAIN();
