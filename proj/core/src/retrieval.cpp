#include <algorithm>

#include <spdlog/spdlog.h>

#include "synthqa/knowledge_graph.hpp"

namespace synthqa {

void RetrievalConfig::validate() const {
  if (phrase_matches == 0) throw ConfigError("retrieval: phrase_matches must be positive");
  if (!(match_floor >= -1.0 && match_floor <= 1.0)) throw ConfigError("retrieval: match_floor must lie in [-1, 1]");
  pagerank.validate();
}

std::string_view to_string(RetrievalStatus s) {
  switch (s) {
    case RetrievalStatus::Graph: return "graph";
    case RetrievalStatus::DenseFallback: return "dense_fallback";
    case RetrievalStatus::EmptyGraph: return "empty_graph";
  }
  return "graph";
}

RetrievalResult retrieve(const KnowledgeGraph& graph, const RetrievalQuery& query, const Embedder& embedder,
                         const RetrievalConfig& cfg) {
  cfg.validate();
  if (query.key.empty()) throw GraphError("retrieval query key is empty");
  if (query.top_k == 0) throw GraphError("retrieval top_k must be positive");

  RetrievalResult result;
  if (graph.passage_count() == 0) {
    result.status = RetrievalStatus::EmptyGraph;
    spdlog::warn("retrieve: graph has no passages; nothing to return for '{}'", query.key);
    return result;
  }
  if (graph.embedding_dim() == 0) throw GraphError("retrieval needs a graph with embeddings");
  if (!embedder) throw ConfigError("retrieval requires an embedder");

  const auto vectors = embedder({normalize_phrase(query.key)});
  if (vectors.size() != 1) throw GraphError("embedder returned the wrong number of vectors");
  const Vector q = normalized(vectors.front());
  if (q.size() != graph.embedding_dim()) throw GraphError("query embedding dimensionality differs from the graph");

  std::vector<std::pair<double, NodeId>> candidates;
  for (NodeId id = 0; id < graph.phrase_count(); ++id) {
    const double sim = dot(q, graph.node(id).embedding);
    if (sim >= cfg.match_floor && sim > 0.0) candidates.emplace_back(sim, id);
  }
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  if (candidates.size() > cfg.phrase_matches) candidates.resize(cfg.phrase_matches);

  std::vector<ScoredPassage> scored;
  scored.reserve(graph.passage_count());
  const NodeId first_passage = static_cast<NodeId>(graph.phrase_count());
  if (!candidates.empty()) {
    std::map<NodeId, double> seeds;
    for (const auto& [sim, id] : candidates) {
      seeds[id] = sim;
      result.matched.push_back({graph.node(id).key, sim});
    }
    const auto ppr = personalized_pagerank(graph, seeds, cfg.pagerank);
    for (NodeId id = first_passage; id < graph.node_count(); ++id) {
      scored.push_back({graph.node(id).key, ppr.scores[id]});
    }
    result.status = RetrievalStatus::Graph;
  } else {
    for (NodeId id = first_passage; id < graph.node_count(); ++id) {
      scored.push_back({graph.node(id).key, std::max(0.0, dot(q, graph.node(id).embedding))});
    }
    result.status = RetrievalStatus::DenseFallback;
  }

  std::sort(scored.begin(), scored.end(), [](const ScoredPassage& a, const ScoredPassage& b) {
    return a.score != b.score ? a.score > b.score : a.chunk_id < b.chunk_id;
  });
  if (scored.size() > query.top_k) scored.resize(query.top_k);
  result.ranked = std::move(scored);
  return result;
}

std::vector<std::string> passage_texts(const KnowledgeGraph& graph, const RetrievalResult& result) {
  std::vector<std::string> out;
  for (const auto& p : result.ranked) {
    auto id = graph.find(NodeKind::Passage, p.chunk_id);
    if (!id) throw GraphError("passage '" + p.chunk_id + "' is not in the graph");
    out.push_back(graph.node(*id).text);
  }
  return out;
}

const std::string& Retriever::text_of(const std::string& chunk_id) const {
  auto id = graph_->find(NodeKind::Passage, chunk_id);
  if (!id) throw GraphError("passage '" + chunk_id + "' is not in the graph");
  return graph_->node(*id).text;
}

}  // namespace synthqa
