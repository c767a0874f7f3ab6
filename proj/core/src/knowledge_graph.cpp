#include "synthqa/knowledge_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>
#include <unordered_map>

namespace synthqa {

namespace {

constexpr std::size_t kEmbedBatch = 64;

bool node_less(const Node& a, const Node& b) {
  return std::tie(a.kind, a.key) < std::tie(b.kind, b.key);
}

std::vector<Vector> embed_batched(const Embedder& embedder, const std::vector<std::string>& texts) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (std::size_t first = 0; first < texts.size(); first += kEmbedBatch) {
    const std::size_t last = std::min(first + kEmbedBatch, texts.size());
    std::vector<std::string> batch(texts.begin() + first, texts.begin() + last);
    auto vectors = embedder(batch);
    if (vectors.size() != batch.size()) throw GraphError("embedder returned the wrong number of vectors");
    for (auto& v : vectors) out.push_back(normalized(std::move(v)));
  }
  return out;
}

}  // namespace

KnowledgeGraph KnowledgeGraph::from_parts(std::vector<Node> nodes, std::vector<Edge> edges, json metadata) {
  KnowledgeGraph g;
  const std::size_t n = nodes.size();

  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](NodeId a, NodeId b) { return node_less(nodes[a], nodes[b]); });
  std::vector<NodeId> remap(n);
  for (NodeId new_id = 0; new_id < n; ++new_id) remap[order[new_id]] = new_id;

  g.nodes_.reserve(n);
  for (NodeId old_id : order) g.nodes_.push_back(std::move(nodes[old_id]));

  const std::size_t dim = n ? g.nodes_.front().embedding.size() : 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Node& node = g.nodes_[i];
    if (node.key.empty()) throw GraphError("graph node with empty key");
    if (i > 0 && g.nodes_[i - 1].kind == node.kind && g.nodes_[i - 1].key == node.key) {
      throw GraphError("duplicate graph node '" + node.key + "'");
    }
    if (node.embedding.size() != dim) throw GraphError("inconsistent embedding dimensionality");
    if (dim > 0 && std::abs(l2_norm(node.embedding) - 1.0) > 1e-6) {
      throw GraphError("embedding of node '" + node.key + "' is not unit length");
    }
    if (node.kind == NodeKind::Phrase) ++g.phrase_count_;
  }

  std::map<std::tuple<NodeId, NodeId, EdgeKind>, double> merged;
  for (const Edge& e : edges) {
    if (e.u >= n || e.v >= n) throw GraphError("edge endpoint is not a registered node");
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) throw GraphError("edge weight must be positive");
    NodeId u = remap[e.u], v = remap[e.v];
    if (u == v) throw GraphError("self-loop on node '" + g.nodes_[u].key + "'");
    if (u > v) std::swap(u, v);
    const bool mixed = g.nodes_[u].kind != g.nodes_[v].kind;
    if ((e.kind == EdgeKind::Containment) != mixed) {
      throw GraphError("containment edges must join a phrase and a passage; other edges join phrases");
    }
    merged[{u, v, e.kind}] += e.weight;
  }
  g.edges_.reserve(merged.size());
  for (const auto& [key, w] : merged) {
    g.edges_.push_back(Edge{std::get<0>(key), std::get<1>(key), std::get<2>(key), w});
  }
  g.metadata_ = std::move(metadata);
  g.build_adjacency();
  return g;
}

void KnowledgeGraph::build_adjacency() {
  const std::size_t n = nodes_.size();
  std::vector<std::vector<Neighbor>> lists(n);
  for (const Edge& e : edges_) {
    lists[e.u].push_back({e.v, e.weight});
    lists[e.v].push_back({e.u, e.weight});
  }
  offsets_.assign(n + 1, 0);
  adjacency_.clear();
  degree_.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& list = lists[i];
    std::sort(list.begin(), list.end(), [](const Neighbor& a, const Neighbor& b) { return a.node < b.node; });
    for (const Neighbor& nb : list) {
      if (!adjacency_.empty() && adjacency_.size() > offsets_[i] && adjacency_.back().node == nb.node) {
        adjacency_.back().weight += nb.weight;
      } else {
        adjacency_.push_back(nb);
      }
      degree_[i] += nb.weight;
    }
    offsets_[i + 1] = adjacency_.size();
  }
}

std::optional<NodeId> KnowledgeGraph::find(NodeKind kind, std::string_view key) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), std::pair{kind, key}, [](const Node& node, const auto& k) {
    return std::tie(node.kind, node.key) < std::tie(k.first, k.second);
  });
  if (it == nodes_.end() || it->kind != kind || it->key != key) return std::nullopt;
  return static_cast<NodeId>(it - nodes_.begin());
}

std::span<const Neighbor> KnowledgeGraph::neighbors(NodeId id) const {
  if (id >= nodes_.size()) throw GraphError("node id out of range");
  return std::span<const Neighbor>(adjacency_).subspan(offsets_[id], offsets_[id + 1] - offsets_[id]);
}

KnowledgeGraph build_graph(const std::vector<Chunk>& chunks, const std::vector<Triple>& triples,
                           const Embedder& embedder, double synonym_threshold) {
  if (!embedder) throw ConfigError("build_graph requires an embedder");
  if (!(synonym_threshold >= 0.0 && synonym_threshold <= 1.0)) {
    throw ConfigError("synonym_threshold must lie in [0, 1]");
  }

  std::vector<const Chunk*> ordered;
  for (const auto& c : chunks) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(), [](const Chunk* a, const Chunk* b) { return a->chunk_id < b->chunk_id; });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i - 1]->chunk_id == ordered[i]->chunk_id) {
      throw GraphError("duplicate chunk id '" + ordered[i]->chunk_id + "'");
    }
  }
  std::unordered_map<std::string, NodeId> passage_index;

  std::set<std::string> phrase_set;
  for (const Triple& t : triples) {
    if (t.subject.empty() || t.relation.empty() || t.object.empty()) throw GraphError("triple with an empty phrase");
    phrase_set.insert(t.subject);
    phrase_set.insert(t.object);
  }
  const std::vector<std::string> phrases(phrase_set.begin(), phrase_set.end());
  const auto phrase_count = static_cast<NodeId>(phrases.size());
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    passage_index.emplace(ordered[i]->chunk_id, phrase_count + static_cast<NodeId>(i));
  }
  for (const Triple& t : triples) {
    if (!passage_index.count(t.source_chunk)) {
      throw GraphError("triple source chunk '" + t.source_chunk + "' is not in the chunk store");
    }
  }

  std::vector<std::string> passage_texts;
  for (const Chunk* c : ordered) passage_texts.push_back(c->text);
  const auto phrase_vecs = embed_batched(embedder, phrases);
  const auto passage_vecs = embed_batched(embedder, passage_texts);

  std::vector<Node> nodes;
  nodes.reserve(phrases.size() + ordered.size());
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    nodes.push_back(Node{NodeKind::Phrase, phrases[i], {}, phrase_vecs[i]});
  }
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    nodes.push_back(Node{NodeKind::Passage, ordered[i]->chunk_id, ordered[i]->text, passage_vecs[i]});
  }

  auto phrase_id = [&](const std::string& p) {
    return static_cast<NodeId>(std::lower_bound(phrases.begin(), phrases.end(), p) - phrases.begin());
  };

  std::vector<Edge> edges;
  std::set<std::pair<NodeId, NodeId>> containment;
  for (const Triple& t : triples) {
    const NodeId s = phrase_id(t.subject);
    const NodeId o = phrase_id(t.object);
    const NodeId c = passage_index.at(t.source_chunk);
    if (s != o) edges.push_back(Edge{std::min(s, o), std::max(s, o), EdgeKind::Relation, 1.0});
    containment.insert({s, c});
    containment.insert({o, c});
  }
  for (const auto& [p, c] : containment) edges.push_back(Edge{p, c, EdgeKind::Containment, 1.0});

  for (NodeId i = 0; i < phrase_count; ++i) {
    for (NodeId j = i + 1; j < phrase_count; ++j) {
      const double sim = std::min(1.0, dot(phrase_vecs[i], phrase_vecs[j]));
      if (sim > 0.0 && sim >= synonym_threshold) edges.push_back(Edge{i, j, EdgeKind::Synonym, sim});
    }
  }

  json meta = {{"synonym_threshold", synonym_threshold},
               {"triple_count", triples.size()},
               {"chunk_count", chunks.size()}};
  return KnowledgeGraph::from_parts(std::move(nodes), std::move(edges), std::move(meta));
}

}  // namespace synthqa
