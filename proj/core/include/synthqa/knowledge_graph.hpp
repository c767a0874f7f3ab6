#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synthqa/chunking.hpp"
#include "synthqa/error.hpp"
#include "synthqa/gateway.hpp"
#include "synthqa/jsonl.hpp"
#include "synthqa/vector_math.hpp"

namespace synthqa {

class GraphError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Triples
// ---------------------------------------------------------------------------

struct Triple {
  std::string subject;
  std::string relation;
  std::string object;
  std::string source_chunk;

  friend bool operator==(const Triple&, const Triple&) = default;
};

/// Lowercase ASCII, trim, and collapse internal whitespace runs to one space.
std::string normalize_phrase(std::string_view phrase);

struct TripleParse {
  std::vector<Triple> triples;
  std::size_t dropped = 0;
};

/// Parses extractor output: one `(subject; relation; object)` per line.
/// Blank lines are ignored; any other line that does not fit is dropped and
/// counted. Subjects and objects are normalized with normalize_phrase.
TripleParse parse_triples(std::string_view output, const std::string& source_chunk);

struct ExtractionOutcome {
  std::string chunk_id;
  std::vector<Triple> triples;
  std::size_t dropped = 0;
  bool indexed = true;  // false when the extractor failed after retries
  std::string error;
};

ExtractionOutcome extract_triples(const Chunk& chunk, Gateway& gateway);

/// Extracts from every chunk with up to `workers` requests in flight; results
/// follow the input order.
std::vector<ExtractionOutcome> extract_all(const std::vector<Chunk>& chunks, Gateway& gateway,
                                           std::size_t workers);

json to_json(const Triple& t);
Triple triple_from_json(const json& j);

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

enum class NodeKind : std::uint8_t { Phrase = 0, Passage = 1 };
enum class EdgeKind : std::uint8_t { Relation = 0, Containment = 1, Synonym = 2 };

using NodeId = std::uint32_t;

struct Node {
  NodeKind kind = NodeKind::Phrase;
  std::string key;   // normalized phrase, or chunk_id for passages
  std::string text;  // passage text; empty for phrases
  Vector embedding;  // unit length, or empty when the graph carries no embeddings

  friend bool operator==(const Node&, const Node&) = default;
};

/// Undirected weighted edge with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  EdgeKind kind = EdgeKind::Relation;
  double weight = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Neighbor {
  NodeId node;
  double weight;  // summed over edge kinds
};

/// Phrase and passage nodes joined by relation, containment and synonym
/// edges. Immutable after construction and safe to share across threads.
///
/// Phrase nodes come first in lexicographic order, then passages ordered by
/// chunk_id, so node ids never depend on insertion order.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  /// Validates and canonicalizes: sorts nodes and edges, merges duplicate
  /// (u, v, kind) edges by summing weights, and checks every invariant.
  static KnowledgeGraph from_parts(std::vector<Node> nodes, std::vector<Edge> edges, json metadata = json::object());

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t phrase_count() const { return phrase_count_; }
  std::size_t passage_count() const { return nodes_.size() - phrase_count_; }
  std::size_t embedding_dim() const { return nodes_.empty() ? 0 : nodes_.front().embedding.size(); }

  std::optional<NodeId> find(NodeKind kind, std::string_view key) const;
  std::span<const Neighbor> neighbors(NodeId id) const;
  double weighted_degree(NodeId id) const { return degree_.at(id); }
  const json& metadata() const { return metadata_; }

  friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_ && a.metadata_ == b.metadata_;
  }

 private:
  void build_adjacency();

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  json metadata_ = json::object();
  std::size_t phrase_count_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<Neighbor> adjacency_;
  std::vector<double> degree_;
};

/// Builds the index graph. Relation edges weigh 1 per triple joining two
/// distinct phrases (accumulated); every phrase in a triple gets a weight-1
/// containment edge to the triple's source chunk; phrase pairs whose embedding
/// cosine is at least `synonym_threshold` (and positive) get a synonym edge
/// weighted by that cosine.
///
/// Throws GraphError when a triple names an unknown chunk.
KnowledgeGraph build_graph(const std::vector<Chunk>& chunks, const std::vector<Triple>& triples,
                           const Embedder& embedder, double synonym_threshold);

// ---------------------------------------------------------------------------
// Personalized PageRank
// ---------------------------------------------------------------------------

struct PageRankConfig {
  double damping = 0.85;
  double epsilon = 1e-8;
  int max_iters = 100;

  void validate() const;
};

struct PageRankResult {
  std::vector<double> scores;  // indexed by NodeId, sums to 1
  int iterations = 0;
  double last_delta = 0.0;
  bool converged = false;
};

/// Power iteration on the random-walk normalization of the undirected graph:
///   r <- (1 - d) s + d (W D^-1 r + dangling(r) s)
/// where s is the normalized teleport vector and dangling(r) is the mass on
/// nodes without edges, which is returned to s. Stops once the L1 change
/// drops below epsilon or after max_iters.
///
/// Throws GraphError when a seed names a missing node or seeds carry no mass.
PageRankResult personalized_pagerank(const KnowledgeGraph& graph, const std::map<NodeId, double>& seeds,
                                     const PageRankConfig& cfg = {});

// ---------------------------------------------------------------------------
// Retrieval
// ---------------------------------------------------------------------------

struct RetrievalQuery {
  std::string key;
  std::size_t top_k = 3;
};

struct RetrievalConfig {
  std::size_t phrase_matches = 5;  // top-m phrase nodes seeded per query
  double match_floor = 0.5;        // minimum cosine for a phrase to count as matched
  PageRankConfig pagerank;

  void validate() const;
};

enum class RetrievalStatus { Graph, DenseFallback, EmptyGraph };
std::string_view to_string(RetrievalStatus s);

struct ScoredPassage {
  std::string chunk_id;
  double score = 0.0;

  friend bool operator==(const ScoredPassage&, const ScoredPassage&) = default;
};

struct PhraseMatch {
  std::string phrase;
  double similarity = 0.0;
};

struct RetrievalResult {
  std::vector<ScoredPassage> ranked;  // descending score, chunk_id breaks ties
  RetrievalStatus status = RetrievalStatus::Graph;
  std::vector<PhraseMatch> matched;
};

/// Seeds PPR with the query's best-matching phrase nodes (teleport mass
/// proportional to similarity) and ranks passages by their score. Falls back
/// to query-to-passage cosine when no phrase clears the match floor.
RetrievalResult retrieve(const KnowledgeGraph& graph, const RetrievalQuery& query, const Embedder& embedder,
                         const RetrievalConfig& cfg = {});

/// Chunk texts for a ranked result, in rank order.
std::vector<std::string> passage_texts(const KnowledgeGraph& graph, const RetrievalResult& result);

/// A built graph bundled with the embedder and settings used to query it.
class Retriever {
 public:
  Retriever(const KnowledgeGraph& graph, Embedder embedder, RetrievalConfig cfg = {})
      : graph_(&graph), embedder_(std::move(embedder)), cfg_(cfg) {}

  RetrievalResult retrieve(const std::string& key, std::size_t top_k) const {
    return synthqa::retrieve(*graph_, RetrievalQuery{key, top_k}, embedder_, cfg_);
  }
  std::vector<std::string> texts(const RetrievalResult& result) const { return passage_texts(*graph_, result); }
  /// Text of a passage node; throws GraphError for unknown ids.
  const std::string& text_of(const std::string& chunk_id) const;
  const KnowledgeGraph& graph() const { return *graph_; }

 private:
  const KnowledgeGraph* graph_;
  Embedder embedder_;
  RetrievalConfig cfg_;
};

// ---------------------------------------------------------------------------
// Index file (layout in docs/index_format.md)
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kGraphIndexVersion = 1;

void save_graph(const KnowledgeGraph& graph, const std::filesystem::path& path);
KnowledgeGraph load_graph(const std::filesystem::path& path);

std::string serialize_graph(const KnowledgeGraph& graph);
KnowledgeGraph deserialize_graph(std::string_view bytes);

}  // namespace synthqa
