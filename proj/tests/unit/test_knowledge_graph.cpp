#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "synthqa/knowledge_graph.hpp"
#include "synthqa/mock_backend.hpp"
#include "synthqa/rng.hpp"
#include "test_support.hpp"

using namespace synthqa;

namespace {

Chunk chunk(const std::string& id, const std::string& text) {
  Chunk c;
  c.chunk_id = id;
  c.doc_id = "doc";
  c.text = text;
  c.token_count = count_tokens(text);
  c.span = {0, text.size()};
  return c;
}

Embedder mock_embedder(std::uint64_t seed = 3) {
  MockScript s;
  s.seed = seed;
  auto t = std::make_shared<MockTransport>(s);
  return [t](const std::vector<std::string>& texts) {
    std::vector<Vector> out;
    for (const auto& x : texts) out.push_back(t->embed_text(x));
    return out;
  };
}

Embedder constant_embedder() {
  return [](const std::vector<std::string>& texts) { return std::vector<Vector>(texts.size(), Vector{0.6, 0.8}); };
}

double linf(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<std::string> ids(const RetrievalResult& r) {
  std::vector<std::string> out;
  for (const auto& p : r.ranked) out.push_back(p.chunk_id);
  return out;
}

}  // namespace

// --- triples ----------------------------------------------------------------

TEST_CASE("extractor output with one triple") {
  MockScript s;
  s.rules.push_back({ModelRole::Extractor, "PowerFailure", "", {"(PowerFailure; indicates; rectifier fault)"}, {}});
  auto b = mock_backend(s);
  const auto out = extract_triples(chunk("c", "Alarm PowerFailure indicates rectifier fault"), *b.gateway);
  REQUIRE(out.triples.size() == 1);
  CHECK(out.triples[0] == Triple{"powerfailure", "indicates", "rectifier fault", "c"});
  CHECK(out.dropped == 0);
  CHECK(out.indexed);
}

TEST_CASE("empty extractor output") {
  const auto parse = parse_triples("", "c");
  CHECK(parse.triples.empty());
  CHECK(parse.dropped == 0);
}

TEST_CASE("two well-formed lines and one malformed line") {
  const auto parse = parse_triples("(a; r; b)\n  \nnot a triple\n( C ;  links  to ; D )\n", "c");
  REQUIRE(parse.triples.size() == 2);
  CHECK(parse.dropped == 1);
  CHECK(parse.triples[1] == Triple{"c", "links to", "d", "c"});
}

TEST_CASE("triples with missing parts are dropped") {
  CHECK(parse_triples("(a; r)", "c").dropped == 1);
  CHECK(parse_triples("(a; ; b)", "c").dropped == 1);
  CHECK(parse_triples("(a; r; b; x)", "c").dropped == 1);
  CHECK(parse_triples("a; r; b", "c").dropped == 1);
}

TEST_CASE("failed extraction leaves the chunk unindexed") {
  auto cfg = mock_gateway_config();
  cfg.retry.max_attempts = 1;
  auto b = mock_backend(MockScript{}, cfg);
  b.transport->fail_next(1, GatewayErrorKind::Timeout);
  const auto out = extract_triples(chunk("c", "text"), *b.gateway);
  CHECK_FALSE(out.indexed);
  CHECK(out.triples.empty());
  CHECK_FALSE(out.error.empty());
}

TEST_CASE("normalize_phrase") {
  CHECK(normalize_phrase("  Link   DOWN\t") == "link down");
  CHECK(normalize_phrase("") == "");
}

// --- graph construction -----------------------------------------------------

TEST_CASE("no triples: passages only") {
  const auto g = build_graph({chunk("c1", "x"), chunk("c2", "y"), chunk("c3", "z")}, {}, mock_embedder(), 0.8);
  CHECK(g.passage_count() == 3);
  CHECK(g.phrase_count() == 0);
  CHECK(g.edges().empty());
}

TEST_CASE("one triple gives a relation edge and two containment edges") {
  const auto g = build_graph({chunk("c", "a r b")}, {{"a", "r", "b", "c"}}, mock_embedder(), 0.99);
  REQUIRE(g.node_count() == 3);
  const auto a = *g.find(NodeKind::Phrase, "a");
  const auto b = *g.find(NodeKind::Phrase, "b");
  const auto c = *g.find(NodeKind::Passage, "c");
  std::vector<Edge> expected{{std::min(a, b), std::max(a, b), EdgeKind::Relation, 1.0},
                             {std::min(a, c), std::max(a, c), EdgeKind::Containment, 1.0},
                             {std::min(b, c), std::max(b, c), EdgeKind::Containment, 1.0}};
  auto actual = g.edges();
  auto key = [](const Edge& e) { return std::tuple(e.u, e.v, e.kind); };
  std::sort(expected.begin(), expected.end(), [&](auto& x, auto& y) { return key(x) < key(y); });
  std::sort(actual.begin(), actual.end(), [&](auto& x, auto& y) { return key(x) < key(y); });
  CHECK(actual == expected);
}

TEST_CASE("repeated triples accumulate relation weight; self-loops add no relation edge") {
  const auto g = build_graph({chunk("c1", "t"), chunk("c2", "t")},
                             {{"a", "r", "b", "c1"}, {"a", "s", "b", "c2"}, {"a", "is", "a", "c1"}}, mock_embedder(),
                             0.99);
  const auto a = *g.find(NodeKind::Phrase, "a");
  const auto b = *g.find(NodeKind::Phrase, "b");
  for (const auto& e : g.edges()) {
    CHECK(e.u != e.v);
    if (e.kind == EdgeKind::Relation) {
      CHECK(e.u == std::min(a, b));
      CHECK(e.weight == 2.0);
    }
    if (e.kind == EdgeKind::Containment) CHECK(e.weight == 1.0);
  }
}

TEST_CASE("identical phrase embeddings give a weight-1 synonym edge") {
  const auto g = build_graph({chunk("c", "t")}, {{"fan fault", "r", "fan failure", "c"}}, constant_embedder(), 0.9);
  std::size_t synonyms = 0;
  for (const auto& e : g.edges()) {
    if (e.kind == EdgeKind::Synonym) {
      ++synonyms;
      CHECK(e.weight == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  CHECK(synonyms == 1);
}

TEST_CASE("unknown source chunk is a GraphError") {
  CHECK_THROWS_AS(build_graph({chunk("c", "t")}, {{"a", "r", "b", "missing"}}, mock_embedder(), 0.8), GraphError);
}

TEST_CASE("graph build is idempotent and independent of input order") {
  std::vector<Chunk> chunks{chunk("c1", "one"), chunk("c2", "two"), chunk("c3", "three")};
  std::vector<Triple> triples{{"a", "r", "b", "c1"}, {"b", "r", "c", "c2"}, {"c", "r", "d", "c3"}, {"a", "q", "d", "c3"}};
  const auto first = build_graph(chunks, triples, mock_embedder(), 0.5);
  const auto second = build_graph(chunks, triples, mock_embedder(), 0.5);
  CHECK(first == second);
  std::reverse(chunks.begin(), chunks.end());
  std::reverse(triples.begin(), triples.end());
  CHECK(build_graph(chunks, triples, mock_embedder(), 0.5) == first);
}

TEST_CASE("from_parts rejects invalid structure") {
  std::vector<Node> nodes{{NodeKind::Phrase, "a", "", {}}, {NodeKind::Passage, "p", "t", {}}};
  CHECK_THROWS_AS(KnowledgeGraph::from_parts(nodes, {{0, 0, EdgeKind::Relation, 1.0}}), GraphError);
  CHECK_THROWS_AS(KnowledgeGraph::from_parts(nodes, {{0, 1, EdgeKind::Relation, 1.0}}), GraphError);
  CHECK_THROWS_AS(KnowledgeGraph::from_parts(nodes, {{0, 1, EdgeKind::Containment, -1.0}}), GraphError);
  CHECK_THROWS_AS(KnowledgeGraph::from_parts(nodes, {{0, 7, EdgeKind::Containment, 1.0}}), GraphError);
  nodes.push_back({NodeKind::Phrase, "a", "", {}});
  CHECK_THROWS_AS(KnowledgeGraph::from_parts(nodes, {}), GraphError);
}

// --- personalized PageRank --------------------------------------------------

TEST_CASE("single isolated seed keeps all mass") {
  const auto g = KnowledgeGraph::from_parts({{NodeKind::Phrase, "a", "", {}}, {NodeKind::Phrase, "b", "", {}}}, {});
  const auto r = personalized_pagerank(g, {{0, 1.0}});
  CHECK(r.scores[0] == doctest::Approx(1.0));
  CHECK(r.scores[1] == 0.0);
}

TEST_CASE("two nodes, one edge, uniform seeds") {
  const auto g =
      KnowledgeGraph::from_parts({{NodeKind::Phrase, "a", "", {}}, {NodeKind::Phrase, "b", "", {}}},
                                 {{0, 1, EdgeKind::Relation, 2.5}});
  for (double d : {0.1, 0.5, 0.85, 0.99}) {
    PageRankConfig cfg;
    cfg.damping = d;
    const auto r = personalized_pagerank(g, {{0, 1.0}, {1, 1.0}}, cfg);
    CHECK(r.scores[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.scores[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("five-node fixture matches the dense oracle") {
  // phrases a, b, c; passages p1, p2
  std::vector<Node> nodes{{NodeKind::Phrase, "a", "", {}},
                          {NodeKind::Phrase, "b", "", {}},
                          {NodeKind::Phrase, "c", "", {}},
                          {NodeKind::Passage, "p1", "one", {}},
                          {NodeKind::Passage, "p2", "two", {}}};
  std::vector<Edge> edges{{0, 1, EdgeKind::Relation, 2.0},     {1, 2, EdgeKind::Synonym, 0.9},
                          {0, 3, EdgeKind::Containment, 1.0}, {1, 3, EdgeKind::Containment, 1.0},
                          {2, 4, EdgeKind::Containment, 1.0}};
  const auto g = KnowledgeGraph::from_parts(nodes, edges);
  const std::map<NodeId, double> seeds{{0, 0.7}, {2, 0.3}};
  const auto r = personalized_pagerank(g, seeds);
  CHECK(r.converged);
  const auto oracle = testing::dense_ppr_oracle(g, seeds, 0.85);
  CHECK(linf(r.scores, oracle) < 1e-6);
  double sum = 0.0;
  for (double s : r.scores) sum += s;
  CHECK(std::abs(sum - 1.0) < 1e-9);
}

TEST_CASE("PPR matches the oracle on random graphs, including isolated nodes") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto g = testing::random_graph(seed, 2 + seed % 30);
    Rng rng(seed ^ 0xabc);
    std::map<NodeId, double> seeds;
    for (int k = 0; k < 3; ++k) seeds[static_cast<NodeId>(rng.below(g.node_count()))] += 0.1 + rng.unit();
    const auto r = personalized_pagerank(g, seeds);
    INFO("seed " << seed);
    CHECK(linf(r.scores, testing::dense_ppr_oracle(g, seeds, 0.85)) < 1e-6);
  }
}

TEST_CASE("PPR does not depend on node insertion order") {
  std::vector<Node> nodes{{NodeKind::Phrase, "x", "", {}}, {NodeKind::Phrase, "y", "", {}},
                          {NodeKind::Passage, "p", "t", {}}, {NodeKind::Phrase, "z", "", {}}};
  std::vector<Edge> edges{{0, 1, EdgeKind::Relation, 1.0}, {1, 2, EdgeKind::Containment, 1.0},
                          {2, 3, EdgeKind::Containment, 1.0}};
  const auto g1 = KnowledgeGraph::from_parts(nodes, edges);
  // same graph, nodes listed in reverse
  std::vector<Node> rev(nodes.rbegin(), nodes.rend());
  std::vector<Edge> rev_edges;
  for (const auto& e : edges) rev_edges.push_back({3 - e.v, 3 - e.u, e.kind, e.weight});
  const auto g2 = KnowledgeGraph::from_parts(rev, rev_edges);
  CHECK(g1 == g2);
  const auto x = *g1.find(NodeKind::Phrase, "x");
  CHECK(personalized_pagerank(g1, {{x, 1.0}}).scores == personalized_pagerank(g2, {{x, 1.0}}).scores);
}

TEST_CASE("PPR errors") {
  const auto g = KnowledgeGraph::from_parts({{NodeKind::Phrase, "a", "", {}}}, {});
  CHECK_THROWS_AS(personalized_pagerank(g, {}), GraphError);
  CHECK_THROWS_AS(personalized_pagerank(g, {{5, 1.0}}), GraphError);
  CHECK_THROWS_AS(personalized_pagerank(g, {{0, 0.0}}), GraphError);
  PageRankConfig bad;
  bad.damping = 1.0;
  CHECK_THROWS_AS(personalized_pagerank(g, {{0, 1.0}}, bad), ConfigError);
}

TEST_CASE("max_iters bounds the iteration count") {
  const auto g = testing::random_graph(5, 30);
  PageRankConfig cfg;
  cfg.max_iters = 2;
  const auto r = personalized_pagerank(g, {{0, 1.0}}, cfg);
  CHECK(r.iterations <= 2);
}

// --- retrieval --------------------------------------------------------------

TEST_CASE("graph with one passage returns it") {
  const auto g = build_graph({chunk("only", "the only passage")}, {}, mock_embedder(), 0.8);
  const auto r = retrieve(g, {"anything", 3}, mock_embedder());
  REQUIRE(r.ranked.size() == 1);
  CHECK(r.ranked[0].chunk_id == "only");
  CHECK(r.status == RetrievalStatus::DenseFallback);
}

TEST_CASE("query equal to a phrase with one passage ranks that passage first") {
  const auto embed = mock_embedder();
  const auto g = testing::chain_graph(embed, 10);
  const auto r = retrieve(g, {"Alarm1", 10}, embed);
  CHECK(r.status == RetrievalStatus::Graph);
  REQUIRE_FALSE(r.ranked.empty());
  CHECK(r.ranked[0].chunk_id == "p01");

  // Rebuild the teleport vector from the reported matches and rank passages
  // with the dense oracle.
  std::map<NodeId, double> seeds;
  for (const auto& m : r.matched) seeds[*g.find(NodeKind::Phrase, m.phrase)] = m.similarity;
  const auto oracle = testing::dense_ppr_oracle(g, seeds, 0.85);
  std::vector<ScoredPassage> expected;
  for (NodeId id = static_cast<NodeId>(g.phrase_count()); id < g.node_count(); ++id) {
    expected.push_back({g.node(id).key, oracle[id]});
  }
  std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.chunk_id < b.chunk_id;
  });
  REQUIRE(expected.size() == r.ranked.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(r.ranked[i].chunk_id == expected[i].chunk_id);
    CHECK(std::abs(r.ranked[i].score - expected[i].score) < 1e-6);
  }
}

TEST_CASE("top_k=3 over ten passages") {
  const auto embed = mock_embedder();
  const auto g = testing::chain_graph(embed, 10);
  const auto r = retrieve(g, {"alarm5", 3}, embed);
  REQUIRE(r.ranked.size() == 3);
  CHECK(r.ranked[0].score >= r.ranked[1].score);
  CHECK(r.ranked[1].score >= r.ranked[2].score);
}

TEST_CASE("raising top_k extends the ranking without reordering it") {
  const auto embed = mock_embedder();
  const auto g = testing::chain_graph(embed, 10);
  for (const std::string query : {"alarm3", "alarm7 triggers", "unrelated words here"}) {
    const auto full = ids(retrieve(g, {query, 10}, embed));
    for (std::size_t k = 1; k <= 10; ++k) {
      const auto part = ids(retrieve(g, {query, k}, embed));
      CHECK(std::equal(part.begin(), part.end(), full.begin()));
    }
  }
}

TEST_CASE("retrieval is deterministic") {
  const auto embed = mock_embedder();
  const auto g = testing::chain_graph(embed, 6);
  const auto a = retrieve(g, {"alarm2", 4}, embed);
  const auto b = retrieve(g, {"alarm2", 4}, embed);
  CHECK(a.ranked == b.ranked);
}

TEST_CASE("empty graph returns nothing with a warning status") {
  const KnowledgeGraph g;
  const auto r = retrieve(g, {"query", 3}, mock_embedder());
  CHECK(r.ranked.empty());
  CHECK(r.status == RetrievalStatus::EmptyGraph);
}

TEST_CASE("passage texts follow the ranking") {
  const auto embed = mock_embedder();
  const auto g = testing::chain_graph(embed, 4);
  const auto r = retrieve(g, {"alarm1", 2}, embed);
  const auto texts = passage_texts(g, r);
  REQUIRE(texts.size() == 2);
  CHECK(texts[0] == "Passage p01: alarm1 triggers alarm2.");
  Retriever retriever(g, embed);
  CHECK(retriever.text_of("p02") == "Passage p02: alarm2 triggers alarm3.");
  CHECK_THROWS_AS(retriever.text_of("nope"), GraphError);
}

// --- index file -------------------------------------------------------------

TEST_CASE("index round trip") {
  const auto embed = mock_embedder();
  const auto g = testing::chain_graph(embed, 5);
  testing::TempDir dir;
  save_graph(g, dir / "g.idx");
  CHECK(load_graph(dir / "g.idx") == g);
  CHECK(deserialize_graph(serialize_graph(KnowledgeGraph{})) == KnowledgeGraph{});
}

TEST_CASE("corrupted or truncated index is rejected") {
  const auto bytes = serialize_graph(testing::chain_graph(mock_embedder(), 3));
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x5a;
  CHECK_THROWS_AS(deserialize_graph(flipped), GraphError);
  CHECK_THROWS_AS(deserialize_graph(bytes.substr(0, bytes.size() - 3)), GraphError);
  CHECK_THROWS_AS(deserialize_graph("not an index"), GraphError);
}
