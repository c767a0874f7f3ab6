#include <doctest.h>

#include <string>

#include "synthqa/chunking.hpp"
#include "synthqa/error.hpp"
#include "test_support.hpp"

using namespace synthqa;

namespace {

Document words_doc(std::size_t n) {
  Document d;
  d.doc_id = "doc";
  for (std::size_t i = 0; i < n; ++i) {
    if (i) d.body += ' ';
    d.body += "w" + std::to_string(i);
  }
  return d;
}

ChunkingConfig uniform(std::size_t size, std::size_t overlap) {
  ChunkingConfig cfg;
  cfg.strategy = ChunkStrategy::Uniform;
  cfg.uniform_size = size;
  cfg.uniform_overlap = overlap;
  return cfg;
}

Embedder constant_embedder() {
  return [](const std::vector<std::string>& texts) { return std::vector<Vector>(texts.size(), Vector{1.0, 0.0}); };
}

// Sentences mentioning "power" embed along one axis, all others along another.
Embedder topic_embedder() {
  return [](const std::vector<std::string>& texts) {
    std::vector<Vector> out;
    for (const auto& t : texts) {
      out.push_back(t.find("power") != std::string::npos ? Vector{1.0, 0.0} : Vector{0.0, 1.0});
    }
    return out;
  };
}

}  // namespace

TEST_CASE("250 tokens, Uniform(100, 0) gives 100/100/50") {
  const auto chunks = chunk_document(words_doc(250), uniform(100, 0));
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[0].token_count == 100);
  CHECK(chunks[1].token_count == 100);
  CHECK(chunks[2].token_count == 50);
  CHECK(chunks[0].chunk_id == "doc#0000");
  CHECK(chunks[2].chunk_id == "doc#0002");
  CHECK(chunks[1].text.substr(0, 4) == "w100");
}

TEST_CASE("Uniform with overlap: windows advance by size minus overlap") {
  const auto doc = words_doc(24);
  const auto cfg = uniform(10, 3);
  const auto chunks = chunk_document(doc, cfg);
  // windows start at 0, 7, 14; the third ends exactly at the last token
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[1].text.substr(0, 3) == "w7 ");
  CHECK(chunks[2].token_count == 10);
  CHECK(testing::uniform_tiling_violation(doc, chunks, cfg).empty());
}

TEST_CASE("document shorter than one window gives one chunk") {
  const auto chunks = chunk_document(words_doc(5), uniform(10, 3));
  REQUIRE(chunks.size() == 1);
  CHECK(chunks[0].token_count == 5);
}

TEST_CASE("strategy None yields the whole body") {
  Document d{"x", "", "First line.\nSecond   line with  gaps.", {}};
  const auto chunks = chunk_document(d, ChunkingConfig{});
  REQUIRE(chunks.size() == 1);
  CHECK(chunks[0].text == d.body);
  CHECK(chunks[0].span == Span{0, d.body.size()});
}

TEST_CASE("semantic with constant embeddings yields one chunk") {
  Document d{"x", "", "Check the rectifier. Reset the breaker! Is the fan spinning? Done.", {}};
  ChunkingConfig cfg;
  cfg.strategy = ChunkStrategy::Semantic;
  const auto chunks = chunk_document(d, cfg, constant_embedder());
  REQUIRE(chunks.size() == 1);
  CHECK(chunks[0].text == d.body);
}

TEST_CASE("semantic splits where adjacent sentences diverge") {
  Document d{"x", "", "Check power input. Measure power output. Clean the fan. Replace the filter.", {}};
  ChunkingConfig cfg;
  cfg.strategy = ChunkStrategy::Semantic;
  const auto chunks = chunk_document(d, cfg, topic_embedder());
  REQUIRE(chunks.size() == 2);
  CHECK(chunks[0].text == "Check power input. Measure power output.");
  CHECK(chunks[1].text == "Clean the fan. Replace the filter.");
  CHECK(chunks[1].span.start > chunks[0].span.start);
}

TEST_CASE("semantic without an embedder is a configuration error") {
  ChunkingConfig cfg;
  cfg.strategy = ChunkStrategy::Semantic;
  CHECK_THROWS_AS(chunk_document(words_doc(3), cfg), ConfigError);
}

TEST_CASE("invalid chunking configs") {
  CHECK_THROWS_AS(uniform(0, 0).validate(), ConfigError);
  CHECK_THROWS_AS(uniform(8, 8).validate(), ConfigError);
  ChunkingConfig cfg;
  cfg.semantic_breakpoint = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(chunk_strategy_from_string("recursive"), ConfigError);
}

TEST_CASE("sentence segmentation") {
  const std::string text = "  One. Two?! v1.2 stays\nThree";
  const auto spans = segment_sentences(text);
  REQUIRE(spans.size() == 4);
  CHECK(text.substr(spans[0].start, spans[0].size()) == "One.");
  CHECK(text.substr(spans[1].start, spans[1].size()) == "Two?!");
  CHECK(text.substr(spans[2].start, spans[2].size()) == "v1.2 stays");
  CHECK(text.substr(spans[3].start, spans[3].size()) == "Three");
}

TEST_CASE("uniform chunks tile random documents") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto doc = testing::random_document(seed, 300);
    const auto cfg = uniform(1 + seed % 40, (seed * 7) % (1 + seed % 40));
    const auto chunks = chunk_document(doc, cfg);
    INFO("seed " << seed);
    CHECK(testing::uniform_tiling_violation(doc, chunks, cfg) == "");
  }
}

TEST_CASE("chunk_corpus orders by doc id and is independent of worker count") {
  std::vector<Document> docs{testing::random_document(3, 80), testing::random_document(1, 80),
                             testing::random_document(2, 80)};
  const auto cfg = uniform(16, 4);
  const auto serial = chunk_corpus(docs, cfg, {}, 1);
  const auto parallel = chunk_corpus(docs, cfg, {}, 4);
  CHECK(serial == parallel);
  for (std::size_t i = 1; i < serial.size(); ++i) CHECK(serial[i - 1].chunk_id < serial[i].chunk_id);
}

TEST_CASE("chunk JSON round trip") {
  const auto chunks = chunk_document(words_doc(30), uniform(12, 2));
  for (const auto& c : chunks) CHECK(chunk_from_json(to_json(c)) == c);
}
