#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "synthqa/corpus.hpp"
#include "synthqa/jsonl.hpp"
#include "synthqa/vector_math.hpp"

namespace synthqa {

enum class ChunkStrategy { None, Semantic, Uniform };

std::string_view to_string(ChunkStrategy s);
ChunkStrategy chunk_strategy_from_string(std::string_view s);

/// Half-open character range [start, end) into a document body.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct Chunk {
  std::string chunk_id;
  std::string doc_id;
  std::string text;
  std::size_t token_count = 0;
  Span span;
  ChunkStrategy strategy = ChunkStrategy::None;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct ChunkingConfig {
  ChunkStrategy strategy = ChunkStrategy::None;
  std::size_t uniform_size = 256;
  std::size_t uniform_overlap = 32;
  double semantic_breakpoint = 0.35;

  /// Throws ConfigError unless overlap < size, size > 0 and the breakpoint is in [0, 1].
  void validate() const;
};

/// A whitespace-delimited token and its byte range in the source text.
struct Token {
  std::string_view text;
  Span span;
};

std::vector<Token> tokenize_whitespace(std::string_view text);
std::size_t count_tokens(std::string_view text);

/// Sentence spans, split after runs of `.`, `?` or `!` that are followed by
/// whitespace or end of text, and at every newline. Spans exclude surrounding
/// whitespace; empty sentences are dropped.
std::vector<Span> segment_sentences(std::string_view text);

std::string make_chunk_id(std::string_view doc_id, std::size_t ordinal);

/// Splits one document. `embedder` is only consulted for the Semantic
/// strategy, where it is required (ConfigError otherwise).
std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& cfg,
                                  const Embedder& embedder = {});

/// Chunks every document, running up to `workers` documents at once. Output
/// is ordered by doc_id, then ordinal.
std::vector<Chunk> chunk_corpus(const std::vector<Document>& docs, const ChunkingConfig& cfg,
                                const Embedder& embedder = {}, std::size_t workers = 1);

json to_json(const Chunk& chunk);
Chunk chunk_from_json(const json& j);

}  // namespace synthqa
