#include "synthqa/chunking.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "synthqa/error.hpp"
#include "synthqa/parallel.hpp"

namespace synthqa {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_terminal(char c) { return c == '.' || c == '?' || c == '!'; }

Chunk make_chunk(const Document& doc, std::size_t ordinal, Span span, ChunkStrategy strategy) {
  Chunk c;
  c.chunk_id = make_chunk_id(doc.doc_id, ordinal);
  c.doc_id = doc.doc_id;
  c.text = doc.body.substr(span.start, span.size());
  c.token_count = count_tokens(c.text);
  c.span = span;
  c.strategy = strategy;
  return c;
}

std::vector<Chunk> chunk_uniform(const Document& doc, const ChunkingConfig& cfg) {
  const auto tokens = tokenize_whitespace(doc.body);
  std::vector<Chunk> out;
  const std::size_t step = cfg.uniform_size - cfg.uniform_overlap;
  for (std::size_t first = 0; first < tokens.size(); first += step) {
    const std::size_t last = std::min(first + cfg.uniform_size, tokens.size());
    out.push_back(make_chunk(doc, out.size(), {tokens[first].span.start, tokens[last - 1].span.end},
                             ChunkStrategy::Uniform));
    if (last == tokens.size()) break;
  }
  return out;
}

std::vector<Chunk> chunk_semantic(const Document& doc, const ChunkingConfig& cfg,
                                  const Embedder& embedder) {
  if (!embedder) throw ConfigError("semantic chunking requires an embedder");
  const auto sentences = segment_sentences(doc.body);
  if (sentences.empty()) return {};

  std::vector<std::string> texts;
  texts.reserve(sentences.size());
  for (const auto& s : sentences) texts.push_back(doc.body.substr(s.start, s.size()));
  const auto vectors = embedder(texts);
  if (vectors.size() != texts.size()) {
    throw Error("embedder returned " + std::to_string(vectors.size()) + " vectors for " +
                std::to_string(texts.size()) + " sentences");
  }

  std::vector<Chunk> out;
  Span current = sentences.front();
  for (std::size_t i = 1; i < sentences.size(); ++i) {
    const double distance = 1.0 - cosine(vectors[i - 1], vectors[i]);
    if (distance > cfg.semantic_breakpoint) {
      out.push_back(make_chunk(doc, out.size(), current, ChunkStrategy::Semantic));
      current = sentences[i];
    } else {
      current.end = sentences[i].end;
    }
  }
  out.push_back(make_chunk(doc, out.size(), current, ChunkStrategy::Semantic));
  return out;
}

}  // namespace

std::string_view to_string(ChunkStrategy s) {
  switch (s) {
    case ChunkStrategy::None: return "none";
    case ChunkStrategy::Semantic: return "semantic";
    case ChunkStrategy::Uniform: return "uniform";
  }
  return "none";
}

ChunkStrategy chunk_strategy_from_string(std::string_view s) {
  if (s == "none") return ChunkStrategy::None;
  if (s == "semantic") return ChunkStrategy::Semantic;
  if (s == "uniform") return ChunkStrategy::Uniform;
  throw ConfigError("unknown chunking strategy '" + std::string(s) + "'");
}

void ChunkingConfig::validate() const {
  if (uniform_size == 0) throw ConfigError("chunking: uniform_size must be positive");
  if (uniform_overlap >= uniform_size) {
    throw ConfigError("chunking: uniform_overlap must be smaller than uniform_size");
  }
  if (!(semantic_breakpoint >= 0.0 && semantic_breakpoint <= 1.0)) {
    throw ConfigError("chunking: semantic_breakpoint must lie in [0, 1]");
  }
}

std::vector<Token> tokenize_whitespace(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) tokens.push_back({text.substr(start, i - start), {start, i}});
  }
  return tokens;
}

std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : text) {
    const bool space = is_space(c);
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

std::vector<Span> segment_sentences(std::string_view text) {
  std::vector<Span> out;
  auto emit = [&](std::size_t start, std::size_t end) {
    while (start < end && is_space(text[start])) ++start;
    while (end > start && is_space(text[end - 1])) --end;
    if (end > start) out.push_back({start, end});
  };
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '\n') {
      emit(start, i);
      start = ++i;
      continue;
    }
    if (is_terminal(text[i])) {
      std::size_t j = i;
      while (j < text.size() && is_terminal(text[j])) ++j;
      if (j == text.size() || is_space(text[j])) {
        emit(start, j);
        start = j;
      }
      i = j;
      continue;
    }
    ++i;
  }
  emit(start, text.size());
  return out;
}

std::string make_chunk_id(std::string_view doc_id, std::size_t ordinal) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "#%04zu", ordinal);
  return std::string(doc_id) + buf;
}

std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& cfg,
                                  const Embedder& embedder) {
  cfg.validate();
  switch (cfg.strategy) {
    case ChunkStrategy::None:
      if (doc.body.empty()) return {};
      return {make_chunk(doc, 0, {0, doc.body.size()}, ChunkStrategy::None)};
    case ChunkStrategy::Uniform:
      return chunk_uniform(doc, cfg);
    case ChunkStrategy::Semantic:
      return chunk_semantic(doc, cfg, embedder);
  }
  return {};
}

std::vector<Chunk> chunk_corpus(const std::vector<Document>& docs, const ChunkingConfig& cfg,
                                const Embedder& embedder, std::size_t workers) {
  cfg.validate();
  std::vector<const Document*> ordered;
  ordered.reserve(docs.size());
  for (const auto& d : docs) ordered.push_back(&d);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Document* a, const Document* b) { return a->doc_id < b->doc_id; });

  std::vector<std::vector<Chunk>> per_doc(ordered.size());
  parallel_for(ordered.size(), workers,
               [&](std::size_t i) { per_doc[i] = chunk_document(*ordered[i], cfg, embedder); });

  std::vector<Chunk> out;
  for (auto& chunks : per_doc) {
    std::move(chunks.begin(), chunks.end(), std::back_inserter(out));
  }
  return out;
}

json to_json(const Chunk& c) {
  return json{{"chunk_id", c.chunk_id},
              {"doc_id", c.doc_id},
              {"text", c.text},
              {"token_count", c.token_count},
              {"span", {c.span.start, c.span.end}},
              {"strategy", to_string(c.strategy)}};
}

Chunk chunk_from_json(const json& j) {
  Chunk c;
  c.chunk_id = j.at("chunk_id").get<std::string>();
  c.doc_id = j.at("doc_id").get<std::string>();
  c.text = j.at("text").get<std::string>();
  const auto& span = j.at("span");
  c.span = {span.at(0).get<std::size_t>(), span.at(1).get<std::size_t>()};
  c.strategy = chunk_strategy_from_string(j.at("strategy").get<std::string>());
  c.token_count = j.contains("token_count") ? j["token_count"].get<std::size_t>() : count_tokens(c.text);
  return c;
}

}  // namespace synthqa
