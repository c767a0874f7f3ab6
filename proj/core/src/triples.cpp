#include <cctype>

#include <spdlog/spdlog.h>

#include "synthqa/knowledge_graph.hpp"
#include "synthqa/parallel.hpp"
#include "synthqa/prompts.hpp"

namespace synthqa {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string collapse_whitespace(std::string_view s, bool lower) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += lower ? static_cast<char>(std::tolower(static_cast<unsigned char>(c))) : c;
  }
  return out;
}

std::optional<Triple> parse_line(std::string_view line, const std::string& source_chunk) {
  if (line.size() < 2 || line.front() != '(' || line.back() != ')') return std::nullopt;
  line = line.substr(1, line.size() - 2);
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ';') {
      parts.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  if (parts.size() != 3) return std::nullopt;
  Triple t{normalize_phrase(parts[0]), collapse_whitespace(parts[1], false), normalize_phrase(parts[2]),
           source_chunk};
  if (t.subject.empty() || t.relation.empty() || t.object.empty()) return std::nullopt;
  return t;
}

}  // namespace

std::string normalize_phrase(std::string_view phrase) { return collapse_whitespace(phrase, true); }

TripleParse parse_triples(std::string_view output, const std::string& source_chunk) {
  TripleParse result;
  std::size_t pos = 0;
  while (pos <= output.size()) {
    std::size_t eol = output.find('\n', pos);
    if (eol == std::string_view::npos) eol = output.size();
    std::string_view line = output.substr(pos, eol - pos);
    while (!line.empty() && is_space(line.front())) line.remove_prefix(1);
    while (!line.empty() && is_space(line.back())) line.remove_suffix(1);
    if (!line.empty()) {
      if (auto t = parse_line(line, source_chunk)) {
        result.triples.push_back(std::move(*t));
      } else {
        ++result.dropped;
      }
    }
    pos = eol + 1;
  }
  return result;
}

ExtractionOutcome extract_triples(const Chunk& chunk, Gateway& gateway) {
  ExtractionOutcome out;
  out.chunk_id = chunk.chunk_id;
  try {
    ChatRequest req;
    req.role = ModelRole::Extractor;
    req.messages.push_back({"user", prompts::render("extract_triples", {{"passage", chunk.text}})});
    const auto reply = gateway.chat(req);
    auto parsed = parse_triples(reply.text, chunk.chunk_id);
    out.triples = std::move(parsed.triples);
    out.dropped = parsed.dropped;
  } catch (const GatewayError& e) {
    out.indexed = false;
    out.error = e.what();
    spdlog::warn("extract: chunk {} left unindexed: {}", chunk.chunk_id, e.what());
  }
  return out;
}

std::vector<ExtractionOutcome> extract_all(const std::vector<Chunk>& chunks, Gateway& gateway,
                                           std::size_t workers) {
  std::vector<ExtractionOutcome> out(chunks.size());
  parallel_for(chunks.size(), workers, [&](std::size_t i) { out[i] = extract_triples(chunks[i], gateway); });
  return out;
}

json to_json(const Triple& t) {
  return json{{"subject", t.subject}, {"relation", t.relation}, {"object", t.object}, {"source_chunk", t.source_chunk}};
}

Triple triple_from_json(const json& j) {
  return Triple{j.at("subject").get<std::string>(), j.at("relation").get<std::string>(),
                j.at("object").get<std::string>(), j.at("source_chunk").get<std::string>()};
}

}  // namespace synthqa
