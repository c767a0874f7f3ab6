#include "synthqa/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <spdlog/spdlog.h>

#include "synthqa/error.hpp"

namespace synthqa {
namespace fs = std::filesystem;

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

Document parse_record(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("record is not an object");
  if (!j.contains("id") || !j["id"].is_string()) throw std::invalid_argument("missing string field 'id'");
  if (!j.contains("body") || !j["body"].is_string()) throw std::invalid_argument("missing string field 'body'");
  Document doc;
  doc.doc_id = std::string(trim(j["id"].get<std::string>()));
  if (doc.doc_id.empty()) throw std::invalid_argument("empty 'id'");
  if (j.contains("title")) {
    if (!j["title"].is_string()) throw std::invalid_argument("'title' is not a string");
    doc.title = j["title"].get<std::string>();
  }
  if (j.contains("topics")) {
    const auto& topics = j["topics"];
    if (!topics.is_array()) throw std::invalid_argument("'topics' is not an array");
    for (const auto& t : topics) {
      if (!t.is_string()) throw std::invalid_argument("'topics' holds a non-string entry");
      doc.topic_tags.push_back(t.get<std::string>());
    }
  }
  doc.body = normalize_body(j["body"].get<std::string>());
  if (doc.body.empty()) throw std::invalid_argument("body is empty after normalization");
  return doc;
}

void finalize(CorpusLoadResult& result) {
  std::stable_sort(result.documents.begin(), result.documents.end(),
                   [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
  for (const auto& s : result.skipped) {
    spdlog::warn("corpus: skipped {}{}: {}", s.source, s.line ? ":" + std::to_string(s.line) : "",
                 s.reason);
  }
}

}  // namespace

std::string normalize_body(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const char c = raw[i];
    if (c == '\0') continue;
    if (c == '\r') {
      out += '\n';
      if (i + 1 < raw.size() && raw[i + 1] == '\n') ++i;
      continue;
    }
    out += c;
  }
  return std::string(trim(out));
}

CorpusFormat detect_corpus_format(const fs::path& path) {
  return fs::is_directory(path) ? CorpusFormat::PlaintextDir : CorpusFormat::Jsonl;
}

CorpusLoadResult load_corpus(const fs::path& path, CorpusFormat format) {
  if (!fs::exists(path)) throw IoError("corpus path does not exist: " + path.string());
  CorpusLoadResult result;
  std::set<std::string> seen;

  if (format == CorpusFormat::Jsonl) {
    if (!fs::is_regular_file(path)) throw IoError("corpus is not a regular file: " + path.string());
    auto issues = read_jsonl(path, [&](const json& j, std::size_t line) {
      Document doc = parse_record(j);
      if (!seen.insert(doc.doc_id).second) {
        result.skipped.push_back({path.string(), line, "duplicate id '" + doc.doc_id + "'"});
        return;
      }
      result.documents.push_back(std::move(doc));
    });
    for (auto& issue : issues) result.skipped.push_back({path.string(), issue.line, issue.message});
    std::sort(result.skipped.begin(), result.skipped.end(),
              [](const SkippedRecord& a, const SkippedRecord& b) { return a.line < b.line; });
  } else {
    if (!fs::is_directory(path)) throw IoError("corpus is not a directory: " + path.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (!entry.is_regular_file()) continue;
      if (entry.path().filename().string().starts_with(".")) continue;
      files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      Document doc;
      doc.doc_id = file.stem().string();
      doc.title = doc.doc_id;
      doc.body = normalize_body(read_text_file(file));
      if (doc.body.empty()) {
        result.skipped.push_back({file.string(), 0, "body is empty after normalization"});
        continue;
      }
      if (!seen.insert(doc.doc_id).second) {
        result.skipped.push_back({file.string(), 0, "duplicate id '" + doc.doc_id + "'"});
        continue;
      }
      result.documents.push_back(std::move(doc));
    }
  }
  finalize(result);
  return result;
}

json to_json(const Document& doc) {
  return json{{"id", doc.doc_id}, {"title", doc.title}, {"body", doc.body}, {"topics", doc.topic_tags}};
}

Document document_from_json(const json& j) { return parse_record(j); }

}  // namespace synthqa
