#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "synthqa/jsonl.hpp"

namespace synthqa {

struct Document {
  std::string doc_id;
  std::string title;
  std::string body;
  std::vector<std::string> topic_tags;

  friend bool operator==(const Document&, const Document&) = default;
};

enum class CorpusFormat { Jsonl, PlaintextDir };

/// A record that was read but not turned into a Document.
struct SkippedRecord {
  std::string source;  // file path
  std::size_t line = 0;  // 1-based for JSONL, 0 for whole files
  std::string reason;
};

struct CorpusLoadResult {
  std::vector<Document> documents;  // sorted by doc_id
  std::vector<SkippedRecord> skipped;
};

/// Line endings to \n, NUL bytes dropped, surrounding whitespace trimmed.
std::string normalize_body(std::string_view raw);

/// Loads a corpus. JSONL records need string `id` and `body`, optional
/// `title` and `topics`. A plaintext directory yields one document per regular
/// file, with doc_id and title taken from the file stem.
///
/// Throws IoError when the path is missing or unreadable. Malformed records,
/// empty bodies and duplicate ids are skipped and reported.
CorpusLoadResult load_corpus(const std::filesystem::path& path, CorpusFormat format);

/// Picks Jsonl for regular files and PlaintextDir for directories.
CorpusFormat detect_corpus_format(const std::filesystem::path& path);

json to_json(const Document& doc);
Document document_from_json(const json& j);

}  // namespace synthqa
