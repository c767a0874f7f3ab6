#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace synthqa {

using json = nlohmann::json;

struct JsonlIssue {
  std::size_t line = 0;  // 1-based
  std::string message;
};

/// Parses a JSONL file. Blank lines are skipped. Lines that are not valid
/// JSON, or that the visitor rejects by throwing, are recorded as issues.
std::vector<JsonlIssue> read_jsonl(const std::filesystem::path& path,
                                   const std::function<void(const json&, std::size_t line)>& visit);

/// Reads every record, throwing IoError on the first malformed line.
std::vector<json> read_jsonl_strict(const std::filesystem::path& path);

/// Writes one compact JSON object per line via a temporary file and rename.
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

void write_json(const std::filesystem::path& path, const json& doc);
json read_json(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace synthqa
