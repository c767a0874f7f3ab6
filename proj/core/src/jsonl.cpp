#include "synthqa/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "synthqa/error.hpp"

namespace synthqa {
namespace fs = std::filesystem;

namespace {

void replace_atomically(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

std::vector<JsonlIssue> read_jsonl(const fs::path& path,
                                   const std::function<void(const json&, std::size_t)>& visit) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<JsonlIssue> issues;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      visit(json::parse(line), lineno);
    } catch (const std::exception& e) {
      issues.push_back({lineno, e.what()});
    }
  }
  return issues;
}

std::vector<json> read_jsonl_strict(const fs::path& path) {
  std::vector<json> out;
  auto issues = read_jsonl(path, [&](const json& j, std::size_t) { out.push_back(j); });
  if (!issues.empty()) {
    throw IoError(path.string() + ":" + std::to_string(issues.front().line) + ": " +
                  issues.front().message);
  }
  return out;
}

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
  std::string buf;
  for (const auto& r : records) {
    buf += r.dump(-1, ' ', false, json::error_handler_t::replace);
    buf += '\n';
  }
  replace_atomically(path, buf);
}

void write_json(const fs::path& path, const json& doc) {
  replace_atomically(path, doc.dump(2, ' ', false, json::error_handler_t::replace) + "\n");
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) { replace_atomically(path, text); }

}  // namespace synthqa
