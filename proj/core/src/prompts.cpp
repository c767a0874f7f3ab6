#include "synthqa/prompts.hpp"

#include <stdexcept>

#include "synthqa/hash.hpp"

namespace synthqa::prompts {

namespace detail {
extern const std::pair<std::string_view, std::string_view> kPromptAssets[];
extern const std::size_t kPromptAssetCount;
}  // namespace detail

namespace {

const std::map<std::string_view, Template>& catalog() {
  static const std::map<std::string_view, Template> instance = [] {
    std::map<std::string_view, Template> m;
    for (std::size_t i = 0; i < detail::kPromptAssetCount; ++i) {
      const auto& [name, text] = detail::kPromptAssets[i];
      m.emplace(name, Template{name, text, sha256_hex(text)});
    }
    return m;
  }();
  return instance;
}

}  // namespace

const Template& get(std::string_view name) {
  const auto& c = catalog();
  auto it = c.find(name);
  if (it == c.end()) throw std::out_of_range("unknown prompt template '" + std::string(name) + "'");
  return it->second;
}

std::vector<std::string_view> names() {
  std::vector<std::string_view> out;
  for (const auto& [name, t] : catalog()) out.push_back(name);
  return out;
}

std::string render(std::string_view name, const std::map<std::string, std::string>& slots) {
  const std::string_view text = get(name).text;
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    const std::size_t close = text.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    out.append(text.substr(pos, open - pos));
    const std::string slot(text.substr(open + 2, close - open - 2));
    auto it = slots.find(slot);
    if (it == slots.end()) {
      throw std::invalid_argument("prompt '" + std::string(name) + "' needs slot '" + slot + "'");
    }
    out += it->second;
    pos = close + 2;
  }
  return out;
}

std::string format_passages(const std::vector<std::string>& passages) {
  std::string out;
  for (std::size_t i = 0; i < passages.size(); ++i) {
    if (i) out += "\n\n";
    out += "[" + std::to_string(i + 1) + "] " + passages[i];
  }
  return out;
}

}  // namespace synthqa::prompts
