#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace synthqa::prompts {

/// Bumped whenever any template under core/prompts changes meaning.
inline constexpr std::string_view kCatalogVersion = "1";

struct Template {
  std::string_view name;
  std::string_view text;
  std::string hash;  // sha256 of the template text
};

/// Throws std::out_of_range for unknown names.
const Template& get(std::string_view name);
std::vector<std::string_view> names();

/// Substitutes every {{slot}}. Throws std::invalid_argument when the template
/// uses a slot that was not supplied.
std::string render(std::string_view name, const std::map<std::string, std::string>& slots);

/// "[1] first\n\n[2] second ..." numbering used for passage lists in prompts.
std::string format_passages(const std::vector<std::string>& passages);

}  // namespace synthqa::prompts
