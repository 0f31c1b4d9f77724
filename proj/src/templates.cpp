#include "csteer/templates.hpp"

#include <algorithm>
#include <cctype>

#include "csteer/error.hpp"

namespace csteer {
namespace {

const TemplateEntry& lookup(std::string_view id) {
  const auto& table = template_table();
  auto it = std::find_if(table.begin(), table.end(),
                         [&](const TemplateEntry& e) { return e.id == id; });
  if (it == table.end()) {
    throw ConfigError("unknown template id '" + std::string(id) + "'");
  }
  return *it;
}

bool is_name_char(char c) {
  return std::islower(static_cast<unsigned char>(c)) || c == '_';
}

// Calls fn(begin, end, name) for each "{name}" run in text.
template <typename Fn>
void scan_placeholders(std::string_view text, Fn&& fn) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < text.size() && is_name_char(text[j])) ++j;
    if (j < text.size() && text[j] == '}' && j > i + 1) {
      fn(i, j + 1, text.substr(i + 1, j - i - 1));
      i = j;
    }
  }
}

}  // namespace

std::vector<std::string> template_placeholders(std::string_view template_id) {
  std::vector<std::string> names;
  scan_placeholders(lookup(template_id).text,
                    [&](std::size_t, std::size_t, std::string_view name) {
                      if (std::find(names.begin(), names.end(), name) == names.end()) {
                        names.emplace_back(name);
                      }
                    });
  return names;
}

std::string render_prompt_template(std::string_view template_id,
                                   const std::map<std::string, std::string>& fields) {
  const auto& entry = lookup(template_id);
  const auto names = template_placeholders(template_id);
  for (const auto& [key, value] : fields) {
    if (std::find(names.begin(), names.end(), key) == names.end()) {
      throw ConfigError("template '" + std::string(template_id) +
                        "' has no placeholder {" + key + "}");
    }
  }
  for (const auto& name : names) {
    if (!fields.contains(name)) {
      throw ConfigError("template '" + std::string(template_id) +
                        "' is missing field {" + name + "}");
    }
  }
  std::string out;
  std::size_t cursor = 0;
  const std::string_view text = entry.text;
  scan_placeholders(text, [&](std::size_t begin, std::size_t end, std::string_view name) {
    out.append(text.substr(cursor, begin - cursor));
    out.append(fields.at(std::string(name)));
    cursor = end;
  });
  out.append(text.substr(cursor));
  return out;
}

}  // namespace csteer
