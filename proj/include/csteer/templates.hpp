#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace csteer {

struct TemplateEntry {
  std::string_view id;
  std::string_view title;
  std::string_view text;
};

const std::vector<TemplateEntry>& template_table();

// Placeholder names ({question}, {ground_truth}, ...) in order of first use.
std::vector<std::string> template_placeholders(std::string_view template_id);

// Substitutes every placeholder. Throws ConfigError on an unknown template id,
// a missing field, or a field the template does not use.
std::string render_prompt_template(std::string_view template_id,
                                   const std::map<std::string, std::string>& fields);

}  // namespace csteer
