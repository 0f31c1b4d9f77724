#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace csteer {

enum class Benchmark { kSynthetic, kGarMC, kGarOE, kInstItImage, kInstItVideo, kVip, kBlink };

std::string to_string(Benchmark b);
Benchmark parse_benchmark(std::string_view s);

// One item of a user-supplied benchmark file together with the prediction to
// be scored. Fields beyond the common ones feed the judge templates.
struct ExternalItem {
  std::string id;
  std::string subset;
  bool multiple_choice = false;
  std::string question;
  std::vector<std::string> options;  // MC only, labeled A-D in order
  std::string answer;                // MC: a letter; OE: reference text
  std::string prediction;
  std::map<std::string, std::string> extra;  // e.g. subject_name, object_name
  int frames = 16;                           // video items only
};

// Subset names and published item counts per benchmark.
const std::map<std::string, int>& reference_subset_sizes(Benchmark b);

// JSON lines, one object per item:
// {"id", "subset", "type": "MC"|"OE", "question", "options"?, "answer",
//  "prediction", "frames"?, ...extra string fields}.
// Errors name the line number. Subsets must belong to the benchmark.
std::vector<ExternalItem> load_external(Benchmark b, const std::filesystem::path& path);

std::map<std::string, int> subset_counts(const std::vector<ExternalItem>& items);

// Whitespace-trimmed exact letter comparison.
bool mc_letter_matches(std::string_view prediction, std::string_view answer);

// Judge template id and rendered prompt for an open-ended item.
std::string judge_template_for(Benchmark b, const ExternalItem& item);
std::string render_judge_prompt(Benchmark b, const ExternalItem& item);

// Some judge templates ask for "True"/"False" rather than a grid value.
bool judge_replies_boolean(std::string_view template_id);

}  // namespace csteer
