#include "csteer/external.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "csteer/error.hpp"
#include "csteer/templates.hpp"

namespace csteer {
namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

}  // namespace

std::string to_string(Benchmark b) {
  switch (b) {
    case Benchmark::kSynthetic: return "synthetic";
    case Benchmark::kGarMC: return "GAR-MC";
    case Benchmark::kGarOE: return "GAR-OE";
    case Benchmark::kInstItImage: return "INST-IT-image";
    case Benchmark::kInstItVideo: return "INST-IT-video";
    case Benchmark::kVip: return "VIP";
    case Benchmark::kBlink: return "BLINK";
  }
  return "?";
}

Benchmark parse_benchmark(std::string_view s) {
  for (auto b : {Benchmark::kSynthetic, Benchmark::kGarMC, Benchmark::kGarOE, Benchmark::kInstItImage,
                 Benchmark::kInstItVideo, Benchmark::kVip, Benchmark::kBlink}) {
    if (to_string(b) == s) return b;
  }
  throw ConfigError("unknown benchmark '" + std::string(s) + "'");
}

const std::map<std::string, int>& reference_subset_sizes(Benchmark b) {
  static const std::map<std::string, int> gar_mc{{"CLR", 69}, {"SHP", 64}, {"TXT", 29}, {"MAT", 36},
                                                 {"POS", 64}, {"NET", 61}, {"REL", 101}};
  static const std::map<std::string, int> gar_oe{{"SIM", 97}, {"DET", 107}};
  static const std::map<std::string, int> vip{{"REC", 253}, {"OCR", 90}, {"KNO", 60},
                                              {"MAT", 31},  {"REL", 41}, {"LAN", 22}};
  static const std::map<std::string, int> instit_image{{"MC", 1036}, {"OE", 1036}};
  static const std::map<std::string, int> instit_video{{"MC", 1001}, {"OE", 1001}};
  static const std::map<std::string, int> blink{{"RRF", 268}, {"RDP", 248}, {"FCO", 260}};
  static const std::map<std::string, int> none;
  switch (b) {
    case Benchmark::kGarMC: return gar_mc;
    case Benchmark::kGarOE: return gar_oe;
    case Benchmark::kVip: return vip;
    case Benchmark::kInstItImage: return instit_image;
    case Benchmark::kInstItVideo: return instit_video;
    case Benchmark::kBlink: return blink;
    case Benchmark::kSynthetic: return none;
  }
  return none;
}

std::vector<ExternalItem> load_external(Benchmark b, const std::filesystem::path& path) {
  if (b == Benchmark::kSynthetic) throw ConfigError("the synthetic benchmark has no dataset file");
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open benchmark file '" + path.string() + "'");
  const auto& subsets = reference_subset_sizes(b);
  const bool video = b == Benchmark::kInstItVideo;
  std::vector<ExternalItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fail = [&](const std::string& why) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    try {
      const auto j = nlohmann::json::parse(line);
      ExternalItem it;
      it.id = j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump();
      it.subset = j.at("subset").get<std::string>();
      const auto type = j.at("type").get<std::string>();
      if (type != "MC" && type != "OE") fail("type must be MC or OE");
      it.multiple_choice = type == "MC";
      it.question = j.at("question").get<std::string>();
      it.answer = j.at("answer").get<std::string>();
      it.prediction = j.value("prediction", std::string());
      if (!subsets.count(it.subset)) fail("subset '" + it.subset + "' is not part of " + to_string(b));
      if (it.multiple_choice) {
        it.options = j.at("options").get<std::vector<std::string>>();
        if (it.options.size() != 4) fail("MC items need exactly 4 options");
        const auto a = trim(it.answer);
        if (a.size() != 1 || a[0] < 'A' || a[0] > 'D') fail("MC answer must be one of A-D");
      }
      if (video) {
        it.frames = j.value("frames", 16);
        if (it.frames < 1) fail("frames must be positive");
      }
      for (const auto& [key, value] : j.items()) {
        static const char* known[] = {"id", "subset", "type", "question", "options",
                                      "answer", "prediction", "frames"};
        if (std::find(std::begin(known), std::end(known), key) != std::end(known)) continue;
        if (value.is_string()) it.extra[key] = value.get<std::string>();
      }
      items.push_back(std::move(it));
    } catch (const nlohmann::json::exception& e) {
      fail(e.what());
    }
  }
  return items;
}

std::map<std::string, int> subset_counts(const std::vector<ExternalItem>& items) {
  std::map<std::string, int> out;
  for (const auto& it : items) ++out[it.subset];
  return out;
}

bool mc_letter_matches(std::string_view prediction, std::string_view answer) {
  const auto p = trim(prediction);
  return !p.empty() && p == trim(answer);
}

std::string judge_template_for(Benchmark b, const ExternalItem& item) {
  switch (b) {
    case Benchmark::kGarOE: return item.subset == "DET" ? "judge-gar-oe-detailed" : "judge-gar-oe-simple";
    case Benchmark::kVip: return "judge-vip-oe";
    case Benchmark::kInstItImage: return "judge-instit-image-oe";
    case Benchmark::kInstItVideo: return "judge-instit-video-oe";
    default: throw ConfigError(to_string(b) + " has no open-ended judge template");
  }
}

std::string render_judge_prompt(Benchmark b, const ExternalItem& item) {
  const auto id = judge_template_for(b, item);
  if (id == "judge-gar-oe-simple") {
    return render_prompt_template(id, {{"answer", item.answer}, {"model_output", item.prediction}});
  }
  if (id == "judge-gar-oe-detailed") {
    auto field = [&](const char* k) {
      auto it = item.extra.find(k);
      if (it == item.extra.end()) throw ConfigError(std::string("GAR detailed item lacks '") + k + "'");
      return it->second;
    };
    return render_prompt_template(id, {{"subject_name", field("subject_name")},
                                       {"object_name", field("object_name")},
                                       {"predicate_name", field("predicate_name")},
                                       {"model_output", item.prediction}});
  }
  std::string text = render_prompt_template(id, {});
  if (id == "judge-vip-oe") {
    // The template ends with a few-shot table; the item is its last row.
    const auto marker = std::string("\n\nIMPORTANT:");
    const auto at = text.rfind(marker);
    const std::string row = "\n" + item.question + " | " + item.answer + " | " + item.prediction + " |";
    text.insert(at == std::string::npos ? text.size() : at, row);
    return text;
  }
  text += "\n- question: " + item.question;
  text += "\n- ground truth answer for the question: " + item.answer;
  text += "\n- response from the tester: " + item.prediction;
  return text;
}

bool judge_replies_boolean(std::string_view template_id) {
  return template_id == "judge-gar-oe-simple" || template_id == "judge-gar-oe-detailed";
}

}  // namespace csteer
