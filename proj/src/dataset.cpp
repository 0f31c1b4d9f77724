#include "csteer/dataset.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "csteer/error.hpp"

namespace csteer {
namespace {

using nlohmann::json;

TokenId word(const json& j) { return vocab::id(j.get<std::string>()); }

std::string text(const Tokens& t) { return vocab::detokenize(t); }

}  // namespace

json scene_to_json(const Scene& scene) {
  json objects = json::array();
  for (const auto& o : scene.objects) {
    json links = json::array();
    for (const auto& l : o.links) {
      links.push_back({{"relation", vocab::text(l.relation)}, {"target", l.target}});
    }
    objects.push_back({{"id", o.id},
                       {"color", vocab::text(o.color)},
                       {"shape", vocab::text(o.shape)},
                       {"position", vocab::text(o.position)},
                       {"links", links},
                       {"visible", {o.visible_from, o.visible_to}}});
  }
  return {{"objects", objects},
          {"display_order", scene.display_order},
          {"frame_count", scene.frame_count},
          {"seed", scene.seed}};
}

Scene scene_from_json(const json& j) {
  Scene s;
  for (const auto& o : j.at("objects")) {
    SceneObject obj;
    obj.id = o.at("id").get<int>();
    obj.color = word(o.at("color"));
    obj.shape = word(o.at("shape"));
    obj.position = word(o.at("position"));
    for (const auto& l : o.at("links")) {
      obj.links.push_back({word(l.at("relation")), l.at("target").get<int>()});
    }
    const auto& vis = o.at("visible");
    obj.visible_from = vis.at(0).get<int>();
    obj.visible_to = vis.at(1).get<int>();
    s.objects.push_back(std::move(obj));
  }
  s.display_order = j.at("display_order").get<std::vector<int>>();
  s.frame_count = j.at("frame_count").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  validate_scene(s);
  return s;
}

json record_to_json(const DatasetRecord& r) {
  const auto& ex = r.example;
  json options = json::array();
  for (const auto& o : ex.options) options.push_back(text(o));
  json rollouts = json::array();
  for (const auto& ro : r.rollouts) {
    rollouts.push_back({{"response", text(ro.response)}, {"score", ro.score.str()},
                        {"kept_as_negative", ro.kept_as_negative}});
  }
  json rewrites = json::array();
  for (const auto& rw : r.rewrites) rewrites.push_back(text(rw));
  return {{"scene", scene_to_json(ex.scene)},
          {"variant", to_string(ex.variant)},
          {"kind", to_string(ex.kind)},
          {"question_seed", ex.question_seed},
          {"question", text(ex.question())},
          {"options", options},
          {"ground_truth", text(ex.ground_truth)},
          {"rollouts", rollouts},
          {"rewrites", rewrites}};
}

DatasetRecord record_from_json(const json& j) {
  DatasetRecord r;
  try {
    const Scene scene = scene_from_json(j.at("scene"));
    r.example = render_example(scene, parse_variant(j.at("variant").get<std::string>()),
                               parse_question_kind(j.at("kind").get<std::string>()),
                               j.at("question_seed").get<std::uint64_t>());
    if (text(r.example.question()) != j.at("question").get<std::string>()) {
      throw ParseError("question does not match the scene rendering");
    }
    if (text(r.example.ground_truth) != j.at("ground_truth").get<std::string>()) {
      throw ParseError("ground_truth does not match the scene rendering");
    }
    for (const auto& ro : j.value("rollouts", json::array())) {
      const auto score = GridScore::parse(ro.at("score").get<std::string>());
      if (!score) throw ParseError("rollout score is not on the 0.1 grid");
      auto judged = make_judged(vocab::tokenize(ro.at("response").get<std::string>()), *score);
      if (ro.contains("kept_as_negative") && ro["kept_as_negative"].get<bool>() != judged.kept_as_negative) {
        throw ParseError("kept_as_negative disagrees with the 0.6 threshold");
      }
      r.rollouts.push_back(std::move(judged));
    }
    for (const auto& rw : j.value("rewrites", json::array())) {
      r.rewrites.push_back(vocab::tokenize(rw.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  } catch (const ConfigError& e) {
    throw ParseError(e.what());
  }
  return r;
}

void save_dataset(std::span<const DatasetRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << json{{"schema", kDatasetSchema}, {"count", records.size()}}.dump() << '\n';
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  if (!std::getline(in, line)) fail("empty file");
  ++line_no;
  std::size_t expected = 0;
  try {
    const auto header = json::parse(line);
    if (header.at("schema").get<std::string>() != kDatasetSchema) fail("unsupported schema");
    expected = header.at("count").get<std::size_t>();
  } catch (const json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }
  std::vector<DatasetRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(e.what());
    } catch (const Error& e) {
      fail(e.what());
    }
  }
  if (records.size() != expected) {
    ++line_no;
    fail("expected " + std::to_string(expected) + " records, found " + std::to_string(records.size()));
  }
  return records;
}

}  // namespace csteer
