#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "csteer/judge.hpp"
#include "csteer/task.hpp"

namespace csteer {

// One referring example together with its judged rollouts and rewrites.
struct DatasetRecord {
  ReferringExample example;
  std::vector<JudgedRollout> rollouts;
  std::vector<Tokens> rewrites;
};

inline constexpr std::string_view kDatasetSchema = "CSTEER-DS/1";

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

nlohmann::json record_to_json(const DatasetRecord& record);
// Re-renders the example from its scene and checks the stored question and
// ground truth against the rendering. Throws ParseError on any mismatch.
DatasetRecord record_from_json(const nlohmann::json& j);

// JSON lines; the first line is {"schema": "CSTEER-DS/1", "count": n}.
void save_dataset(std::span<const DatasetRecord> records, const std::filesystem::path& path);
// Errors name the offending line number.
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path);

}  // namespace csteer
