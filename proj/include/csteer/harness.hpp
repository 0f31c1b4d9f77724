#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "csteer/backbone.hpp"
#include "csteer/dataset.hpp"
#include "csteer/external.hpp"
#include "csteer/remote_judge.hpp"
#include "csteer/steering.hpp"
#include "csteer/vectoring.hpp"

namespace csteer {

struct SyntheticSpec {
  int count = 500;
  QuestionKind kind = QuestionKind::kMC;
  SceneParams scene;
  std::uint64_t seed = 0;  // example i uses scene seed mix_seed(seed, i)
};

// The synthetic evaluation examples a spec denotes, in order.
std::vector<ReferringExample> synthetic_examples(const SyntheticSpec& spec);

enum class JudgeKind { kRubric, kRemote };

struct EvalSpec {
  Benchmark benchmark = Benchmark::kSynthetic;
  SyntheticSpec synthetic;
  std::filesystem::path dataset_path;  // external formats only
  std::vector<BandConfig> bands;       // compiled per example; empty means unsteered
  DecodeParams decode;                 // max_new_tokens <= 0 picks answer_budget per example
  JudgeKind judge = JudgeKind::kRubric;
  std::optional<RemoteJudgeConfig> remote;
  std::string label;  // free-form row name in reports
};

// Throws ConfigError when the spec breaks an invariant.
void validate_spec(const EvalSpec& spec);

struct EvalRecord {
  std::string id;
  std::string subset;
  std::string response;
  std::optional<GridScore> score;  // nullopt when unscored
  int interventions = 0;
};

struct SubsetResult {
  double score = 0.0;  // mean over scored items, in [0, 1]
  int count = 0;
  int unscored = 0;
};

struct EvalReport {
  std::string label;
  std::string benchmark;
  std::map<std::string, SubsetResult> subsets;  // always contains "ALL"
  int sample_count = 0;
  std::string fingerprint;
  std::vector<EvalRecord> records;

  double overall() const { return subsets.at("ALL").score; }
};

// Hash of (backbone, plan vectors and bands, decode params, dataset, judge).
std::string eval_fingerprint(const Backbone& backbone, const EvalSpec& spec);

EvalReport run_eval(const Backbone& backbone, const EvalSpec& spec);

struct CurvePoint {
  double x = 0.0;
  double metric = 0.0;
  std::string fingerprint;
};

struct Curve {
  std::string name;
  std::string x_label;
  std::string y_label = "score";
  std::vector<CurvePoint> points;
  double baseline = 0.0;
  bool has_baseline = false;

  // x of the best point; ties go to the smallest x.
  double argmax() const;
  bool constant() const;
};

// One run_eval per grid layer with `band` moved to [layer, layer + 1); the
// fixed bands stay in place.
Curve layer_sweep(const Backbone& backbone, const EvalSpec& base, const BandConfig& band,
                  const std::vector<int>& layer_grid, const std::vector<BandConfig>& fixed = {});

struct DataScaleResult {
  Curve curve;
  std::vector<std::shared_ptr<const ContextualVector>> vectors;
  std::vector<std::vector<std::size_t>> example_indices;  // pool indices used per scale
};

// Vectors built from nested prefixes of the usable pool examples (those that
// yield at least one contrast pair), one per scale, each evaluated with the
// band template whose vector is replaced by the freshly built one.
DataScaleResult data_scale_sweep(const Backbone& backbone, VectorDesign design,
                                 const std::vector<int>& scales,
                                 const std::vector<DatasetRecord>& pool, const EvalSpec& base,
                                 const std::vector<BandConfig>& band_template,
                                 const PairOptions& pair_options = {});

// Steering-option ablation rows:
// baseline, all steps, marker-only, in-query, decomposed.
std::vector<EvalReport> steering_ablation(const Backbone& backbone, const EvalSpec& base,
                                          std::shared_ptr<const ContextualVector> vector,
                                          int decode_layer, int query_layer, float lambda);

nlohmann::json report_to_json(const EvalReport& report, bool with_records = true);
EvalReport report_from_json(const nlohmann::json& j);
nlohmann::json curve_to_json(const Curve& curve);
Curve curve_from_json(const nlohmann::json& j);

// Writes <stem>.csv and <stem>.json for the reports and <curve name>.svg per
// curve into `dir`. Byte-identical for identical inputs.
std::vector<std::filesystem::path> emit_report(const std::vector<EvalReport>& reports,
                                               const std::vector<Curve>& curves,
                                               const std::filesystem::path& dir,
                                               const std::string& stem = "report");

std::string render_svg(const Curve& curve);

}  // namespace csteer
