#include "csteer/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "csteer/checksum.hpp"
#include "csteer/error.hpp"
#include "csteer/rng.hpp"
#include "csteer/templates.hpp"

namespace csteer {
namespace {

using nlohmann::json;

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void hash_vector(Fnv1a& h, const ContextualVector& v) {
  h.update(to_string(v.design));
  const int meta[] = {v.sample_count, v.num_layers(), v.hidden_size()};
  h.update_values(std::span<const int>(meta));
  for (const auto& row : v.deltas) h.update_values(std::span<const float>(row));
}

void hash_file(Fnv1a& h, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update_values(std::span<const char>(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
}

void aggregate(EvalReport& report) {
  std::map<std::string, std::pair<double, int>> sums;
  for (const auto& r : report.records) {
    for (const auto& key : {std::string("ALL"), r.subset}) {
      auto& s = report.subsets[key];
      ++s.count;
      if (!r.score) {
        ++s.unscored;
        continue;
      }
      sums[key].first += r.score->value();
      ++sums[key].second;
    }
  }
  report.subsets["ALL"];
  for (auto& [key, s] : report.subsets) {
    const auto& [total, n] = sums[key];
    s.score = n ? total / n : 0.0;
  }
  report.sample_count = static_cast<int>(report.records.size());
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < std::min<int>(workers, static_cast<int>(n)); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

EvalReport eval_synthetic(const Backbone& backbone, const EvalSpec& spec) {
  const auto examples = synthetic_examples(spec.synthetic);
  const int layers = backbone.info().num_layers;
  EvalReport report;
  report.records.resize(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    DecodeParams dp = spec.decode;
    if (dp.max_new_tokens <= 0) dp.max_new_tokens = answer_budget(ex);
    dp.seed = mix_seed(spec.decode.seed, i);
    std::optional<SteeringPlan> plan;
    if (!spec.bands.empty()) {
      plan = compile_plan(spec.bands, ex.context, {ex.query_begin, ex.query_end},
                          default_marker_vocabulary(), layers);
    }
    const auto trace = backbone.generate(ex.context, dp, plan ? &*plan : nullptr);
    auto& rec = report.records[i];
    rec.id = std::to_string(i);
    rec.subset = ex.kind == QuestionKind::kMC ? (ex.asks_shape ? "shape" : "color")
                                              : "objects-" + std::to_string(ex.scene.objects.size());
    rec.response = vocab::detokenize(trace.tokens);
    rec.interventions = static_cast<int>(trace.per_step_interventions.size());
    if (ex.kind == QuestionKind::kOE && spec.judge == JudgeKind::kRemote) continue;
    rec.score = judge_score(ex, trace.tokens);
  }
  if (spec.judge == JudgeKind::kRemote) {
    parallel_for(examples.size(), spec.remote->max_concurrent, [&](std::size_t i) {
      const auto& ex = examples[i];
      if (ex.kind != QuestionKind::kOE) return;
      const std::string prompt = render_prompt_template(
          "judge-image", {{"question", vocab::detokenize(ex.question())},
                          {"ground_truth", vocab::detokenize(ex.ground_truth)},
                          {"response", report.records[i].response}});
      report.records[i].score = remote_judge_call(*spec.remote, prompt).score;
    });
  }
  return report;
}

EvalReport eval_external(const EvalSpec& spec) {
  const auto items = load_external(spec.benchmark, spec.dataset_path);
  EvalReport report;
  report.records.resize(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    auto& rec = report.records[i];
    rec.id = it.id;
    rec.subset = it.subset;
    rec.response = it.prediction;
    if (it.multiple_choice) {
      rec.score = GridScore::from_tenths(mc_letter_matches(it.prediction, it.answer) ? 10 : 0);
    }
  }
  if (spec.judge == JudgeKind::kRemote) {
    parallel_for(items.size(), spec.remote->max_concurrent, [&](std::size_t i) {
      const auto& it = items[i];
      if (it.multiple_choice) return;
      const auto id = judge_template_for(spec.benchmark, it);
      const auto format = judge_replies_boolean(id) ? ReplyFormat::kBoolean : ReplyFormat::kGrid;
      report.records[i].score =
          remote_judge_call(*spec.remote, render_judge_prompt(spec.benchmark, it), format).score;
    });
  }
  return report;
}

}  // namespace

std::vector<ReferringExample> synthetic_examples(const SyntheticSpec& spec) {
  if (spec.count < 1) throw ConfigError("synthetic benchmark needs count >= 1");
  std::vector<ReferringExample> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) {
    const std::uint64_t s = mix_seed(spec.seed, static_cast<std::uint64_t>(i));
    out.push_back(render_example(sample_scene(s, spec.scene), Variant::kReferred, spec.kind, s));
  }
  return out;
}

void validate_spec(const EvalSpec& spec) {
  if (spec.benchmark != Benchmark::kSynthetic && spec.dataset_path.empty()) {
    throw ConfigError(to_string(spec.benchmark) + " evaluation needs a dataset path");
  }
  if (spec.judge == JudgeKind::kRemote) {
    if (!spec.remote || spec.remote->endpoint.empty()) {
      throw ConfigError("remote judge needs an endpoint");
    }
    if (spec.remote->credential.empty()) {
      throw ConfigError(std::string("remote judge needs a credential (") + kJudgeCredentialEnv + ")");
    }
    if (spec.remote->max_concurrent < 1) throw ConfigError("max_concurrent must be >= 1");
  }
  if (spec.decode.temperature < 0.0f) throw ConfigError("temperature must be >= 0");
  for (const auto& b : spec.bands) {
    if (!b.vector) throw ConfigError("band '" + b.vector_ref + "' has no vector attached");
  }
}

std::string eval_fingerprint(const Backbone& backbone, const EvalSpec& spec) {
  Fnv1a h;
  h.update(backbone.info().checksum);
  h.update(to_string(spec.benchmark));
  if (spec.benchmark == Benchmark::kSynthetic) {
    const auto& s = spec.synthetic;
    h.update(json{{"count", s.count}, {"kind", to_string(s.kind)}, {"seed", s.seed},
                  {"min", s.scene.min_objects}, {"max", s.scene.max_objects},
                  {"frames", s.scene.frame_count}, {"relation_prob", s.scene.relation_prob},
                  {"colors", s.scene.colors}, {"shapes", s.scene.shapes}}
                 .dump());
  } else {
    hash_file(h, spec.dataset_path);
  }
  h.update(bands_to_json(spec.bands).dump());
  for (const auto& b : spec.bands) {
    if (b.vector) hash_vector(h, *b.vector);
  }
  h.update(json{{"temperature", spec.decode.temperature}, {"max_new_tokens", spec.decode.max_new_tokens},
                {"seed", spec.decode.seed}}
               .dump());
  h.update(spec.judge == JudgeKind::kRubric ? "rubric" : "remote:" + spec.remote->endpoint + ":" + spec.remote->model);
  return h.hex();
}

EvalReport run_eval(const Backbone& backbone, const EvalSpec& spec) {
  validate_spec(spec);
  EvalReport report = spec.benchmark == Benchmark::kSynthetic ? eval_synthetic(backbone, spec)
                                                              : eval_external(spec);
  report.label = spec.label;
  report.benchmark = to_string(spec.benchmark);
  report.fingerprint = eval_fingerprint(backbone, spec);
  aggregate(report);
  return report;
}

double Curve::argmax() const {
  if (points.empty()) throw ConfigError("curve '" + name + "' is empty");
  const CurvePoint* best = &points.front();
  for (const auto& p : points) {
    if (p.metric > best->metric || (p.metric == best->metric && p.x < best->x)) best = &p;
  }
  return best->x;
}

bool Curve::constant() const {
  return std::all_of(points.begin(), points.end(),
                     [&](const CurvePoint& p) { return p.metric == points.front().metric; });
}

Curve layer_sweep(const Backbone& backbone, const EvalSpec& base, const BandConfig& band,
                  const std::vector<int>& layer_grid, const std::vector<BandConfig>& fixed) {
  if (layer_grid.empty()) throw ConfigError("layer grid is empty");
  const int L = backbone.info().num_layers;
  Curve curve;
  curve.name = "layer-sweep";
  curve.x_label = "layer";
  EvalSpec spec = base;
  spec.bands = fixed;
  curve.baseline = run_eval(backbone, spec).overall();
  curve.has_baseline = true;
  for (int layer : layer_grid) {
    if (layer < 0 || layer >= L) {
      throw ConfigError("layer " + std::to_string(layer) + " outside [0, " + std::to_string(L) + ")");
    }
    BandConfig moved = band;
    moved.layer_lo = layer;
    moved.layer_hi = layer + 1;
    spec.bands = fixed;
    spec.bands.push_back(moved);
    spec.label = base.label + "layer=" + std::to_string(layer);
    const auto report = run_eval(backbone, spec);
    curve.points.push_back({static_cast<double>(layer), report.overall(), report.fingerprint});
  }
  return curve;
}

DataScaleResult data_scale_sweep(const Backbone& backbone, VectorDesign design,
                                 const std::vector<int>& scales,
                                 const std::vector<DatasetRecord>& pool, const EvalSpec& base,
                                 const std::vector<BandConfig>& band_template,
                                 const PairOptions& pair_options) {
  if (scales.empty()) throw ConfigError("no scales given");
  if (!std::is_sorted(scales.begin(), scales.end()) || scales.front() < 1 ||
      std::adjacent_find(scales.begin(), scales.end()) != scales.end()) {
    throw ConfigError("scales must be positive and strictly increasing");
  }
  if (band_template.empty()) throw ConfigError("data-scale sweep needs a band template");
  const auto need = static_cast<std::size_t>(scales.back());

  // Usable examples in pool order, and the pairs each contributes.
  std::vector<std::size_t> usable;
  std::vector<std::vector<ContrastPair>> pairs_of;
  for (std::size_t i = 0; i < pool.size() && usable.size() < need; ++i) {
    auto pairs = make_contrast_pairs(design, pool[i].example, pool[i].rollouts, pair_options);
    if (pairs.empty()) continue;
    usable.push_back(i);
    pairs_of.push_back(std::move(pairs));
  }
  if (usable.size() < need) {
    throw ConfigError("pool too small: " + std::to_string(usable.size()) + " usable examples for scale " +
                      std::to_string(need));
  }

  const BackboneInfo info = backbone.info();
  const auto L = static_cast<std::size_t>(info.num_layers);
  const auto d = static_cast<std::size_t>(info.hidden_size);
  std::vector<std::vector<double>> sum(L, std::vector<double>(d, 0.0));
  std::size_t pair_count = 0, consumed = 0;

  DataScaleResult result;
  result.curve.name = "data-scale-" + to_string(design);
  result.curve.x_label = "samples";
  for (int scale : scales) {
    // The running sum is the same fixed-order reduction build_contextual_vector performs.
    for (; consumed < static_cast<std::size_t>(scale); ++consumed) {
      for (const auto& pair : pairs_of[consumed]) {
        const auto diff = pair_difference(backbone, pair);
        for (std::size_t l = 0; l < L; ++l) {
          for (std::size_t k = 0; k < d; ++k) sum[l][k] += diff[l][k];
        }
        ++pair_count;
      }
    }
    auto v = std::make_shared<ContextualVector>();
    v->design = design;
    v->sample_count = static_cast<int>(pair_count);
    v->backbone_id = info.checksum;
    v->dataset_id = "scale-" + std::to_string(scale);
    const double inv = 1.0 / static_cast<double>(pair_count);
    for (std::size_t l = 0; l < L; ++l) {
      std::vector<float> row(d);
      for (std::size_t k = 0; k < d; ++k) row[k] = static_cast<float>(sum[l][k] * inv);
      v->deltas.push_back(std::move(row));
    }
    validate_vector(*v);

    EvalSpec spec = base;
    spec.bands = band_template;
    for (auto& b : spec.bands) {
      b.vector = v;
      b.vector_ref = v->dataset_id;
    }
    spec.label = base.label + "scale=" + std::to_string(scale);
    const auto report = run_eval(backbone, spec);
    if (!std::isfinite(report.overall())) throw NumericError("non-finite metric at scale " + std::to_string(scale));
    result.curve.points.push_back({static_cast<double>(scale), report.overall(), report.fingerprint});
    result.vectors.push_back(v);
    result.example_indices.emplace_back(usable.begin(), usable.begin() + scale);
  }
  return result;
}

std::vector<EvalReport> steering_ablation(const Backbone& backbone, const EvalSpec& base,
                                          std::shared_ptr<const ContextualVector> vector,
                                          int decode_layer, int query_layer, float lambda) {
  const bool mc = base.benchmark == Benchmark::kSynthetic && base.synthetic.kind == QuestionKind::kMC;
  const SelectorKind late = mc ? SelectorKind::kLastTokenOnly : SelectorKind::kMarkerDecodeSteps;
  const std::string ref = vector->dataset_id;
  auto band = [&](int layer, SelectorKind sel) {
    return BandConfig{layer, layer + 1, lambda, sel, ref, vector};
  };
  const std::vector<std::pair<std::string, std::vector<BandConfig>>> rows = {
      {"baseline", {}},
      {"+ all", {band(decode_layer, SelectorKind::kAllDecodeSteps)}},
      {"+ marker-only", {band(decode_layer, SelectorKind::kMarkerDecodeSteps)}},
      {"+ in-query", {band(query_layer, SelectorKind::kQueryMarkerPositions)}},
      {"+ decomposed", {band(query_layer, SelectorKind::kQueryMarkerPositions), band(decode_layer, late)}},
  };
  std::vector<EvalReport> out;
  for (const auto& [label, bands] : rows) {
    EvalSpec spec = base;
    spec.bands = bands;
    spec.label = label;
    out.push_back(run_eval(backbone, spec));
  }
  return out;
}

json report_to_json(const EvalReport& report, bool with_records) {
  json subsets = json::object();
  for (const auto& [k, s] : report.subsets) {
    subsets[k] = {{"score", s.score}, {"count", s.count}, {"unscored", s.unscored}};
  }
  json j = {{"label", report.label},       {"benchmark", report.benchmark},
            {"subsets", subsets},          {"sample_count", report.sample_count},
            {"fingerprint", report.fingerprint}};
  if (with_records) {
    json records = json::array();
    for (const auto& r : report.records) {
      records.push_back({{"id", r.id},
                         {"subset", r.subset},
                         {"response", r.response},
                         {"score", r.score ? json(r.score->str()) : json(nullptr)},
                         {"interventions", r.interventions}});
    }
    j["records"] = records;
  }
  return j;
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  try {
    r.label = j.at("label").get<std::string>();
    r.benchmark = j.at("benchmark").get<std::string>();
    r.sample_count = j.at("sample_count").get<int>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    for (const auto& [k, s] : j.at("subsets").items()) {
      r.subsets[k] = {s.at("score").get<double>(), s.at("count").get<int>(), s.at("unscored").get<int>()};
    }
    for (const auto& rec : j.value("records", json::array())) {
      EvalRecord e;
      e.id = rec.at("id").get<std::string>();
      e.subset = rec.at("subset").get<std::string>();
      e.response = rec.at("response").get<std::string>();
      if (!rec.at("score").is_null()) e.score = GridScore::parse(rec["score"].get<std::string>());
      e.interventions = rec.value("interventions", 0);
      r.records.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad report document: ") + e.what());
  }
  if (!r.subsets.count("ALL")) throw ParseError("report has no ALL subset");
  return r;
}

json curve_to_json(const Curve& curve) {
  json points = json::array();
  for (const auto& p : curve.points) {
    points.push_back({{"x", p.x}, {"metric", p.metric}, {"fingerprint", p.fingerprint}});
  }
  json j = {{"name", curve.name}, {"x_label", curve.x_label}, {"y_label", curve.y_label},
            {"points", points}};
  if (curve.has_baseline) j["baseline"] = curve.baseline;
  if (!curve.points.empty()) j["argmax"] = curve.argmax();
  return j;
}

Curve curve_from_json(const json& j) {
  Curve c;
  try {
    c.name = j.at("name").get<std::string>();
    c.x_label = j.at("x_label").get<std::string>();
    c.y_label = j.value("y_label", std::string("score"));
    for (const auto& p : j.at("points")) {
      c.points.push_back({p.at("x").get<double>(), p.at("metric").get<double>(),
                          p.value("fingerprint", std::string())});
    }
    if (j.contains("baseline")) {
      c.baseline = j["baseline"].get<double>();
      c.has_baseline = true;
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad curve document: ") + e.what());
  }
  return c;
}

std::string render_svg(const Curve& curve) {
  if (curve.points.empty()) throw ConfigError("curve '" + curve.name + "' is empty");
  constexpr double W = 480, H = 320, left = 60, right = 20, top = 30, bottom = 50;
  double xmin = curve.points.front().x, xmax = xmin;
  double ymin = curve.points.front().metric, ymax = ymin;
  for (const auto& p : curve.points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.metric);
    ymax = std::max(ymax, p.metric);
  }
  if (curve.has_baseline) {
    ymin = std::min(ymin, curve.baseline);
    ymax = std::max(ymax, curve.baseline);
  }
  const bool log_x = xmin > 0 && xmax / xmin >= 8;
  auto tx = [&](double x) { return log_x ? std::log2(x) : x; };
  const double x0 = tx(xmin), x1 = tx(xmax) > x0 ? tx(xmax) : x0 + 1;
  if (ymax - ymin < 1e-9) {
    ymin -= 0.05;
    ymax += 0.05;
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return left + (tx(x) - x0) / (x1 - x0) * (W - left - right); };
  auto py = [&](double y) { return H - bottom - (y - ymin) / (ymax - ymin) * (H - top - bottom); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"320\" viewBox=\"0 0 480 320\">\n";
  s << "<rect width=\"480\" height=\"320\" fill=\"white\"/>\n";
  s << "<text x=\"240\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
    << curve.name << "</text>\n";
  s << "<line x1=\"" << fixed3(left) << "\" y1=\"" << fixed3(H - bottom) << "\" x2=\"" << fixed3(W - right)
    << "\" y2=\"" << fixed3(H - bottom) << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << fixed3(left) << "\" y1=\"" << fixed3(top) << "\" x2=\"" << fixed3(left)
    << "\" y2=\"" << fixed3(H - bottom) << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = ymin + (ymax - ymin) * k / 4.0;
    s << "<text x=\"" << fixed3(left - 6) << "\" y=\"" << fixed3(py(y) + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fixed3(y) << "</text>\n";
  }
  for (const auto& p : curve.points) {
    char label[32];
    std::snprintf(label, sizeof label, "%g", p.x);
    s << "<text x=\"" << fixed3(px(p.x)) << "\" y=\"" << fixed3(H - bottom + 16)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << label << "</text>\n";
  }
  s << "<text x=\"" << fixed3((left + W - right) / 2) << "\" y=\"" << fixed3(H - 12)
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << curve.x_label
    << "</text>\n";
  s << "<text x=\"14\" y=\"" << fixed3((top + H - bottom) / 2)
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 14 "
    << fixed3((top + H - bottom) / 2) << ")\">" << curve.y_label << "</text>\n";
  if (curve.has_baseline) {
    s << "<line x1=\"" << fixed3(left) << "\" y1=\"" << fixed3(py(curve.baseline)) << "\" x2=\""
      << fixed3(W - right) << "\" y2=\"" << fixed3(py(curve.baseline))
      << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  }
  s << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    s << (i ? " " : "") << fixed3(px(curve.points[i].x)) << "," << fixed3(py(curve.points[i].metric));
  }
  s << "\"/>\n";
  for (const auto& p : curve.points) {
    s << "<circle cx=\"" << fixed3(px(p.x)) << "\" cy=\"" << fixed3(py(p.metric))
      << "\" r=\"3\" fill=\"#1f5fa8\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<std::filesystem::path> emit_report(const std::vector<EvalReport>& reports,
                                               const std::vector<Curve>& curves,
                                               const std::filesystem::path& dir,
                                               const std::string& stem) {
  if (reports.empty() && curves.empty()) throw ConfigError("nothing to report");
  for (const auto& c : curves) {
    if (c.points.empty()) throw ConfigError("curve '" + c.name + "' is empty");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create report directory '" + dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  auto write = [&](const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw Error("failed writing '" + path.string() + "'");
    written.push_back(path);
  };

  std::ostringstream csv;
  csv << "label,benchmark,subset,score,count,unscored,fingerprint\n";
  for (const auto& r : reports) {
    for (const auto& [subset, s] : r.subsets) {
      csv << '"' << r.label << "\"," << r.benchmark << ',' << subset << ',' << fixed6(s.score) << ','
          << s.count << ',' << s.unscored << ',' << r.fingerprint << '\n';
    }
  }
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      char x[32];
      std::snprintf(x, sizeof x, "%g", p.x);
      csv << '"' << c.name << ' ' << c.x_label << '=' << x << "\",curve,ALL," << fixed6(p.metric)
          << ",,," << p.fingerprint << '\n';
    }
  }
  json doc = {{"reports", json::array()}, {"curves", json::array()}};
  for (const auto& r : reports) doc["reports"].push_back(report_to_json(r));
  for (const auto& c : curves) doc["curves"].push_back(curve_to_json(c));

  write(dir / (stem + ".csv"), csv.str());
  write(dir / (stem + ".json"), doc.dump(2) + "\n");
  for (const auto& c : curves) write(dir / (c.name + ".svg"), render_svg(c));
  return written;
}

}  // namespace csteer
