// Acceptance suite: one PASS/FAIL line per criterion. Criteria may be named on
// the command line to run a subset; the default runs all of them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "csteer/harness.hpp"
#include "csteer/model.hpp"
#include "csteer/rng.hpp"
#include "csteer/train.hpp"
#include "csteer/vectoring.hpp"

using namespace csteer;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kOracleRelTol = 1e-6;
constexpr int kIdentityPrompts = 100;
constexpr int kOraclePairs = 16;
constexpr int kJudgeCases = 1000;
constexpr int kLocalityPrompts = 20;
constexpr double kE2EBudgetSeconds = 15 * 60;
constexpr double kDataScaleBudgetSeconds = 20 * 60;
constexpr int kE2ESeeds = 5;
constexpr int kE2EMinWins = 4;
constexpr int kE2ETrainExamples = 5000;
constexpr int kE2EVectorExamples = 256;
constexpr int kE2EHeldOut = 500;
constexpr int kE2EValidation = 200;
constexpr int kDataScaleEval = 200;
const std::vector<int> kDataScales{32, 64, 128, 256, 512, 1024};

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ModelConfig substrate_config(std::uint64_t seed) {
  ModelConfig c;
  c.num_layers = 4;
  c.hidden_size = 128;
  c.num_heads = 4;
  c.seed = seed;
  return c;
}

ReferringExample example_at(std::uint64_t seed, QuestionKind kind, Variant variant = Variant::kReferred) {
  SceneParams p;
  p.max_objects = 3;
  return render_example(sample_scene(seed, p), variant, kind, seed);
}

std::shared_ptr<const ContextualVector> gaussian_vector(const Model& m, std::uint64_t seed, float scale) {
  auto v = std::make_shared<ContextualVector>();
  v->design = VectorDesign::kRewriteVsRollout;
  v->sample_count = 1;
  v->backbone_id = m.checksum();
  v->dataset_id = "gaussian";
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, scale);
  for (int l = 0; l < m.config().num_layers; ++l) {
    std::vector<float> row(static_cast<std::size_t>(m.config().hidden_size));
    for (auto& x : row) x = n(rng);
    v->deltas.push_back(std::move(row));
  }
  return v;
}

// Substrate shared by the criteria that need a trained backbone.
struct Substrate {
  std::unique_ptr<Model> model;
  double train_seconds = 0.0;
  double mc_accuracy = 0.0;
};

Substrate& trained_substrate() {
  static Substrate s = [] {
    Substrate out;
    const auto t0 = Clock::now();
    std::vector<ReferringExample> examples;
    for (int i = 0; i < kE2ETrainExamples; ++i) {
      const auto seed = mix_seed(0x7a11ULL, static_cast<std::uint64_t>(i));
      examples.push_back(example_at(seed, i % 2 == 0 ? QuestionKind::kOE : QuestionKind::kMC));
    }
    out.model = std::make_unique<Model>(substrate_config(1));
    TrainParams tp;
    tp.epochs = 14;
    tp.batch_size = 32;
    tp.learning_rate = 1e-3f;
    tp.seed = 1;
    tp.on_step = [](int step, int total, double loss) {
      if (step % 250 == 0 || step == total) {
        std::cerr << "  substrate step " << step << "/" << total << " loss " << loss << "\n";
      }
    };
    train_substrate(*out.model, training_sequences(examples), tp);
    out.train_seconds = seconds_since(t0);
    EvalSpec probe;
    probe.synthetic.count = 200;
    probe.synthetic.seed = 0xacc;
    probe.synthetic.scene.max_objects = 3;
    out.mc_accuracy = run_eval(*out.model, probe).overall();
    std::cerr << "  substrate trained in " << out.train_seconds << " s, MC accuracy " << out.mc_accuracy << "\n";
    return out;
  }();
  return s;
}

bool same_generation(const GenerationTrace& a, const GenerationTrace& b) {
  return a.tokens == b.tokens && a.logprobs == b.logprobs;
}

Outcome steering_identity() {
  const Model m(substrate_config(11));
  const auto v = gaussian_vector(m, 3, 1.0f);
  int matched = 0;
  for (int i = 0; i < kIdentityPrompts; ++i) {
    const auto kind = i % 2 == 0 ? QuestionKind::kMC : QuestionKind::kOE;
    const auto ex = example_at(static_cast<std::uint64_t>(1000 + i), kind);
    DecodeParams dp{i % 3 == 0 ? 0.8f : 0.0f, answer_budget(ex), static_cast<std::uint64_t>(i)};
    const auto plain = m.generate(ex.context, dp);

    const SteeringPlan empty;
    auto zero_bands = decomposed_bands(m.config().num_layers, v, 0.0f, 0.0f);
    auto zero_all = zero_bands;
    zero_all.back().selector = SelectorKind::kAllDecodeSteps;
    const QuerySpan q{ex.query_begin, ex.query_end};
    const auto plan_zero =
        compile_plan(zero_bands, ex.context, q, default_marker_vocabulary(), m.config().num_layers);
    const auto plan_all =
        compile_plan(zero_all, ex.context, q, default_marker_vocabulary(), m.config().num_layers);

    const bool ok = same_generation(plain, m.generate(ex.context, dp, &empty)) &&
                    same_generation(plain, m.generate(ex.context, dp, &plan_zero)) &&
                    same_generation(plain, m.generate(ex.context, dp, &plan_all));
    matched += ok;
  }
  return {matched == kIdentityPrompts,
          std::to_string(matched) + "/" + std::to_string(kIdentityPrompts) +
              " prompts token- and logprob-identical (empty plan, lambda=0 decomposed, lambda=0 all-steps)"};
}

// Independent oracle: teacher-forced reads at the last answer token, double mean.
std::vector<std::vector<double>> brute_force_mean(const Model& m, const std::vector<ContrastPair>& pairs) {
  const auto L = static_cast<std::size_t>(m.config().num_layers);
  const auto d = static_cast<std::size_t>(m.config().hidden_size);
  std::vector<std::vector<double>> sum(L, std::vector<double>(d, 0.0));
  for (const auto& pair : pairs) {
    std::vector<std::vector<std::vector<std::vector<float>>>> reads;
    for (const auto* side : {&pair.positive, &pair.negative}) {
      Tokens seq = side->context;
      seq.insert(seq.end(), side->answer.begin(), side->answer.end());
      const std::vector<std::size_t> tap{seq.size() - 1};
      reads.push_back(m.forward_teacher_forced(seq, tap).per_layer);
    }
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t i = 0; i < d; ++i) {
        sum[l][i] += static_cast<double>(reads[0][l][0][i]) - static_cast<double>(reads[1][l][0][i]);
      }
    }
  }
  for (auto& row : sum) {
    for (auto& x : row) x /= static_cast<double>(pairs.size());
  }
  return sum;
}

Outcome vector_oracle() {
  const Model m(substrate_config(12));
  std::vector<ContrastPair> pairs;
  std::mt19937_64 rng(5);
  for (std::uint64_t s = 0; static_cast<int>(pairs.size()) < kOraclePairs; ++s) {
    const auto ex = example_at(2000 + s, s % 2 == 0 ? QuestionKind::kOE : QuestionKind::kMC);
    const Tokens bad = corrupt_response(ex, {0.6, 0.6}, rng);
    const auto score = judge_score(ex, bad);
    if (score.tenths() > kKeepNegativeMaxTenths) continue;
    const std::vector<JudgedRollout> rollouts{make_judged(bad, score)};
    for (const auto& p : make_contrast_pairs(VectorDesign::kRewriteVsRollout, ex, rollouts)) {
      if (static_cast<int>(pairs.size()) < kOraclePairs) pairs.push_back(p);
    }
  }
  const auto v = build_contextual_vector(m, VectorDesign::kRewriteVsRollout, pairs);
  const auto want = brute_force_mean(m, pairs);
  double worst = 0.0;
  for (std::size_t l = 0; l < want.size(); ++l) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < want[l].size(); ++i) {
      const double e = v.deltas[l][i] - want[l][i];
      num += e * e;
      den += want[l][i] * want[l][i];
    }
    worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-30));
  }
  std::vector<ContrastPair> swapped;
  for (const auto& p : pairs) swapped.push_back({p.negative, p.positive});
  const auto w = build_contextual_vector(m, VectorDesign::kRewriteVsRollout, swapped);
  bool antisymmetric = true;
  for (std::size_t l = 0; l < v.deltas.size(); ++l) {
    for (std::size_t i = 0; i < v.deltas[l].size(); ++i) antisymmetric &= w.deltas[l][i] == -v.deltas[l][i];
  }
  return {worst <= kOracleRelTol && antisymmetric,
          std::to_string(pairs.size()) + " pairs, worst per-layer relative error " + fmt("%.3g", worst) +
              " (tol 1e-6), role swap " + (antisymmetric ? "exactly negates" : "does NOT negate")};
}

// A decoded token is a marker piece when it extends "[", "[ n" or "[ n ]".
bool marker_piece(const Tokens& decoded, std::size_t i) {
  const TokenId open = vocab::id("["), close = vocab::id("]");
  const auto is_number = [&](std::size_t j) {
    for (int n = 1; n <= vocab::kMaxNumber; ++n) {
      if (decoded[j] == vocab::number(n)) return true;
    }
    return false;
  };
  if (decoded[i] == open) return true;
  if (i >= 1 && decoded[i - 1] == open && is_number(i)) return true;
  return i >= 2 && decoded[i - 2] == open && is_number(i - 1) && decoded[i] == close;
}

Outcome marker_locality() {
  const Model& m = *trained_substrate().model;
  const auto v = gaussian_vector(m, 8, 0.5f);
  const int lo = 2, hi = m.config().num_layers;
  const std::vector<BandConfig> bands{{lo, hi, 1.0f, SelectorKind::kMarkerDecodeSteps, "", v}};
  int prompts_ok = 0, marker_steps = 0;
  for (int i = 0; i < kLocalityPrompts; ++i) {
    const auto ex = example_at(static_cast<std::uint64_t>(3000 + i), QuestionKind::kOE);
    const auto plan = compile_plan(bands, ex.context, {ex.query_begin, ex.query_end},
                                   default_marker_vocabulary(), m.config().num_layers);
    DecodeParams dp{0.0f, answer_budget(ex), 0};
    const auto base = m.generate(ex.context, dp, nullptr, {true});
    const auto steered = m.generate(ex.context, dp, &plan, {true});

    // Within the steered run, post differs from pre exactly at marker steps in the band.
    std::optional<int> first_marker_step;
    bool ok = true;
    for (const auto& c : steered.captured) {
      const bool marker_step = c.step >= 1 && marker_piece(steered.tokens, static_cast<std::size_t>(c.step - 1));
      if (marker_step && !first_marker_step) first_marker_step = c.step;
      const bool expect_edit = marker_step && c.layer >= lo && c.layer < hi;
      const bool edited = c.pre != c.post;
      if (expect_edit != edited) ok = false;
      if (marker_step && c.layer == lo) ++marker_steps;
    }
    // Against the unsteered run: identical up to the first marker step, and at
    // that step below the band.
    for (const auto& c : steered.captured) {
      const bool before = !first_marker_step || c.step < *first_marker_step;
      const bool at_below = first_marker_step && c.step == *first_marker_step && c.layer < lo;
      if (!before && !at_below) continue;
      const auto it = std::find_if(base.captured.begin(), base.captured.end(), [&](const CapturedState& b) {
        return b.step == c.step && b.position == c.position && b.layer == c.layer;
      });
      if (it == base.captured.end() || it->post != c.post) ok = false;
    }
    prompts_ok += ok;
  }
  const bool pass = prompts_ok == kLocalityPrompts && marker_steps > 0;
  return {pass, std::to_string(prompts_ok) + "/" + std::to_string(kLocalityPrompts) + " prompts local, " +
                    std::to_string(marker_steps) + " marker steps steered" +
                    (marker_steps == 0 ? " (no marker emitted; criterion vacuous)" : "")};
}

Outcome judge_rewrite() {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> rate(0.1, 1.0);
  int cases = 0, fixed = 0, off_grid = 0;
  for (std::uint64_t s = 0; cases < kJudgeCases; ++s) {
    SceneParams p;
    p.min_objects = 2;
    p.max_objects = 5;
    p.frame_count = s % 4 == 0 ? 8 : 1;
    const auto kind = s % 3 == 0 ? QuestionKind::kMC : QuestionKind::kOE;
    const auto ex = render_example(sample_scene(4000 + s, p), Variant::kReferred, kind, s);
    const Tokens bad = corrupt_response(ex, {rate(rng), rate(rng)}, rng);
    const auto score = judge_score(ex, bad);
    const auto on_grid = [](GridScore g) {
      return g.tenths() >= 0 && g.tenths() <= 10 && g.value() * 10.0 == static_cast<double>(g.tenths());
    };
    off_grid += !on_grid(score);
    if (score.tenths() > kKeepNegativeMaxTenths) continue;
    ++cases;
    const auto again = judge_score(ex, rewrite_response(ex, bad));
    off_grid += !on_grid(again);
    fixed += again.tenths() >= 7;
  }
  return {fixed == cases && off_grid == 0,
          std::to_string(fixed) + "/" + std::to_string(cases) + " rewrites re-judge >= 0.7, " +
              std::to_string(off_grid) + " off-grid scores"};
}

Outcome relative_attention_sanity() {
  int maps = 0, exact = 0;
  for (std::uint64_t seed : {21ULL, 22ULL}) {
    const Model m(substrate_config(seed));
    for (int i = 0; i < 10; ++i) {
      const auto ex = example_at(5000 + static_cast<std::uint64_t>(i), i % 2 ? QuestionKind::kMC : QuestionKind::kOE);
      for (int l = 0; l < m.config().num_layers; ++l) {
        const auto map = relative_attention(m, ex.context, ex.context, l);
        ++maps;
        exact += !map.empty() && std::all_of(map.begin(), map.end(), [](float x) { return x == 1.0f; });
      }
    }
  }
  return {exact == maps, std::to_string(exact) + "/" + std::to_string(maps) + " maps exactly all ones"};
}

std::vector<DatasetRecord> rollout_pool(const Model& m, std::uint64_t seed, int usable_needed, int n_rollouts) {
  std::vector<DatasetRecord> pool;
  int usable = 0;
  for (std::uint64_t i = 0; usable < usable_needed; ++i) {
    const auto s = mix_seed(seed, i);
    const auto ex = example_at(s, QuestionKind::kMC);
    auto rollouts = sample_rollouts(m, ex, n_rollouts, 1.0f, s);
    usable += !make_contrast_pairs(VectorDesign::kRewriteVsRollout, ex, rollouts).empty();
    pool.push_back({ex, std::move(rollouts), {}});
  }
  return pool;
}

std::shared_ptr<const ContextualVector> rewrite_vector(const Model& m, const std::vector<DatasetRecord>& pool) {
  std::vector<ContrastPair> pairs;
  for (const auto& r : pool) {
    const auto p = make_contrast_pairs(VectorDesign::kRewriteVsRollout, r.example, r.rollouts);
    pairs.insert(pairs.end(), p.begin(), p.end());
  }
  return std::make_shared<ContextualVector>(build_contextual_vector(m, VectorDesign::kRewriteVsRollout, pairs));
}

EvalSpec mc_spec(int count, std::uint64_t seed) {
  EvalSpec s;
  s.synthetic.count = count;
  s.synthetic.kind = QuestionKind::kMC;
  s.synthetic.seed = seed;
  s.synthetic.scene.max_objects = 3;
  return s;
}

// In-query band over the early layers; the decode-time band is the swept one.
BandConfig early_band(int num_layers, std::shared_ptr<const ContextualVector> v) {
  return decomposed_bands(num_layers, std::move(v), 1.0f, 1.0f, SelectorKind::kLastTokenOnly).front();
}

Outcome end_to_end() {
  const auto t0 = Clock::now();
  const auto& sub = trained_substrate();
  const Model& m = *sub.model;
  const int L = m.config().num_layers;
  std::vector<int> grid(static_cast<std::size_t>(L));
  std::iota(grid.begin(), grid.end(), 0);

  int wins = 0;
  bool non_constant = false;
  std::ostringstream rows;
  for (int k = 0; k < kE2ESeeds; ++k) {
    const auto seed = static_cast<std::uint64_t>(100 + k);
    const auto pool = rollout_pool(m, mix_seed(seed, 1), kE2EVectorExamples, 4);
    std::vector<DatasetRecord> usable;
    for (const auto& r : pool) {
      if (!make_contrast_pairs(VectorDesign::kRewriteVsRollout, r.example, r.rollouts).empty()) usable.push_back(r);
    }
    const auto v = rewrite_vector(m, usable);

    const BandConfig late{0, 1, 1.0f, SelectorKind::kLastTokenOnly, "", v};
    const auto curve = layer_sweep(m, mc_spec(kE2EValidation, mix_seed(seed, 2)), late, grid, {early_band(L, v)});
    non_constant |= !curve.constant();
    const int layer = static_cast<int>(curve.argmax());

    auto held = mc_spec(kE2EHeldOut, mix_seed(seed, 3));
    const double base = run_eval(m, held).overall();
    auto steered_late = late;
    steered_late.layer_lo = layer;
    steered_late.layer_hi = layer + 1;
    held.bands = {early_band(L, v), steered_late};
    const double steered = run_eval(m, held).overall();
    wins += steered >= base;
    rows << (k ? "; " : "") << "seed " << k << ": layer " << layer << " " << fmt("%.3f", base) << " -> "
         << fmt("%.3f", steered);
  }
  const double elapsed = seconds_since(t0) + sub.train_seconds;
  const bool pass = wins >= kE2EMinWins && non_constant && elapsed <= kE2EBudgetSeconds;
  return {pass, std::to_string(wins) + "/" + std::to_string(kE2ESeeds) + " seeds steered >= unsteered (" +
                    rows.str() + "), sweep " + (non_constant ? "non-constant" : "constant") + ", substrate MC " +
                    fmt("%.3f", sub.mc_accuracy) + ", " + fmt("%.0f", elapsed) + " s incl. training (budget " +
                    fmt("%.0f", kE2EBudgetSeconds) + " s)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome data_scale() {
  const auto t0 = Clock::now();
  const Model& m = *trained_substrate().model;
  const int L = m.config().num_layers;
  const auto pool = rollout_pool(m, 0xda7a, kDataScales.back(), 2);
  const auto placeholder = gaussian_vector(m, 1, 0.0f);
  const auto tmpl = decomposed_bands(L, placeholder, 1.0f, 1.0f, SelectorKind::kLastTokenOnly);
  const auto res = data_scale_sweep(m, VectorDesign::kRewriteVsRollout, kDataScales, pool,
                                    mc_spec(kDataScaleEval, 0x5ca1e), tmpl);

  bool finite = res.curve.points.size() == kDataScales.size();
  for (const auto& p : res.curve.points) finite &= std::isfinite(p.metric);
  bool nested = res.example_indices.size() == kDataScales.size();
  for (std::size_t k = 0; nested && k < res.example_indices.size(); ++k) {
    nested &= static_cast<int>(res.example_indices[k].size()) == kDataScales[k];
    if (k > 0) {
      const auto& a = res.example_indices[k - 1];
      nested &= std::equal(a.begin(), a.end(), res.example_indices[k].begin());
    }
  }

  const auto base = run_eval(m, mc_spec(kDataScaleEval, 0x5ca1e));
  const auto dir = fs::temp_directory_path() / "csteer_acceptance";
  fs::remove_all(dir);
  const auto first = emit_report({base}, {res.curve}, dir / "a");
  const auto second = emit_report({base}, {res.curve}, dir / "b");
  bool identical = first.size() == second.size() && !first.empty();
  for (std::size_t i = 0; identical && i < first.size(); ++i) {
    identical &= first[i].filename() == second[i].filename() && slurp(first[i]) == slurp(second[i]);
  }
  fs::remove_all(dir);

  const double elapsed = seconds_since(t0);
  std::ostringstream pts;
  for (const auto& p : res.curve.points) pts << " " << p.x << ":" << fmt("%.3f", p.metric);
  return {finite && nested && identical && elapsed <= kDataScaleBudgetSeconds,
          std::string("metrics") + pts.str() + (finite ? " finite" : " NOT finite") + ", prefixes " +
              (nested ? "nested" : "NOT nested") + ", report " + (identical ? "byte-identical" : "differs") +
              ", " + fmt("%.0f", elapsed) + " s (budget " + fmt("%.0f", kDataScaleBudgetSeconds) + " s)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"steering-identity", steering_identity},
      {"vector-oracle", vector_oracle},
      {"judge-rewrite", judge_rewrite},
      {"relative-attention", relative_attention_sanity},
      {"marker-locality", marker_locality},
      {"end-to-end", end_to_end},
      {"data-scale", data_scale},
  };
  std::set<std::string> wanted(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!wanted.empty() && !wanted.count(name)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << fmt("%.1f", seconds_since(t0))
              << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
