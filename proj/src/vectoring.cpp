#include "csteer/vectoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csteer/error.hpp"
#include "csteer/rng.hpp"

namespace csteer {
namespace {

Tokens without_eos(const Tokens& t) {
  return Tokens(t.begin(), std::find(t.begin(), t.end(), vocab::eos()));
}

void check_side(const ContrastSide& s, const char* which) {
  if (s.answer.empty()) throw ConfigError(std::string(which) + " answer of a contrast pair is empty");
  if (s.context.empty()) throw ConfigError(std::string(which) + " context of a contrast pair is empty");
}

// Post-block states at the answer taps, averaged over taps when pooling.
std::vector<std::vector<float>> answer_states(const Backbone& backbone, const ContrastSide& side,
                                              bool mean_pool) {
  Tokens seq = side.context;
  seq.insert(seq.end(), side.answer.begin(), side.answer.end());
  std::vector<std::size_t> taps;
  const std::size_t first = mean_pool ? side.context.size() : seq.size() - 1;
  for (std::size_t p = first; p < seq.size(); ++p) taps.push_back(p);
  const auto trace = backbone.forward_teacher_forced(seq, taps);
  std::vector<std::vector<float>> out;
  for (const auto& layer : trace.per_layer) {
    std::vector<float> mean(layer.front().size(), 0.0f);
    for (const auto& h : layer) {
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += h[i];
    }
    if (layer.size() > 1) {
      for (float& v : mean) v /= static_cast<float>(layer.size());
    }
    out.push_back(std::move(mean));
  }
  return out;
}

}  // namespace

int answer_budget(const ReferringExample& example) {
  if (example.kind == QuestionKind::kMC) return 2;
  return static_cast<int>(example.ground_truth.size()) + 8;
}

std::vector<JudgedRollout> sample_rollouts(const Backbone& backbone, const ReferringExample& example,
                                           int n, float temperature, std::uint64_t seed,
                                           int max_new_tokens) {
  if (n < 1) throw ConfigError("rollout count must be >= 1");
  if (!(temperature > 0.0f) || !std::isfinite(temperature)) {
    throw ConfigError("rollout temperature must be > 0 (temperature 0 makes every rollout identical)");
  }
  DecodeParams dp;
  dp.temperature = temperature;
  dp.max_new_tokens = max_new_tokens > 0 ? max_new_tokens : answer_budget(example);
  std::vector<JudgedRollout> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    dp.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    auto trace = backbone.generate(example.context, dp);
    const GridScore score = judge_score(example, trace.tokens);
    out.push_back(make_judged(std::move(trace.tokens), score));
  }
  return out;
}

std::vector<ContrastPair> make_contrast_pairs(VectorDesign design, const ReferringExample& example,
                                              std::span<const JudgedRollout> rollouts,
                                              const PairOptions& options) {
  if (example.variant != Variant::kReferred) {
    throw PreconditionError("contrast pairs are built from the referred rendering");
  }
  std::vector<ContrastPair> pairs;
  const ContrastSide gt{example.context, example.ground_truth};
  switch (design) {
    case VectorDesign::kReferVsNoRefer:
    case VectorDesign::kMatchVsShuffle: {
      const Variant neg = design == VectorDesign::kReferVsNoRefer ? Variant::kUnreferred : Variant::kShuffled;
      const auto other = render_example(example.scene, neg, example.kind, example.question_seed);
      std::mt19937_64 rng(mix_seed(options.seed, example.scene.seed ^ example.question_seed));
      pairs.push_back({gt, {other.context, corrupt_response(example, options.corruption, rng)}});
      break;
    }
    case VectorDesign::kGtVsRollout:
    case VectorDesign::kRewriteVsRollout:
      for (const auto& r : rollouts) {
        if (!r.kept_as_negative) continue;
        Tokens negative = without_eos(r.response);
        if (negative.empty()) continue;  // nothing to force
        ContrastSide pos = gt;
        if (design == VectorDesign::kRewriteVsRollout) {
          pos.answer = without_eos(rewrite_response(example, negative));
        }
        pairs.push_back({std::move(pos), {example.context, std::move(negative)}});
      }
      break;
  }
  return pairs;
}

std::vector<std::vector<float>> pair_difference(const Backbone& backbone, const ContrastPair& pair,
                                                bool mean_pool_answer) {
  check_side(pair.positive, "positive");
  check_side(pair.negative, "negative");
  auto pos = answer_states(backbone, pair.positive, mean_pool_answer);
  const auto neg = answer_states(backbone, pair.negative, mean_pool_answer);
  for (std::size_t l = 0; l < pos.size(); ++l) {
    for (std::size_t i = 0; i < pos[l].size(); ++i) pos[l][i] -= neg[l][i];
  }
  return pos;
}

ContextualVector build_contextual_vector(const Backbone& backbone, VectorDesign design,
                                         std::span<const ContrastPair> pairs,
                                         const VectorOptions& options) {
  if (pairs.empty()) throw ConfigError("no usable contrast pairs to build a vector from");
  const BackboneInfo info = backbone.info();
  const auto L = static_cast<std::size_t>(info.num_layers);
  const auto d = static_cast<std::size_t>(info.hidden_size);
  std::vector<std::vector<double>> sum(L, std::vector<double>(d, 0.0));
  for (const auto& pair : pairs) {
    const auto diff = pair_difference(backbone, pair, options.mean_pool_answer);
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t i = 0; i < d; ++i) sum[l][i] += diff[l][i];
    }
  }
  ContextualVector v;
  v.design = design;
  v.sample_count = static_cast<int>(pairs.size());
  v.backbone_id = info.checksum;
  v.dataset_id = options.dataset_id;
  const double inv = 1.0 / static_cast<double>(pairs.size());
  for (std::size_t l = 0; l < L; ++l) {
    std::vector<float> row(d);
    for (std::size_t i = 0; i < d; ++i) row[i] = static_cast<float>(sum[l][i] * inv);
    v.deltas.push_back(std::move(row));
  }
  validate_vector(v);
  return v;
}

}  // namespace csteer
