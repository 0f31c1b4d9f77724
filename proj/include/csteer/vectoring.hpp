#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csteer/backbone.hpp"
#include "csteer/judge.hpp"
#include "csteer/task.hpp"
#include "csteer/vector.hpp"

namespace csteer {

struct ContrastSide {
  Tokens context;
  Tokens answer;  // forced continuation, never empty, no trailing <eos>
};

struct ContrastPair {
  ContrastSide positive;
  ContrastSide negative;
};

// Decode budget for an example: one letter plus <eos> for MC, the ground
// truth length plus slack for OE.
int answer_budget(const ReferringExample& example);

// n seeded samples at the given temperature, each scored by the rubric judge.
// Sample i uses mix_seed(seed, i).
std::vector<JudgedRollout> sample_rollouts(const Backbone& backbone, const ReferringExample& example,
                                           int n, float temperature, std::uint64_t seed,
                                           int max_new_tokens = 0);

struct PairOptions {
  // Corruption used for the negative answer of ReferVsNoRefer and MatchVsShuffle.
  CorruptionParams corruption{1.0, 0.0};
  std::uint64_t seed = 0;
};

// Contrast pairs of one design for one referred example. Rollout designs use
// every kept negative (score <= 0.6) and return an empty list when there is
// none. Throws PreconditionError unless the example is the referred variant.
std::vector<ContrastPair> make_contrast_pairs(VectorDesign design, const ReferringExample& example,
                                              std::span<const JudgedRollout> rollouts,
                                              const PairOptions& options = {});

struct VectorOptions {
  bool mean_pool_answer = false;  // average over every answer token instead of the last
  std::string dataset_id;
};

// Per-layer mean over pairs of h+ - h-, read after each block at the final
// forced-answer token. The reduction runs in pair order.
ContextualVector build_contextual_vector(const Backbone& backbone, VectorDesign design,
                                         std::span<const ContrastPair> pairs,
                                         const VectorOptions& options = {});

// h+ - h- for one pair, per layer.
std::vector<std::vector<float>> pair_difference(const Backbone& backbone, const ContrastPair& pair,
                                                bool mean_pool_answer = false);

}  // namespace csteer
