#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csteer/steering.hpp"
#include "csteer/vector.hpp"
#include "csteer/vocab.hpp"

namespace csteer {

struct DecodeParams {
  float temperature = 0.0f;  // 0 means greedy, ties go to the lowest token id
  int max_new_tokens = 32;
  std::uint64_t seed = 0;
};

// Post-block residual states at the tapped positions.
// per_layer[l][k] is the state after block l at tapped_positions[k].
struct ActivationTrace {
  std::vector<std::vector<std::vector<float>>> per_layer;
  std::vector<std::size_t> tapped_positions;
  Tokens token_ids;
};

struct InterventionRecord {
  int step = 0;          // decode step, or -1 for in-query edits made at prefill
  std::size_t position = 0;
  int layer = 0;
  float scale = 0.0f;

  bool operator==(const InterventionRecord&) const = default;
};

// Residual state at one (position, layer) site, before and after steering.
struct CapturedState {
  int step = 0;  // -1 for prompt positions other than the last one
  std::size_t position = 0;
  int layer = 0;
  std::vector<float> pre;
  std::vector<float> post;
};

struct GenerationTrace {
  Tokens tokens;  // decoded tokens, including a final <eos> if one was produced
  std::vector<InterventionRecord> per_step_interventions;
  std::vector<double> logprobs;  // model log-probability of each decoded token
  std::vector<CapturedState> captured;
};

struct GenerateOptions {
  bool capture_states = false;
};

// Contract shared by the in-process toy model and externally served models.
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual BackboneInfo info() const = 0;
  virtual ActivationTrace forward_teacher_forced(std::span<const TokenId> tokens,
                                                 std::span<const std::size_t> tapped_positions) const = 0;
  virtual GenerationTrace generate(std::span<const TokenId> prompt, const DecodeParams& params,
                                   const SteeringPlan* plan = nullptr,
                                   const GenerateOptions& options = {}) const = 0;
};

}  // namespace csteer
