#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "csteer/vector.hpp"
#include "csteer/vocab.hpp"

namespace csteer {

enum class SelectorKind {
  kAllDecodeSteps,        // every decoding step
  kMarkerDecodeSteps,     // decoded marker sub-tokens only
  kQueryMarkerPositions,  // marker sub-tokens inside the query, applied at prefill
  kLastTokenOnly,         // final prompt position (one-token MC answers)
};

std::string to_string(SelectorKind k);
SelectorKind parse_selector(std::string_view s);
bool is_decode_selector(SelectorKind k);

struct TokenSelector {
  SelectorKind kind = SelectorKind::kAllDecodeSteps;
  // Token sequences that render one marker; "[1]" is {"[", "1", "]"} here.
  std::vector<Tokens> marker_token_set;
};

// Every "[ n ]" the closed vocabulary can render.
std::vector<Tokens> default_marker_vocabulary();

struct BandConfig {
  int layer_lo = 0;  // [layer_lo, layer_hi)
  int layer_hi = 1;
  float lambda = 1.0f;
  SelectorKind selector = SelectorKind::kAllDecodeSteps;
  std::string vector_ref;
  std::shared_ptr<const ContextualVector> vector;
};

struct SteeringBand {
  int layer_lo = 0;
  int layer_hi = 1;
  float lambda = 1.0f;
  TokenSelector selector;
  std::string vector_ref;
  std::shared_ptr<const ContextualVector> vector;

  bool covers(int layer) const { return layer_lo <= layer && layer < layer_hi; }
};

struct SteeringPlan {
  std::vector<SteeringBand> bands;
  // Context positions of every marker sub-token in the query region.
  std::vector<std::size_t> resolved_query_positions;
};

struct QuerySpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Resolves in-query marker positions and validates band layout against a
// backbone with num_layers blocks. Decode-time selectors stay symbolic.
// Bands may share layers only when one is kQueryMarkerPositions and the other
// a decode-time selector.
SteeringPlan compile_plan(const std::vector<BandConfig>& bands, std::span<const TokenId> context,
                          QuerySpan query, const std::vector<Tokens>& marker_vocabulary,
                          int num_layers);

// Early layers get in-query steering, late layers decode-time steering:
// first ceil(L/3) layers and last ceil(L/2) layers respectively.
std::vector<BandConfig> decomposed_bands(int num_layers,
                                         std::shared_ptr<const ContextualVector> vector,
                                         float early_lambda = 1.0f, float late_lambda = 1.0f,
                                         SelectorKind late_selector = SelectorKind::kMarkerDecodeSteps);

struct StepContext {
  std::span<const TokenId> previously_decoded;  // tokens decoded before this one
  bool at_prompt_end = false;                   // the step reading the last prompt token
};

// Whether the position holding `decoded_token` should be steered. The token
// is absent at the prompt-end step.
bool select_step(const TokenSelector& selector, std::optional<TokenId> decoded_token,
                 const StepContext& context);

// h + lambda * delta, elementwise.
std::vector<float> steer_hidden(std::span<const float> h, std::span<const float> delta,
                                float lambda);
void steer_hidden_inplace(std::span<float> h, std::span<const float> delta, float lambda);

// Throws MismatchError if any band's vector does not fit (num_layers, hidden).
void check_plan(const SteeringPlan& plan, int num_layers, int hidden_size);

using VectorResolver = std::function<std::shared_ptr<const ContextualVector>(const std::string&)>;

nlohmann::json plan_to_json(const SteeringPlan& plan);
SteeringPlan plan_from_json(const nlohmann::json& j, const VectorResolver& resolve = {});

// Plan config document: {"bands": [{"layers": [lo, hi], "lambda", "selector", "vector"}]}.
std::vector<BandConfig> bands_from_json(const nlohmann::json& j, const VectorResolver& resolve = {});
nlohmann::json bands_to_json(const std::vector<BandConfig>& bands);

}  // namespace csteer
