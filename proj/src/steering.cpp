#include "csteer/steering.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "csteer/error.hpp"

namespace csteer {

std::string to_string(SelectorKind k) {
  switch (k) {
    case SelectorKind::kAllDecodeSteps: return "AllDecodeSteps";
    case SelectorKind::kMarkerDecodeSteps: return "MarkerDecodeSteps";
    case SelectorKind::kQueryMarkerPositions: return "QueryMarkerPositions";
    case SelectorKind::kLastTokenOnly: return "LastTokenOnly";
  }
  return "?";
}

SelectorKind parse_selector(std::string_view s) {
  for (auto k : {SelectorKind::kAllDecodeSteps, SelectorKind::kMarkerDecodeSteps,
                 SelectorKind::kQueryMarkerPositions, SelectorKind::kLastTokenOnly}) {
    if (s == to_string(k)) return k;
  }
  throw ParseError("unknown selector '" + std::string(s) + "'");
}

bool is_decode_selector(SelectorKind k) { return k != SelectorKind::kQueryMarkerPositions; }

std::vector<Tokens> default_marker_vocabulary() {
  std::vector<Tokens> out;
  for (int n = 1; n <= vocab::kMaxNumber; ++n) out.push_back(vocab::marker(n));
  return out;
}

SteeringPlan compile_plan(const std::vector<BandConfig>& bands, std::span<const TokenId> context,
                          QuerySpan query, const std::vector<Tokens>& marker_vocabulary,
                          int num_layers) {
  if (query.begin > query.end || query.end > context.size()) {
    throw ConfigError("query span outside the context");
  }
  SteeringPlan plan;
  bool wants_query_markers = false;
  for (const auto& b : bands) {
    if (b.layer_lo < 0 || b.layer_hi > num_layers || b.layer_lo >= b.layer_hi) {
      throw ConfigError("band layers [" + std::to_string(b.layer_lo) + ", " +
                        std::to_string(b.layer_hi) + ") outside [0, " +
                        std::to_string(num_layers) + ")");
    }
    if (!std::isfinite(b.lambda)) throw ConfigError("band lambda must be finite");
    const bool marker_kind = b.selector == SelectorKind::kMarkerDecodeSteps ||
                             b.selector == SelectorKind::kQueryMarkerPositions;
    if (marker_kind && marker_vocabulary.empty()) {
      throw ConfigError(to_string(b.selector) + " needs a non-empty marker vocabulary");
    }
    wants_query_markers |= b.selector == SelectorKind::kQueryMarkerPositions;
    SteeringBand band{b.layer_lo, b.layer_hi, b.lambda, {b.selector, {}}, b.vector_ref, b.vector};
    if (marker_kind) band.selector.marker_token_set = marker_vocabulary;
    plan.bands.push_back(std::move(band));
  }
  for (std::size_t i = 0; i < bands.size(); ++i) {
    for (std::size_t j = i + 1; j < bands.size(); ++j) {
      const auto& a = bands[i];
      const auto& b = bands[j];
      const bool overlap = a.layer_lo < b.layer_hi && b.layer_lo < a.layer_hi;
      if (overlap && is_decode_selector(a.selector) == is_decode_selector(b.selector)) {
        throw ConfigError("bands " + std::to_string(i) + " and " + std::to_string(j) +
                          " share layers with non-disjoint selectors");
      }
    }
  }
  if (wants_query_markers) {
    std::vector<std::size_t>& positions = plan.resolved_query_positions;
    for (std::size_t p = query.begin; p < query.end; ++p) {
      for (const auto& m : marker_vocabulary) {
        if (m.empty() || p + m.size() > query.end) continue;
        if (std::equal(m.begin(), m.end(), context.begin() + static_cast<std::ptrdiff_t>(p))) {
          for (std::size_t k = 0; k < m.size(); ++k) positions.push_back(p + k);
          p += m.size() - 1;
          break;
        }
      }
    }
  }
  return plan;
}

std::vector<BandConfig> decomposed_bands(int num_layers,
                                         std::shared_ptr<const ContextualVector> vector,
                                         float early_lambda, float late_lambda,
                                         SelectorKind late_selector) {
  const int early = (num_layers + 2) / 3;
  const int late = (num_layers + 1) / 2;
  std::string ref = vector ? vector->dataset_id : std::string();
  return {
      {0, early, early_lambda, SelectorKind::kQueryMarkerPositions, ref, vector},
      {num_layers - late, num_layers, late_lambda, late_selector, ref, vector},
  };
}

bool select_step(const TokenSelector& selector, std::optional<TokenId> decoded_token,
                 const StepContext& context) {
  switch (selector.kind) {
    case SelectorKind::kAllDecodeSteps: return true;
    case SelectorKind::kLastTokenOnly: return context.at_prompt_end;
    case SelectorKind::kQueryMarkerPositions: return false;
    case SelectorKind::kMarkerDecodeSteps: break;
  }
  if (!decoded_token) return false;
  const auto& prev = context.previously_decoded;
  for (const auto& m : selector.marker_token_set) {
    // The token sits at offset k of m and the k tokens before it match m's prefix.
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (m[k] != *decoded_token || k > prev.size()) continue;
      if (std::equal(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(k),
                     prev.end() - static_cast<std::ptrdiff_t>(k))) {
        return true;
      }
    }
  }
  return false;
}

std::vector<float> steer_hidden(std::span<const float> h, std::span<const float> delta,
                                float lambda) {
  std::vector<float> out(h.begin(), h.end());
  steer_hidden_inplace(out, delta, lambda);
  return out;
}

void steer_hidden_inplace(std::span<float> h, std::span<const float> delta, float lambda) {
  if (h.size() != delta.size()) {
    throw MismatchError("steer_hidden: hidden size " + std::to_string(h.size()) +
                        " != delta size " + std::to_string(delta.size()));
  }
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += lambda * delta[i];
}

void check_plan(const SteeringPlan& plan, int num_layers, int hidden_size) {
  for (const auto& b : plan.bands) {
    if (b.layer_lo < 0 || b.layer_hi > num_layers || b.layer_lo >= b.layer_hi) {
      throw ConfigError("plan references layers outside [0, " + std::to_string(num_layers) + ")");
    }
    if (!b.vector) throw ConfigError("plan band '" + b.vector_ref + "' has no vector attached");
    if (b.vector->num_layers() != num_layers || b.vector->hidden_size() != hidden_size) {
      throw MismatchError("plan vector shape (L=" + std::to_string(b.vector->num_layers()) +
                          ", d=" + std::to_string(b.vector->hidden_size()) +
                          ") does not match model (L=" + std::to_string(num_layers) +
                          ", d=" + std::to_string(hidden_size) + ")");
    }
  }
}

namespace {

nlohmann::json band_json(int lo, int hi, float lambda, SelectorKind sel, const std::string& ref) {
  return {{"layers", {lo, hi}}, {"lambda", lambda}, {"selector", to_string(sel)}, {"vector", ref}};
}

template <typename Band>
Band band_from(const nlohmann::json& b, const VectorResolver& resolve) {
  Band out;
  try {
    const auto& layers = b.at("layers");
    if (!layers.is_array() || layers.size() != 2) throw ParseError("band 'layers' must be [lo, hi)");
    out.layer_lo = layers[0].get<int>();
    out.layer_hi = layers[1].get<int>();
    out.lambda = b.value("lambda", 1.0f);
    out.vector_ref = b.value("vector", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad band entry: " + std::string(e.what()));
  }
  if (resolve && !out.vector_ref.empty()) out.vector = resolve(out.vector_ref);
  return out;
}

}  // namespace

nlohmann::json plan_to_json(const SteeringPlan& plan) {
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& b : plan.bands) {
    auto j = band_json(b.layer_lo, b.layer_hi, b.lambda, b.selector.kind, b.vector_ref);
    if (!b.selector.marker_token_set.empty()) j["markers"] = b.selector.marker_token_set;
    bands.push_back(std::move(j));
  }
  return {{"bands", bands}, {"resolved_query_positions", plan.resolved_query_positions}};
}

SteeringPlan plan_from_json(const nlohmann::json& j, const VectorResolver& resolve) {
  SteeringPlan plan;
  try {
    for (const auto& b : j.at("bands")) {
      auto band = band_from<SteeringBand>(b, resolve);
      band.selector.kind = parse_selector(b.at("selector").get<std::string>());
      if (b.contains("markers")) band.selector.marker_token_set = b["markers"].get<std::vector<Tokens>>();
      plan.bands.push_back(std::move(band));
    }
    plan.resolved_query_positions =
        j.value("resolved_query_positions", std::vector<std::size_t>{});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad plan document: " + std::string(e.what()));
  }
  return plan;
}

std::vector<BandConfig> bands_from_json(const nlohmann::json& j, const VectorResolver& resolve) {
  std::vector<BandConfig> out;
  try {
    for (const auto& b : j.at("bands")) {
      auto band = band_from<BandConfig>(b, resolve);
      band.selector = parse_selector(b.at("selector").get<std::string>());
      out.push_back(std::move(band));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad plan config: " + std::string(e.what()));
  }
  return out;
}

nlohmann::json bands_to_json(const std::vector<BandConfig>& bands) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& b : bands) {
    arr.push_back(band_json(b.layer_lo, b.layer_hi, b.lambda, b.selector, b.vector_ref));
  }
  return {{"bands", arr}};
}

}  // namespace csteer
