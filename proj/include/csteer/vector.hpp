#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace csteer {

enum class VectorDesign { kReferVsNoRefer, kMatchVsShuffle, kGtVsRollout, kRewriteVsRollout };

std::string to_string(VectorDesign d);
VectorDesign parse_design(std::string_view s);

// What a vector needs to know about the model it was extracted from.
struct BackboneInfo {
  int num_layers = 0;
  int hidden_size = 0;
  std::string checksum;
};

// Per-layer steering directions, deltas[l] has hidden_size entries.
struct ContextualVector {
  std::vector<std::vector<float>> deltas;
  VectorDesign design = VectorDesign::kRewriteVsRollout;
  int sample_count = 0;
  std::string backbone_id;
  std::string dataset_id;

  int num_layers() const { return static_cast<int>(deltas.size()); }
  int hidden_size() const { return deltas.empty() ? 0 : static_cast<int>(deltas.front().size()); }
};

// Throws ConfigError on ragged/non-finite deltas or sample_count < 1.
void validate_vector(const ContextualVector& v);

// File layout: "CSTEER-VEC/1\n", one JSON header line, then num_layers
// little-endian float32 arrays of hidden_size values each.
void save_vector(const ContextualVector& v, const std::filesystem::path& path);
ContextualVector load_vector(const std::filesystem::path& path);
// As load_vector, and additionally refuses vectors built on another backbone.
ContextualVector load_vector_for(const std::filesystem::path& path, const BackboneInfo& backbone);
void check_compatible(const ContextualVector& v, const BackboneInfo& backbone);

}  // namespace csteer
