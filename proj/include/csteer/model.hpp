#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csteer/aligned.hpp"
#include "csteer/backbone.hpp"
#include "csteer/vocab.hpp"

namespace csteer {

struct ModelConfig {
  int num_layers = 4;
  int hidden_size = 128;
  int num_heads = 4;
  int vocab_size = 0;  // 0 selects the closed task vocabulary
  int max_seq_len = 128;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

// Throws ConfigError naming the first violated invariant.
void validate_config(const ModelConfig& config);

struct TensorSlot {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return rows * cols; }
};

// Pre-LayerNorm decoder-only transformer with learned positions and a short
// causal filter over token embeddings (six taps, per channel). Steering
// and activation reads act on the residual stream after each block
// (0-indexed layers).
// All parameters live in one flat float32 buffer described by layout().
class Model final : public Backbone {
 public:
  // Deterministic initialization from config.seed.
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  std::span<const float> parameters() const { return params_; }
  std::span<float> mutable_parameters() { return params_; }
  const std::vector<TensorSlot>& layout() const { return layout_; }
  std::span<float> tensor(std::string_view name);
  std::span<const float> tensor(std::string_view name) const;

  std::string checksum() const;

  BackboneInfo info() const override;
  ActivationTrace forward_teacher_forced(std::span<const TokenId> tokens,
                                         std::span<const std::size_t> tapped_positions) const override;
  GenerationTrace generate(std::span<const TokenId> prompt, const DecodeParams& params,
                           const SteeringPlan* plan = nullptr,
                           const GenerateOptions& options = {}) const override;

  // Next-token logits at every position of a full forward.
  std::vector<std::vector<float>> logits(std::span<const TokenId> tokens) const;

  // Head-averaged attention weights of the final position over every
  // position 0..n-1 at the given layer.
  std::vector<float> attention_from_last(std::span<const TokenId> tokens, int layer) const;

 private:
  ModelConfig config_;
  FloatBuffer params_;
  std::vector<TensorSlot> layout_;
};

Model init_model(const ModelConfig& config);

// Ratio of query-conditioned to generic-conditioned attention over the shared
// scene prefix (tokens before "Q:"). Both attention maps are renormalised over
// that prefix and eps is added to numerator and denominator.
std::vector<float> relative_attention(const Model& model, std::span<const TokenId> tokens_query,
                                      std::span<const TokenId> tokens_generic, int layer,
                                      float eps = 1e-8f);

// Length of the scene prefix shared by query variants: everything before "Q:".
std::size_t scene_prefix_length(std::span<const TokenId> tokens);

// Binary container: "CSTEER-TB/1\n", a JSON header line (config + tensor
// layout), then the flat little-endian float32 parameter buffer.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace csteer
