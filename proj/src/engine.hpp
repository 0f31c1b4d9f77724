#pragma once

// Parameter layout and the inference forward shared by model.cpp and train.cpp.

#include <span>
#include <vector>

#include "csteer/model.hpp"

namespace csteer::detail {

struct LayerOffsets {
  std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
};

// Taps of the causal per-channel filter over token embeddings.
inline constexpr std::size_t kEmbedTaps = 6;

struct Offsets {
  std::size_t wte = 0, emb_taps = 0, wpe = 0;
  std::vector<LayerOffsets> layers;
  std::size_t lnf_g = 0, lnf_b = 0, w_head = 0;
  std::size_t total = 0;
};

Offsets build_layout(const ModelConfig& config, std::vector<TensorSlot>* slots = nullptr);

// Resolved config dimensions.
struct Dims {
  std::size_t layers, d, heads, head_dim, vocab, max_seq, ff;
};
Dims dims_of(const ModelConfig& config);

struct KVCache {
  std::vector<std::vector<float>> k, v;  // per layer, max_seq x d
  Tokens tokens;                         // every token fed so far
  std::size_t length = 0;
};

KVCache make_cache(const Dims& dims);

class ForwardObserver {
 public:
  virtual ~ForwardObserver() = default;
  // Residual rows after block `layer` for positions [first, first + rows);
  // the observer may modify them in place.
  virtual void after_block(int /*layer*/, std::size_t /*first*/, std::size_t /*rows*/,
                           float* /*x*/) {}
  virtual bool wants_attention(int /*layer*/) const { return false; }
  virtual void attention(int /*layer*/, std::size_t /*pos*/, int /*head*/,
                         std::span<const float> /*probs*/) {}
};

struct Engine {
  const ModelConfig& config;
  const float* params;
  const Offsets& off;
  Dims dims;

  // Runs tokens at positions [cache.length, cache.length + n) and appends
  // their keys/values. Returns the final residual rows (n x d), pre-LN.
  std::vector<float> forward_chunk(std::span<const TokenId> tokens, KVCache& cache,
                                   ForwardObserver* observer) const;

  // Final LayerNorm + head for `rows` residual rows.
  std::vector<float> logits(const float* x, std::size_t rows) const;
};

void check_tokens(const Dims& dims, std::span<const TokenId> tokens);

// Input row for position `pos`: sum over taps k of emb_taps[k] * wte[t[pos - k]]
// plus wpe[pos]. `seq` holds the tokens of positions [0, pos].
void embed_row(const Dims& dims, const float* params, const Offsets& off,
               std::span<const TokenId> seq, std::size_t pos, float* out);

}  // namespace csteer::detail
