#include "csteer/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "csteer/checksum.hpp"
#include "csteer/error.hpp"
#include "engine.hpp"
#include "kernels.hpp"

namespace csteer {
namespace detail {

Dims dims_of(const ModelConfig& c) {
  const auto d = static_cast<std::size_t>(c.hidden_size);
  const auto heads = static_cast<std::size_t>(c.num_heads);
  return {static_cast<std::size_t>(c.num_layers), d, heads, d / heads,
          static_cast<std::size_t>(c.vocab_size), static_cast<std::size_t>(c.max_seq_len), 4 * d};
}

Offsets build_layout(const ModelConfig& config, std::vector<TensorSlot>* slots) {
  const Dims dm = dims_of(config);
  Offsets off;
  std::size_t cursor = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    const std::size_t at = cursor;
    if (slots) slots->push_back({std::move(name), rows, cols, at});
    cursor += rows * cols;
    return at;
  };
  off.wte = add("wte", dm.vocab, dm.d);
  off.emb_taps = add("emb_taps", kEmbedTaps, dm.d);
  off.wpe = add("wpe", dm.max_seq, dm.d);
  for (std::size_t l = 0; l < dm.layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    LayerOffsets lo{};
    lo.ln1_g = add(p + "ln1.g", 1, dm.d);
    lo.ln1_b = add(p + "ln1.b", 1, dm.d);
    lo.w_qkv = add(p + "attn.w_qkv", dm.d, 3 * dm.d);
    lo.b_qkv = add(p + "attn.b_qkv", 1, 3 * dm.d);
    lo.w_o = add(p + "attn.w_o", dm.d, dm.d);
    lo.b_o = add(p + "attn.b_o", 1, dm.d);
    lo.ln2_g = add(p + "ln2.g", 1, dm.d);
    lo.ln2_b = add(p + "ln2.b", 1, dm.d);
    lo.w_fc = add(p + "mlp.w_fc", dm.d, dm.ff);
    lo.b_fc = add(p + "mlp.b_fc", 1, dm.ff);
    lo.w_proj = add(p + "mlp.w_proj", dm.ff, dm.d);
    lo.b_proj = add(p + "mlp.b_proj", 1, dm.d);
    off.layers.push_back(lo);
  }
  off.lnf_g = add("lnf.g", 1, dm.d);
  off.lnf_b = add("lnf.b", 1, dm.d);
  off.w_head = add("head", dm.d, dm.vocab);
  off.total = cursor;
  return off;
}

KVCache make_cache(const Dims& dm) {
  KVCache c;
  c.k.assign(dm.layers, std::vector<float>(dm.max_seq * dm.d));
  c.v.assign(dm.layers, std::vector<float>(dm.max_seq * dm.d));
  return c;
}

void check_tokens(const Dims& dm, std::span<const TokenId> tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= dm.vocab) {
      throw ConfigError("token " + std::to_string(tokens[i]) + " at position " +
                        std::to_string(i) + " is outside the model vocabulary");
    }
  }
}

void embed_row(const Dims& dm, const float* params, const Offsets& off, std::span<const TokenId> seq,
               std::size_t pos, float* out) {
  const std::size_t d = dm.d;
  const float* pe = params + off.wpe + pos * d;
  std::copy_n(pe, d, out);
  for (std::size_t k = 0; k < kEmbedTaps && k <= pos; ++k) {
    const float* te = params + off.wte + static_cast<std::size_t>(seq[pos - k]) * d;
    const float* tap = params + off.emb_taps + k * d;
    for (std::size_t j = 0; j < d; ++j) out[j] += tap[j] * te[j];
  }
}

std::vector<float> Engine::forward_chunk(std::span<const TokenId> tokens, KVCache& cache,
                                         ForwardObserver* observer) const {
  const Dims& dm = dims;
  const std::size_t n = tokens.size();
  const std::size_t first = cache.length;
  if (first + n > dm.max_seq) {
    throw ConfigError("sequence of length " + std::to_string(first + n) +
                      " exceeds max_seq_len " + std::to_string(dm.max_seq));
  }
  check_tokens(dm, tokens);
  const std::size_t d = dm.d;
  std::vector<float> x(n * d), a(n * d), qkv(n * 3 * d), o(n * d), proj(n * d);
  std::vector<float> ff(n * dm.ff);
  std::vector<float> probs(dm.max_seq);
  cache.tokens.insert(cache.tokens.end(), tokens.begin(), tokens.end());
  for (std::size_t i = 0; i < n; ++i) embed_row(dm, params, off, cache.tokens, first + i, &x[i * d]);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dm.head_dim));
  for (std::size_t l = 0; l < dm.layers; ++l) {
    const LayerOffsets& lo = off.layers[l];
    for (std::size_t i = 0; i < n; ++i) {
      kernels::layernorm_row(&x[i * d], d, params + lo.ln1_g, params + lo.ln1_b, &a[i * d]);
    }
    kernels::matmul_rows(a.data(), n, d, params + lo.w_qkv, 3 * d, params + lo.b_qkv, qkv.data());
    float* kc = cache.k[l].data();
    float* vc = cache.v[l].data();
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(&qkv[i * 3 * d + d], d, kc + (first + i) * d);
      std::copy_n(&qkv[i * 3 * d + 2 * d], d, vc + (first + i) * d);
    }
    const bool probe = observer && observer->wants_attention(static_cast<int>(l));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t pos = first + i;
      for (std::size_t h = 0; h < dm.heads; ++h) {
        const std::size_t off_h = h * dm.head_dim;
        kernels::attend_row(&qkv[i * 3 * d + off_h], kc + off_h, vc + off_h, pos + 1, d,
                            dm.head_dim, scale, probs.data(), &o[i * d + off_h]);
        if (probe) {
          observer->attention(static_cast<int>(l), pos, static_cast<int>(h),
                              std::span<const float>(probs.data(), pos + 1));
        }
      }
    }
    kernels::matmul_rows(o.data(), n, d, params + lo.w_o, d, params + lo.b_o, proj.data());
    for (std::size_t i = 0; i < n * d; ++i) x[i] += proj[i];
    for (std::size_t i = 0; i < n; ++i) {
      kernels::layernorm_row(&x[i * d], d, params + lo.ln2_g, params + lo.ln2_b, &a[i * d]);
    }
    kernels::matmul_rows(a.data(), n, d, params + lo.w_fc, dm.ff, params + lo.b_fc, ff.data());
    for (float& v : ff) v = kernels::gelu(v);
    kernels::matmul_rows(ff.data(), n, dm.ff, params + lo.w_proj, d, params + lo.b_proj, proj.data());
    for (std::size_t i = 0; i < n * d; ++i) x[i] += proj[i];
    if (observer) observer->after_block(static_cast<int>(l), first, n, x.data());
  }
  cache.length = first + n;
  return x;
}

std::vector<float> Engine::logits(const float* x, std::size_t rows) const {
  const std::size_t d = dims.d;
  std::vector<float> z(rows * d), out(rows * dims.vocab);
  for (std::size_t i = 0; i < rows; ++i) {
    kernels::layernorm_row(x + i * d, d, params + off.lnf_g, params + off.lnf_b, &z[i * d]);
  }
  kernels::matmul_rows(z.data(), rows, d, params + off.w_head, dims.vocab, nullptr, out.data());
  return out;
}

}  // namespace detail

using detail::Engine;

void validate_config(const ModelConfig& c) {
  if (c.num_layers < 2) throw ConfigError("num_layers must be >= 2 (decomposition needs two bands)");
  if (c.hidden_size < 1) throw ConfigError("hidden_size must be positive");
  if (c.num_heads < 1) throw ConfigError("num_heads must be positive");
  if (c.hidden_size % c.num_heads != 0) {
    throw ConfigError("hidden_size not divisible by num_heads (" + std::to_string(c.hidden_size) +
                      " % " + std::to_string(c.num_heads) + ")");
  }
  if (c.vocab_size < 1) throw ConfigError("vocab_size must be positive");
  if (c.max_seq_len < 1) throw ConfigError("max_seq_len must be positive");
}

Model::Model(ModelConfig config) : config_(config) {
  if (config_.vocab_size == 0) config_.vocab_size = vocab::size();
  validate_config(config_);
  const auto off = detail::build_layout(config_, &layout_);
  params_.assign(off.total, 0.0f);

  std::mt19937_64 rng(config_.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  const float std_base = 0.02f;
  const float std_resid = std_base / std::sqrt(2.0f * static_cast<float>(config_.num_layers));
  for (const auto& slot : layout_) {
    auto t = std::span<float>(params_).subspan(slot.offset, slot.size());
    const bool gain = slot.name.ends_with(".g") || slot.name == "emb_taps";
    const bool bias = slot.name.ends_with(".b") || slot.name.find(".b_") != std::string::npos;
    if (gain) {
      std::fill(t.begin(), t.end(), 1.0f);
    } else if (!bias) {
      const bool resid = slot.name.ends_with("w_o") || slot.name.ends_with("w_proj");
      const float s = resid ? std_resid : std_base;
      for (float& v : t) v = s * normal(rng);
    }
  }
}

Model init_model(const ModelConfig& config) { return Model(config); }

std::span<float> Model::tensor(std::string_view name) {
  for (const auto& s : layout_) {
    if (s.name == name) return std::span<float>(params_).subspan(s.offset, s.size());
  }
  throw ConfigError("no tensor named '" + std::string(name) + "'");
}

std::span<const float> Model::tensor(std::string_view name) const {
  return const_cast<Model*>(this)->tensor(name);
}

std::string Model::checksum() const {
  Fnv1a h;
  const int cfg[] = {config_.num_layers, config_.hidden_size, config_.num_heads,
                     config_.vocab_size, config_.max_seq_len};
  h.update_values(std::span<const int>(cfg));
  h.update_values(std::span<const float>(params_));
  return h.hex();
}

BackboneInfo Model::info() const {
  return {config_.num_layers, config_.hidden_size, checksum()};
}

namespace {

class TapObserver final : public detail::ForwardObserver {
 public:
  TapObserver(std::span<const std::size_t> positions, std::size_t layers, std::size_t d)
      : positions_(positions), d_(d) {
    per_layer.assign(layers, {});
  }
  void after_block(int layer, std::size_t first, std::size_t, float* x) override {
    auto& out = per_layer[static_cast<std::size_t>(layer)];
    for (std::size_t p : positions_) {
      const float* row = x + (p - first) * d_;
      out.emplace_back(row, row + d_);
    }
  }
  std::vector<std::vector<std::vector<float>>> per_layer;

 private:
  std::span<const std::size_t> positions_;
  std::size_t d_;
};

}  // namespace

ActivationTrace Model::forward_teacher_forced(std::span<const TokenId> tokens,
                                              std::span<const std::size_t> tapped_positions) const {
  if (tokens.empty()) throw ConfigError("teacher forcing needs a non-empty sequence");
  if (tokens.size() > static_cast<std::size_t>(config_.max_seq_len)) {
    throw ConfigError("sequence too long: " + std::to_string(tokens.size()) + " > max_seq_len " +
                      std::to_string(config_.max_seq_len));
  }
  for (std::size_t i = 0; i < tapped_positions.size(); ++i) {
    if (tapped_positions[i] >= tokens.size()) {
      throw ConfigError("tap position " + std::to_string(tapped_positions[i]) +
                        " out of range for sequence of length " + std::to_string(tokens.size()));
    }
    if (i && tapped_positions[i] <= tapped_positions[i - 1]) {
      throw ConfigError("tap positions must be strictly increasing");
    }
  }
  const auto off = detail::build_layout(config_);
  const Engine engine{config_, params_.data(), off, detail::dims_of(config_)};
  auto cache = detail::make_cache(engine.dims);
  TapObserver taps(tapped_positions, engine.dims.layers, engine.dims.d);
  engine.forward_chunk(tokens, cache, &taps);
  ActivationTrace trace;
  trace.per_layer = std::move(taps.per_layer);
  trace.tapped_positions.assign(tapped_positions.begin(), tapped_positions.end());
  trace.token_ids.assign(tokens.begin(), tokens.end());
  return trace;
}

std::vector<std::vector<float>> Model::logits(std::span<const TokenId> tokens) const {
  const auto off = detail::build_layout(config_);
  const Engine engine{config_, params_.data(), off, detail::dims_of(config_)};
  auto cache = detail::make_cache(engine.dims);
  const auto x = engine.forward_chunk(tokens, cache, nullptr);
  const auto flat = engine.logits(x.data(), tokens.size());
  std::vector<std::vector<float>> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i * engine.dims.vocab),
                     flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * engine.dims.vocab));
  }
  return out;
}

namespace {

// Applies a compiled plan during generation and records what it did.
class SteeringObserver final : public detail::ForwardObserver {
 public:
  SteeringObserver(const SteeringPlan* plan, std::size_t d, bool capture, GenerationTrace& trace)
      : plan_(plan), d_(d), capture_(capture), trace_(trace) {}

  // Prefill: prompt_len rows; decode: one row whose input is `decoded`.
  void begin_prefill(std::size_t prompt_len) {
    prefill_ = true;
    prompt_len_ = prompt_len;
  }
  void begin_step(int step, std::optional<TokenId> decoded, std::span<const TokenId> previous) {
    prefill_ = false;
    step_ = step;
    decoded_ = decoded;
    previous_ = previous;
  }

  void after_block(int layer, std::size_t first, std::size_t rows, float* x) override {
    std::vector<std::vector<float>> pre;
    if (capture_) {
      for (std::size_t i = 0; i < rows; ++i) pre.emplace_back(x + i * d_, x + (i + 1) * d_);
    }
    if (plan_) {
      for (const auto& band : plan_->bands) {
        if (!band.covers(layer)) continue;
        const auto& delta = band.vector->deltas[static_cast<std::size_t>(layer)];
        if (band.selector.kind == SelectorKind::kQueryMarkerPositions) {
          if (!prefill_) continue;
          for (std::size_t p : plan_->resolved_query_positions) {
            if (p < first || p >= first + rows) continue;
            apply(x + (p - first) * d_, delta, band.lambda, -1, p, layer);
          }
          continue;
        }
        // Decode-time selectors act on the row that produces the next token.
        const bool at_prompt_end = prefill_;
        const std::size_t pos = first + rows - 1;
        const std::optional<TokenId> token = prefill_ ? std::nullopt : decoded_;
        const StepContext ctx{prefill_ ? std::span<const TokenId>() : previous_, at_prompt_end};
        if (select_step(band.selector, token, ctx)) {
          apply(x + (rows - 1) * d_, delta, band.lambda, prefill_ ? 0 : step_, pos, layer);
        }
      }
    }
    if (capture_) {
      for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t pos = first + i;
        const int step = prefill_ ? (pos + 1 == prompt_len_ ? 0 : -1) : step_;
        trace_.captured.push_back({step, pos, layer, std::move(pre[i]),
                                   std::vector<float>(x + i * d_, x + (i + 1) * d_)});
      }
    }
  }

 private:
  void apply(float* row, const std::vector<float>& delta, float lambda, int step, std::size_t pos,
             int layer) {
    steer_hidden_inplace(std::span<float>(row, d_), delta, lambda);
    trace_.per_step_interventions.push_back({step, pos, layer, lambda});
  }

  const SteeringPlan* plan_;
  std::size_t d_;
  bool capture_;
  GenerationTrace& trace_;
  bool prefill_ = true;
  std::size_t prompt_len_ = 0;
  int step_ = 0;
  std::optional<TokenId> decoded_;
  std::span<const TokenId> previous_;
};

// Greedy picks the lowest id among maxima; otherwise inverse-CDF sampling.
TokenId choose(std::span<const float> logits, float temperature, std::mt19937_64& rng) {
  if (temperature <= 0.0f) {
    return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  const float max_logit = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = std::exp(static_cast<double>(logits[i] - max_logit) / temperature);
    total += w[i];
  }
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(w.size() - 1);
}

double log_softmax_at(std::span<const float> logits, TokenId id) {
  const float max_logit = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (float v : logits) total += std::exp(static_cast<double>(v - max_logit));
  return static_cast<double>(logits[static_cast<std::size_t>(id)] - max_logit) - std::log(total);
}

}  // namespace

GenerationTrace Model::generate(std::span<const TokenId> prompt, const DecodeParams& params,
                                const SteeringPlan* plan, const GenerateOptions& options) const {
  if (prompt.empty()) throw ConfigError("generate needs a non-empty prompt");
  if (params.temperature < 0.0f || !std::isfinite(params.temperature)) {
    throw ConfigError("temperature must be finite and >= 0");
  }
  if (params.max_new_tokens < 1) throw ConfigError("max_new_tokens must be positive");
  if (prompt.size() > static_cast<std::size_t>(config_.max_seq_len)) {
    throw ConfigError("prompt longer than max_seq_len");
  }
  if (plan) {
    check_plan(*plan, config_.num_layers, config_.hidden_size);
    for (std::size_t p : plan->resolved_query_positions) {
      if (p >= prompt.size()) throw ConfigError("plan query position beyond the prompt");
    }
  }
  const auto off = detail::build_layout(config_);
  const Engine engine{config_, params_.data(), off, detail::dims_of(config_)};
  auto cache = detail::make_cache(engine.dims);
  std::mt19937_64 rng(params.seed);

  GenerationTrace trace;
  SteeringObserver observer(plan, engine.dims.d, options.capture_states, trace);
  observer.begin_prefill(prompt.size());
  auto x = engine.forward_chunk(prompt, cache, &observer);
  const float* last = x.data() + (prompt.size() - 1) * engine.dims.d;
  for (int step = 0;; ++step) {
    const auto logits = engine.logits(last, 1);
    const TokenId next = choose(logits, params.temperature, rng);
    trace.tokens.push_back(next);
    trace.logprobs.push_back(log_softmax_at(logits, next));
    if (next == vocab::eos() || static_cast<int>(trace.tokens.size()) >= params.max_new_tokens ||
        cache.length >= engine.dims.max_seq) {
      break;
    }
    const TokenId input[] = {next};
    observer.begin_step(step + 1, next,
                        std::span<const TokenId>(trace.tokens.data(), trace.tokens.size() - 1));
    x = engine.forward_chunk(input, cache, &observer);
    last = x.data();
  }
  return trace;
}

std::vector<float> Model::attention_from_last(std::span<const TokenId> tokens, int layer) const {
  if (layer < 0 || layer >= config_.num_layers) throw ConfigError("attention layer out of range");
  if (tokens.empty()) throw ConfigError("attention needs a non-empty sequence");
  struct Probe final : detail::ForwardObserver {
    int layer;
    std::size_t last;
    std::vector<float> sum;
    bool wants_attention(int l) const override { return l == layer; }
    void attention(int, std::size_t pos, int, std::span<const float> probs) override {
      if (pos != last) return;
      for (std::size_t j = 0; j < probs.size(); ++j) sum[j] += probs[j];
    }
  } probe;
  probe.layer = layer;
  probe.last = tokens.size() - 1;
  probe.sum.assign(tokens.size(), 0.0f);
  const auto off = detail::build_layout(config_);
  const Engine engine{config_, params_.data(), off, detail::dims_of(config_)};
  auto cache = detail::make_cache(engine.dims);
  engine.forward_chunk(tokens, cache, &probe);
  for (float& v : probe.sum) v /= static_cast<float>(config_.num_heads);
  return probe.sum;
}

std::size_t scene_prefix_length(std::span<const TokenId> tokens) {
  auto it = std::find(tokens.begin(), tokens.end(), vocab::query());
  return static_cast<std::size_t>(it - tokens.begin());
}

std::vector<float> relative_attention(const Model& model, std::span<const TokenId> tokens_query,
                                      std::span<const TokenId> tokens_generic, int layer,
                                      float eps) {
  const std::size_t prefix = scene_prefix_length(tokens_query);
  if (prefix == 0 || prefix != scene_prefix_length(tokens_generic) ||
      !std::equal(tokens_query.begin(), tokens_query.begin() + static_cast<std::ptrdiff_t>(prefix),
                  tokens_generic.begin())) {
    throw MismatchError("query and generic prompts do not share the same scene prefix");
  }
  auto normalised = [&](std::span<const TokenId> tokens) {
    auto att = model.attention_from_last(tokens, layer);
    att.resize(prefix);
    float total = 0.0f;
    for (float v : att) total += v;
    for (float& v : att) v /= total;
    return att;
  };
  const auto q = normalised(tokens_query);
  const auto g = normalised(tokens_generic);
  std::vector<float> out(prefix);
  for (std::size_t i = 0; i < prefix; ++i) out[i] = (q[i] + eps) / (g[i] + eps);
  return out;
}

static_assert(std::endian::native == std::endian::little,
              "checkpoints are written as little-endian float32");

namespace {
constexpr std::string_view kCheckpointMagic = "CSTEER-TB/1";
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  const auto& c = model.config();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& s : model.layout()) {
    tensors.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}, {"offset", s.offset}});
  }
  nlohmann::json header = {
      {"config",
       {{"num_layers", c.num_layers}, {"hidden_size", c.hidden_size}, {"num_heads", c.num_heads},
        {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len}, {"seed", c.seed}}},
      {"tensors", tensors},
      {"checksum", model.checksum()},
  };
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  const auto params = model.parameters();
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size_bytes()));
  if (!out) throw Error("failed writing checkpoint '" + path.string() + "'");
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint '" + path.string() + "'");
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) {
    throw ParseError("'" + path.string() + "' is not a " + std::string(kCheckpointMagic) + " checkpoint");
  }
  std::getline(in, header_line);
  ModelConfig c;
  std::string checksum;
  try {
    const auto header = nlohmann::json::parse(header_line);
    const auto& jc = header.at("config");
    c.num_layers = jc.at("num_layers").get<int>();
    c.hidden_size = jc.at("hidden_size").get<int>();
    c.num_heads = jc.at("num_heads").get<int>();
    c.vocab_size = jc.at("vocab_size").get<int>();
    c.max_seq_len = jc.at("max_seq_len").get<int>();
    c.seed = jc.at("seed").get<std::uint64_t>();
    checksum = header.at("checksum").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("corrupt checkpoint header: " + std::string(e.what()));
  }
  Model model(c);
  auto params = model.mutable_parameters();
  in.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(params.size_bytes()));
  if (in.gcount() != static_cast<std::streamsize>(params.size_bytes())) {
    throw ParseError("checkpoint parameter payload truncated");
  }
  if (model.checksum() != checksum) throw MismatchError("checkpoint checksum mismatch");
  return model;
}

}  // namespace csteer
