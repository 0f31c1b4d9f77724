#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "csteer/error.hpp"
#include "csteer/model.hpp"
#include "csteer/task.hpp"

using namespace csteer;

namespace {

ModelConfig small(std::uint64_t seed = 7) {
  ModelConfig c;
  c.num_layers = 3;
  c.hidden_size = 32;
  c.num_heads = 4;
  c.max_seq_len = 96;
  c.seed = seed;
  return c;
}

Tokens prompt_for(std::uint64_t seed, QuestionKind kind = QuestionKind::kOE) {
  SceneParams p;
  return render_example(sample_scene(seed, p), Variant::kReferred, kind, seed).context;
}

std::shared_ptr<ContextualVector> random_vector(const Model& m, std::uint64_t seed, float scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal;
  auto v = std::make_shared<ContextualVector>();
  for (int l = 0; l < m.config().num_layers; ++l) {
    std::vector<float> row(static_cast<std::size_t>(m.config().hidden_size));
    for (float& x : row) x = scale * normal(rng);
    v->deltas.push_back(row);
  }
  v->sample_count = 1;
  v->backbone_id = m.checksum();
  return v;
}

SteeringPlan plan_for(const Model& m, const Tokens& prompt, std::vector<BandConfig> bands) {
  return compile_plan(bands, prompt, {0, prompt.size()}, default_marker_vocabulary(),
                      m.config().num_layers);
}

}  // namespace

TEST_CASE("init is deterministic in the seed") {
  ModelConfig c;
  c.seed = 7;
  const Model a(c), b(c);
  CHECK(a.checksum() == b.checksum());
  c.seed = 8;
  CHECK(Model(c).checksum() != a.checksum());
}

TEST_CASE("invalid configs name the violated invariant") {
  ModelConfig c;
  c.hidden_size = 130;
  CHECK_THROWS_WITH_AS(Model{c}, doctest::Contains("hidden_size not divisible"), ConfigError);
  c = ModelConfig{};
  c.num_layers = 1;
  CHECK_THROWS_WITH_AS(Model{c}, doctest::Contains("num_layers"), ConfigError);
}

TEST_CASE("minimal two-layer model exposes two taps") {
  ModelConfig c;
  c.num_layers = 2;
  c.hidden_size = 32;
  c.num_heads = 2;
  const Model m(c);
  CHECK(m.info().num_layers == 2);
  const Tokens t = prompt_for(1);
  const std::size_t last = t.size() - 1;
  const auto trace = m.forward_teacher_forced(t, std::span(&last, 1));
  CHECK(trace.per_layer.size() == 2);
  CHECK(trace.per_layer[1][0].size() == 32);
}

TEST_CASE("multi-position taps agree with single-position calls") {
  const Model m(small());
  const Tokens t = vocab::tokenize("<bos> <img> [ 1 ] red cube left ; </img>");
  REQUIRE(t.size() == 10);
  const std::vector<std::size_t> both{3, 7};
  const auto trace = m.forward_teacher_forced(t, both);
  REQUIRE(trace.per_layer.size() == 3);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto single = m.forward_teacher_forced(t, std::span(&both[k], 1));
    for (int l = 0; l < 3; ++l) {
      REQUIRE(trace.per_layer[l].size() == 2);
      CHECK(trace.per_layer[l][k] == single.per_layer[l][0]);
    }
  }
  CHECK(m.forward_teacher_forced(t, both).per_layer == trace.per_layer);
}

TEST_CASE("teacher forcing validates its inputs") {
  const Model m(small());
  const Tokens t = vocab::tokenize("<bos> red cube");
  const std::vector<std::size_t> out_of_range{3};
  const std::vector<std::size_t> unordered{2, 1};
  CHECK_THROWS_AS(m.forward_teacher_forced(t, out_of_range), ConfigError);
  CHECK_THROWS_AS(m.forward_teacher_forced(t, unordered), ConfigError);
  const Tokens long_seq(97, vocab::bos());
  CHECK_THROWS_AS(m.forward_teacher_forced(long_seq, {}), ConfigError);
  const Tokens bad{vocab::bos(), 9999};
  CHECK_THROWS_AS(m.forward_teacher_forced(bad, {}), ConfigError);
}

TEST_CASE("greedy generation is reproducible and lambda zero is the identity") {
  const Model m(small());
  const auto v = random_vector(m, 3, 1.0f);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tokens prompt = prompt_for(s);
    DecodeParams dp;
    dp.max_new_tokens = 12;
    dp.temperature = s % 2 ? 1.0f : 0.0f;
    dp.seed = s;
    const auto base = m.generate(prompt, dp);
    CHECK(m.generate(prompt, dp).tokens == base.tokens);
    const auto zero = plan_for(m, prompt, {{0, 3, 0.0f, SelectorKind::kAllDecodeSteps, "v", v}});
    CHECK(m.generate(prompt, dp, &zero).tokens == base.tokens);
    const SteeringPlan empty;
    CHECK(m.generate(prompt, dp, &empty).tokens == base.tokens);
    for (double lp : base.logprobs) CHECK(std::isfinite(lp));
  }
}

TEST_CASE("an all-steps plan at one layer records one intervention per decoded step") {
  const Model m(small());
  const auto v = random_vector(m, 4, 0.5f);
  const Tokens prompt = prompt_for(2);
  DecodeParams dp;
  dp.max_new_tokens = 9;
  const auto plan = plan_for(m, prompt, {{2, 3, 1.0f, SelectorKind::kAllDecodeSteps, "v", v}});
  const auto trace = m.generate(prompt, dp, &plan);
  REQUIRE(trace.per_step_interventions.size() == trace.tokens.size());
  for (std::size_t i = 0; i < trace.tokens.size(); ++i) {
    CHECK(trace.per_step_interventions[i].layer == 2);
    CHECK(trace.per_step_interventions[i].step == static_cast<int>(i));
    CHECK(trace.per_step_interventions[i].position == prompt.size() - 1 + i);
  }
}

TEST_CASE("captured steering site equals h + lambda * delta exactly") {
  const Model m(small());
  const auto v = random_vector(m, 5, 0.3f);
  const Tokens prompt = prompt_for(3);
  DecodeParams dp;
  dp.max_new_tokens = 4;
  const float lambda = 0.75f;
  const auto plan = plan_for(m, prompt, {{1, 2, lambda, SelectorKind::kLastTokenOnly, "v", v}});
  const auto trace = m.generate(prompt, dp, &plan, {true});
  REQUIRE(trace.per_step_interventions.size() == 1);
  const auto& rec = trace.per_step_interventions[0];
  int sites = 0;
  for (const auto& c : trace.captured) {
    if (c.layer == rec.layer && c.position == rec.position) {
      ++sites;
      CHECK(c.post == steer_hidden(c.pre, v->deltas[1], lambda));
    } else {
      CHECK(c.post == c.pre);
    }
  }
  CHECK(sites == 1);
}

TEST_CASE("decoding states match teacher forcing on the same tokens") {
  const Model m(small());
  const Tokens prompt = prompt_for(4);
  DecodeParams dp;
  dp.max_new_tokens = 10;
  dp.temperature = 1.0f;
  dp.seed = 11;
  const auto trace = m.generate(prompt, dp, nullptr, {true});
  Tokens full = prompt;
  full.insert(full.end(), trace.tokens.begin(), trace.tokens.end() - 1);
  std::vector<std::size_t> all(full.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto forced = m.forward_teacher_forced(full, all);
  REQUIRE(trace.captured.size() == full.size() * 3);
  for (const auto& c : trace.captured) {
    CHECK(c.post == forced.per_layer[c.layer][c.position]);
  }
}

TEST_CASE("logits are consistent with greedy decoding") {
  const Model m(small());
  const Tokens prompt = prompt_for(5);
  DecodeParams dp;
  dp.max_new_tokens = 1;
  const auto trace = m.generate(prompt, dp);
  const auto logits = m.logits(prompt).back();
  const auto argmax = std::max_element(logits.begin(), logits.end()) - logits.begin();
  CHECK(trace.tokens[0] == argmax);
}

TEST_CASE("relative attention of identical prompts is all ones") {
  const Model m(small());
  const Tokens t = prompt_for(6);
  for (int layer = 0; layer < 3; ++layer) {
    const auto map = relative_attention(m, t, t, layer);
    CHECK(map.size() == scene_prefix_length(t));
    for (float x : map) CHECK(x == 1.0f);
  }
}

TEST_CASE("uniform attention gives an all-ones relative map for any query") {
  Model m(small());
  // Zero the query projection: every score is 0, so attention is uniform.
  auto w = m.tensor("h1.attn.w_qkv");
  auto b = m.tensor("h1.attn.b_qkv");
  const std::size_t d = 32;
  for (std::size_t r = 0; r < d; ++r) std::fill_n(w.begin() + static_cast<std::ptrdiff_t>(r * 3 * d), d, 0.0f);
  std::fill_n(b.begin(), d, 0.0f);

  SceneParams p;
  const Scene s = sample_scene(12, p);
  const auto q = render_example(s, Variant::kReferred, QuestionKind::kMC, 1).context;
  const auto g = render_example(s, Variant::kReferred, QuestionKind::kOE, 1).context;
  const auto map = relative_attention(m, q, g, 1);
  for (float x : map) CHECK(x == doctest::Approx(1.0f).epsilon(1e-5));
}

TEST_CASE("relative attention rejects mismatched prefixes") {
  const Model m(small());
  CHECK_THROWS_AS(relative_attention(m, prompt_for(1), prompt_for(2), 0), MismatchError);
}

TEST_CASE("checkpoint round-trip preserves parameters and checksum") {
  const Model m(small(21));
  const auto path = std::filesystem::temp_directory_path() / "csteer_unit_model.ckpt";
  save_checkpoint(m, path);
  const Model back = load_checkpoint(path);
  CHECK(back.config() == m.config());
  CHECK(back.checksum() == m.checksum());
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 4);
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  std::filesystem::remove(path);
}
