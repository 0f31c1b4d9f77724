#include "doctest.h"

#include <nlohmann/json.hpp>

#include "csteer/error.hpp"
#include "csteer/steering.hpp"
#include "csteer/task.hpp"

using namespace csteer;

namespace {

std::shared_ptr<ContextualVector> unit_vector(int layers, int d) {
  auto v = std::make_shared<ContextualVector>();
  v->deltas.assign(static_cast<std::size_t>(layers), std::vector<float>(static_cast<std::size_t>(d), 1.0f));
  v->sample_count = 1;
  v->dataset_id = "unit";
  return v;
}

// Independent scan: every index of a "[", digit, "]" triple inside [begin, end).
std::vector<std::size_t> scan_marker_pieces(const Tokens& t, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> out;
  for (std::size_t i = begin; i + 2 < end; ++i) {
    if (t[i] == vocab::marker_open() && vocab::number_value(t[i + 1]) > 0 &&
        t[i + 2] == vocab::marker_close()) {
      out.insert(out.end(), {i, i + 1, i + 2});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("steer_hidden is h + lambda * delta") {
  CHECK(steer_hidden(std::vector<float>{1, 2}, std::vector<float>{3, 4}, 0.5f) ==
        std::vector<float>{2.5f, 4.0f});
  CHECK(steer_hidden(std::vector<float>{0, 0, 0}, std::vector<float>{1, -2, 3}, 1.0f) ==
        std::vector<float>{1, -2, 3});
  const std::vector<float> h{0.1f, -7.25f, 3e-9f};
  CHECK(steer_hidden(h, std::vector<float>{5, 6, 7}, 0.0f) == h);
  CHECK_THROWS_AS(steer_hidden(h, std::vector<float>{1, 2}, 1.0f), MismatchError);
}

TEST_CASE("steering composes additively within float tolerance") {
  const std::vector<float> h{0.3f, -1.7f, 2.2f, 10.0f};
  const std::vector<float> delta{0.11f, 0.9f, -3.3f, 1e-3f};
  const auto twice = steer_hidden(steer_hidden(h, delta, 0.4f), delta, 0.85f);
  const auto once = steer_hidden(h, delta, 1.25f);
  for (std::size_t i = 0; i < h.size(); ++i) {
    CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-6));
  }
}

TEST_CASE("compile_plan resolves all three pieces of a query marker") {
  const Tokens ctx = vocab::tokenize("<bos> <img> [ 1 ] red cube left ; </img> Q: color [ 1 ] ? Ans:");
  const QuerySpan q{11, 16};
  const auto plan = compile_plan({{0, 1, 1.0f, SelectorKind::kQueryMarkerPositions, "v", nullptr}},
                                 ctx, q, default_marker_vocabulary(), 4);
  CHECK(plan.resolved_query_positions == std::vector<std::size_t>{12, 13, 14});
}

TEST_CASE("compile_plan matches an independent scan on rendered examples") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SceneParams p;
    p.max_objects = 5;
    for (auto kind : {QuestionKind::kMC, QuestionKind::kOE}) {
      const auto ex = render_example(sample_scene(seed, p), Variant::kReferred, kind, seed);
      const auto plan =
          compile_plan({{0, 1, 1.0f, SelectorKind::kQueryMarkerPositions, "v", nullptr}}, ex.context,
                       {ex.query_begin, ex.query_end}, default_marker_vocabulary(), 4);
      CHECK(plan.resolved_query_positions == scan_marker_pieces(ex.context, ex.query_begin, ex.query_end));
    }
  }
}

TEST_CASE("compile_plan without query markers is inert but valid") {
  const Tokens ctx = vocab::tokenize("<bos> Q: color ? Ans:");
  const auto plan = compile_plan({{0, 2, 1.0f, SelectorKind::kQueryMarkerPositions, "v", nullptr}},
                                 ctx, {2, 4}, default_marker_vocabulary(), 4);
  CHECK(plan.resolved_query_positions.empty());
  CHECK(plan.bands.size() == 1);
}

TEST_CASE("compile_plan validation") {
  const Tokens ctx = vocab::tokenize("<bos> Q: color ? Ans:");
  const QuerySpan q{2, 4};
  CHECK_THROWS_AS(compile_plan({{4, 5, 1.0f, SelectorKind::kAllDecodeSteps, "v", nullptr}}, ctx, q,
                               default_marker_vocabulary(), 4),
                  ConfigError);
  CHECK_THROWS_AS(compile_plan({{0, 1, 1.0f, SelectorKind::kMarkerDecodeSteps, "v", nullptr}}, ctx, q,
                               {}, 4),
                  ConfigError);
  CHECK_THROWS_AS(compile_plan({{0, 1, NAN, SelectorKind::kAllDecodeSteps, "v", nullptr}}, ctx, q,
                               default_marker_vocabulary(), 4),
                  ConfigError);
  // Two decode-time bands on the same layer are ambiguous.
  CHECK_THROWS_AS(compile_plan({{0, 2, 1.0f, SelectorKind::kAllDecodeSteps, "v", nullptr},
                                {1, 3, 1.0f, SelectorKind::kMarkerDecodeSteps, "v", nullptr}},
                               ctx, q, default_marker_vocabulary(), 4),
                  ConfigError);
  CHECK_NOTHROW(compile_plan({{0, 2, 1.0f, SelectorKind::kQueryMarkerPositions, "v", nullptr},
                              {1, 3, 1.0f, SelectorKind::kMarkerDecodeSteps, "v", nullptr}},
                             ctx, q, default_marker_vocabulary(), 4));
}

TEST_CASE("select_step semantics") {
  const TokenSelector all{SelectorKind::kAllDecodeSteps, {}};
  const TokenSelector marker{SelectorKind::kMarkerDecodeSteps, default_marker_vocabulary()};
  const TokenSelector last{SelectorKind::kLastTokenOnly, {}};
  CHECK(select_step(all, vocab::id("the"), {}));
  CHECK(select_step(all, std::nullopt, {{}, true}));
  CHECK_FALSE(select_step(marker, vocab::id("the"), {}));
  CHECK(select_step(last, std::nullopt, {{}, true}));
  CHECK_FALSE(select_step(last, vocab::id("A"), {}));

  // Decoding "describe [ 2 ] red": exactly the three marker pieces are selected.
  const Tokens decoded = vocab::tokenize("describe [ 2 ] red 2 ]");
  int hits = 0;
  std::vector<bool> selected;
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    const StepContext ctx{std::span<const TokenId>(decoded.data(), i), false};
    const bool s = select_step(marker, decoded[i], ctx);
    selected.push_back(s);
    hits += s;
  }
  CHECK(hits == 3);
  CHECK(selected == std::vector<bool>{false, true, true, true, false, false, false});
}

TEST_CASE("decomposed bands follow the ceil(L/3) and ceil(L/2) split") {
  for (int L : {2, 3, 4, 6, 7, 12}) {
    const auto bands = decomposed_bands(L, unit_vector(L, 4), 0.5f, 2.0f);
    REQUIRE(bands.size() == 2);
    CHECK(bands[0].layer_lo == 0);
    CHECK(bands[0].layer_hi == (L + 2) / 3);
    CHECK(bands[0].selector == SelectorKind::kQueryMarkerPositions);
    CHECK(bands[0].lambda == 0.5f);
    CHECK(bands[1].layer_hi == L);
    CHECK(bands[1].layer_lo == L - (L + 1) / 2);
    CHECK(bands[1].selector == SelectorKind::kMarkerDecodeSteps);
    CHECK(bands[1].lambda == 2.0f);
  }
}

TEST_CASE("check_plan rejects mismatched vectors") {
  const Tokens ctx = vocab::tokenize("<bos> Q: color ? Ans:");
  auto plan = compile_plan({{0, 1, 1.0f, SelectorKind::kAllDecodeSteps, "v", unit_vector(4, 8)}}, ctx,
                           {2, 4}, default_marker_vocabulary(), 4);
  CHECK_NOTHROW(check_plan(plan, 4, 8));
  CHECK_THROWS_AS(check_plan(plan, 4, 16), MismatchError);
  CHECK_THROWS_AS(check_plan(plan, 3, 8), MismatchError);
}

TEST_CASE("plan and band documents round-trip") {
  auto v = unit_vector(4, 3);
  const Tokens ctx = vocab::tokenize("<bos> Q: color [ 3 ] ? Ans:");
  const auto bands = decomposed_bands(4, v, 0.25f, 1.5f);
  const auto plan = compile_plan(bands, ctx, {2, 7}, default_marker_vocabulary(), 4);
  const VectorResolver resolve = [&](const std::string&) { return v; };

  const auto j = plan_to_json(plan);
  const auto back = plan_from_json(nlohmann::json::parse(j.dump()), resolve);
  CHECK(plan_to_json(back) == j);
  CHECK(back.resolved_query_positions == plan.resolved_query_positions);
  REQUIRE(back.bands.size() == 2);
  CHECK(back.bands[1].selector.marker_token_set == plan.bands[1].selector.marker_token_set);
  CHECK(back.bands[0].vector == v);

  const auto bj = bands_to_json(bands);
  CHECK(bands_to_json(bands_from_json(bj, resolve)) == bj);
  CHECK_THROWS_AS(bands_from_json(nlohmann::json::parse(R"({"bands":[{"layers":[0]}]})")), ParseError);
}
