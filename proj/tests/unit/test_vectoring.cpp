#include "doctest.h"

#include <cmath>

#include "csteer/error.hpp"
#include "csteer/model.hpp"
#include "csteer/rng.hpp"
#include "csteer/vectoring.hpp"

using namespace csteer;

namespace {

ModelConfig small() {
  ModelConfig c;
  c.num_layers = 3;
  c.hidden_size = 24;
  c.num_heads = 3;
  c.max_seq_len = 128;
  c.seed = 13;
  return c;
}

ReferringExample example(std::uint64_t seed, QuestionKind kind, int objects = 3) {
  SceneParams p;
  p.min_objects = objects;
  p.max_objects = objects;
  return render_example(sample_scene(seed, p), Variant::kReferred, kind, seed);
}

// Brute-force oracle: direct teacher-forced reads and a plain mean.
std::vector<std::vector<double>> oracle_mean(const Model& m, std::span<const ContrastPair> pairs) {
  const auto L = static_cast<std::size_t>(m.config().num_layers);
  const auto d = static_cast<std::size_t>(m.config().hidden_size);
  std::vector<std::vector<double>> mean(L, std::vector<double>(d, 0.0));
  for (const auto& pair : pairs) {
    std::vector<std::vector<float>> hp, hn;
    for (const auto* side : {&pair.positive, &pair.negative}) {
      Tokens seq = side->context;
      for (TokenId t : side->answer) seq.push_back(t);
      const std::vector<std::size_t> tap{seq.size() - 1};
      const auto trace = m.forward_teacher_forced(seq, tap);
      auto& dst = side == &pair.positive ? hp : hn;
      for (const auto& layer : trace.per_layer) dst.push_back(layer[0]);
    }
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t i = 0; i < d; ++i) {
        mean[l][i] += (static_cast<double>(hp[l][i]) - hn[l][i]) / static_cast<double>(pairs.size());
      }
    }
  }
  return mean;
}

double relative_error(const std::vector<float>& got, const std::vector<double>& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += (got[i] - want[i]) * (got[i] - want[i]);
    den += want[i] * want[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
}

std::vector<JudgedRollout> corrupted_rollouts(const ReferringExample& ex, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<JudgedRollout> out;
  while (static_cast<int>(out.size()) < count) {
    Tokens r = corrupt_response(ex, {0.6, 0.6}, rng);
    const auto s = judge_score(ex, r);
    if (s.tenths() <= 6) out.push_back(make_judged(r, s));
  }
  return out;
}

}  // namespace

TEST_CASE("sample_rollouts returns n judged samples") {
  const Model m(small());
  const auto ex = example(1, QuestionKind::kOE);
  const auto rollouts = sample_rollouts(m, ex, 8, 1.0f, 5);
  REQUIRE(rollouts.size() == 8);
  for (const auto& r : rollouts) {
    CHECK(r.score == judge_score(ex, r.response));
    CHECK(r.kept_as_negative == (r.score.tenths() <= 6));
  }
  CHECK(sample_rollouts(m, ex, 8, 1.0f, 5).front().response == rollouts.front().response);
  CHECK_THROWS_AS(sample_rollouts(m, ex, 8, 0.0f, 5), ConfigError);
  CHECK_THROWS_AS(sample_rollouts(m, ex, 0, 1.0f, 5), ConfigError);
}

TEST_CASE("an untrained backbone's rollouts all score zero and are kept") {
  const Model m(small());
  // The judge on uniformly random token strings is the reference behavior.
  std::mt19937_64 rng(2);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto ex = example(s, QuestionKind::kOE);
    Tokens noise;
    for (int i = 0; i < 20; ++i) noise.push_back(static_cast<TokenId>(uniform_int(rng, 0, vocab::size() - 1)));
    CHECK(judge_score(ex, noise).tenths() == 0);
    for (const auto& r : sample_rollouts(m, ex, 8, 1.0f, s)) {
      CHECK(r.score.tenths() == 0);
      CHECK(r.kept_as_negative);
    }
  }
}

TEST_CASE("RewriteVsRollout makes one pair per kept negative with rewrites scoring at least 0.7") {
  const auto ex = example(7, QuestionKind::kOE, 4);
  auto rollouts = corrupted_rollouts(ex, 3, 1);
  rollouts.push_back(make_judged(ex.ground_truth, GridScore::from_tenths(10)));
  const auto pairs = make_contrast_pairs(VectorDesign::kRewriteVsRollout, ex, rollouts);
  REQUIRE(pairs.size() == 3);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(judge_score(ex, pairs[i].positive.answer).tenths() >= 7);
    CHECK(judge_score(ex, pairs[i].negative.answer).tenths() <= 6);
    CHECK(pairs[i].negative.answer == rollouts[i].response);
    CHECK(pairs[i].positive.context == ex.context);
    CHECK(pairs[i].negative.context == ex.context);
  }
}

TEST_CASE("GtVsRollout drops examples whose rollouts are all correct") {
  const auto ex = example(8, QuestionKind::kOE);
  const std::vector<JudgedRollout> perfect(8, make_judged(ex.ground_truth, GridScore::from_tenths(10)));
  CHECK(make_contrast_pairs(VectorDesign::kGtVsRollout, ex, perfect).empty());
  const auto mixed = corrupted_rollouts(ex, 2, 3);
  const auto pairs = make_contrast_pairs(VectorDesign::kGtVsRollout, ex, mixed);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].positive.answer == ex.ground_truth);
}

TEST_CASE("marker-overlay designs build their negatives from the other renderings") {
  for (auto kind : {QuestionKind::kMC, QuestionKind::kOE}) {
    const auto ex = example(9, kind);
    const auto refer = make_contrast_pairs(VectorDesign::kReferVsNoRefer, ex, {});
    REQUIRE(refer.size() == 1);
    CHECK(find_markers(refer[0].negative.context).empty());
    CHECK(refer[0].positive.answer == ex.ground_truth);
    CHECK(judge_score(ex, refer[0].negative.answer).tenths() < 10);

    const auto shuffle = make_contrast_pairs(VectorDesign::kMatchVsShuffle, ex, {});
    REQUIRE(shuffle.size() == 1);
    CHECK(shuffle[0].negative.context ==
          render_example(ex.scene, Variant::kShuffled, kind, ex.question_seed).context);
  }
  const auto unref = render_example(example(9, QuestionKind::kOE).scene, Variant::kUnreferred,
                                    QuestionKind::kOE, 9);
  CHECK_THROWS_AS(make_contrast_pairs(VectorDesign::kReferVsNoRefer, unref, {}), PreconditionError);
}

TEST_CASE("vector equals the brute-force mean of differences") {
  const Model m(small());
  std::vector<ContrastPair> pairs;
  for (std::uint64_t s = 0; pairs.size() < 2; ++s) {
    const auto ex = example(s, QuestionKind::kOE);
    const auto more = make_contrast_pairs(VectorDesign::kGtVsRollout, ex, corrupted_rollouts(ex, 1, s));
    pairs.insert(pairs.end(), more.begin(), more.end());
  }
  const auto v = build_contextual_vector(m, VectorDesign::kGtVsRollout, pairs, {false, "two"});
  const auto want = oracle_mean(m, pairs);
  REQUIRE(v.num_layers() == 3);
  CHECK(v.sample_count == 2);
  CHECK(v.backbone_id == m.checksum());
  CHECK(v.dataset_id == "two");
  for (std::size_t l = 0; l < 3; ++l) CHECK(relative_error(v.deltas[l], want[l]) <= 1e-6);
}

TEST_CASE("role swap negates the vector exactly and identical sides give zero") {
  const Model m(small());
  std::vector<ContrastPair> pairs, swapped, same;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto ex = example(s, QuestionKind::kMC);
    for (const auto& p : make_contrast_pairs(VectorDesign::kMatchVsShuffle, ex, {})) {
      pairs.push_back(p);
      swapped.push_back({p.negative, p.positive});
      same.push_back({p.positive, p.positive});
    }
  }
  const auto v = build_contextual_vector(m, VectorDesign::kMatchVsShuffle, pairs);
  const auto w = build_contextual_vector(m, VectorDesign::kMatchVsShuffle, swapped);
  const auto z = build_contextual_vector(m, VectorDesign::kMatchVsShuffle, same);
  for (std::size_t l = 0; l < v.deltas.size(); ++l) {
    for (std::size_t i = 0; i < v.deltas[l].size(); ++i) {
      CHECK(w.deltas[l][i] == -v.deltas[l][i]);
      CHECK(z.deltas[l][i] == 0.0f);
    }
  }
}

TEST_CASE("mean pooling averages over every answer token") {
  const Model m(small());
  const auto ex = example(4, QuestionKind::kOE);
  const auto pairs = make_contrast_pairs(VectorDesign::kGtVsRollout, ex, corrupted_rollouts(ex, 1, 4));
  const auto v = build_contextual_vector(m, VectorDesign::kGtVsRollout, pairs, {true, ""});
  std::vector<std::vector<double>> want;
  std::vector<std::vector<double>> side_mean[2];
  int k = 0;
  for (const auto* side : {&pairs[0].positive, &pairs[0].negative}) {
    Tokens seq = side->context;
    seq.insert(seq.end(), side->answer.begin(), side->answer.end());
    for (std::size_t l = 0; l < 3; ++l) {
      std::vector<double> acc(24, 0.0);
      for (std::size_t p = side->context.size(); p < seq.size(); ++p) {
        const auto trace = m.forward_teacher_forced(seq, std::vector<std::size_t>{p});
        for (std::size_t i = 0; i < 24; ++i) acc[i] += trace.per_layer[l][0][i];
      }
      for (double& a : acc) a /= static_cast<double>(side->answer.size());
      side_mean[k].push_back(acc);
    }
    ++k;
  }
  for (std::size_t l = 0; l < 3; ++l) {
    std::vector<double> diff(24);
    for (std::size_t i = 0; i < 24; ++i) diff[i] = side_mean[0][l][i] - side_mean[1][l][i];
    CHECK(relative_error(v.deltas[l], diff) <= 1e-5);
  }
}

TEST_CASE("vector building rejects empty input") {
  const Model m(small());
  CHECK_THROWS_AS(build_contextual_vector(m, VectorDesign::kGtVsRollout, {}), ConfigError);
  const auto ex = example(1, QuestionKind::kOE);
  const std::vector<ContrastPair> bad{{{ex.context, ex.ground_truth}, {ex.context, {}}}};
  CHECK_THROWS_AS(build_contextual_vector(m, VectorDesign::kGtVsRollout, bad), ConfigError);
}
