#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "csteer/vocab.hpp"

namespace csteer {

struct RelationLink {
  TokenId relation = 0;
  int target = 0;  // object id

  bool operator==(const RelationLink&) const = default;
};

struct SceneObject {
  int id = 0;  // marker id, contiguous from 1
  TokenId color = 0;
  TokenId shape = 0;
  TokenId position = 0;
  std::vector<RelationLink> links;
  // Inclusive visibility interval, 1-based frames. Always [1, 1] for images.
  int visible_from = 1;
  int visible_to = 1;

  bool operator==(const SceneObject&) const = default;
};

// A synthetic "image" (frame_count == 1) or "video" (frame_count > 1).
struct Scene {
  std::vector<SceneObject> objects;  // objects[i].id == i + 1
  std::vector<int> display_order;    // object ids in serialization order
  int frame_count = 1;
  std::uint64_t seed = 0;

  bool operator==(const Scene&) const = default;

  const SceneObject& object(int id) const { return objects.at(static_cast<std::size_t>(id - 1)); }
};

struct SceneParams {
  int min_objects = 2;
  int max_objects = 4;
  std::vector<TokenId> colors;  // empty means the full vocabulary list
  std::vector<TokenId> shapes;
  int frame_count = 1;
  double relation_prob = 0.0;
};

// Deterministic in seed. Objects get pairwise distinct colors and shapes, so
// the palette must be at least as large as the requested object count.
Scene sample_scene(std::uint64_t seed, const SceneParams& params);

// Throws ConfigError describing the first violated invariant.
void validate_scene(const Scene& scene);

enum class Variant { kReferred, kUnreferred, kShuffled };
enum class QuestionKind { kMC, kOE };

std::string to_string(Variant v);
std::string to_string(QuestionKind k);
Variant parse_variant(std::string_view s);
QuestionKind parse_question_kind(std::string_view s);

// One rendered referring question. `context` is the full prompt fed to the
// backbone: "<bos> <img> ...scene... </img> [frames] Q: question Ans:".
// The query region is context[query_begin, query_end), i.e. the tokens
// between "Q:" and "Ans:".
struct ReferringExample {
  Scene scene;
  Variant variant = Variant::kReferred;
  QuestionKind kind = QuestionKind::kOE;
  std::uint64_t question_seed = 0;

  Tokens context;
  std::size_t query_begin = 0;
  std::size_t query_end = 0;
  std::vector<Tokens> options;  // four entries for MC, empty for OE
  Tokens ground_truth;          // MC: one letter token; OE: clause list
  std::vector<std::size_t> marker_positions_in_query;  // "[" indices into context
  // marker_assignment[i] is the marker drawn next to object i + 1.
  std::vector<int> marker_assignment;

  // MC only: the object and attribute family the question asks about.
  int subject = 0;
  bool asks_shape = false;

  Tokens question() const;
};

// Variants of the same (scene, kind, question_seed) share the question; they
// differ only in the marker overlay of the scene region (and, for
// kUnreferred, in every marker token being removed).
ReferringExample render_example(const Scene& scene, Variant variant, QuestionKind kind,
                                std::uint64_t question_seed = 0);

// The same MC item with the query naming the answer attribute instead of a
// marker: "Q: A red B blue C green D gray green ? Ans:". Substrate training
// uses it as an option-lookup drill.
ReferringExample render_cue_example(const ReferringExample& mc);

// Ground-truth clause list for an OE answer about every object in the scene.
Tokens oe_ground_truth(const Scene& scene);

// Derangement used for the kShuffled overlay; no fixed point.
std::vector<int> derangement(int n, std::uint64_t seed);

struct CorruptionParams {
  double swap_rate = 0.5;  // identifier mismatch
  double omit_rate = 0.5;  // region omission
};

// Produces a deliberately wrong answer from the ground truth using the two
// error families: identifier swaps and omitted regions. Returns a response
// distinct from the ground truth whenever the example allows one.
Tokens corrupt_response(const ReferringExample& example, const CorruptionParams& params,
                        std::mt19937_64& rng);

// Training sequence: context + ground truth + <eos>. Positions at or after
// the returned answer_begin are the supervised ones.
struct Sequence {
  Tokens tokens;
  std::size_t answer_begin = 0;
};

Sequence make_sequence(const Tokens& context, const Tokens& answer);

}  // namespace csteer
