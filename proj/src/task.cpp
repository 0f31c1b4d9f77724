#include "csteer/task.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "csteer/error.hpp"
#include "csteer/rng.hpp"

namespace csteer {
namespace {

void append(Tokens& out, const Tokens& more) { out.insert(out.end(), more.begin(), more.end()); }

std::vector<Tokens> split_clauses(const Tokens& tokens) {
  std::vector<Tokens> clauses;
  Tokens current;
  for (TokenId t : tokens) {
    current.push_back(t);
    if (t == vocab::clause_end()) {
      clauses.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) clauses.push_back(std::move(current));
  return clauses;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kReferred: return "referred";
    case Variant::kUnreferred: return "unreferred";
    case Variant::kShuffled: return "shuffled";
  }
  return "?";
}

std::string to_string(QuestionKind k) { return k == QuestionKind::kMC ? "MC" : "OE"; }

Variant parse_variant(std::string_view s) {
  if (s == "referred") return Variant::kReferred;
  if (s == "unreferred") return Variant::kUnreferred;
  if (s == "shuffled") return Variant::kShuffled;
  throw ParseError("unknown variant '" + std::string(s) + "'");
}

QuestionKind parse_question_kind(std::string_view s) {
  if (s == "MC") return QuestionKind::kMC;
  if (s == "OE") return QuestionKind::kOE;
  throw ParseError("unknown question kind '" + std::string(s) + "'");
}

Scene sample_scene(std::uint64_t seed, const SceneParams& params) {
  auto colors = params.colors.empty() ? vocab::colors() : params.colors;
  auto shapes = params.shapes.empty() ? vocab::shapes() : params.shapes;
  if (params.min_objects < 2 || params.max_objects < params.min_objects) {
    throw ConfigError("object-count range must satisfy 2 <= min <= max");
  }
  const auto palette = std::min(colors.size(), shapes.size());
  if (static_cast<std::size_t>(params.max_objects) > palette) {
    throw ConfigError("attribute vocab too small: " + std::to_string(palette) +
                      " distinct color/shape pairs for up to " +
                      std::to_string(params.max_objects) + " objects");
  }
  if (params.max_objects > vocab::kMaxNumber) {
    throw ConfigError("at most " + std::to_string(vocab::kMaxNumber) + " objects are supported");
  }
  if (params.frame_count < 1 || params.frame_count > vocab::kMaxNumber) {
    throw ConfigError("frame_count must be in [1, " + std::to_string(vocab::kMaxNumber) + "]");
  }

  std::mt19937_64 rng(seed);
  Scene scene;
  scene.seed = seed;
  scene.frame_count = params.frame_count;
  const int n = uniform_int(rng, params.min_objects, params.max_objects);
  std::shuffle(colors.begin(), colors.end(), rng);
  std::shuffle(shapes.begin(), shapes.end(), rng);
  const auto& positions = vocab::positions();
  for (int i = 0; i < n; ++i) {
    SceneObject obj;
    obj.id = i + 1;
    obj.color = colors[static_cast<std::size_t>(i)];
    obj.shape = shapes[static_cast<std::size_t>(i)];
    obj.position = positions[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<int>(positions.size()) - 1))];
    if (params.frame_count > 1) {
      obj.visible_from = uniform_int(rng, 1, params.frame_count);
      obj.visible_to = uniform_int(rng, obj.visible_from, params.frame_count);
    }
    scene.objects.push_back(obj);
  }
  if (params.relation_prob > 0.0) {
    const auto& relations = vocab::relations();
    for (auto& obj : scene.objects) {
      if (uniform01(rng) >= params.relation_prob) continue;
      int target = uniform_int(rng, 1, n - 1);
      if (target >= obj.id) ++target;
      const auto rel = relations[static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<int>(relations.size()) - 1))];
      obj.links.push_back({rel, target});
    }
  }
  scene.display_order.resize(static_cast<std::size_t>(n));
  std::iota(scene.display_order.begin(), scene.display_order.end(), 1);
  std::shuffle(scene.display_order.begin(), scene.display_order.end(), rng);
  return scene;
}

void validate_scene(const Scene& scene) {
  const int n = static_cast<int>(scene.objects.size());
  if (n < 1) throw ConfigError("scene has no objects");
  if (scene.frame_count < 1) throw ConfigError("frame_count must be >= 1");
  for (int i = 0; i < n; ++i) {
    const auto& obj = scene.objects[static_cast<std::size_t>(i)];
    if (obj.id != i + 1) throw ConfigError("marker ids must be contiguous from 1");
    for (const auto& link : obj.links) {
      if (link.target < 1 || link.target > n) {
        throw ConfigError("relation link references missing id " + std::to_string(link.target));
      }
    }
    if (obj.visible_from < 1 || obj.visible_to < obj.visible_from ||
        obj.visible_to > scene.frame_count) {
      throw ConfigError("object " + std::to_string(obj.id) + " visibility outside [1, frame_count]");
    }
  }
  auto order = scene.display_order;
  std::sort(order.begin(), order.end());
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(order.size()) != n || order[static_cast<std::size_t>(i)] != i + 1) {
      throw ConfigError("display_order must be a permutation of the object ids");
    }
  }
}

std::vector<int> derangement(int n, std::uint64_t seed) {
  if (n < 2) throw PreconditionError("a derangement needs at least 2 elements");
  std::mt19937_64 rng(seed);
  std::vector<int> perm(static_cast<std::size_t>(n));
  // Rejection sampling; the acceptance rate tends to 1/e.
  for (;;) {
    std::iota(perm.begin(), perm.end(), 1);
    std::shuffle(perm.begin(), perm.end(), rng);
    bool fixed = false;
    for (int i = 0; i < n; ++i) fixed |= perm[static_cast<std::size_t>(i)] == i + 1;
    if (!fixed) return perm;
  }
}

Tokens ReferringExample::question() const {
  return Tokens(context.begin() + static_cast<std::ptrdiff_t>(query_begin),
                context.begin() + static_cast<std::ptrdiff_t>(query_end));
}

Tokens oe_ground_truth(const Scene& scene) {
  Tokens out;
  for (const auto& obj : scene.objects) {
    append(out, vocab::marker(obj.id));
    out.push_back(obj.color);
    out.push_back(obj.shape);
    if (scene.frame_count > 1) {
      out.insert(out.end(), {vocab::time_open(), vocab::number(obj.visible_from),
                             vocab::time_close(), vocab::dash(), vocab::time_open(),
                             vocab::number(obj.visible_to), vocab::time_close()});
    }
    out.push_back(vocab::clause_end());
  }
  for (const auto& obj : scene.objects) {
    for (const auto& link : obj.links) {
      append(out, vocab::marker(obj.id));
      out.push_back(link.relation);
      append(out, vocab::marker(link.target));
      out.push_back(vocab::clause_end());
    }
  }
  return out;
}

ReferringExample render_example(const Scene& scene, Variant variant, QuestionKind kind,
                                std::uint64_t question_seed) {
  validate_scene(scene);
  const int n = static_cast<int>(scene.objects.size());
  if (variant == Variant::kShuffled && n < 2) {
    throw PreconditionError("marker shuffle requires at least 2 objects");
  }

  ReferringExample ex;
  ex.scene = scene;
  ex.variant = variant;
  ex.kind = kind;
  ex.question_seed = question_seed;
  ex.marker_assignment.resize(static_cast<std::size_t>(n));
  std::iota(ex.marker_assignment.begin(), ex.marker_assignment.end(), 1);
  if (variant == Variant::kShuffled) {
    ex.marker_assignment = derangement(n, mix_seed(scene.seed, question_seed ^ 0x5eedULL));
  }
  const bool draw = variant != Variant::kUnreferred;
  auto overlay = [&](Tokens& out, int id) {
    if (draw) append(out, vocab::marker(ex.marker_assignment[static_cast<std::size_t>(id - 1)]));
  };

  Tokens& ctx = ex.context;
  ctx.push_back(vocab::bos());
  ctx.push_back(vocab::img_open());
  for (int id : scene.display_order) {
    const auto& obj = scene.object(id);
    overlay(ctx, id);
    ctx.insert(ctx.end(), {obj.color, obj.shape, obj.position});
    for (const auto& link : obj.links) {
      ctx.push_back(link.relation);
      overlay(ctx, link.target);
    }
    ctx.push_back(vocab::clause_end());
  }
  ctx.push_back(vocab::img_close());
  if (scene.frame_count > 1) {
    for (int f = 1; f <= scene.frame_count; ++f) {
      ctx.push_back(vocab::time_open());
      ctx.push_back(vocab::number(f));
      for (int id : scene.display_order) {
        const auto& obj = scene.object(id);
        if (obj.visible_from <= f && f <= obj.visible_to) overlay(ctx, id);
      }
      ctx.push_back(vocab::time_close());
    }
  }

  ctx.push_back(vocab::query());
  ex.query_begin = ctx.size();
  Tokens question;
  if (kind == QuestionKind::kMC) {
    std::mt19937_64 rng(mix_seed(scene.seed, question_seed));
    ex.subject = uniform_int(rng, 1, n);
    ex.asks_shape = uniform01(rng) < 0.5;
    const auto attr = [&](const SceneObject& o) { return ex.asks_shape ? o.shape : o.color; };
    const TokenId correct = attr(scene.object(ex.subject));

    std::vector<TokenId> distractors;
    for (const auto& obj : scene.objects) {
      if (obj.id != ex.subject) distractors.push_back(attr(obj));
    }
    std::shuffle(distractors.begin(), distractors.end(), rng);
    auto pool = ex.asks_shape ? vocab::shapes() : vocab::colors();
    std::shuffle(pool.begin(), pool.end(), rng);
    for (TokenId t : pool) {
      if (t != correct && std::find(distractors.begin(), distractors.end(), t) == distractors.end()) {
        distractors.push_back(t);
      }
    }
    std::vector<TokenId> choices{correct};
    choices.insert(choices.end(), distractors.begin(), distractors.begin() + 3);
    std::shuffle(choices.begin(), choices.end(), rng);

    for (int i = 0; i < 4; ++i) {
      const TokenId choice = choices[static_cast<std::size_t>(i)];
      ex.options.push_back({choice});
      question.push_back(vocab::letter(i));
      question.push_back(choice);
      if (choice == correct) ex.ground_truth = {vocab::letter(i)};
    }
    question.push_back(vocab::id(ex.asks_shape ? "shape" : "color"));
    append(question, vocab::marker(ex.subject));
    question.push_back(vocab::qmark());
  } else {
    question.push_back(vocab::id("describe"));
    for (int id = 1; id <= n; ++id) append(question, vocab::marker(id));
    question.push_back(vocab::qmark());
    ex.ground_truth = oe_ground_truth(scene);
  }
  if (!draw) question = strip_markers(question);
  append(ctx, question);
  ex.query_end = ctx.size();
  ctx.push_back(vocab::answer());

  for (std::size_t m : find_markers(ex.question())) {
    ex.marker_positions_in_query.push_back(ex.query_begin + m);
  }
  return ex;
}

ReferringExample render_cue_example(const ReferringExample& mc) {
  if (mc.kind != QuestionKind::kMC) throw PreconditionError("cue questions derive from MC examples");
  ReferringExample ex = mc;
  ex.context.resize(ex.query_begin);
  for (std::size_t i = 0; i < ex.options.size(); ++i) {
    ex.context.push_back(vocab::letter(static_cast<int>(i)));
    ex.context.push_back(ex.options[i][0]);
  }
  const int gt = vocab::letter_index(ex.ground_truth.at(0));
  ex.context.push_back(ex.options[static_cast<std::size_t>(gt)][0]);
  ex.context.push_back(vocab::qmark());
  ex.query_end = ex.context.size();
  ex.context.push_back(vocab::answer());
  ex.marker_positions_in_query.clear();
  return ex;
}

Tokens corrupt_response(const ReferringExample& example, const CorruptionParams& params,
                        std::mt19937_64& rng) {
  if (example.kind == QuestionKind::kMC) {
    const int gt = vocab::letter_index(example.ground_truth.at(0));
    std::vector<int> confusable, wrong;
    for (int i = 0; i < 4; ++i) {
      if (i == gt) continue;
      wrong.push_back(i);
      const TokenId choice = example.options[static_cast<std::size_t>(i)][0];
      for (const auto& obj : example.scene.objects) {
        if ((example.asks_shape ? obj.shape : obj.color) == choice) confusable.push_back(i);
      }
    }
    const auto& from = confusable.empty() ? wrong : confusable;
    return {vocab::letter(from[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<int>(from.size()) - 1))])};
  }

  auto clauses = split_clauses(example.ground_truth);
  // Attribute clauses are "[ k ] color shape ..."; position 1 holds the id.
  std::vector<std::size_t> attribute;
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (clauses[i].size() > 3 && vocab::category(clauses[i][3]) == vocab::Category::kColor) {
      attribute.push_back(i);
    }
  }
  bool swapped = false, omitted = false;
  auto do_swap = [&] {
    if (attribute.size() < 2) return;
    std::shuffle(attribute.begin(), attribute.end(), rng);
    std::swap(clauses[attribute[0]][1], clauses[attribute[1]][1]);
    swapped = true;
  };
  auto do_omit = [&] {
    if (clauses.size() < 2) return;
    clauses.erase(clauses.begin() + uniform_int(rng, 0, static_cast<int>(clauses.size()) - 1));
    omitted = true;
  };
  if (uniform01(rng) < params.swap_rate) do_swap();
  if (uniform01(rng) < params.omit_rate) do_omit();
  if (!swapped && !omitted) {
    if (attribute.size() >= 2) do_swap(); else do_omit();
  }
  Tokens out;
  for (const auto& c : clauses) append(out, c);
  return out;
}

Sequence make_sequence(const Tokens& context, const Tokens& answer) {
  Sequence seq;
  seq.tokens = context;
  seq.answer_begin = context.size();
  append(seq.tokens, answer);
  seq.tokens.push_back(vocab::eos());
  return seq;
}

}  // namespace csteer
