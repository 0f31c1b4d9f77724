#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "csteer/task.hpp"

namespace csteer {

// A score on the 11-value grid {0.0, 0.1, ..., 1.0}, stored in tenths so that
// threshold comparisons are exact.
class GridScore {
 public:
  constexpr GridScore() = default;
  static GridScore from_tenths(int tenths);
  // Strict parse of a judge reply: "0", "1", "0.0" .. "1.0". Anything else,
  // including surrounding prose or off-grid values such as "0.75", is nullopt.
  static std::optional<GridScore> parse(std::string_view reply);

  constexpr int tenths() const { return tenths_; }
  constexpr double value() const { return tenths_ / 10.0; }
  std::string str() const;

  auto operator<=>(const GridScore&) const = default;

 private:
  int tenths_ = 0;
};

// Rollouts scoring at or below this are kept as negatives.
inline constexpr int kKeepNegativeMaxTenths = 6;

struct JudgedRollout {
  Tokens response;
  GridScore score;
  bool kept_as_negative = false;
};

JudgedRollout make_judged(Tokens response, GridScore score);

// Rubric judge. MC: 1.0 iff the response (ignoring a trailing <eos>) is
// exactly the ground-truth letter. OE: fraction of ground-truth bindings that
// the response asserts correctly, floored to the grid. A binding is the
// attribute clause of one object or one relation clause; any conflicting
// assertion for the same key zeroes that binding.
GridScore judge_score(const ReferringExample& example, const Tokens& response);

// Minimal-edit correction of a kept negative. Only marker-id substitutions,
// binding corrections and appended missing clauses are performed; clauses that
// are already right are left untouched. Throws PreconditionError unless
// judge_score(example, response) <= 0.6.
Tokens rewrite_response(const ReferringExample& example, const Tokens& response);

}  // namespace csteer
