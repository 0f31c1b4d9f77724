#include "csteer/judge.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <utility>

#include "csteer/error.hpp"

namespace csteer {
namespace {

// rel == -1 marks the attribute binding of an object.
using BindingKey = std::pair<int, TokenId>;

struct Clause {
  Tokens tokens;            // as written, including the trailing ';' if any
  bool terminated = false;
  int id = -1;              // marker id, -1 when the clause has no leading marker
  TokenId rel = -1;
  Tokens content;           // tokens after the marker, without ';'
};

Clause classify(Tokens tokens) {
  Clause c;
  c.terminated = !tokens.empty() && tokens.back() == vocab::clause_end();
  c.tokens = std::move(tokens);
  const std::size_t body = c.tokens.size() - (c.terminated ? 1 : 0);
  if (body >= 3 && c.tokens[0] == vocab::marker_open() && vocab::number_value(c.tokens[1]) > 0 &&
      c.tokens[2] == vocab::marker_close()) {
    c.id = vocab::number_value(c.tokens[1]);
    c.content.assign(c.tokens.begin() + 3, c.tokens.begin() + static_cast<std::ptrdiff_t>(body));
    if (!c.content.empty() && vocab::category(c.content[0]) == vocab::Category::kRelation) {
      c.rel = c.content[0];
    }
  }
  return c;
}

// Splits at ';' after dropping everything from the first <eos>.
std::vector<Clause> parse_clauses(const Tokens& response, bool* had_eos = nullptr) {
  auto end = std::find(response.begin(), response.end(), vocab::eos());
  if (had_eos) *had_eos = end != response.end();
  std::vector<Clause> out;
  Tokens current;
  for (auto it = response.begin(); it != end; ++it) {
    current.push_back(*it);
    if (*it == vocab::clause_end()) {
      out.push_back(classify(std::move(current)));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(classify(std::move(current)));
  return out;
}

std::map<BindingKey, Tokens> expected_bindings(const ReferringExample& ex) {
  std::map<BindingKey, Tokens> out;
  for (const auto& c : parse_clauses(ex.ground_truth)) {
    if (c.id > 0) out[{c.id, c.rel}] = c.content;
  }
  return out;
}

int correct_bindings(const std::map<BindingKey, Tokens>& expected,
                     const std::vector<Clause>& clauses) {
  int correct = 0;
  for (const auto& [key, content] : expected) {
    bool asserted = false, conflict = false;
    for (const auto& c : clauses) {
      if (c.id != key.first || c.rel != key.second) continue;
      asserted = true;
      conflict |= c.content != content;
    }
    correct += asserted && !conflict;
  }
  return correct;
}

Tokens strip_eos(const Tokens& t) {
  return Tokens(t.begin(), std::find(t.begin(), t.end(), vocab::eos()));
}

}  // namespace

GridScore GridScore::from_tenths(int tenths) {
  if (tenths < 0 || tenths > 10) throw ConfigError("grid score out of range");
  GridScore s;
  s.tenths_ = tenths;
  return s;
}

std::optional<GridScore> GridScore::parse(std::string_view reply) {
  while (!reply.empty() && std::isspace(static_cast<unsigned char>(reply.front()))) reply.remove_prefix(1);
  while (!reply.empty() && std::isspace(static_cast<unsigned char>(reply.back()))) reply.remove_suffix(1);
  if (reply == "0") return from_tenths(0);
  if (reply == "1" || reply == "1.0") return from_tenths(10);
  if (reply.size() == 3 && reply[0] == '0' && reply[1] == '.' && reply[2] >= '0' && reply[2] <= '9') {
    return from_tenths(reply[2] - '0');
  }
  return std::nullopt;
}

std::string GridScore::str() const {
  if (tenths_ == 10) return "1.0";
  return "0." + std::to_string(tenths_);
}

JudgedRollout make_judged(Tokens response, GridScore score) {
  return {std::move(response), score, score.tenths() <= kKeepNegativeMaxTenths};
}

GridScore judge_score(const ReferringExample& example, const Tokens& response) {
  if (example.kind == QuestionKind::kMC) {
    return GridScore::from_tenths(strip_eos(response) == example.ground_truth ? 10 : 0);
  }
  const auto expected = expected_bindings(example);
  if (expected.empty()) return GridScore::from_tenths(0);
  const int correct = correct_bindings(expected, parse_clauses(response));
  return GridScore::from_tenths(10 * correct / static_cast<int>(expected.size()));
}

Tokens rewrite_response(const ReferringExample& example, const Tokens& response) {
  const GridScore before = judge_score(example, response);
  if (before.tenths() > kKeepNegativeMaxTenths) {
    throw PreconditionError("rewrite requires a kept negative (score <= 0.6), got " + before.str());
  }
  bool had_eos = false;
  if (example.kind == QuestionKind::kMC) {
    Tokens out = example.ground_truth;
    if (std::find(response.begin(), response.end(), vocab::eos()) != response.end()) {
      out.push_back(vocab::eos());
    }
    return out;
  }

  const auto expected = expected_bindings(example);
  auto clauses = parse_clauses(response, &had_eos);
  for (auto& c : clauses) {
    if (c.id < 0) continue;
    const BindingKey key{c.id, c.rel};
    auto it = expected.find(key);
    if (it != expected.end() && it->second == c.content) continue;
    if (c.rel < 0) {
      // Identifier mismatch: the description belongs to another region.
      auto owner = std::find_if(expected.begin(), expected.end(), [&](const auto& kv) {
        return kv.first.second < 0 && kv.second == c.content;
      });
      if (owner != expected.end()) {
        c.tokens[1] = vocab::number(owner->first.first);
        c.id = owner->first.first;
        continue;
      }
    }
    if (it == expected.end()) continue;  // unknown id or relation; the judge ignores it
    Tokens fixed = vocab::marker(c.id);
    fixed.insert(fixed.end(), it->second.begin(), it->second.end());
    if (c.terminated) fixed.push_back(vocab::clause_end());
    c.tokens = std::move(fixed);
    c.content = it->second;
  }

  Tokens out;
  for (const auto& c : clauses) out.insert(out.end(), c.tokens.begin(), c.tokens.end());
  bool open_clause = !clauses.empty() && !clauses.back().terminated;
  for (const auto& [key, content] : expected) {
    const bool asserted = std::any_of(clauses.begin(), clauses.end(), [&](const Clause& c) {
      return c.id == key.first && c.rel == key.second;
    });
    if (asserted) continue;
    if (open_clause) {
      out.push_back(vocab::clause_end());
      open_clause = false;
    }
    const auto m = vocab::marker(key.first);
    out.insert(out.end(), m.begin(), m.end());
    out.insert(out.end(), content.begin(), content.end());
    out.push_back(vocab::clause_end());
  }
  if (had_eos) out.push_back(vocab::eos());

  const GridScore after = judge_score(example, out);
  if (after.tenths() <= kKeepNegativeMaxTenths) {
    throw Error("rewrite failed to lift score above 0.6 (got " + after.str() + ")");
  }
  return out;
}

}  // namespace csteer
