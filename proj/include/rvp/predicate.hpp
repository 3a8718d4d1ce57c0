#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rvp/error.hpp"
#include "rvp/numeric.hpp"
#include "rvp/population.hpp"

namespace rvp {

// Declarative record filter over covariates and group flags.
//
//   predicate := clause ( AND clause )*
//   clause    := TRUE | FALSE
//              | field IS [NOT] MISSING
//              | field op value
//              | group                      -- group membership flag
//   op        := = | == | != | < | <= | > | >=
//   value     := number | 'text' | "text" | bareword
//
// Keywords are case-insensitive. Covariates are stored as text and parsed as
// numbers lazily: ordering comparisons are numeric and are false when either
// side is not a number; equality is numeric when both sides parse, textual
// otherwise. Any comparison against a missing value is false. Group flags
// compare as "1" / "0".
struct Predicate {
  enum class Op { Eq, Ne, Lt, Le, Gt, Ge };
  struct Clause {
    enum class Kind { True, False, IsMissing, NotMissing, Compare, Group };
    Kind kind = Kind::True;
    std::string field;
    Op op = Op::Eq;
    std::string value;
    std::optional<double> number;
  };

  std::vector<Clause> clauses;
  std::string text;
};

namespace detail {

struct PredicateLexer {
  std::string_view s;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  bool done() {
    skip_ws();
    return pos >= s.size();
  }
  [[noreturn]] void error(const std::string& msg) const {
    fail(ErrorKind::ConfigError, "predicate '" + std::string(s) + "' at offset " + std::to_string(pos) + ": " + msg);
  }

  // Word: identifier, number or bare value; stops at whitespace/operators.
  std::string word() {
    skip_ws();
    if (pos < s.size() && (s[pos] == '\'' || s[pos] == '"')) {
      const char q = s[pos++];
      std::string out;
      while (pos < s.size() && s[pos] != q) out.push_back(s[pos++]);
      if (pos >= s.size()) error("unterminated quoted value");
      ++pos;
      return out;
    }
    const std::size_t start = pos;
    while (pos < s.size()) {
      const char c = s[pos];
      if (std::isspace(static_cast<unsigned char>(c)) || c == '=' || c == '!' || c == '<' || c == '>') break;
      ++pos;
    }
    if (pos == start) error("expected a name or value");
    return std::string(s.substr(start, pos - start));
  }

  std::optional<Predicate::Op> op() {
    skip_ws();
    auto take = [&](std::string_view tok) {
      if (s.substr(pos, tok.size()) == tok) {
        pos += tok.size();
        return true;
      }
      return false;
    };
    if (take("==") || take("=")) return Predicate::Op::Eq;
    if (take("!=") || take("<>")) return Predicate::Op::Ne;
    if (take("<=")) return Predicate::Op::Le;
    if (take(">=")) return Predicate::Op::Ge;
    if (take("<")) return Predicate::Op::Lt;
    if (take(">")) return Predicate::Op::Gt;
    return std::nullopt;
  }

  bool keyword(std::string_view kw) {
    skip_ws();
    const std::size_t save = pos;
    if (pos + kw.size() > s.size()) return false;
    for (std::size_t i = 0; i < kw.size(); ++i) {
      if (std::toupper(static_cast<unsigned char>(s[pos + i])) != kw[i]) return false;
    }
    const std::size_t end = pos + kw.size();
    if (end < s.size() && !std::isspace(static_cast<unsigned char>(s[end]))) return false;
    pos = end;
    (void)save;
    return true;
  }
};

}  // namespace detail

inline Predicate parse_predicate(std::string_view text) {
  Predicate p;
  p.text = std::string(trim(text));
  detail::PredicateLexer lx{p.text};
  if (lx.done()) lx.error("empty predicate");
  while (true) {
    Predicate::Clause c;
    if (lx.keyword("TRUE")) {
      c.kind = Predicate::Clause::Kind::True;
    } else if (lx.keyword("FALSE")) {
      c.kind = Predicate::Clause::Kind::False;
    } else {
      c.field = lx.word();
      if (lx.keyword("IS")) {
        const bool negated = lx.keyword("NOT");
        if (!lx.keyword("MISSING")) lx.error("expected MISSING after IS");
        c.kind = negated ? Predicate::Clause::Kind::NotMissing : Predicate::Clause::Kind::IsMissing;
      } else if (auto op = lx.op()) {
        c.kind = Predicate::Clause::Kind::Compare;
        c.op = *op;
        c.value = lx.word();
        c.number = parse_double(c.value);
      } else {
        c.kind = Predicate::Clause::Kind::Group;
      }
    }
    p.clauses.push_back(std::move(c));
    if (lx.done()) break;
    if (!lx.keyword("AND")) lx.error("expected AND between clauses");
  }
  return p;
}

/// Records satisfying every clause of the predicate.
inline Mask covariate_mask(const Population& pop, const Predicate& pred) {
  using Kind = Predicate::Clause::Kind;
  using Op = Predicate::Op;
  const auto& attr = pop.attributes();
  const std::size_t n = pop.size();
  Mask m = Mask::all(n, pred.text);

  for (const auto& c : pred.clauses) {
    if (c.kind == Kind::True) continue;
    if (c.kind == Kind::False) {
      std::fill(m.member.begin(), m.member.end(), std::uint8_t{0});
      continue;
    }
    const auto cov = pop.covariate_index(c.field);
    const auto grp = cov ? std::nullopt : pop.group_index(c.field);
    if (!cov && !grp) fail(ErrorKind::UnknownField, "predicate references unknown field '" + c.field + "'");
    if (c.kind == Kind::Group && !grp)
      fail(ErrorKind::UnknownField, "'" + c.field + "' is a covariate; a bare name must be a group");

    auto value_of = [&](std::size_t i) -> std::optional<std::string> {
      if (cov) return attr.covariates[*cov][i];
      return std::string(attr.groups[*grp][i] ? "1" : "0");
    };

    for (std::size_t i = 0; i < n; ++i) {
      if (!m.member[i]) continue;
      bool keep = false;
      switch (c.kind) {
        case Kind::Group: keep = attr.groups[*grp][i] != 0; break;
        case Kind::IsMissing: keep = !value_of(i).has_value(); break;
        case Kind::NotMissing: keep = value_of(i).has_value(); break;
        case Kind::Compare: {
          const auto v = value_of(i);
          if (!v) break;
          const auto num = parse_double(*v);
          if (c.op == Op::Eq || c.op == Op::Ne) {
            const bool eq = (num && c.number) ? (*num == *c.number) : (*v == c.value);
            keep = (c.op == Op::Eq) ? eq : !eq;
          } else if (num && c.number) {
            switch (c.op) {
              case Op::Lt: keep = *num < *c.number; break;
              case Op::Le: keep = *num <= *c.number; break;
              case Op::Gt: keep = *num > *c.number; break;
              case Op::Ge: keep = *num >= *c.number; break;
              default: break;
            }
          }
          break;
        }
        default: break;
      }
      m.member[i] = keep ? 1 : 0;
    }
  }
  return m;
}

inline Mask covariate_mask(const Population& pop, std::string_view predicate) {
  return covariate_mask(pop, parse_predicate(predicate));
}

}  // namespace rvp
