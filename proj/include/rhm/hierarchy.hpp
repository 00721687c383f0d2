#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rhm/error.hpp"
#include "rhm/params.hpp"
#include "rhm/random.hpp"

namespace rhm {

/// An s-tuple over an alphabet of size k is stored as its base-k code with
/// the first element most significant: (x_0, ..., x_{s-1}) -> sum x_t k^{s-1-t}.
using TupleCode = std::int32_t;

inline TupleCode encode_tuple(std::span<const int> symbols, int alphabet) {
  TupleCode code = 0;
  for (int x : symbols) code = code * alphabet + x;
  return code;
}

inline std::vector<int> decode_tuple(TupleCode code, int alphabet, int s) {
  std::vector<int> out(s);
  for (int t = s - 1; t >= 0; --t) {
    out[t] = code % alphabet;
    code /= alphabet;
  }
  return out;
}

/// Element at slot `t` of a tuple code without materializing the tuple.
inline int tuple_element(TupleCode code, int alphabet, int s, int t) {
  for (int i = s - 1; i > t; --i) code /= alphabet;
  return code % alphabet;
}

/// One composition rule: each of `domain_size` higher-level symbols owns an
/// ordered list of m distinct s-tuples; tuples are distinct across symbols.
struct CompositionRule {
  int level = 1;
  int domain_size = 0;
  int m = 0;
  int v = 0;
  int s = 0;
  /// forward[sym * m + i] is the i-th representation of `sym`.
  std::vector<TupleCode> forward;
  /// inverse[tuple] is the owning symbol, or -1 when the tuple is unused.
  std::vector<std::int32_t> inverse;
  /// slot[tuple] is the tuple's index within its owner's list, or -1.
  std::vector<std::int32_t> slot;

  TupleCode representation(int symbol, int choice) const { return forward[symbol * m + choice]; }
  std::span<const TupleCode> representations(int symbol) const {
    return {forward.data() + static_cast<std::ptrdiff_t>(symbol) * m, static_cast<size_t>(m)};
  }
  bool contains(TupleCode t) const {
    return t >= 0 && t < static_cast<TupleCode>(inverse.size()) && inverse[t] >= 0;
  }

  /// Rebuilds inverse/slot from forward; throws if tuples repeat.
  void index() {
    const auto tuples = static_cast<size_t>(ipow(v, s));
    inverse.assign(tuples, -1);
    slot.assign(tuples, -1);
    require(forward.size() == static_cast<size_t>(domain_size) * m, ErrorCode::invalid_params,
            "rule forward table has wrong size");
    for (int sym = 0; sym < domain_size; ++sym) {
      for (int i = 0; i < m; ++i) {
        const TupleCode t = forward[sym * m + i];
        require(t >= 0 && static_cast<size_t>(t) < tuples, ErrorCode::invalid_params,
                "tuple code out of range in rule at level " + std::to_string(level));
        require(inverse[t] < 0, ErrorCode::invalid_params,
                "tuple repeated in rule at level " + std::to_string(level));
        inverse[t] = sym;
        slot[t] = i;
      }
    }
  }

  friend bool operator==(const CompositionRule& a, const CompositionRule& b) {
    return a.level == b.level && a.domain_size == b.domain_size && a.m == b.m && a.v == b.v &&
           a.s == b.s && a.forward == b.forward;
  }
};

/// Parameters plus the L rules; rules[l - 1] is the rule of level l, so
/// rules.front() produces input patches and rules.back() maps classes.
struct RhmInstance {
  ModelParams params;
  std::vector<CompositionRule> rules;
  /// "rhm" for uniformly sampled rules, "hfm" for the homogeneous construction.
  std::string construction = "rhm";

  const CompositionRule& rule(int level) const { return rules.at(static_cast<size_t>(level - 1)); }

  friend bool operator==(const RhmInstance& a, const RhmInstance& b) {
    return a.params == b.params && a.rules == b.rules && a.construction == b.construction;
  }
};

/// Uniform random injection of domain_size*m tuples out of v^s, cut into
/// consecutive groups of m (partial Fisher-Yates over all tuple codes).
inline CompositionRule sample_rule(const ModelParams& params, int level, Rng& rng) {
  validate(params);
  require(level >= 1 && level <= params.L, ErrorCode::invalid_params,
          "rule level " + std::to_string(level) + " outside 1..L");
  CompositionRule rule;
  rule.level = level;
  rule.domain_size = params.domain_size(level);
  rule.m = params.m;
  rule.v = params.v;
  rule.s = params.s;
  const int tuples = params.tuple_count();
  const int needed = rule.domain_size * rule.m;
  require(needed <= tuples, ErrorCode::invalid_params, "rule does not fit in v^s tuples");
  std::vector<TupleCode> pool(static_cast<size_t>(tuples));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < needed; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(tuples - i)));
    std::swap(pool[i], pool[j]);
  }
  rule.forward.assign(pool.begin(), pool.begin() + needed);
  rule.index();
  return rule;
}

/// Level l draws from substream l of the instance seed, so rules are
/// independent and each is reproducible on its own.
inline RhmInstance build_instance(const ModelParams& params) {
  validate(params);
  RhmInstance inst;
  inst.params = params;
  const Rng root(params.seed);
  for (int level = 1; level <= params.L; ++level) {
    Rng stream = root.derive(static_cast<std::uint64_t>(level));
    inst.rules.push_back(sample_rule(params, level, stream));
  }
  return inst;
}

/// Homogeneous-features instance for maximal multiplicity m = v^{s-1} and
/// n_c = v. Symbol j of each rule owns the tuples x with
/// sum_t pi_t(x_t) = rho(j) (mod v), for random per-slot permutations pi_t and
/// a random symbol relabeling rho. Every feature then appears exactly v^{s-2}
/// times per slot in every symbol's representations.
inline RhmInstance build_hfm_instance(const ModelParams& params) {
  validate(params);
  const auto row = ipow(params.v, params.s - 1);
  require(static_cast<std::uint64_t>(params.m) == row, ErrorCode::unsupported_construction,
          "homogeneous construction needs m = v^(s-1)");
  require(params.n_c == params.v, ErrorCode::unsupported_construction,
          "homogeneous construction needs n_c = v");
  RhmInstance inst;
  inst.params = params;
  inst.construction = "hfm";
  const Rng root(params.seed);
  const int v = params.v;
  const int s = params.s;
  for (int level = 1; level <= params.L; ++level) {
    Rng rng = root.derive(0x4846'0000ULL + static_cast<std::uint64_t>(level));
    std::vector<std::vector<int>> perm(static_cast<size_t>(s), std::vector<int>(v));
    for (auto& p : perm) {
      std::iota(p.begin(), p.end(), 0);
      rng.shuffle(p.begin(), p.end());
    }
    std::vector<int> relabel(v);
    std::iota(relabel.begin(), relabel.end(), 0);
    rng.shuffle(relabel.begin(), relabel.end());

    CompositionRule rule;
    rule.level = level;
    rule.domain_size = v;
    rule.m = params.m;
    rule.v = v;
    rule.s = s;
    std::vector<std::vector<TupleCode>> groups(static_cast<size_t>(v));
    const int tuples = params.tuple_count();
    for (TupleCode code = 0; code < tuples; ++code) {
      int residue = 0;
      for (int t = 0; t < s; ++t) residue += perm[t][tuple_element(code, v, s, t)];
      groups[static_cast<size_t>(residue % v)].push_back(code);
    }
    rule.forward.reserve(static_cast<size_t>(tuples));
    for (int sym = 0; sym < v; ++sym) {
      auto& g = groups[static_cast<size_t>(relabel[sym])];
      rng.shuffle(g.begin(), g.end());
      rule.forward.insert(rule.forward.end(), g.begin(), g.end());
    }
    rule.index();
    inst.rules.push_back(std::move(rule));
  }
  return inst;
}

/// The synonym group of `tuple` at `level`: all m representations of its
/// owning symbol, the tuple itself included.
inline std::vector<TupleCode> synonyms_of(const RhmInstance& inst, int level, TupleCode tuple) {
  require(level >= 1 && level <= inst.params.L, ErrorCode::out_of_range, "level outside 1..L");
  const auto& rule = inst.rule(level);
  require(rule.contains(tuple), ErrorCode::unknown_tuple,
          "tuple " + std::to_string(tuple) + " is not generated at level " + std::to_string(level));
  const auto reps = rule.representations(rule.inverse[tuple]);
  return {reps.begin(), reps.end()};
}

/// Checks structural invariants of a (possibly deserialized) instance.
inline void validate(const RhmInstance& inst) {
  validate(inst.params);
  require(static_cast<int>(inst.rules.size()) == inst.params.L, ErrorCode::invalid_params,
          "instance must have exactly L rules");
  for (int level = 1; level <= inst.params.L; ++level) {
    const auto& r = inst.rule(level);
    require(r.level == level, ErrorCode::invalid_params, "rule level mismatch");
    require(r.domain_size == inst.params.domain_size(level), ErrorCode::invalid_params,
            "rule domain size mismatch at level " + std::to_string(level));
    require(r.m == inst.params.m && r.v == inst.params.v && r.s == inst.params.s,
            ErrorCode::invalid_params, "rule shape mismatch at level " + std::to_string(level));
  }
}

}  // namespace rhm
