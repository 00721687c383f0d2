#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "rhm/hierarchy.hpp"
#include "rhm/theory.hpp"

using namespace rhm;

namespace {

ModelParams make(int v, int m, int s, int L, int nc, std::uint64_t seed = 0) {
  ModelParams p;
  p.v = v;
  p.m = m;
  p.s = s;
  p.L = L;
  p.n_c = nc;
  p.seed = seed;
  return p;
}

// Canonical form of a rule as a set of (symbol, sorted tuple group).
std::vector<std::vector<TupleCode>> partition_of(const CompositionRule& r) {
  std::vector<std::vector<TupleCode>> groups;
  for (int sym = 0; sym < r.domain_size; ++sym) {
    auto reps = r.representations(sym);
    std::vector<TupleCode> g(reps.begin(), reps.end());
    std::sort(g.begin(), g.end());
    groups.push_back(g);
  }
  return groups;
}

// Brute-force count of rules: maps from tuples to {unused, sym_0, ...} where
// each symbol receives exactly m tuples.
long count_rules(int v, int s, int m, int domain) {
  const int tuples = static_cast<int>(ipow(v, s));
  long total = 0;
  const auto configs = ipow(domain + 1, tuples);
  for (std::uint64_t c = 0; c < configs; ++c) {
    std::vector<int> per(domain + 1, 0);
    auto x = c;
    for (int t = 0; t < tuples; ++t) {
      ++per[x % (domain + 1)];
      x /= (domain + 1);
    }
    bool ok = true;
    for (int d = 1; d <= domain; ++d) ok = ok && per[d] == m;
    if (ok) ++total;
  }
  return total;
}

}  // namespace

TEST(Tuple, EncodeDecodeRoundTrip) {
  for (TupleCode c = 0; c < 64; ++c) {
    auto t = decode_tuple(c, 4, 3);
    EXPECT_EQ(encode_tuple(t, 4), c);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(tuple_element(c, 4, 3, i), t[i]);
  }
  const int first_high[] = {1, 0};
  EXPECT_EQ(encode_tuple(first_high, 3), 3);
}

TEST(Params, ConstraintViolations) {
  EXPECT_THROW(validate(make(4, 5, 2, 2, 4)), Error);
  try {
    validate(make(4, 5, 2, 2, 4));
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_params);
  }
  EXPECT_THROW(validate(make(2, 2, 2, 2, 3)), Error);  // n_c m > v^s
  EXPECT_THROW(validate(make(1, 1, 2, 2, 2)), Error);
  EXPECT_THROW(validate(make(2, 1, 1, 2, 2)), Error);
  EXPECT_THROW(validate(make(2, 1, 2, 0, 2)), Error);
  EXPECT_NO_THROW(validate(make(4, 4, 2, 2, 4)));
  EXPECT_TRUE(is_degenerate(make(3, 1, 2, 2, 3)));
}

TEST(Params, DerivedSizes) {
  auto p = make(3, 2, 3, 2, 3);
  EXPECT_EQ(p.input_dim(), 9);
  EXPECT_EQ(p.path_length(), 4);
  EXPECT_EQ(p.patch_count(), 3);
  EXPECT_EQ(p.tuple_count(), 27);
  EXPECT_EQ(p.domain_size(1), 3);
  EXPECT_EQ(p.domain_size(2), 3);
}

TEST(SampleRule, StructureAndInverse) {
  auto p = make(3, 2, 2, 2, 4, 7);
  Rng rng(11);
  for (int level = 1; level <= 2; ++level) {
    auto r = sample_rule(p, level, rng);
    EXPECT_EQ(r.domain_size, level == 2 ? 4 : 3);
    std::set<TupleCode> seen;
    for (int sym = 0; sym < r.domain_size; ++sym) {
      for (int i = 0; i < p.m; ++i) {
        const auto t = r.representation(sym, i);
        EXPECT_TRUE(seen.insert(t).second);
        EXPECT_EQ(r.inverse[t], sym);
        EXPECT_EQ(r.slot[t], i);
      }
    }
    const auto defined = std::count_if(r.inverse.begin(), r.inverse.end(), [](int x) { return x >= 0; });
    EXPECT_EQ(defined, r.domain_size * p.m);
  }
}

TEST(SampleRule, TopRuleWithUnitMultiplicity) {
  auto p = make(2, 1, 2, 1, 2);
  Rng rng(3);
  auto r = sample_rule(p, 1, rng);
  EXPECT_EQ(r.forward.size(), 2u);
  EXPECT_NE(r.forward[0], r.forward[1]);
  EXPECT_EQ(std::count_if(r.inverse.begin(), r.inverse.end(), [](int x) { return x >= 0; }), 2);
}

TEST(SampleRule, Deterministic) {
  auto p = make(4, 3, 2, 3, 3);
  Rng a(99), b(99);
  EXPECT_EQ(sample_rule(p, 2, a), sample_rule(p, 2, b));
}

TEST(SampleRule, UniformOverSixPartitions) {
  // v=2, s=2, m=2 internal rule: 4 tuples into 2 labeled groups of 2.
  auto p = make(2, 2, 2, 2, 2);
  std::map<std::vector<std::vector<TupleCode>>, int> freq;
  const int draws = 20000;
  Rng rng(2024);
  for (int i = 0; i < draws; ++i) ++freq[partition_of(sample_rule(p, 1, rng))];
  ASSERT_EQ(freq.size(), 6u);
  const double expect = draws / 6.0;
  const double se = std::sqrt(draws * (1.0 / 6.0) * (5.0 / 6.0));
  for (const auto& [part, n] : freq) EXPECT_LT(std::abs(n - expect), 4 * se);
}

TEST(SampleRule, RuleCountMatchesBruteForce) {
  for (int m : {1, 2}) {
    const long brute = count_rules(2, 2, m, 2);
    EXPECT_NEAR(std::exp(log_rule_count(2, 2, m, 2)), static_cast<double>(brute), 1e-9);
  }
  EXPECT_EQ(count_rules(2, 2, 2, 2), 6);
}

TEST(BuildInstance, Structure) {
  auto inst = build_instance(make(2, 2, 2, 2, 2, 0));
  ASSERT_EQ(inst.rules.size(), 2u);
  EXPECT_EQ(inst.rule(2).domain_size, 2);
  EXPECT_EQ(inst.rule(1).domain_size, 2);
  EXPECT_EQ(inst.rule(1).level, 1);
  EXPECT_NO_THROW(validate(inst));
}

TEST(BuildInstance, ReproducibleAndSeedSensitive) {
  auto p = make(4, 2, 2, 2, 3);
  EXPECT_EQ(build_instance(p), build_instance(p));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto a = p, b = p;
    a.seed = 2 * seed;
    b.seed = 2 * seed + 1;
    EXPECT_FALSE(build_instance(a).rules == build_instance(b).rules);
  }
}

TEST(BuildInstance, InvalidParams) {
  EXPECT_THROW(build_instance(make(4, 5, 2, 2, 4)), Error);
}

TEST(Synonyms, GroupsAreEquivalenceClasses) {
  auto inst = build_instance(make(3, 2, 2, 2, 3, 5));
  for (int level = 1; level <= 2; ++level) {
    const auto& r = inst.rule(level);
    for (TupleCode t = 0; t < 9; ++t) {
      if (!r.contains(t)) {
        EXPECT_THROW(synonyms_of(inst, level, t), Error);
        continue;
      }
      auto syn = synonyms_of(inst, level, t);
      EXPECT_EQ(syn.size(), 2u);
      EXPECT_NE(std::find(syn.begin(), syn.end(), t), syn.end());
      for (auto u : syn) {
        auto a = syn, b = synonyms_of(inst, level, u);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        EXPECT_EQ(a, b);
      }
    }
  }
}

TEST(Synonyms, UnknownTupleCode) {
  auto inst = build_instance(make(3, 2, 2, 1, 2, 1));
  const auto& r = inst.rule(1);
  for (TupleCode t = 0; t < 9; ++t) {
    if (r.contains(t)) continue;
    try {
      synonyms_of(inst, 1, t);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::unknown_tuple);
    }
    return;
  }
  FAIL() << "every tuple used";
}

TEST(Hfm, SingleFeatureCountsAreFlat) {
  for (auto [v, s] : {std::pair{2, 2}, std::pair{3, 2}, std::pair{3, 3}, std::pair{4, 2}}) {
    const int m = static_cast<int>(ipow(v, s - 1));
    auto inst = build_hfm_instance(make(v, m, s, 2, v, 17));
    const auto expected = ipow(v, s - 2);
    for (const auto& r : inst.rules) {
      for (int t = 0; t < s; ++t) {
        for (int hi = 0; hi < v; ++hi) {
          std::vector<std::uint64_t> cnt(v, 0);
          for (auto code : r.representations(hi)) ++cnt[tuple_element(code, v, s, t)];
          for (auto c : cnt) EXPECT_EQ(c, expected);
        }
      }
    }
  }
}

TEST(Hfm, UnsupportedParameters) {
  try {
    build_hfm_instance(make(3, 2, 2, 2, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unsupported_construction);
  }
  EXPECT_THROW(build_hfm_instance(make(3, 3, 2, 2, 2)), Error);
}

TEST(Theory, CharacteristicSizes) {
  auto r = theory_quantities(make(8, 8, 2, 3, 8));
  EXPECT_EQ(r.p_star, 4096);
  EXPECT_EQ(r.p_c, 4096);
  EXPECT_TRUE(r.p_star_exact.has_value());
  EXPECT_EQ(static_cast<std::uint64_t>(*r.p_star_exact), 4096u);
  EXPECT_DOUBLE_EQ(r.eps_rand, 0.875);
  EXPECT_EQ(static_cast<std::uint64_t>(*r.p_max_exact), 16777216u);
  EXPECT_NEAR(r.p_cluster, std::sqrt(8.0) * 512, 1e-9);

  auto small = theory_quantities(make(2, 2, 2, 2, 2));
  EXPECT_EQ(small.p_max, 16);
}

TEST(Theory, SingleLevelLogCounts) {
  auto r = theory_quantities(make(2, 2, 2, 1, 2));
  EXPECT_NEAR(r.log_num_rules, std::log(6.0), 1e-12);
  EXPECT_NEAR(r.p_min_nats, std::log(6.0), 1e-12);
  ASSERT_TRUE(r.log_f_hfm.has_value());
}

TEST(Theory, HfmFractionOnlyForMaximalMultiplicity) {
  EXPECT_FALSE(theory_quantities(make(3, 2, 2, 2, 3)).log_f_hfm.has_value());
  auto r = theory_quantities(make(3, 3, 2, 2, 3));
  ASSERT_TRUE(r.log_f_hfm.has_value());
  EXPECT_LT(*r.log_f_hfm, 0.0);
}

TEST(Theory, ExactOverflowFlagged) {
  auto r = theory_quantities(make(16, 16, 2, 6, 16));
  EXPECT_FALSE(r.p_max_exact.has_value());
  EXPECT_TRUE(std::isfinite(r.p_max));
}
