#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "rhm/dataset.hpp"
#include "rhm/error.hpp"
#include "rhm/hierarchy.hpp"
#include "rhm/params.hpp"
#include "rhm/random.hpp"

namespace rhm {

enum class CountKind { exact, empirical };

/// Occurrences N_j(mu; alpha) of s-tuples mu (coded over `alphabet`) in
/// patch j for class alpha. Patch j covers positions [j*s, (j+1)*s).
/// Stored patch-major, then tuple, then class.
struct OccurrenceTable {
  CountKind kind = CountKind::exact;
  int patches = 0;
  int alphabet = 0;
  int s = 0;
  int n_c = 0;
  int tuples = 0;
  std::uint64_t total = 0;
  std::vector<std::uint64_t> counts;

  std::size_t offset(int j, TupleCode mu, int alpha) const {
    return (static_cast<std::size_t>(j) * static_cast<std::size_t>(tuples) +
            static_cast<std::size_t>(mu)) *
               static_cast<std::size_t>(n_c) +
           static_cast<std::size_t>(alpha);
  }
  std::uint64_t count(int j, TupleCode mu, int alpha) const { return counts[offset(j, mu, alpha)]; }
  std::uint64_t marginal(int j, TupleCode mu) const {
    std::uint64_t acc = 0;
    for (int a = 0; a < n_c; ++a) acc += count(j, mu, a);
    return acc;
  }

  friend bool operator==(const OccurrenceTable&, const OccurrenceTable&) = default;
};

/// Single-feature occurrences N_i(mu; alpha) per input position i.
struct FeatureTable {
  CountKind kind = CountKind::exact;
  int positions = 0;
  int alphabet = 0;
  int n_c = 0;
  std::uint64_t total = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t count(int i, int mu, int alpha) const {
    return counts[(static_cast<std::size_t>(i) * static_cast<std::size_t>(alphabet) +
                   static_cast<std::size_t>(mu)) *
                      static_cast<std::size_t>(n_c) +
                  static_cast<std::size_t>(alpha)];
  }

  friend bool operator==(const FeatureTable&, const FeatureTable&) = default;
};

/// f_j(alpha | mu); entries with N_j(mu) = 0 are NaN and reported undefined.
struct FrequencyTable {
  int patches = 0;
  int tuples = 0;
  int n_c = 0;
  std::vector<double> freqs;

  double at(int j, TupleCode mu, int alpha) const {
    return freqs[(static_cast<std::size_t>(j) * static_cast<std::size_t>(tuples) +
                  static_cast<std::size_t>(mu)) *
                     static_cast<std::size_t>(n_c) +
                 static_cast<std::size_t>(alpha)];
  }
  bool defined(int j, TupleCode mu) const { return !std::isnan(at(j, mu, 0)); }
};

namespace detail {

/// occ[slot][child * domain + parent]: how often `child` sits in slot
/// `slot` of the representations of `parent`.
inline std::vector<std::vector<std::uint64_t>> slot_occurrences(const CompositionRule& rule) {
  std::vector<std::vector<std::uint64_t>> occ(
      static_cast<std::size_t>(rule.s),
      std::vector<std::uint64_t>(static_cast<std::size_t>(rule.v) * rule.domain_size, 0));
  for (int parent = 0; parent < rule.domain_size; ++parent) {
    for (TupleCode t : rule.representations(parent)) {
      for (int slot = 0; slot < rule.s; ++slot) {
        const int child = tuple_element(t, rule.v, rule.s, slot);
        ++occ[static_cast<std::size_t>(slot)][static_cast<std::size_t>(child) * rule.domain_size +
                                              static_cast<std::size_t>(parent)];
      }
    }
  }
  return occ;
}

/// C_level(mu; alpha) for the tree node reached from the root by following
/// `digits` (child indices, root side first) down to `stop_level`: the
/// number of single-choice paths that put symbol mu at that node given class
/// alpha, before the multiplicity prefactor.
inline std::vector<u128> path_counts(const RhmInstance& inst,
                                     const std::vector<std::vector<std::vector<std::uint64_t>>>& occ,
                                     std::span<const int> digits, int stop_level) {
  const auto& p = inst.params;
  // Level L+1 symbols are the classes themselves.
  int width = p.n_c;
  std::vector<u128> current(static_cast<std::size_t>(p.n_c) * p.n_c, 0);
  for (int a = 0; a < p.n_c; ++a) current[static_cast<std::size_t>(a) * p.n_c + a] = 1;
  std::size_t d = 0;
  for (int level = p.L; level >= stop_level; --level) {
    const auto& rule = inst.rule(level);
    const auto& table = occ[static_cast<std::size_t>(level - 1)][static_cast<std::size_t>(digits[d++])];
    std::vector<u128> next(static_cast<std::size_t>(p.v) * p.n_c, 0);
    for (int child = 0; child < p.v; ++child) {
      for (int parent = 0; parent < width; ++parent) {
        const auto n = table[static_cast<std::size_t>(child) * rule.domain_size +
                             static_cast<std::size_t>(parent)];
        if (n == 0) continue;
        for (int a = 0; a < p.n_c; ++a) {
          next[static_cast<std::size_t>(child) * p.n_c + a] +=
              static_cast<u128>(n) * current[static_cast<std::size_t>(parent) * p.n_c + a];
        }
      }
    }
    current = std::move(next);
    width = p.v;
  }
  return current;
}

inline std::uint64_t to_count(u128 x) {
  require(x <= static_cast<u128>(std::numeric_limits<std::uint64_t>::max()),
          ErrorCode::out_of_range, "occurrence count overflows 64 bits");
  return static_cast<std::uint64_t>(x);
}

/// Base-s digits of `index` with `n` digits, most significant first.
inline std::vector<int> base_digits(std::uint64_t index, int s, int n) {
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int k = n - 1; k >= 0; --k) {
    out[static_cast<std::size_t>(k)] = static_cast<int>(index % static_cast<std::uint64_t>(s));
    index /= static_cast<std::uint64_t>(s);
  }
  return out;
}

inline u128 multiplicity_prefactor(const ModelParams& p) {
  u128 f = 1;
  for (int i = 0; i < p.path_length() - p.L; ++i) f *= static_cast<u128>(p.m);
  return f;
}

}  // namespace detail

/// Exact N_j(mu; alpha) from the rules alone, via the tree recursion over the
/// patch's ancestors. Tuples outside the level-1 inverse count zero.
inline OccurrenceTable exact_tuple_counts(const RhmInstance& inst) {
  const auto& p = inst.params;
  const auto pmax = exact_p_max(p);
  require(pmax.has_value(), ErrorCode::out_of_range, "p_max overflows 128 bits");
  std::vector<std::vector<std::vector<std::uint64_t>>> occ;
  for (const auto& rule : inst.rules) occ.push_back(detail::slot_occurrences(rule));

  OccurrenceTable table;
  table.kind = CountKind::exact;
  table.patches = p.patch_count();
  table.alphabet = p.v;
  table.s = p.s;
  table.n_c = p.n_c;
  table.tuples = p.tuple_count();
  table.total = detail::to_count(*pmax);
  table.counts.assign(static_cast<std::size_t>(table.patches) * table.tuples * p.n_c, 0);

  const u128 prefactor = detail::multiplicity_prefactor(p);
  const auto& input_rule = inst.rule(1);
  for (int j = 0; j < table.patches; ++j) {
    const auto digits = detail::base_digits(static_cast<std::uint64_t>(j), p.s, p.L - 1);
    // C_2: counts of the level-2 symbol that emits patch j.
    std::vector<u128> level2;
    if (p.L == 1) {
      level2.assign(static_cast<std::size_t>(p.n_c) * p.n_c, 0);
      for (int a = 0; a < p.n_c; ++a) level2[static_cast<std::size_t>(a) * p.n_c + a] = 1;
    } else {
      level2 = detail::path_counts(inst, occ, digits, 2);
    }
    for (TupleCode mu = 0; mu < table.tuples; ++mu) {
      const int parent = input_rule.inverse[mu];
      if (parent < 0) continue;
      for (int a = 0; a < p.n_c; ++a) {
        table.counts[table.offset(j, mu, a)] = detail::to_count(
            prefactor * level2[static_cast<std::size_t>(parent) * p.n_c + a]);
      }
    }
  }
  return table;
}

/// Exact single-feature occurrences at every input position.
inline FeatureTable exact_feature_counts(const RhmInstance& inst) {
  const auto& p = inst.params;
  const auto pmax = exact_p_max(p);
  require(pmax.has_value(), ErrorCode::out_of_range, "p_max overflows 128 bits");
  std::vector<std::vector<std::vector<std::uint64_t>>> occ;
  for (const auto& rule : inst.rules) occ.push_back(detail::slot_occurrences(rule));

  FeatureTable table;
  table.kind = CountKind::exact;
  table.positions = p.input_dim();
  table.alphabet = p.v;
  table.n_c = p.n_c;
  table.total = detail::to_count(*pmax);
  table.counts.assign(static_cast<std::size_t>(table.positions) * p.v * p.n_c, 0);
  const u128 prefactor = detail::multiplicity_prefactor(p);
  for (int i = 0; i < table.positions; ++i) {
    const auto digits = detail::base_digits(static_cast<std::uint64_t>(i), p.s, p.L);
    const auto level1 = detail::path_counts(inst, occ, digits, 1);
    for (int mu = 0; mu < p.v; ++mu) {
      for (int a = 0; a < p.n_c; ++a) {
        table.counts[(static_cast<std::size_t>(i) * p.v + mu) * p.n_c + a] =
            detail::to_count(prefactor * level1[static_cast<std::size_t>(mu) * p.n_c + a]);
      }
    }
  }
  return table;
}

/// Empirical tuple counts over generic symbol strings (`alphabet` symbols,
/// length a multiple of s). Used both on raw inputs and on the coarse-grained
/// strings of the layerwise solver.
inline OccurrenceTable empirical_counts(const Dataset& data, int alphabet, int s, int n_c) {
  require(!data.empty(), ErrorCode::out_of_range, "empirical counts need a nonempty set");
  require(data.dim % s == 0, ErrorCode::out_of_range, "string length not a multiple of s");
  OccurrenceTable table;
  table.kind = CountKind::empirical;
  table.patches = data.dim / s;
  table.alphabet = alphabet;
  table.s = s;
  table.n_c = n_c;
  table.tuples = static_cast<int>(ipow(alphabet, s));
  table.total = data.size();
  table.counts.assign(static_cast<std::size_t>(table.patches) * table.tuples * n_c, 0);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto row = data.row(r);
    for (int j = 0; j < table.patches; ++j) {
      const TupleCode mu = encode_tuple(row.subspan(static_cast<std::size_t>(j) * s, s), alphabet);
      ++table.counts[table.offset(j, mu, data.labels[r])];
    }
  }
  return table;
}

inline OccurrenceTable empirical_counts(const Dataset& data, const RhmInstance& inst) {
  return empirical_counts(data, inst.params.v, inst.params.s, inst.params.n_c);
}

inline FeatureTable empirical_feature_counts(const Dataset& data, int alphabet, int n_c) {
  require(!data.empty(), ErrorCode::out_of_range, "empirical counts need a nonempty set");
  FeatureTable table;
  table.kind = CountKind::empirical;
  table.positions = data.dim;
  table.alphabet = alphabet;
  table.n_c = n_c;
  table.total = data.size();
  table.counts.assign(static_cast<std::size_t>(data.dim) * alphabet * n_c, 0);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto row = data.row(r);
    for (int i = 0; i < data.dim; ++i) {
      ++table.counts[(static_cast<std::size_t>(i) * alphabet + row[i]) * n_c + data.labels[r]];
    }
  }
  return table;
}

inline FrequencyTable conditional_frequencies(const OccurrenceTable& table) {
  require(table.total > 0, ErrorCode::out_of_range, "table has zero total");
  FrequencyTable f;
  f.patches = table.patches;
  f.tuples = table.tuples;
  f.n_c = table.n_c;
  f.freqs.assign(table.counts.size(), std::numeric_limits<double>::quiet_NaN());
  for (int j = 0; j < table.patches; ++j) {
    for (TupleCode mu = 0; mu < table.tuples; ++mu) {
      const auto denom = table.marginal(j, mu);
      if (denom == 0) continue;
      for (int a = 0; a < table.n_c; ++a) {
        f.freqs[table.offset(j, mu, a)] =
            static_cast<double>(table.count(j, mu, a)) / static_cast<double>(denom);
      }
    }
  }
  return f;
}

/// f_i(alpha | mu) for single features at input position i; NaN if unseen.
inline double feature_frequency(const FeatureTable& t, int i, int mu, int alpha) {
  std::uint64_t denom = 0;
  for (int a = 0; a < t.n_c; ++a) denom += t.count(i, mu, a);
  if (denom == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(t.count(i, mu, alpha)) / static_cast<double>(denom);
}

/// Hypergeometric moments of the occurrences N_i(mu_1; mu_2) of one rule.
struct RuleMoments {
  double mean = 0.0;
  double var = 0.0;
  /// Same high-level symbol, different low-level features.
  double cov_same_hi = 0.0;
  /// Same low-level feature, different high-level symbols.
  double cov_same_lo = 0.0;
  /// Nothing shared.
  double cov_none = 0.0;
};

inline RuleMoments rule_moments(const ModelParams& p) {
  validate(p);
  const double v = p.v;
  const double m = p.m;
  const double vs = std::pow(v, p.s);
  RuleMoments r;
  r.mean = m / v;
  r.var = (m / v) * ((v - 1.0) / v) * ((vs - m) / (vs - 1.0));
  r.cov_same_hi = -(m / (v * v)) * ((vs - m) / (vs - 1.0));
  r.cov_same_lo = -(m / v) * (m / v) * (v - 1.0) / (vs - 1.0);
  r.cov_none = (m / v) * (m / v) / (vs - 1.0);
  return r;
}

/// Moments of the numerator U and denominator D of the exact single-feature
/// class frequency, and the resulting signal variance of f.
struct LevelMoments {
  double mean_U = 0.0;
  double var_U = 0.0;
  double mean_D = 0.0;
  double var_D = 0.0;
  /// Var[f(alpha|mu)] from the exact variance recursions, to first order in
  /// the fluctuations of U and D.
  double signal_var = 0.0;
  /// Large-v limit (v/n_c) / (n_c m^L), for comparison.
  double signal_var_asymptotic = 0.0;
  /// Coefficient c of the sampling noise Var[f_hat - f] ~ c / P.
  double noise_coeff = 0.0;
  double p_c = 0.0;
};

inline LevelMoments level_moments(const ModelParams& p) {
  validate(p);
  const RuleMoments rm = rule_moments(p);
  const long double v = p.v;
  const long double nc = p.n_c;
  const long double sigma_n = rm.var;
  const long double c_if = rm.cov_same_lo;

  long double mean_u = rm.mean;
  long double var_u = sigma_n;
  long double mean_d = nc * rm.mean;
  long double var_d = nc * sigma_n + nc * (nc - 1) * c_if;
  for (int level = 2; level <= p.L; ++level) {
    const long double next_var_u =
        v * var_u * (sigma_n - c_if) + v * mean_u * mean_u * (sigma_n + (v - 1) * c_if);
    const long double next_var_d =
        v * var_d * (sigma_n - c_if) + v * mean_d * mean_d * (sigma_n + (v - 1) * c_if);
    mean_u *= v * rm.mean;
    mean_d *= v * rm.mean;
    var_u = next_var_u;
    var_d = next_var_d;
  }
  LevelMoments out;
  out.mean_U = static_cast<double>(mean_u);
  out.var_U = static_cast<double>(var_u);
  out.mean_D = static_cast<double>(mean_d);
  out.var_D = static_cast<double>(var_d);
  const long double mL = std::pow(static_cast<long double>(p.m), p.L);
  out.signal_var = static_cast<double>(v * v / (nc * nc * mL * mL) * (var_u - var_d / (nc * nc)));
  out.signal_var_asymptotic = static_cast<double>((v / nc) / (nc * mL));
  out.noise_coeff = static_cast<double>(v / nc);
  out.p_c = static_cast<double>(nc * mL);
  return out;
}

enum class Ensemble { rhm, hfm };

struct MonteCarloMoments {
  RuleMoments estimate;
  RuleMoments stderr_;
  double signal_var = 0.0;
  double signal_var_se = 0.0;
  int n_instances = 0;
};

namespace detail {

struct RunningMean {
  double sum = 0.0;
  double sum_sq = 0.0;
  long n = 0;
  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  double mean() const { return sum / static_cast<double>(n); }
  double se() const {
    if (n < 2) return 0.0;
    const double mu = mean();
    const double var = (sum_sq - static_cast<double>(n) * mu * mu) / static_cast<double>(n - 1);
    return std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
  }
};

}  // namespace detail

/// Per-instance statistic of the instance-to-instance variance of the exact
/// single-feature frequency at input position 0: mean of (f - 1/n_c)^2 over
/// defined (mu, alpha).
inline double frequency_spread(const RhmInstance& inst) {
  const auto table = exact_feature_counts(inst);
  const auto& p = inst.params;
  double acc = 0.0;
  int n = 0;
  for (int mu = 0; mu < p.v; ++mu) {
    for (int a = 0; a < p.n_c; ++a) {
      const double f = feature_frequency(table, 0, mu, a);
      if (std::isnan(f)) continue;
      const double dev = f - 1.0 / p.n_c;
      acc += dev * dev;
      ++n;
    }
  }
  return n > 0 ? acc / n : 0.0;
}

/// Sample moments over independently drawn instances, using exact counts
/// per instance. Each instance contributes one value per moment (averaged
/// over all its index pairs) so standard errors are across instances.
inline MonteCarloMoments monte_carlo_moments(const ModelParams& params, int n_instances,
                                             std::uint64_t seed,
                                             Ensemble ensemble = Ensemble::rhm) {
  validate(params);
  require(n_instances >= 2, ErrorCode::out_of_range, "need at least two instances");
  const Rng root(seed);
  detail::RunningMean mean, var, same_hi, same_lo, none, signal;
  const double mu0 = static_cast<double>(params.m) / params.v;
  for (int k = 0; k < n_instances; ++k) {
    ModelParams ip = params;
    ip.seed = root.derive(static_cast<std::uint64_t>(k)).key();
    const RhmInstance inst =
        ensemble == Ensemble::rhm ? build_instance(ip) : build_hfm_instance(ip);
    const auto& rule = inst.rule(1);
    const auto occ = detail::slot_occurrences(rule);
    const int v = rule.v;
    const int dom = rule.domain_size;
    double m_acc = 0, q_acc = 0, hi_acc = 0, lo_acc = 0, none_acc = 0;
    for (int t = 0; t < rule.s; ++t) {
      const auto& x = occ[static_cast<std::size_t>(t)];
      double total = 0, q = 0, raw = 0;
      std::vector<double> by_hi(static_cast<std::size_t>(dom), 0.0);
      std::vector<double> by_lo(static_cast<std::size_t>(v), 0.0);
      for (int lo = 0; lo < v; ++lo) {
        for (int hi = 0; hi < dom; ++hi) {
          const double n = static_cast<double>(x[static_cast<std::size_t>(lo) * dom + hi]);
          const double dev = n - mu0;
          raw += n;
          total += dev;
          q += dev * dev;
          by_hi[static_cast<std::size_t>(hi)] += dev;
          by_lo[static_cast<std::size_t>(lo)] += dev;
        }
      }
      double a2 = 0, b2 = 0;
      for (double a : by_hi) a2 += a * a;
      for (double b : by_lo) b2 += b * b;
      const double cells = static_cast<double>(v) * dom;
      m_acc += raw / cells;
      q_acc += q / cells;
      hi_acc += (a2 - q) / (static_cast<double>(dom) * v * (v - 1));
      lo_acc += (b2 - q) / (static_cast<double>(v) * dom * (dom - 1));
      none_acc += (total * total - a2 - b2 + q) /
                  (static_cast<double>(v) * (v - 1) * dom * (dom - 1));
    }
    mean.add(m_acc / rule.s);
    var.add(q_acc / rule.s);
    same_hi.add(hi_acc / rule.s);
    same_lo.add(lo_acc / rule.s);
    none.add(none_acc / rule.s);
    signal.add(frequency_spread(inst));
  }
  MonteCarloMoments out;
  out.n_instances = n_instances;
  out.estimate = {mean.mean(), var.mean(), same_hi.mean(), same_lo.mean(), none.mean()};
  out.stderr_ = {mean.se(), var.se(), same_hi.se(), same_lo.se(), none.se()};
  out.signal_var = signal.mean();
  out.signal_var_se = signal.se();
  return out;
}

struct NoisePoint {
  std::uint64_t P = 0;
  double variance = 0.0;
  double se = 0.0;
  /// Leading-order prediction (1/n_c^2)(v n_c / P).
  double predicted = 0.0;
};

/// Variance over training-set resamplings of the empirical single-feature
/// frequency f_hat(alpha | mu) at input position 0, averaged over (mu, alpha).
/// Resamples are split into ten batches; `se` is the batch-means error.
inline std::vector<NoisePoint> noise_scaling_probe(const RhmInstance& inst,
                                                   std::span<const std::uint64_t> grid,
                                                   int resamples, std::uint64_t seed) {
  const auto& p = inst.params;
  const auto pmax = exact_p_max(p);
  require(resamples >= 2, ErrorCode::out_of_range, "need at least two resamples");
  for (auto P : grid) {
    require(P >= 1 && (!pmax.has_value() || static_cast<u128>(P) <= *pmax),
            ErrorCode::out_of_range,
            "probe size P=" + std::to_string(P) + " outside [1, p_max]");
  }
  const int batches = std::min(10, resamples / 2);
  const Rng root(seed);
  const std::size_t cells = static_cast<std::size_t>(p.v) * p.n_c;
  std::vector<NoisePoint> out;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto P = grid[g];
    std::vector<std::vector<double>> samples(cells);
    for (int r = 0; r < resamples; ++r) {
      Rng rng = root.derive(g).derive(static_cast<std::uint64_t>(r));
      const auto train = sample_training_set(inst, P, rng);
      const auto table = empirical_feature_counts(train, p.v, p.n_c);
      for (int mu = 0; mu < p.v; ++mu) {
        for (int a = 0; a < p.n_c; ++a) {
          const double f = feature_frequency(table, 0, mu, a);
          if (!std::isnan(f)) samples[static_cast<std::size_t>(mu) * p.n_c + a].push_back(f);
        }
      }
    }
    auto variance_of = [](std::span<const double> xs) {
      if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
      double mu = 0;
      for (double x : xs) mu += x;
      mu /= static_cast<double>(xs.size());
      double acc = 0;
      for (double x : xs) acc += (x - mu) * (x - mu);
      return acc / static_cast<double>(xs.size() - 1);
    };
    auto averaged = [&](std::size_t lo, std::size_t hi) {
      double acc = 0;
      int n = 0;
      for (const auto& xs : samples) {
        const std::size_t b = std::min(lo, xs.size());
        const std::size_t e = std::min(hi, xs.size());
        const double var = variance_of(std::span<const double>(xs.data() + b, e - b));
        if (std::isnan(var)) continue;
        acc += var;
        ++n;
      }
      return n > 0 ? acc / n : 0.0;
    };
    NoisePoint pt;
    pt.P = P;
    pt.variance = averaged(0, static_cast<std::size_t>(resamples));
    detail::RunningMean batch;
    const std::size_t per = static_cast<std::size_t>(resamples / batches);
    for (int b = 0; b < batches; ++b) batch.add(averaged(b * per, (b + 1) * per));
    pt.se = batch.se();
    pt.predicted = static_cast<double>(p.v) / (static_cast<double>(p.n_c) * static_cast<double>(P));
    out.push_back(pt);
  }
  return out;
}

/// Rows (j, mu, alpha, count) for nonzero entries.
inline void write_counts_csv(std::ostream& os, const OccurrenceTable& t) {
  os << "# schema: rhm-counts-v1\n";
  os << "j,mu,alpha,count\n";
  for (int j = 0; j < t.patches; ++j)
    for (TupleCode mu = 0; mu < t.tuples; ++mu)
      for (int a = 0; a < t.n_c; ++a)
        if (auto c = t.count(j, mu, a); c > 0) os << j << ',' << mu << ',' << a << ',' << c << '\n';
}

inline void write_frequencies_csv(std::ostream& os, const FrequencyTable& f) {
  os << "# schema: rhm-freqs-v1\n";
  os << "j,mu,alpha,freq\n";
  os.precision(17);
  for (int j = 0; j < f.patches; ++j)
    for (TupleCode mu = 0; mu < f.tuples; ++mu)
      if (f.defined(j, mu))
        for (int a = 0; a < f.n_c; ++a) os << j << ',' << mu << ',' << a << ',' << f.at(j, mu, a) << '\n';
}

}  // namespace rhm
