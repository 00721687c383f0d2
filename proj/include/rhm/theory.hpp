#pragma once

#include <cmath>
#include <optional>

#include "rhm/params.hpp"

namespace rhm {

/// Closed-form characteristic quantities of a parameter set.
struct TheoryReport {
  double p_max = 0.0;
  /// Exact p_max when it fits in 128 bits.
  std::optional<u128> p_max_exact;
  /// Information-theoretic lower bound in nats: log #instances.
  double p_min_nats = 0.0;
  /// Predicted deep-CNN sample complexity n_c m^L.
  double p_star = 0.0;
  std::optional<u128> p_star_exact;
  /// Scale at which input-label correlations beat sampling noise (= p_star).
  double p_c = 0.0;
  /// Chance error 1 - 1/n_c.
  double eps_rand = 0.0;
  /// log #rules of one internal (domain v) rule.
  double log_num_rules = 0.0;
  double log_num_instances = 0.0;
  /// log fraction of homogeneous-feature instances, only for m = v^{s-1}.
  std::optional<double> log_f_hfm;
  /// Threshold of the layerwise clustering algorithm, sqrt(n_c) m^L.
  double p_cluster = 0.0;
};

inline double log_factorial(double n) { return std::lgamma(n + 1.0); }

/// log of (v^s)! / ((m!)^domain (v^s - domain*m)!): the number of ways to give
/// each of `domain` symbols m distinct tuples, without replacement.
inline double log_rule_count(int v, int s, int m, int domain) {
  const double tuples = std::pow(static_cast<double>(v), s);
  return log_factorial(tuples) - domain * log_factorial(m) - log_factorial(tuples - domain * m);
}

inline TheoryReport theory_quantities(const ModelParams& p) {
  validate(p);
  TheoryReport r;
  r.p_max_exact = exact_p_max(p);
  r.p_max = p.n_c * std::pow(static_cast<double>(p.m), p.path_length());

  u128 star = static_cast<u128>(p.n_c);
  for (int i = 0; i < p.L; ++i) star *= static_cast<u128>(p.m);
  r.p_star_exact = star;
  r.p_star = p.n_c * std::pow(static_cast<double>(p.m), p.L);
  r.p_c = r.p_star;
  r.p_cluster = std::sqrt(static_cast<double>(p.n_c)) * std::pow(static_cast<double>(p.m), p.L);
  r.eps_rand = 1.0 - 1.0 / p.n_c;

  r.log_num_rules = log_rule_count(p.v, p.s, p.m, p.v);
  double total = 0.0;
  for (int level = 1; level <= p.L; ++level) {
    total += log_rule_count(p.v, p.s, p.m, p.domain_size(level));
  }
  // Internal representations can be relabeled without changing the task.
  total -= (p.L - 1) * log_factorial(p.v);
  r.log_num_instances = total;
  r.p_min_nats = total;

  const double row = std::pow(static_cast<double>(p.v), p.s - 1);
  if (static_cast<double>(p.m) == row) {
    const double log_v_fact = log_factorial(p.v);
    const double homogeneous = (p.s - 1) * log_factorial(row);
    const double per_level = homogeneous - (r.log_num_rules - log_v_fact);
    r.log_f_hfm = -log_v_fact + p.L * per_level;
  }
  return r;
}

}  // namespace rhm
