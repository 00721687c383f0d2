#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "rhm/rhm.hpp"

using namespace rhm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

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

std::string num(double x, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << x;
  return os.str();
}

std::uint64_t p_max_of(const ModelParams& p) { return static_cast<std::uint64_t>(*exact_p_max(p)); }

/// |a - b| <= k * se, with a rounding allowance for quantities that are
/// exactly fixed (se = 0).
bool within_se(double a, double b, double se, double k = 3.0) {
  return std::abs(a - b) <= k * se + 1e-12 * std::max(std::abs(a), std::abs(b));
}

// 1. Exact counts equal brute-force enumeration.
Outcome exact_counts() {
  int configs = 0;
  for (int v = 2; v <= 4; ++v)
    for (int m = 2; m <= 4; ++m)
      for (int nc = 2; nc <= 4; ++nc)
        for (int L = 1; L <= 3; ++L) {
          const auto p = make(v, m, 2, L, nc, 1000 + 100 * v + 10 * m + nc);
          try {
            validate(p);
          } catch (const Error&) {
            continue;
          }
          const auto inst = build_instance(p);
          const auto all = enumerate_dataset(inst);
          const auto exact = exact_tuple_counts(inst);
          const auto brute = empirical_counts(all, inst);
          const auto fexact = exact_feature_counts(inst);
          const auto fbrute = empirical_feature_counts(all, p.v, p.n_c);
          if (exact.counts != brute.counts || exact.total != brute.total || fexact.counts != fbrute.counts) {
            return {false, "mismatch at v=" + std::to_string(v) + " m=" + std::to_string(m) +
                               " n_c=" + std::to_string(nc) + " L=" + std::to_string(L)};
          }
          ++configs;
        }
  return {configs > 0, std::to_string(configs) + " configurations identical entry for entry"};
}

// 2. Single-rule moments against Monte Carlo over 10^4 rules.
Outcome rule_moment_check() {
  const auto p = make(8, 8, 2, 2, 8, 2024);
  const auto th = rule_moments(p);
  const auto mc = monte_carlo_moments(p, 10000, 77);
  struct Q {
    const char* name;
    double theory, est, se;
  } qs[] = {{"mean", th.mean, mc.estimate.mean, mc.stderr_.mean},
            {"var", th.var, mc.estimate.var, mc.stderr_.var},
            {"cov_same_hi", th.cov_same_hi, mc.estimate.cov_same_hi, mc.stderr_.cov_same_hi},
            {"cov_same_lo", th.cov_same_lo, mc.estimate.cov_same_lo, mc.stderr_.cov_same_lo},
            {"cov_none", th.cov_none, mc.estimate.cov_none, mc.stderr_.cov_none}};
  bool ok = true;
  std::string d;
  for (const auto& q : qs) {
    const bool good = within_se(q.est, q.theory, q.se);
    ok = ok && good;
    d += std::string(q.name) + " " + num(q.est) + " vs " + num(q.theory) + " (" +
         num(q.se > 0 ? std::abs(q.est - q.theory) / q.se : 0.0, 2) + " SE)" + (good ? "" : " FAIL") + "; ";
  }
  return {ok, d};
}

// 3. Instance-to-instance signal variance at v = m = n_c = 16, L = 2.
Outcome signal_scaling() {
  const auto p = make(16, 16, 2, 2, 16, 31);
  const auto lm = level_moments(p);
  const auto mc = monte_carlo_moments(p, 500, 91);
  const bool exact_ok = within_se(mc.signal_var, lm.signal_var, mc.signal_var_se);
  const double rel = std::abs(mc.signal_var - lm.signal_var_asymptotic) / lm.signal_var_asymptotic;
  return {exact_ok && rel < 0.3, "MC " + num(mc.signal_var) + " +- " + num(mc.signal_var_se, 2) + ", recursion " +
                                     num(lm.signal_var) + " (" +
                                     num(std::abs(mc.signal_var - lm.signal_var) / mc.signal_var_se, 2) +
                                     " SE), asymptote " + num(lm.signal_var_asymptotic) + " (" + num(100 * rel, 3) +
                                     "% off)"};
}

// 4. Sampling-noise slope of the empirical frequencies.
Outcome noise_scaling() {
  const auto inst = build_instance(make(8, 8, 2, 2, 8, 5));
  const std::vector<std::uint64_t> grid{512, 1024, 2048, 4096, 8192};
  try {
    const auto pts = noise_scaling_probe(inst, grid, 200, 13);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& pt : pts) {
      const double x = std::log(static_cast<double>(pt.P)), y = std::log(pt.variance);
      sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    const double n = static_cast<double>(pts.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return {std::isfinite(slope) && std::abs(slope + 1.0) <= 0.1, "slope " + num(slope)};
  } catch (const Error& e) {
    // Report the slope over the sizes that do exist, for the record.
    const std::vector<std::uint64_t> ok{512, 1024, 2048};
    const auto pts = noise_scaling_probe(inst, ok, 200, 13);
    const double slope = std::log(pts.back().variance / pts.front().variance) / std::log(4.0);
    return {false, std::string(e.what()) + " (p_max=" + std::to_string(p_max_of(inst.params)) +
                       "); slope over P=512..2048 is " + num(slope)};
  }
}

// 5. One-step sensitivity collapse versus P / p_c.
Outcome onestep_collapse() {
  const std::vector<std::pair<int, int>> cases{{8, 2}, {8, 3}, {12, 2}};
  const std::vector<double> ratios{0.25, 0.5, 1.0, 2.0, 4.0};
  const int seeds = 5;
  std::vector<std::vector<double>> S(cases.size(), std::vector<double>(ratios.size()));
  bool monotone = true, zero_at_full = true;
  std::string d;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto [v, L] = cases[c];
    const auto p = make(v, v, 2, L, v, 500 + c);
    const double pc = theory_quantities(p).p_c;
    std::vector<RhmInstance> insts;
    for (int k = 0; k < seeds; ++k) insts.push_back(scan_instance(p, k, false));
    for (std::size_t r = 0; r < ratios.size(); ++r) {
      const auto P = static_cast<std::uint64_t>(std::llround(ratios[r] * pc));
      double acc = 0.0;
      for (const auto& inst : insts) {
        Rng rng = Rng(inst.params.seed).derive(P);
        acc += onestep_sensitivity(inst, P, kDefaultProbeSize, kDefaultReplacements, rng).S;
      }
      S[c][r] = acc / seeds;
      if (r > 0 && !(S[c][r] < S[c][r - 1])) monotone = false;
    }
    // The full dataset: its counts are the exact counts.
    for (const auto& inst : insts) {
      const auto g = g_vectors(exact_tuple_counts(inst), false);
      Rng pr(inst.params.seed);
      const auto probe = sample_training_set(inst, kDefaultProbeSize, pr);
      const auto s = synonymic_sensitivity(onestep_representation(g, v, 2), inst, 1, probe, kDefaultReplacements, pr);
      if (s.S != 0.0) zero_at_full = false;
    }
    d += "(v=" + std::to_string(v) + ",L=" + std::to_string(L) + "):";
    for (double x : S[c]) d += " " + num(x, 3);
    d += "; ";
  }
  double worst = 0.0;
  for (std::size_t r : {0u, 2u, 4u}) {
    double lo = 1e9, hi = -1e9;
    for (const auto& row : S) lo = std::min(lo, row[r]), hi = std::max(hi, row[r]);
    worst = std::max(worst, hi - lo);
  }
  d += "max spread at P/p_c in {1/4,1,4}: " + num(worst, 3) + (monotone ? "" : "; not monotone") +
       (zero_at_full ? "; S=0 at p_max" : "; S!=0 at p_max");
  return {monotone && zero_at_full && worst <= 0.15, d};
}

double layerwise_error(const ModelParams& p, std::uint64_t P, int seeds) {
  double acc = 0.0;
  for (int k = 0; k < seeds; ++k) {
    const auto inst = scan_instance(p, k, false);
    Rng rng = Rng(inst.params.seed).derive(P);
    const auto split = sample_train_test(inst, P, rng, kDefaultTestSize);
    LayerwiseConfig cfg;
    cfg.kmeans.seed = rng.derive(7).key();
    acc += layerwise_solve(inst, split.train, split.test, cfg).test_error;
  }
  return acc / seeds;
}

// 6. Layerwise clustering threshold ~ v^{L+1/2}.
Outcome clustering_threshold() {
  const int seeds = 5;
  bool ok = true;
  std::string d;
  std::vector<double> thresholds;
  for (int v : {4, 8}) {
    const auto p = make(v, v, 2, 2, v, 600 + v);
    const double scale = std::pow(static_cast<double>(v), 2.5);
    const auto hi = static_cast<std::uint64_t>(std::llround(4 * scale));
    const auto lo = static_cast<std::uint64_t>(std::llround(scale / 4));
    const double e_hi = layerwise_error(p, hi, seeds);
    const double e_lo = layerwise_error(p, lo, seeds);
    const double eps = 1.0 - 1.0 / v;
    ok = ok && e_hi < 0.1 && e_lo > 0.5 * eps;
    d += "v=" + std::to_string(v) + ": err(" + std::to_string(hi) + ")=" + num(e_hi, 3) + " err(" +
         std::to_string(lo) + ")=" + num(e_lo, 3);
    const double cap = 0.875 * static_cast<double>(p_max_of(p));
    double thr = std::nan("");
    for (auto P : geometric_grid(static_cast<double>(lo), cap)) {
      if (layerwise_error(p, P, seeds) < 0.1) {
        thr = static_cast<double>(P);
        break;
      }
    }
    thresholds.push_back(thr);
    d += " threshold=" + (std::isnan(thr) ? std::string("none<=") + num(cap, 5) : num(thr, 5)) + "; ";
  }
  const double ratio = thresholds[1] / thresholds[0];
  const double expected = std::pow(2.0, 2.5);
  const bool scaling = std::isfinite(ratio) && ratio >= expected / 2 && ratio <= expected * 2;
  d += "ratio " + num(ratio, 3) + " vs " + num(expected, 3);
  return {ok && scaling, d};
}

/// Geometric sqrt(2) grid from lo up to hi, every point kept at most 7/8 of
/// p_max so the test set is never empty.
std::vector<std::uint64_t> training_grid(const ModelParams& p, double lo, double hi) {
  const auto cap = static_cast<std::uint64_t>(0.875 * static_cast<double>(p_max_of(p)));
  std::vector<std::uint64_t> g;
  for (auto P : geometric_grid(lo, hi)) {
    P = std::min(P, cap);
    if (g.empty() || g.back() != P) g.push_back(P);
  }
  return g;
}

TrainConfig scan_training() {
  TrainConfig t;
  t.max_epochs = 20000;
  return t;
}

// 7. Tree-CNN sample complexity near n_c m^L.
Outcome cnn_sample_complexity() {
  bool ok = true;
  std::string d;
  for (int v : {4, 8}) {
    const auto p = make(v, v, 2, 2, v, 700 + v);
    const double star = theory_quantities(p).p_star;
    ScanConfig cfg;
    cfg.grid = training_grid(p, star / 8, 4 * star);
    cfg.arch = {ArchKind::tree_cnn};
    cfg.train = scan_training();
    cfg.stop_when_met = true;
    const auto res = sample_complexity_scan(p, cfg);
    const bool good = res.p_star && *res.p_star >= star / 4 && *res.p_star <= 4 * star;
    ok = ok && good;
    d += "v=" + std::to_string(v) + ": P*=" + (res.p_star ? std::to_string(*res.p_star) : std::string("none")) +
         " (p_star=" + num(star, 5) + ", errors";
    for (const auto& pt : res.points) d += " " + std::to_string(pt.P) + ":" + num(pt.mean_error, 3);
    d += "); ";
  }
  return {ok, d};
}

// 8. Shallow-FCN sample size at half the chance error grows like p_max.
Outcome shallow_curse() {
  std::vector<double> cross, pmax;
  std::string d;
  for (int v : {4, 8}) {
    const auto p = make(v, v, 2, 2, v, 800 + v);
    const double eps = 1.0 - 1.0 / v;
    const double target = 0.5 * eps;
    const double full = static_cast<double>(p_max_of(p));
    std::vector<ScanPoint> pts;
    for (auto P : training_grid(p, full / 16, full)) {
      ScanConfig cfg;
      cfg.grid = {P};
      cfg.arch = {ArchKind::shallow_fcn};
      cfg.train = scan_training();
      const auto res = sample_complexity_scan(p, cfg);
      pts.push_back(res.points.front());
      if (pts.back().runs > 0 && pts.back().mean_error <= target) break;
    }
    const auto c = crossing_point(pts, target);
    cross.push_back(c ? *c : std::nan(""));
    pmax.push_back(full);
    d += "v=" + std::to_string(v) + ": P(eps=" + num(target, 3) + ")=" + (c ? num(*c, 4) : std::string("none")) +
         " (errors";
    for (const auto& pt : pts) d += " " + std::to_string(pt.P) + ":" + num(pt.mean_error, 3);
    d += "); ";
  }
  const double ratio = cross[1] / cross[0];
  const double expected = pmax[1] / pmax[0];
  d += "ratio " + num(ratio, 3) + " vs p_max ratio " + num(expected, 3);
  return {std::isfinite(ratio) && ratio >= expected / 3 && ratio <= expected * 3, d};
}

// 9. Homogeneous features stay unlearnable at p_max / 2.
Outcome hfm_null() {
  const auto p = make(4, 4, 2, 2, 4, 900);
  const auto P = p_max_of(p) / 2;
  const double floor = 0.5 * (1.0 - 1.0 / p.n_c);
  bool ok = true;
  std::string d = "P=" + std::to_string(P) + " errors";
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto inst = scan_instance(p, seed, true);
    const auto rec = run_cell(inst, P, seed, {ArchKind::tree_cnn}, scan_training(), kDefaultTestSize);
    ok = ok && rec.test_error > floor;
    d += " " + num(rec.test_error, 3);
  }
  return {ok, d + " (floor " + num(floor, 3) + ")"};
}

// 10. Backprop against central differences.
Outcome gradient_exactness() {
  Rng rng(2025);
  double worst = 0.0;
  std::string d;
  for (auto kind : {ArchKind::shallow_fcn, ArchKind::deep_fcn, ArchKind::tree_cnn}) {
    double w = 0.0;
    for (int t = 0; t < 100; ++t) w = std::max(w, oracle::gradient_check(kind, rng));
    worst = std::max(worst, w);
    d += to_string(kind) + " max rel err " + num(w, 3) + "; ";
  }
  return {worst < 1e-4, d};
}

// 11. Layer-by-layer sensitivity of a trained tree CNN.
Outcome sensitivity_structure() {
  const auto p = make(8, 8, 2, 3, 8, 1100);
  const auto P = static_cast<std::uint64_t>(16 * theory_quantities(p).p_star);
  const auto inst = scan_instance(p, 0, false);
  const Architecture arch{ArchKind::tree_cnn};
  const auto cell = train_cell(inst, P, 0, arch, scan_training(), kDefaultTestSize);
  Dataset probe;
  probe.dim = cell.test.dim;
  for (std::size_t i = 0; i < kDefaultProbeSize; ++i) probe.push_back(cell.test.at(i));
  ProbeConfig pc;
  Rng r1(11), r2(11);
  const auto trained = sensitivity_profile(cell.net, inst, probe, pc, r1);
  const auto init = sensitivity_profile(initial_network(inst, P, arch), inst, probe, pc, r2);

  bool monotone = true, learned = true, random_start = true;
  std::string d = "P=" + std::to_string(P) + " test_error=" + num(cell.record.test_error, 3) + "; ";
  for (int l = 1; l <= p.L; ++l) {
    for (int k = 0; k + 1 < trained.layers(); ++k) {
      const auto& a = trained.at(k, l);
      const auto& b = trained.at(k + 1, l);
      if (b.S > a.S + a.se + b.se) monotone = false;
    }
    const double s_tr = trained.at(l + 1, l).S, s_in = init.at(l + 1, l).S;
    learned = learned && s_tr < 0.3;
    random_start = random_start && s_in > 0.7;
    d += "l=" + std::to_string(l) + ": S_k=";
    for (int k = 0; k < trained.layers(); ++k) d += (k ? "," : "") + num(trained.at(k, l).S, 3);
    d += " init S_" + std::to_string(l + 1) + "=" + num(s_in, 3) + "; ";
  }
  if (!monotone) d += "not monotone in k; ";
  return {monotone && learned && random_start, d};
}

struct Check {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Check> all = {
      {1, "exact counts equal brute-force enumeration", exact_counts},
      {2, "single-rule moments match Monte Carlo", rule_moment_check},
      {3, "signal variance matches recursion and asymptote", signal_scaling},
      {4, "sampling-noise variance slope is -1", noise_scaling},
      {5, "one-step sensitivity collapses in P/p_c", onestep_collapse},
      {6, "layerwise clustering threshold scales as v^(L+1/2)", clustering_threshold},
      {7, "tree-CNN sample complexity within 4x of n_c m^L", cnn_sample_complexity},
      {8, "shallow-FCN sample size grows with p_max", shallow_curse},
      {9, "homogeneous features stay near chance", hfm_null},
      {10, "backprop matches finite differences", gradient_exactness},
      {11, "sensitivity decreases with depth after training", sensitivity_structure},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
