#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rhm/dataset.hpp"
#include "rhm/error.hpp"
#include "rhm/hierarchy.hpp"
#include "rhm/nn.hpp"
#include "rhm/theory.hpp"

namespace rhm {

/// Runs fn(0..n-1) on up to `threads` workers. The first exception is
/// rethrown after all workers stop.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const auto i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// relative: eps < eps_rand / 10. absolute: eps < 0.1.
enum class Criterion { relative, absolute };

inline std::string to_string(Criterion c) { return c == Criterion::relative ? "eps_rand/10" : "absolute-0.1"; }

inline double criterion_threshold(Criterion c, const ModelParams& p) {
  return c == Criterion::relative ? (1.0 - 1.0 / p.n_c) / 10.0 : 0.1;
}

/// One trained network.
struct ExperimentRecord {
  ModelParams params;
  std::string arch;
  std::uint64_t P = 0;
  std::uint64_t seed = 0;
  double test_error = 0.0;
  double train_loss = 0.0;
  int epochs = 0;
  bool converged = false;
  /// Wall-clock time; the only field that varies between identical runs.
  double runtime_s = 0.0;

  friend bool operator==(const ExperimentRecord&, const ExperimentRecord&) = default;
};

struct ScanConfig {
  std::vector<std::uint64_t> grid;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  Architecture arch;
  TrainConfig train;
  Criterion criterion = Criterion::relative;
  std::uint64_t test_cap = kDefaultTestSize;
  int threads = 1;
  /// Skip the rest of the grid once a P meets the criterion.
  bool stop_when_met = false;
  /// Homogeneous-features instances instead of random rules.
  bool hfm = false;
};

struct ScanPoint {
  std::uint64_t P = 0;
  double mean_error = 0.0;
  double se = 0.0;
  int runs = 0;
  int non_converged = 0;
};

struct ScanResult {
  std::vector<ExperimentRecord> records;
  std::vector<ScanPoint> points;
  /// Smallest grid P meeting the criterion; empty means above the grid max.
  std::optional<std::uint64_t> p_star;
  double threshold = 0.0;
  Criterion criterion = Criterion::relative;
  std::vector<std::string> warnings;
};

/// Instance used by scan seed `seed`: the same for every P of the grid.
inline RhmInstance scan_instance(const ModelParams& params, std::uint64_t seed, bool hfm) {
  ModelParams p = params;
  p.seed = Rng(params.seed).derive(seed).key();
  return hfm ? build_hfm_instance(p) : build_instance(p);
}

/// Everything produced by one training run.
struct CellOutput {
  ExperimentRecord record;
  Network<float> net;
  TrainResult result;
  Dataset test;
};

/// Trains one fresh network on a fresh split; all randomness is keyed by
/// (instance seed, P).
inline CellOutput train_cell(const RhmInstance& inst, std::uint64_t P, std::uint64_t seed, const Architecture& arch,
                             const TrainConfig& train_cfg, std::uint64_t test_cap) {
  const auto t0 = std::chrono::steady_clock::now();
  const Rng root = Rng(inst.params.seed).derive(P);
  Rng split_rng = root.derive(1);
  Rng init_rng = root.derive(2);
  Rng train_rng = root.derive(3);
  auto split = sample_train_test(inst, P, split_rng, test_cap);
  CellOutput out;
  out.net = init_network<float>(arch, inst.params, init_rng);
  out.result = train(out.net, split.train, train_cfg, train_rng);
  auto& rec = out.record;
  rec.params = inst.params;
  rec.arch = to_string(arch.kind);
  rec.P = P;
  rec.seed = seed;
  rec.test_error = split.test.empty() ? std::nan("") : test_error(out.net, split.test, train_cfg.whiten);
  rec.train_loss = out.result.final_loss;
  rec.epochs = out.result.epochs;
  rec.converged = out.result.converged;
  rec.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.test = std::move(split.test);
  return out;
}

/// The network a run starts from, for measurements at initialization.
inline Network<float> initial_network(const RhmInstance& inst, std::uint64_t P, const Architecture& arch) {
  Rng init_rng = Rng(inst.params.seed).derive(P).derive(2);
  return init_network<float>(arch, inst.params, init_rng);
}

inline ExperimentRecord run_cell(const RhmInstance& inst, std::uint64_t P, std::uint64_t seed, const Architecture& arch,
                                 const TrainConfig& train_cfg, std::uint64_t test_cap) {
  return train_cell(inst, P, seed, arch, train_cfg, test_cap).record;
}

inline void validate(const ScanConfig& cfg, const ModelParams& params) {
  validate(params);
  validate(cfg.train);
  require(!cfg.grid.empty(), ErrorCode::config, "P grid is empty");
  require(!cfg.seeds.empty(), ErrorCode::config, "no seeds given");
  const auto pmax = exact_p_max(params);
  for (auto P : cfg.grid) {
    require(P >= 1, ErrorCode::config, "grid values must be positive");
    require(!pmax || static_cast<u128>(P) <= *pmax, ErrorCode::config,
            "grid value " + std::to_string(P) + " exceeds p_max");
  }
}

/// Trains networks for every (P, seed), averages the test error per P over
/// converged runs and reports the first grid P below the threshold.
inline ScanResult sample_complexity_scan(const ModelParams& params, const ScanConfig& cfg) {
  validate(cfg, params);
  ScanResult out;
  out.criterion = cfg.criterion;
  out.threshold = criterion_threshold(cfg.criterion, params);
  out.warnings = architecture_warnings(cfg.arch, params);

  auto grid = cfg.grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::vector<RhmInstance> instances;
  for (auto seed : cfg.seeds) instances.push_back(scan_instance(params, seed, cfg.hfm));

  for (auto P : grid) {
    std::vector<ExperimentRecord> cell(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), cfg.threads, [&](std::size_t i) {
      cell[i] = run_cell(instances[i], P, cfg.seeds[i], cfg.arch, cfg.train, cfg.test_cap);
      cell[i].params = params;
    });
    ScanPoint pt;
    pt.P = P;
    double sum = 0.0, sq = 0.0;
    for (const auto& r : cell) {
      out.records.push_back(r);
      if (!r.converged) {
        ++pt.non_converged;
        continue;
      }
      if (std::isnan(r.test_error)) continue;
      sum += r.test_error;
      sq += r.test_error * r.test_error;
      ++pt.runs;
    }
    if (pt.non_converged > 0) {
      out.warnings.push_back(std::to_string(pt.non_converged) + " run(s) at P=" + std::to_string(P) +
                             " hit the epoch cap and were excluded");
    }
    if (pt.runs > 0) {
      pt.mean_error = sum / pt.runs;
      if (pt.runs > 1) {
        const double var = (sq - pt.runs * pt.mean_error * pt.mean_error) / (pt.runs - 1);
        pt.se = std::sqrt(std::max(var, 0.0) / pt.runs);
      }
    } else {
      pt.mean_error = std::nan("");
    }
    out.points.push_back(pt);
    if (!out.p_star && pt.runs > 0 && pt.mean_error < out.threshold) {
      out.p_star = P;
      if (cfg.stop_when_met) break;
    }
  }
  return out;
}

/// Geometric grid from lo to hi (inclusive when hit) with the given ratio,
/// rounded to integers and deduplicated.
inline std::vector<std::uint64_t> geometric_grid(double lo, double hi, double ratio = std::sqrt(2.0)) {
  require(lo >= 1 && hi >= lo && ratio > 1.0, ErrorCode::config, "invalid geometric grid");
  std::vector<std::uint64_t> g;
  for (double x = lo; x <= hi * (1 + 1e-9); x *= ratio) {
    const auto P = static_cast<std::uint64_t>(std::llround(x));
    if (g.empty() || g.back() != P) g.push_back(P);
  }
  return g;
}

/// Log-linear interpolation of the P at which the mean error first crosses
/// `target` going down the grid; empty if it never does.
inline std::optional<double> crossing_point(const std::vector<ScanPoint>& pts, double target) {
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].runs == 0 || !(pts[i].mean_error <= target)) continue;
    if (i == 0) return static_cast<double>(pts[i].P);
    const auto& a = pts[i - 1];
    const auto& b = pts[i];
    if (a.runs == 0 || a.mean_error == b.mean_error) return static_cast<double>(b.P);
    const double t = (a.mean_error - target) / (a.mean_error - b.mean_error);
    return std::exp(std::log(static_cast<double>(a.P)) + t * (std::log(static_cast<double>(b.P)) - std::log(static_cast<double>(a.P))));
  }
  return std::nullopt;
}

}  // namespace rhm
