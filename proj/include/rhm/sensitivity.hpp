#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "rhm/dataset.hpp"
#include "rhm/error.hpp"
#include "rhm/nn.hpp"
#include "rhm/onestep.hpp"
#include "rhm/random.hpp"
#include "rhm/statistics.hpp"

namespace rhm {

inline constexpr int kDefaultReplacements = 4;

/// Maps a batch of data to one representation row per datum.
using Representation = std::function<Eigen::MatrixXd(const Dataset&)>;

struct SensitivityValue {
  double S = 0.0;
  double se = 0.0;
  /// Synonym exchange is the identity (m = 1); S is reported as 0.
  bool degenerate = false;
};

/// Ratio of the mean squared change under synonym exchange to the mean
/// squared distance between distinct probe data, from precomputed rows.
/// `perturbed[r]` holds the representation of the r-th exchanged copy of every
/// probe datum. The pair sum uses sum_{i<j} |x_i - x_j|^2 = n sum |x_i|^2 - |sum x_i|^2,
/// so every pair is included. SE by leave-one-datum-out jackknife.
inline SensitivityValue sensitivity_from_rows(const Eigen::MatrixXd& base, const std::vector<Eigen::MatrixXd>& perturbed) {
  const auto n = base.rows();
  require(n >= 2, ErrorCode::out_of_range, "probe set needs at least two data");
  require(!perturbed.empty(), ErrorCode::out_of_range, "need at least one replacement per datum");
  const auto R = static_cast<double>(perturbed.size());

  Eigen::VectorXd num_i = Eigen::VectorXd::Zero(n);
  for (const auto& p : perturbed) {
    require(p.rows() == n && p.cols() == base.cols(), ErrorCode::out_of_range, "perturbed rows have wrong shape");
    num_i += (p - base).rowwise().squaredNorm();
  }
  const Eigen::VectorXd sq = base.rowwise().squaredNorm();
  const Eigen::RowVectorXd total = base.colwise().sum();
  const double sq_sum = sq.sum();
  const double num_sum = num_i.sum();

  auto ratio = [&](double nn, double num, double sqs, double tot_sq) {
    const double pairs = nn * (nn - 1.0) / 2.0;
    const double den = (nn * sqs - tot_sq) / pairs;
    return std::pair{num / (nn * R), den};
  };
  const double nd = static_cast<double>(n);
  const auto [num_mean, den_mean] = ratio(nd, num_sum, sq_sum, total.squaredNorm());
  const double scale = std::max(sq_sum / nd, 1e-300);
  if (!(den_mean > 1e-12 * scale) || !(den_mean > 0.0)) {
    throw Error(ErrorCode::degenerate, "representation is constant on the probe set");
  }
  SensitivityValue out;
  out.S = num_mean / den_mean;

  std::vector<double> loo(static_cast<std::size_t>(n));
  double mean_loo = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd t = total - base.row(i);
    const auto [nm, dm] = ratio(nd - 1.0, num_sum - num_i(i), sq_sum - sq(i), t.squaredNorm());
    loo[static_cast<std::size_t>(i)] = dm > 0.0 ? nm / dm : out.S;
    mean_loo += loo[static_cast<std::size_t>(i)];
  }
  mean_loo /= nd;
  double acc = 0.0;
  for (double x : loo) acc += (x - mean_loo) * (x - mean_loo);
  out.se = std::sqrt((nd - 1.0) / nd * acc);
  return out;
}

/// Draws R exchanged copies of the probe set at `level`.
inline std::vector<Dataset> perturbed_copies(const RhmInstance& inst, const Dataset& probe, int level, int R, Rng& rng) {
  require(R >= 1, ErrorCode::out_of_range, "R must be at least 1");
  std::vector<Dataset> out;
  for (int r = 0; r < R; ++r) {
    Dataset copy;
    copy.dim = probe.dim;
    copy.reserve(probe.size());
    for (std::size_t i = 0; i < probe.size(); ++i) copy.push_back(synonym_perturb(inst, probe.at(i), level, rng));
    out.push_back(std::move(copy));
  }
  return out;
}

inline SensitivityValue synonymic_sensitivity(const Representation& repr, const RhmInstance& inst, int level,
                                              const Dataset& probe, int R, Rng& rng) {
  require(level >= 1 && level <= inst.params.L, ErrorCode::out_of_range, "level outside 1..L");
  require(probe.size() >= 2, ErrorCode::out_of_range, "probe set needs at least two data");
  if (is_degenerate(inst.params)) return {0.0, 0.0, true};
  const Eigen::MatrixXd base = repr(probe);
  std::vector<Eigen::MatrixXd> pert;
  for (const auto& copy : perturbed_copies(inst, probe, level, R, rng)) pert.push_back(repr(copy));
  return sensitivity_from_rows(base, pert);
}

/// Raw whitened one-hot encoding, flattened position-major.
inline Representation input_representation(int v, bool whiten = true) {
  return [v, whiten](const Dataset& data) {
    const auto x = encode_batch<double>(data, v, whiten);
    return Eigen::MatrixXd(Eigen::Map<const Activations<double>>(x.data(), static_cast<Eigen::Index>(data.size()),
                                                                   static_cast<Eigen::Index>(data.dim) * v));
  };
}

/// One-step representation of the first patch in the infinite-width limit:
/// the row g(mu_1(x)). Distances between these rows are the limits of the
/// finite-width hidden-representation distances.
inline Representation onestep_representation(const GTable& g, int v, int s, int patch = 0) {
  return [g, v, s, patch](const Dataset& data) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(data.size()), g.n_c);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto row = data.row(i);
      const TupleCode t = encode_tuple(row.subspan(static_cast<std::size_t>(patch) * s, s), v);
      out.row(static_cast<Eigen::Index>(i)) = g.g.row(t);
    }
    return out;
  };
}

/// S_{1,1} of the one-step representation learned from P random data: the
/// first-patch g table of the training set, probed on fresh data (or on the
/// whole dataset when it is smaller than the probe size).
inline SensitivityValue onestep_sensitivity(const RhmInstance& inst, std::uint64_t P, std::size_t probe_size, int R,
                                            Rng& rng) {
  const auto& p = inst.params;
  Rng train_rng = rng.derive(1), probe_rng = rng.derive(2), pert_rng = rng.derive(3);
  const auto train = sample_training_set(inst, P, train_rng);
  const auto g = g_vectors(empirical_counts(train, inst), false);
  const auto pmax = exact_p_max(p);
  const bool whole = pmax && *pmax <= static_cast<u128>(probe_size);
  const auto probe = whole ? enumerate_dataset(inst) : sample_training_set(inst, probe_size, probe_rng);
  return synonymic_sensitivity(onestep_representation(g, p.v, p.s), inst, 1, probe, R, pert_rng);
}

struct ProbeConfig {
  std::size_t probe_size = kDefaultProbeSize;
  int replacements = kDefaultReplacements;
  bool whiten = true;
};

struct SensitivityReport {
  /// values[k][l-1]: layer k (0 = encoded input, last = logits), level l.
  std::vector<std::vector<SensitivityValue>> values;
  std::size_t probe_size = 0;
  int replacements = 0;
  bool degenerate = false;

  const SensitivityValue& at(int k, int l) const {
    return values[static_cast<std::size_t>(k)][static_cast<std::size_t>(l - 1)];
  }
  int layers() const { return static_cast<int>(values.size()); }
};

namespace detail {

template <class Scalar>
std::vector<Eigen::MatrixXd> layer_rows(const Network<Scalar>& net, const Dataset& data, bool whiten) {
  const auto acts = forward(net, encode_batch<Scalar>(data, net.v, whiten));
  std::vector<Eigen::MatrixXd> out;
  const auto n = static_cast<Eigen::Index>(data.size());
  for (const auto& a : acts) {
    const Eigen::Index width = a.size() / n;
    out.push_back(Eigen::Map<const Activations<Scalar>>(a.data(), n, width).template cast<double>());
  }
  return out;
}

}  // namespace detail

/// S for every (layer, level) of a network on one probe set, sharing the
/// exchanged copies across layers.
template <class Scalar>
SensitivityReport sensitivity_profile(const Network<Scalar>& net, const RhmInstance& inst, const Dataset& probe,
                                      const ProbeConfig& cfg, Rng& rng) {
  const auto& p = inst.params;
  require(probe.size() >= 2, ErrorCode::out_of_range, "probe set needs at least two data");
  SensitivityReport rep;
  rep.probe_size = probe.size();
  rep.replacements = cfg.replacements;
  const int K = static_cast<int>(net.layers.size()) + 1;
  rep.values.assign(static_cast<std::size_t>(K), std::vector<SensitivityValue>(static_cast<std::size_t>(p.L)));
  if (is_degenerate(p)) {
    rep.degenerate = true;
    for (auto& row : rep.values)
      for (auto& v : row) v = {0.0, 0.0, true};
    return rep;
  }
  const auto base = detail::layer_rows(net, probe, cfg.whiten);
  for (int l = 1; l <= p.L; ++l) {
    std::vector<std::vector<Eigen::MatrixXd>> pert(static_cast<std::size_t>(K));
    for (const auto& copy : perturbed_copies(inst, probe, l, cfg.replacements, rng)) {
      auto rows = detail::layer_rows(net, copy, cfg.whiten);
      for (int k = 0; k < K; ++k) pert[static_cast<std::size_t>(k)].push_back(std::move(rows[static_cast<std::size_t>(k)]));
    }
    for (int k = 0; k < K; ++k) {
      rep.values[static_cast<std::size_t>(k)][static_cast<std::size_t>(l - 1)] =
          sensitivity_from_rows(base[static_cast<std::size_t>(k)], pert[static_cast<std::size_t>(k)]);
    }
  }
  return rep;
}

inline void write_sensitivity_csv(std::ostream& os, const SensitivityReport& rep) {
  os << "# schema: rhm-sensitivity-v1\n";
  os << "k,l,S,SE,probe_size,R\n";
  os.precision(10);
  for (int k = 0; k < rep.layers(); ++k)
    for (std::size_t l = 0; l < rep.values[static_cast<std::size_t>(k)].size(); ++l) {
      const auto& v = rep.values[static_cast<std::size_t>(k)][l];
      os << k << ',' << l + 1 << ',' << v.S << ',' << v.se << ',' << rep.probe_size << ',' << rep.replacements << '\n';
    }
}

}  // namespace rhm
