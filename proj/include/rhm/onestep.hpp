#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "rhm/dataset.hpp"
#include "rhm/error.hpp"
#include "rhm/hierarchy.hpp"
#include "rhm/random.hpp"
#include "rhm/statistics.hpp"

namespace rhm {

/// Centered class-frequency vectors, one row per tuple:
/// g_alpha(mu) = N(mu; alpha)/P - N(mu)/(n_c P).
struct GTable {
  int tuples = 0;
  int n_c = 0;
  std::uint64_t P = 0;
  bool pooled = false;
  Eigen::MatrixXd g;
  /// Tuple occurred at least once in the counted patches.
  std::vector<bool> seen;

  Eigen::VectorXd row(TupleCode mu) const { return g.row(mu).transpose(); }
};

/// Single-patch table (patch `patch`) or, with `pooled`, the average over all
/// patches. Accepts exact tables too, for which P = p_max.
inline GTable g_vectors(const OccurrenceTable& counts, bool pooled, int patch = 0) {
  require(counts.total > 0, ErrorCode::out_of_range, "counts have zero total");
  require(patch >= 0 && patch < counts.patches, ErrorCode::out_of_range, "patch index out of range");
  GTable out;
  out.tuples = counts.tuples;
  out.n_c = counts.n_c;
  out.P = counts.total;
  out.pooled = pooled;
  out.g.setZero(counts.tuples, counts.n_c);
  out.seen.assign(static_cast<std::size_t>(counts.tuples), false);
  const double P = static_cast<double>(counts.total);
  const int first = pooled ? 0 : patch;
  const int last = pooled ? counts.patches : patch + 1;
  const double weight = 1.0 / (last - first);
  for (int j = first; j < last; ++j) {
    for (TupleCode mu = 0; mu < counts.tuples; ++mu) {
      const double marginal = static_cast<double>(counts.marginal(j, mu));
      if (marginal == 0) continue;
      out.seen[static_cast<std::size_t>(mu)] = true;
      for (int a = 0; a < counts.n_c; ++a) {
        out.g(mu, a) += weight * (static_cast<double>(counts.count(j, mu, a)) - marginal / counts.n_c) / P;
      }
    }
  }
  return out;
}

/// First-step change of the hidden representation of a width-H network with
/// frozen standard-normal readout: delta = readout * g^T (H x tuples).
struct HiddenUpdate {
  Eigen::MatrixXd readout;
  Eigen::MatrixXd delta;
};

inline HiddenUpdate onestep_update(const GTable& g, int H, Rng& rng) {
  require(H >= 1, ErrorCode::out_of_range, "H must be positive");
  HiddenUpdate u;
  u.readout.resize(H, g.n_c);
  for (int h = 0; h < H; ++h)
    for (int a = 0; a < g.n_c; ++a) u.readout(h, a) = rng.normal();
  u.delta = u.readout * g.g.transpose();
  return u;
}

/// (1/H) squared distances between the columns of a hidden update.
inline Eigen::MatrixXd representation_distances(const HiddenUpdate& u) {
  const Eigen::MatrixXd gram = u.delta.transpose() * u.delta / static_cast<double>(u.delta.rows());
  const Eigen::VectorXd diag = gram.diagonal();
  Eigen::MatrixXd d = (-2.0 * gram).colwise() + diag;
  d.rowwise() += diag.transpose();
  return d.cwiseMax(0.0);
}

/// Squared Euclidean distances ||g(mu) - g(nu)||^2, the infinite-width limit
/// of representation_distances.
inline Eigen::MatrixXd tuple_distances(const GTable& g) {
  const Eigen::MatrixXd gram = g.g * g.g.transpose();
  const Eigen::VectorXd diag = gram.diagonal();
  Eigen::MatrixXd d = (-2.0 * gram).colwise() + diag;
  d.rowwise() += diag.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

struct KMeansConfig {
  int restarts = 10;
  int max_iters = 100;
  std::uint64_t seed = 0;
};

struct ClusterAssignment {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;
  double inertia = 0.0;
  /// Some cluster ended up empty in every restart.
  bool degenerate = false;
};

namespace detail {

inline int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                            double* dist = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

inline ClusterAssignment lloyd(const Eigen::MatrixXd& x, int k, int max_iters, Rng& rng) {
  const auto n = static_cast<int>(x.rows());
  // k-means++ seeding
  Eigen::MatrixXd centroids(k, x.cols());
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  int pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
  for (int c = 0; c < k; ++c) {
    centroids.row(c) = x.row(pick);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(i) - centroids.row(c)).squaredNorm());
      total += d2[i];
    }
    if (c + 1 == k) break;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        r -= d2[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
      while (d2[pick] <= 0.0) --pick;
    } else {
      pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    }
  }

  ClusterAssignment out;
  out.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> sizes(static_cast<std::size_t>(k));
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const int c = nearest_centroid(centroids, x.row(i));
      if (c != out.labels[i]) {
        out.labels[i] = c;
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::fill(sizes.begin(), sizes.end(), 0);
    for (int i = 0; i < n; ++i) {
      sums.row(out.labels[i]) += x.row(i);
      ++sizes[out.labels[i]];
    }
    for (int c = 0; c < k; ++c)
      if (sizes[c] > 0) centroids.row(c) = sums.row(c) / sizes[c];
  }
  std::fill(sizes.begin(), sizes.end(), 0);
  out.inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    ++sizes[out.labels[i]];
    out.inertia += (x.row(i) - centroids.row(out.labels[i])).squaredNorm();
  }
  out.degenerate = std::any_of(sizes.begin(), sizes.end(), [](int s) { return s == 0; });
  out.centroids = std::move(centroids);
  return out;
}

}  // namespace detail

/// Best of `restarts` Lloyd runs with k-means++ seeding, restart r drawing
/// from substream r of the seed. Runs without empty clusters are preferred;
/// among those the lowest inertia wins, earliest restart on ties.
inline ClusterAssignment kmeans(const Eigen::MatrixXd& points, int k, const KMeansConfig& cfg = {}) {
  require(k >= 1, ErrorCode::out_of_range, "k must be positive");
  require(k <= points.rows(), ErrorCode::out_of_range,
          "k=" + std::to_string(k) + " exceeds the number of points " + std::to_string(points.rows()));
  require(cfg.restarts >= 1 && cfg.max_iters >= 1, ErrorCode::config, "k-means needs restarts and iterations");
  const Rng root(cfg.seed);
  std::optional<ClusterAssignment> best;
  for (int r = 0; r < cfg.restarts; ++r) {
    Rng rng = root.derive(static_cast<std::uint64_t>(r));
    auto run = detail::lloyd(points, k, cfg.max_iters, rng);
    if (!best || (best->degenerate && !run.degenerate) ||
        (best->degenerate == run.degenerate && run.inertia < best->inertia)) {
      best = std::move(run);
    }
  }
  return *best;
}

/// Rand-index agreement between `labels` (cluster per tuple code, negative =
/// not assigned) and the true synonym groups of the level's valid tuples.
inline double synonym_recovery_score(std::span<const int> labels, const RhmInstance& inst, int level) {
  require(level >= 1 && level <= inst.params.L, ErrorCode::out_of_range, "level outside 1..L");
  const auto& rule = inst.rule(level);
  require(labels.size() == rule.inverse.size(), ErrorCode::out_of_range,
          "assignment must cover every tuple code of the level");
  std::vector<TupleCode> valid;
  for (TupleCode t = 0; t < static_cast<TupleCode>(rule.inverse.size()); ++t) {
    if (rule.inverse[t] >= 0) {
      require(labels[t] >= 0, ErrorCode::out_of_range, "valid tuple left unassigned");
      valid.push_back(t);
    }
  }
  if (valid.size() < 2) return 1.0;
  std::uint64_t agree = 0, total = 0;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    for (std::size_t j = i + 1; j < valid.size(); ++j) {
      const bool same_true = rule.inverse[valid[i]] == rule.inverse[valid[j]];
      const bool same_pred = labels[valid[i]] == labels[valid[j]];
      agree += same_true == same_pred;
      ++total;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(total);
}

struct LayerwiseConfig {
  KMeansConfig kmeans;
  /// Average occurrences over patches (weight sharing) instead of patch 0.
  bool pooled = true;
};

/// One clustering round: every s-tuple over the current alphabet is mapped to
/// a cluster symbol.
struct LevelClustering {
  int level = 1;
  int alphabet = 0;
  int k = 0;
  /// cluster[tuple] for every tuple code, unseen ones included.
  std::vector<int> cluster;
  std::vector<TupleCode> observed;
  ClusterAssignment assignment;
  bool degenerate = false;
};

struct LayerwisePredictor {
  int s = 2;
  int n_c = 2;
  std::vector<LevelClustering> levels;
  /// Class predicted for each top-level cluster.
  std::vector<int> cluster_class;

  /// Symbol strings after applying the first `rounds` clusterings.
  std::vector<int> coarse(std::span<const int> features, int rounds) const {
    std::vector<int> cur(features.begin(), features.end());
    for (int r = 0; r < rounds; ++r) {
      const auto& lv = levels[static_cast<std::size_t>(r)];
      std::vector<int> next(cur.size() / static_cast<std::size_t>(s));
      for (std::size_t j = 0; j < next.size(); ++j) {
        const TupleCode t = encode_tuple(std::span<const int>(cur.data() + j * s, static_cast<std::size_t>(s)),
                                         lv.alphabet);
        next[j] = lv.cluster[static_cast<std::size_t>(t)];
      }
      cur = std::move(next);
    }
    return cur;
  }

  int predict(std::span<const int> features) const {
    const auto top = coarse(features, static_cast<int>(levels.size()));
    return cluster_class[static_cast<std::size_t>(top.front())];
  }

  double error(const Dataset& data) const {
    require(!data.empty(), ErrorCode::out_of_range, "error on an empty set");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < data.size(); ++i) wrong += predict(data.row(i)) != data.labels[i];
    return static_cast<double>(wrong) / static_cast<double>(data.size());
  }
};

struct LayerwiseResult {
  LayerwisePredictor predictor;
  double train_error = 0.0;
  /// NaN when no test set was given.
  double test_error = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;
};

/// Alternates one-step representations and k-means, level by level, then
/// labels each top cluster by majority vote of the training labels (lowest
/// class on ties). A round with fewer observed tuples than clusters, or with
/// an empty cluster, is flagged degenerate rather than repaired.
inline LayerwiseResult layerwise_solve(const RhmInstance& inst, const Dataset& train, const Dataset& test,
                                       const LayerwiseConfig& cfg = {}) {
  const auto& p = inst.params;
  require(!train.empty(), ErrorCode::out_of_range, "layerwise solver needs training data");
  require(train.dim == p.input_dim(), ErrorCode::out_of_range, "training data has wrong dimension");
  LayerwiseResult res;
  auto& pred = res.predictor;
  pred.s = p.s;
  pred.n_c = p.n_c;

  Dataset current = train;
  int alphabet = p.v;
  for (int level = 1; level <= p.L; ++level) {
    LevelClustering lv;
    lv.level = level;
    lv.alphabet = alphabet;
    lv.k = level == p.L ? p.n_c : p.v;
    const auto counts = empirical_counts(current, alphabet, p.s, p.n_c);
    const auto g = g_vectors(counts, cfg.pooled);
    for (TupleCode t = 0; t < g.tuples; ++t)
      if (g.seen[static_cast<std::size_t>(t)]) lv.observed.push_back(t);
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(lv.observed.size()), p.n_c);
    for (std::size_t i = 0; i < lv.observed.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = g.g.row(lv.observed[i]);
    int k = lv.k;
    if (static_cast<int>(lv.observed.size()) < k) {
      lv.degenerate = true;
      k = static_cast<int>(lv.observed.size());
    }
    KMeansConfig kc = cfg.kmeans;
    kc.seed = Rng(cfg.kmeans.seed).derive(static_cast<std::uint64_t>(level)).key();
    lv.assignment = kmeans(pts, k, kc);
    lv.degenerate = lv.degenerate || lv.assignment.degenerate;
    lv.cluster.assign(static_cast<std::size_t>(g.tuples), 0);
    const Eigen::RowVectorXd origin = Eigen::RowVectorXd::Zero(p.n_c);
    const int unseen_cluster = detail::nearest_centroid(lv.assignment.centroids, origin);
    for (TupleCode t = 0; t < g.tuples; ++t) lv.cluster[static_cast<std::size_t>(t)] = unseen_cluster;
    for (std::size_t i = 0; i < lv.observed.size(); ++i)
      lv.cluster[static_cast<std::size_t>(lv.observed[i])] = lv.assignment.labels[i];

    Dataset next;
    next.dim = current.dim / p.s;
    next.labels = current.labels;
    next.features.resize(current.size() * static_cast<std::size_t>(next.dim));
    for (std::size_t r = 0; r < current.size(); ++r) {
      const auto row = current.row(r);
      for (int j = 0; j < next.dim; ++j) {
        const TupleCode t = encode_tuple(row.subspan(static_cast<std::size_t>(j) * p.s, p.s), alphabet);
        next.features[r * next.dim + j] = lv.cluster[static_cast<std::size_t>(t)];
      }
    }
    res.degenerate = res.degenerate || lv.degenerate;
    pred.levels.push_back(std::move(lv));
    current = std::move(next);
    alphabet = pred.levels.back().k;
  }

  // Majority vote per top cluster.
  std::vector<std::vector<std::size_t>> votes(static_cast<std::size_t>(alphabet),
                                              std::vector<std::size_t>(static_cast<std::size_t>(p.n_c), 0));
  for (std::size_t r = 0; r < current.size(); ++r) ++votes[current.features[r]][current.labels[r]];
  pred.cluster_class.assign(static_cast<std::size_t>(alphabet), 0);
  for (int c = 0; c < alphabet; ++c) {
    const auto& v = votes[static_cast<std::size_t>(c)];
    pred.cluster_class[static_cast<std::size_t>(c)] =
        static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  }
  res.train_error = pred.error(train);
  if (!test.empty()) res.test_error = pred.error(test);
  return res;
}

inline LayerwiseResult layerwise_solve(const RhmInstance& inst, const Dataset& train,
                                       const LayerwiseConfig& cfg = {}) {
  Dataset none;
  none.dim = train.dim;
  return layerwise_solve(inst, train, none, cfg);
}

/// Rows (tuple, cluster, true_symbol) for the first clustering round, the
/// only one whose tuples live on the true alphabet. true_symbol is -1 for
/// tuples the instance never generates.
inline void write_clusters_csv(std::ostream& os, const LevelClustering& lv, const RhmInstance& inst) {
  os << "# schema: rhm-clusters-v1\n";
  os << "tuple,cluster,true_symbol\n";
  const auto& rule = inst.rule(lv.level);
  for (TupleCode t = 0; t < static_cast<TupleCode>(lv.cluster.size()); ++t) {
    const int truth = lv.level == 1 && t < static_cast<TupleCode>(rule.inverse.size()) ? rule.inverse[t] : -1;
    os << t << ',' << lv.cluster[static_cast<std::size_t>(t)] << ',' << truth << '\n';
  }
}

}  // namespace rhm
