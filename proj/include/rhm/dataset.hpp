#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "rhm/error.hpp"
#include "rhm/hierarchy.hpp"
#include "rhm/params.hpp"
#include "rhm/random.hpp"

namespace rhm {

inline constexpr std::uint64_t kDefaultEnumerationCap = 10'000'000;
inline constexpr std::size_t kDefaultTestSize = 20'000;
inline constexpr std::size_t kDefaultProbeSize = 1'000;

/// Generation choices of one datum. `choices` lists, for every node of the
/// generation tree in breadth-first order (root first), which of the m
/// representations was picked. All indices are zero-based.
struct ChoicePath {
  int label = 0;
  std::vector<int> choices;

  friend bool operator==(const ChoicePath&, const ChoicePath&) = default;
};

struct Datum {
  int label = 0;
  std::vector<int> features;

  friend bool operator==(const Datum&, const Datum&) = default;
};

/// Labeled data stored row-major: row i is features[i*dim, (i+1)*dim).
struct Dataset {
  int dim = 0;
  std::vector<int> labels;
  std::vector<int> features;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const int> row(std::size_t i) const {
    return {features.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  Datum at(std::size_t i) const {
    auto r = row(i);
    return {labels[i], {r.begin(), r.end()}};
  }
  void push_back(const Datum& d) {
    if (empty() && dim == 0) dim = static_cast<int>(d.features.size());
    require(static_cast<int>(d.features.size()) == dim, ErrorCode::out_of_range,
            "datum dimension mismatch");
    labels.push_back(d.label);
    features.insert(features.end(), d.features.begin(), d.features.end());
  }
  void reserve(std::size_t n) {
    labels.reserve(n);
    features.reserve(n * static_cast<std::size_t>(dim));
  }
};

/// Breadth-first offset of the first node whose children are level-`level`
/// tuples; there are s^{L-level} such nodes.
inline int level_offset(const ModelParams& p, int level) {
  return static_cast<int>((ipow(p.s, p.L - level) - 1) / (p.s - 1));
}

inline Datum generate_datum(const RhmInstance& inst, const ChoicePath& path) {
  const auto& p = inst.params;
  require(path.label >= 0 && path.label < p.n_c, ErrorCode::out_of_range, "label out of range");
  require(static_cast<int>(path.choices.size()) == p.path_length(), ErrorCode::out_of_range,
          "choice path has wrong length");
  std::vector<int> current{path.label};
  std::vector<int> next;
  std::size_t k = 0;
  for (int level = p.L; level >= 1; --level) {
    const auto& rule = inst.rule(level);
    next.clear();
    next.reserve(current.size() * static_cast<std::size_t>(p.s));
    for (int sym : current) {
      const int c = path.choices[k++];
      require(c >= 0 && c < p.m, ErrorCode::out_of_range, "choice out of range");
      const TupleCode t = rule.representation(sym, c);
      for (int i = 0; i < p.s; ++i) next.push_back(tuple_element(t, p.v, p.s, i));
    }
    std::swap(current, next);
  }
  return {path.label, std::move(current)};
}

/// Inverts the rules bottom-up; throws unknown-tuple on strings the instance
/// never generates.
inline ChoicePath decode_path(const RhmInstance& inst, std::span<const int> features) {
  const auto& p = inst.params;
  require(static_cast<int>(features.size()) == p.input_dim(), ErrorCode::out_of_range,
          "feature string has wrong length");
  ChoicePath path;
  path.choices.assign(static_cast<std::size_t>(p.path_length()), 0);
  std::vector<int> current(features.begin(), features.end());
  for (int level = 1; level <= p.L; ++level) {
    const auto& rule = inst.rule(level);
    const int offset = level_offset(p, level);
    const std::size_t nodes = current.size() / static_cast<std::size_t>(p.s);
    std::vector<int> up(nodes);
    for (std::size_t j = 0; j < nodes; ++j) {
      const TupleCode t = encode_tuple(
          std::span<const int>(current.data() + j * static_cast<std::size_t>(p.s),
                               static_cast<std::size_t>(p.s)),
          p.v);
      require(rule.contains(t), ErrorCode::unknown_tuple,
              "tuple not generated at level " + std::to_string(level));
      up[j] = rule.inverse[t];
      path.choices[static_cast<std::size_t>(offset) + j] = rule.slot[t];
    }
    current = std::move(up);
  }
  path.label = current.front();
  return path;
}

inline int decode_label(const RhmInstance& inst, std::span<const int> features) {
  return decode_path(inst, features).label;
}

/// Position of a path in the enumeration order (label-major, then choices
/// lexicographically with the root choice most significant).
inline u128 path_index(const ModelParams& p, const ChoicePath& path) {
  u128 idx = static_cast<u128>(path.label);
  for (int c : path.choices) idx = idx * static_cast<u128>(p.m) + static_cast<u128>(c);
  return idx;
}

inline ChoicePath path_from_index(const ModelParams& p, u128 idx) {
  ChoicePath path;
  path.choices.assign(static_cast<std::size_t>(p.path_length()), 0);
  for (int k = p.path_length() - 1; k >= 0; --k) {
    path.choices[static_cast<std::size_t>(k)] = static_cast<int>(idx % static_cast<u128>(p.m));
    idx /= static_cast<u128>(p.m);
  }
  path.label = static_cast<int>(idx);
  return path;
}

/// Lazy walk over every datum of an instance in enumeration order.
class DatasetEnumerator {
 public:
  DatasetEnumerator(const RhmInstance& inst, std::uint64_t cap = kDefaultEnumerationCap)
      : inst_(&inst) {
    const auto total = exact_p_max(inst.params);
    require(total.has_value() && *total <= static_cast<u128>(cap), ErrorCode::cap_exceeded,
            "p_max exceeds the enumeration cap of " + std::to_string(cap));
    total_ = static_cast<std::uint64_t>(*total);
    path_.choices.assign(static_cast<std::size_t>(inst.params.path_length()), 0);
  }

  std::uint64_t total() const { return total_; }

  bool next(Datum& out) {
    if (emitted_ == total_) return false;
    out = generate_datum(*inst_, path_);
    ++emitted_;
    advance();
    return true;
  }

 private:
  void advance() {
    const int m = inst_->params.m;
    for (auto k = static_cast<std::ptrdiff_t>(path_.choices.size()) - 1; k >= 0; --k) {
      if (++path_.choices[static_cast<std::size_t>(k)] < m) return;
      path_.choices[static_cast<std::size_t>(k)] = 0;
    }
    ++path_.label;
  }

  const RhmInstance* inst_;
  std::uint64_t total_ = 0;
  std::uint64_t emitted_ = 0;
  ChoicePath path_;
};

inline void for_each_datum(const RhmInstance& inst, const std::function<void(const Datum&)>& fn,
                           std::uint64_t cap = kDefaultEnumerationCap) {
  DatasetEnumerator it(inst, cap);
  Datum d;
  while (it.next(d)) fn(d);
}

inline Dataset enumerate_dataset(const RhmInstance& inst,
                                 std::uint64_t cap = kDefaultEnumerationCap) {
  DatasetEnumerator it(inst, cap);
  Dataset out;
  out.dim = inst.params.input_dim();
  out.reserve(it.total());
  Datum d;
  while (it.next(d)) out.push_back(d);
  return out;
}

/// `count` distinct uniform indices of [0, population), in random order
/// (Floyd's algorithm followed by a shuffle).
inline std::vector<std::uint64_t> sample_distinct_indices(std::uint64_t population,
                                                          std::uint64_t count, Rng& rng) {
  require(count <= population, ErrorCode::out_of_range, "cannot draw more than the population");
  std::vector<std::uint64_t> out;
  out.reserve(count);
  if (count == population) {
    for (std::uint64_t i = 0; i < population; ++i) out.push_back(i);
  } else {
    std::unordered_set<std::uint64_t> chosen;
    chosen.reserve(count * 2);
    for (std::uint64_t j = population - count; j < population; ++j) {
      const std::uint64_t t = rng.below(j + 1);
      if (chosen.insert(t).second) {
        out.push_back(t);
      } else {
        chosen.insert(j);
        out.push_back(j);
      }
    }
  }
  rng.shuffle(out.begin(), out.end());
  return out;
}

namespace detail {

inline ChoicePath random_path(const ModelParams& p, Rng& rng) {
  ChoicePath path;
  path.label = static_cast<int>(rng.below(static_cast<std::uint64_t>(p.n_c)));
  path.choices.resize(static_cast<std::size_t>(p.path_length()));
  for (auto& c : path.choices) c = static_cast<int>(rng.below(static_cast<std::uint64_t>(p.m)));
  return path;
}

struct PathHash {
  std::size_t operator()(const ChoicePath& path) const {
    std::uint64_t h = splitmix64(static_cast<std::uint64_t>(path.label));
    for (int c : path.choices) h = splitmix64(h ^ static_cast<std::uint64_t>(c));
    return static_cast<std::size_t>(h);
  }
};

}  // namespace detail

/// Draws `sizes[0] + sizes[1] + ...` distinct data uniformly without
/// replacement and splits them into consecutive disjoint sets. Never
/// materializes the full dataset.
inline std::vector<Dataset> sample_disjoint_sets(const RhmInstance& inst,
                                                 std::span<const std::uint64_t> sizes, Rng& rng) {
  const auto& p = inst.params;
  std::uint64_t total = 0;
  for (auto n : sizes) total += n;
  const auto pmax = exact_p_max(p);
  if (pmax.has_value()) {
    require(static_cast<u128>(total) <= *pmax, ErrorCode::out_of_range,
            "requested " + std::to_string(total) + " data but p_max=" + u128_to_string(*pmax));
  }
  std::vector<ChoicePath> paths;
  paths.reserve(total);
  if (pmax.has_value() && *pmax <= static_cast<u128>(std::numeric_limits<std::uint64_t>::max())) {
    for (auto idx : sample_distinct_indices(static_cast<std::uint64_t>(*pmax), total, rng)) {
      paths.push_back(path_from_index(p, idx));
    }
  } else {
    std::unordered_set<ChoicePath, detail::PathHash> seen;
    while (paths.size() < total) {
      auto path = detail::random_path(p, rng);
      if (seen.insert(path).second) paths.push_back(std::move(path));
    }
  }
  std::vector<Dataset> out;
  std::size_t k = 0;
  for (auto n : sizes) {
    Dataset ds;
    ds.dim = p.input_dim();
    ds.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) ds.push_back(generate_datum(inst, paths[k++]));
    out.push_back(std::move(ds));
  }
  return out;
}

inline Dataset sample_training_set(const RhmInstance& inst, std::uint64_t P, Rng& rng) {
  const std::uint64_t sizes[] = {P};
  return std::move(sample_disjoint_sets(inst, sizes, rng).front());
}

/// min(p_max - P, cap): the held-out size used for test sets and probes.
inline std::uint64_t held_out_size(const ModelParams& p, std::uint64_t P, std::uint64_t cap) {
  const auto pmax = exact_p_max(p);
  if (!pmax.has_value()) return cap;
  const u128 rest = *pmax > P ? *pmax - P : 0;
  return rest < cap ? static_cast<std::uint64_t>(rest) : cap;
}

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Training set of size P plus a disjoint test set of size
/// min(p_max - P, test_cap).
inline TrainTestSplit sample_train_test(const RhmInstance& inst, std::uint64_t P, Rng& rng,
                                        std::uint64_t test_cap = kDefaultTestSize) {
  const std::uint64_t sizes[] = {P, held_out_size(inst.params, P, test_cap)};
  auto sets = sample_disjoint_sets(inst, sizes, rng);
  return {std::move(sets[0]), std::move(sets[1])};
}

/// One-hot rows of length v per position, optionally shifted by -1/v so
/// every position has zero channel mean.
struct EncodedDatum {
  int d = 0;
  int v = 0;
  std::vector<double> values;

  double at(int position, int channel) const {
    return values[static_cast<std::size_t>(position) * static_cast<std::size_t>(v) +
                  static_cast<std::size_t>(channel)];
  }
};

inline EncodedDatum encode(std::span<const int> features, int v, bool whiten = true) {
  EncodedDatum e;
  e.d = static_cast<int>(features.size());
  e.v = v;
  const double off = whiten ? 1.0 / v : 0.0;
  e.values.assign(features.size() * static_cast<std::size_t>(v), -off);
  for (std::size_t i = 0; i < features.size(); ++i) {
    e.values[i * static_cast<std::size_t>(v) + static_cast<std::size_t>(features[i])] += 1.0;
  }
  return e;
}

inline EncodedDatum encode(const Datum& d, int v, bool whiten = true) {
  return encode(d.features, v, whiten);
}

/// Resamples, uniformly over all m representations (identity included), the
/// choice made at every node that emits a level-`level` tuple, keeping all
/// other choices; the subtrees below are re-expanded through the new symbols.
inline Datum synonym_perturb(const RhmInstance& inst, const Datum& datum, int level, Rng& rng) {
  const auto& p = inst.params;
  require(level >= 1 && level <= p.L, ErrorCode::out_of_range,
          "perturbation level " + std::to_string(level) + " outside 1..L");
  auto path = decode_path(inst, datum.features);
  const int offset = level_offset(p, level);
  const int nodes = static_cast<int>(ipow(p.s, p.L - level));
  for (int j = 0; j < nodes; ++j) {
    path.choices[static_cast<std::size_t>(offset + j)] =
        static_cast<int>(rng.below(static_cast<std::uint64_t>(p.m)));
  }
  return generate_datum(inst, path);
}

inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  os << "# schema: rhm-dataset-v1\n";
  os << "label";
  for (int i = 1; i <= ds.dim; ++i) os << ",f_" << i;
  os << '\n';
  for (std::size_t r = 0; r < ds.size(); ++r) {
    os << ds.labels[r];
    for (int x : ds.row(r)) os << ',' << x;
    os << '\n';
  }
}

}  // namespace rhm
