#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include "rhm/error.hpp"

namespace rhm {

using u128 = unsigned __int128;

/// Exact integer power, or nullopt when the result does not fit in 64 bits.
inline std::optional<std::uint64_t> checked_pow(std::uint64_t base, std::uint64_t exp) {
  u128 acc = 1;
  for (std::uint64_t i = 0; i < exp; ++i) {
    acc *= base;
    if (acc > std::numeric_limits<std::uint64_t>::max()) return std::nullopt;
  }
  return static_cast<std::uint64_t>(acc);
}

inline std::uint64_t ipow(std::uint64_t base, std::uint64_t exp) {
  auto r = checked_pow(base, exp);
  require(r.has_value(), ErrorCode::invalid_params, "integer power overflows 64 bits");
  return *r;
}

inline std::string u128_to_string(u128 x) {
  if (x == 0) return "0";
  std::string out;
  while (x > 0) {
    out.insert(out.begin(), static_cast<char>('0' + static_cast<int>(x % 10)));
    x /= 10;
  }
  return out;
}

/// Parameters of one hierarchy: vocabulary v, multiplicity m, tuple length s,
/// depth L, number of classes n_c, and the generator seed.
struct ModelParams {
  int v = 2;
  int m = 2;
  int s = 2;
  int L = 2;
  int n_c = 2;
  std::uint64_t seed = 0;

  /// Input dimension d = s^L.
  int input_dim() const { return static_cast<int>(ipow(s, L)); }
  /// Number of s-tuples over the vocabulary, v^s.
  int tuple_count() const { return static_cast<int>(ipow(v, s)); }
  /// Nodes of the generation tree: (s^L - 1)/(s - 1).
  int path_length() const { return static_cast<int>((ipow(s, L) - 1) / (s - 1)); }
  /// Number of input patches s^{L-1}.
  int patch_count() const { return static_cast<int>(ipow(s, L - 1)); }
  /// Domain of the rule at `level` (1 = input rule, L = class rule).
  int domain_size(int level) const { return level == L ? n_c : v; }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

inline void validate(const ModelParams& p) {
  require(p.v >= 2, ErrorCode::invalid_params, "v must be >= 2");
  require(p.s >= 2, ErrorCode::invalid_params, "s must be >= 2");
  require(p.L >= 1, ErrorCode::invalid_params, "L must be >= 1");
  require(p.n_c >= 2, ErrorCode::invalid_params, "n_c must be >= 2");
  require(p.m >= 1, ErrorCode::invalid_params, "m must be >= 1");
  const auto tuples = checked_pow(p.v, p.s);
  require(tuples.has_value() && *tuples <= (1ULL << 30), ErrorCode::invalid_params,
          "v^s too large");
  const auto dim = checked_pow(p.s, p.L);
  require(dim.has_value() && *dim <= (1ULL << 24), ErrorCode::invalid_params, "s^L too large");
  const std::uint64_t row = *tuples / static_cast<std::uint64_t>(p.v);
  require(static_cast<std::uint64_t>(p.m) <= row, ErrorCode::invalid_params,
          "m=" + std::to_string(p.m) + " exceeds v^(s-1)=" + std::to_string(row));
  require(static_cast<std::uint64_t>(p.n_c) * static_cast<std::uint64_t>(p.m) <= *tuples,
          ErrorCode::invalid_params, "n_c*m exceeds v^s");
}

/// m = 1 is valid but carries no synonyms.
inline bool is_degenerate(const ModelParams& p) { return p.m == 1; }

/// Total dataset size n_c * m^{(s^L-1)/(s-1)} when it fits in 128 bits.
inline std::optional<u128> exact_p_max(const ModelParams& p) {
  u128 acc = static_cast<u128>(p.n_c);
  const auto limit = std::numeric_limits<u128>::max() / static_cast<u128>(p.m);
  for (int i = 0; i < p.path_length(); ++i) {
    if (acc > limit) return std::nullopt;
    acc *= static_cast<u128>(p.m);
  }
  return acc;
}

}  // namespace rhm
