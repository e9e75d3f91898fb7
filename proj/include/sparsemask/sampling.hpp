#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "sparsemask/errors.hpp"
#include "sparsemask/random.hpp"

namespace sparsemask {

/// Draws k distinct positions from `weights` without replacement.
///
/// Exponential race: each item gets key E/w with E ~ Exp(1) and the k
/// smallest keys win, which has the law of k successive draws from the
/// renormalized remaining weights. Zero-weight items only fill slots left
/// after every positive-weight item is taken, uniformly among themselves.
/// Result order is draw order.
template <class URBG>
std::vector<std::size_t> weighted_sample_without_replacement(std::span<const double> weights, std::size_t k,
                                                             URBG& rng) {
  if (k > weights.size())
    throw DomainError("cannot draw " + std::to_string(k) + " of " + std::to_string(weights.size()) + " items");
  struct Keyed {
    double key;
    double tie;
    std::size_t index;
  };
  std::exponential_distribution<double> exp1(1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Keyed> keyed;
  keyed.reserve(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double w = weights[i];
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("sampling weight must be finite and >= 0");
    const double e = exp1(rng);
    const double u = unit(rng);
    keyed.push_back({w > 0.0 ? e / w : std::numeric_limits<double>::infinity(), u, i});
  }
  const auto by_key = [](const Keyed& a, const Keyed& b) {
    return a.key < b.key || (a.key == b.key && a.tie < b.tie);
  };
  const auto mid = keyed.begin() + static_cast<std::ptrdiff_t>(k);
  std::partial_sort(keyed.begin(), mid, keyed.end(), by_key);
  std::vector<std::size_t> out;
  out.reserve(k);
  for (auto it = keyed.begin(); it != mid; ++it) out.push_back(it->index);
  return out;
}

}  // namespace sparsemask
