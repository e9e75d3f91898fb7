#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "json.hpp"

#include "sparsemask/errors.hpp"
#include "sparsemask/image.hpp"
#include "sparsemask/sampling.hpp"

namespace sparsemask {

inline constexpr double kDefaultSmoothing = 0.01;

/// Dirichlet-Categorical belief over which pixels influence the loss.
///
/// `influence` (a) counts rejected rounds in which a pixel was dropped from
/// the mask, `selected` (n) counts rounds in which it was in either mask.
/// The posterior concentration is alpha_prior + (a + z) / (n + z) - 1 and
/// theta is its normalized expectation, recomputed after every outcome.
class BeliefState {
 public:
  BeliefState(std::uint32_t width, std::uint32_t height, double alpha_prior = 1.0, double z = kDefaultSmoothing)
      : width_(width),
        height_(height),
        alpha_prior_(alpha_prior),
        z_(z),
        influence_(std::size_t{width} * height, 0),
        selected_(std::size_t{width} * height, 0) {
    if (width == 0 || height == 0) throw DimensionError("belief grid must be non-empty");
    if (!(alpha_prior > 0.0)) throw DomainError("alpha_prior must be positive");
    if (!(z > 0.0)) throw DomainError("smoothing constant z must be positive");
    refresh();
  }

  /// Counts the initial mask as one selection per pixel (n starts at u0).
  void seed_selection(const PixelMask& initial) {
    check_grid(initial);
    for (std::size_t p = 0; p < selected_.size(); ++p)
      if (initial.test(p)) ++selected_[p];
    refresh();
  }

  /// Folds one generate/evaluate round into the counters.
  ///
  /// n grows on prev OR cand. On rejection (loss_cand >= loss_prev), a grows
  /// on the pixels the candidate dropped: prev AND NOT cand.
  void record_outcome(const PixelMask& prev, const PixelMask& cand, double loss_prev, double loss_cand) {
    check_grid(prev);
    check_grid(cand);
    if (prev.budget() != cand.budget())
      throw DimensionError("record_outcome: masks carry different budgets (" + std::to_string(prev.budget()) +
                           " vs " + std::to_string(cand.budget()) + ")");
    const bool rejected = !(loss_cand < loss_prev);
    for (std::size_t p = 0; p < selected_.size(); ++p) {
      const bool was = prev.test(p);
      const bool is = cand.test(p);
      if (was || is) ++selected_[p];
      if (rejected && was && !is) ++influence_[p];
    }
    refresh();
  }

  std::vector<double> posterior_alpha() const {
    std::vector<double> alpha(selected_.size());
    for (std::size_t p = 0; p < alpha.size(); ++p)
      alpha[p] = alpha_prior_ + smoothed_ratio(p) - 1.0;
    return alpha;
  }

  /// s = (a + z) / (n + z) - 1, in (-1, 0].
  double evidence(std::size_t pixel) const { return smoothed_ratio(pixel) - 1.0; }

  std::uint32_t width() const noexcept { return width_; }
  std::uint32_t height() const noexcept { return height_; }
  double alpha_prior() const noexcept { return alpha_prior_; }
  double smoothing() const noexcept { return z_; }
  std::span<const std::uint64_t> influence() const noexcept { return influence_; }
  std::span<const std::uint64_t> selections() const noexcept { return selected_; }
  std::span<const double> theta() const noexcept { return theta_; }

 private:
  double smoothed_ratio(std::size_t p) const {
    return (static_cast<double>(influence_[p]) + z_) / (static_cast<double>(selected_[p]) + z_);
  }

  void check_grid(const PixelMask& m) const {
    if (m.width() != width_ || m.height() != height_)
      throw DimensionError("mask grid " + std::to_string(m.width()) + "x" + std::to_string(m.height()) +
                           " does not match belief grid " + std::to_string(width_) + "x" + std::to_string(height_));
  }

  void refresh();

  std::uint32_t width_;
  std::uint32_t height_;
  double alpha_prior_;
  double z_;
  std::vector<std::uint64_t> influence_;
  std::vector<std::uint64_t> selected_;
  std::vector<double> theta_;
};

/// Expectation of Dir(alpha): alpha / sum(alpha).
inline std::vector<double> theta_expectation(std::span<const double> alpha) {
  double total = 0.0;
  for (double a : alpha) {
    if (!(a > 0.0)) throw InvariantError("Dirichlet concentration must be positive, got " + std::to_string(a));
    total += a;
  }
  std::vector<double> theta(alpha.begin(), alpha.end());
  for (double& t : theta) t /= total;
  return theta;
}

inline std::vector<double> posterior_alpha(const BeliefState& belief) { return belief.posterior_alpha(); }

inline void BeliefState::refresh() {
  const auto alpha = posterior_alpha();
  theta_ = theta_expectation(alpha);
}

/// Pixels of `prev` to keep: b draws without replacement, weights theta on the selected support.
template <class URBG>
std::vector<std::size_t> sample_keep(std::span<const double> theta, const PixelMask& prev, std::size_t b,
                                     URBG& rng) {
  if (theta.size() != prev.size()) throw DimensionError("sample_keep: theta and mask sizes differ");
  if (b > prev.budget())
    throw DomainError("sample_keep: cannot keep " + std::to_string(b) + " of " + std::to_string(prev.budget()) +
                      " selected pixels");
  const auto support = prev.selected();
  if (b == support.size()) return support;
  std::vector<double> w(support.size());
  for (std::size_t k = 0; k < support.size(); ++k) w[k] = theta[support[k]];
  auto picked = weighted_sample_without_replacement(std::span<const double>(w), b, rng);
  for (auto& k : picked) k = support[k];
  return picked;
}

/// New pixels outside `prev`: k draws without replacement, weights theta * dissim on the
/// unselected support, uniform when those weights are all zero.
template <class URBG>
std::vector<std::size_t> sample_new(std::span<const double> theta, std::span<const double> dissim,
                                    const PixelMask& prev, std::size_t k, URBG& rng) {
  if (theta.size() != prev.size() || dissim.size() != prev.size())
    throw DimensionError("sample_new: theta, dissimilarity map and mask sizes differ");
  const auto support = prev.unselected();
  if (k > support.size())
    throw DomainError("sample_new: cannot draw " + std::to_string(k) + " of " + std::to_string(support.size()) +
                      " unselected pixels");
  std::vector<double> w(support.size());
  for (std::size_t i = 0; i < support.size(); ++i) w[i] = theta[support[i]] * dissim[support[i]];
  auto picked = weighted_sample_without_replacement(std::span<const double>(w), k, rng);
  for (auto& i : picked) i = support[i];
  return picked;
}

/// Flat dump of a, n, posterior alpha and theta with the grid shape.
inline nlohmann::json belief_to_json(const BeliefState& belief) {
  return {
      {"width", belief.width()},
      {"height", belief.height()},
      {"alpha_prior", belief.alpha_prior()},
      {"z", belief.smoothing()},
      {"a", std::vector<std::uint64_t>(belief.influence().begin(), belief.influence().end())},
      {"n", std::vector<std::uint64_t>(belief.selections().begin(), belief.selections().end())},
      {"alpha_posterior", belief.posterior_alpha()},
      {"theta", std::vector<double>(belief.theta().begin(), belief.theta().end())},
  };
}

}  // namespace sparsemask
