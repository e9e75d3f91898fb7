#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sparsemask/errors.hpp"

namespace sparsemask {

/// A class is an index into a full score vector or a label from a partial one.
using ClassId = std::variant<std::size_t, std::string>;

inline std::string to_string(const ClassId& c) {
  if (const auto* i = std::get_if<std::size_t>(&c)) return std::to_string(*i);
  return std::get<std::string>(c);
}

struct LabeledScore {
  std::string label;
  double score = 0.0;
  bool operator==(const LabeledScore&) const = default;
};

/// Oracle output: a full probability vector or a partial list of labeled scores.
class ScoreVector {
 public:
  static constexpr double kSumTolerance = 1e-4;

  static ScoreVector full(std::vector<double> probabilities) {
    double sum = 0.0;
    for (double p : probabilities) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("probability must be finite and >= 0");
      sum += p;
    }
    if (!probabilities.empty() && std::abs(sum - 1.0) > kSumTolerance)
      throw DomainError("probabilities sum to " + std::to_string(sum) + ", expected 1");
    ScoreVector v;
    v.scores_ = std::move(probabilities);
    return v;
  }

  static ScoreVector partial(std::vector<LabeledScore> labeled) {
    std::set<std::string> seen;
    for (const auto& l : labeled) {
      if (!std::isfinite(l.score)) throw DomainError("partial score for '" + l.label + "' is not finite");
      if (!seen.insert(l.label).second) throw DomainError("duplicate label '" + l.label + "'");
    }
    ScoreVector v;
    v.scores_ = std::move(labeled);
    return v;
  }

  bool is_full() const noexcept { return std::holds_alternative<std::vector<double>>(scores_); }
  bool is_partial() const noexcept { return !is_full(); }
  const std::vector<double>& probabilities() const { return std::get<std::vector<double>>(scores_); }
  const std::vector<LabeledScore>& labeled() const { return std::get<std::vector<LabeledScore>>(scores_); }
  std::size_t size() const noexcept {
    return is_full() ? probabilities().size() : labeled().size();
  }

  bool operator==(const ScoreVector&) const = default;

 private:
  std::variant<std::vector<double>, std::vector<LabeledScore>> scores_;
};

enum class LossMode { targeted_cross_entropy, untargeted_margin, partial_margin };

inline const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::targeted_cross_entropy: return "targeted-cross-entropy";
    case LossMode::untargeted_margin: return "untargeted-margin";
    case LossMode::partial_margin: return "partial-margin";
  }
  return "?";
}

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "targeted-cross-entropy") return LossMode::targeted_cross_entropy;
  if (s == "untargeted-margin") return LossMode::untargeted_margin;
  if (s == "partial-margin") return LossMode::partial_margin;
  throw ConfigError("unknown loss mode '" + s + "'");
}

struct LossSpec {
  LossMode mode = LossMode::targeted_cross_entropy;
  std::optional<ClassId> source_class;
  std::optional<ClassId> target_class;

  bool targeted() const noexcept { return mode != LossMode::untargeted_margin; }

  void validate() const {
    switch (mode) {
      case LossMode::targeted_cross_entropy:
        if (!target_class || !std::holds_alternative<std::size_t>(*target_class))
          throw ConfigError("targeted-cross-entropy needs a numeric target class");
        break;
      case LossMode::untargeted_margin:
        if (!source_class || !std::holds_alternative<std::size_t>(*source_class))
          throw ConfigError("untargeted-margin needs a numeric source class");
        break;
      case LossMode::partial_margin:
        if (!target_class || !std::holds_alternative<std::string>(*target_class))
          throw ConfigError("partial-margin needs a target label");
        break;
    }
  }
};

inline constexpr double kLogEpsilon = 1e-12;

namespace detail {

inline std::size_t class_index(const ClassId& c, std::size_t classes) {
  const auto* i = std::get_if<std::size_t>(&c);
  if (!i) throw DomainError("expected a class index, got label '" + std::get<std::string>(c) + "'");
  if (*i >= classes)
    throw DomainError("class id " + std::to_string(*i) + " out of range for " + std::to_string(classes) +
                      " classes");
  return *i;
}

}  // namespace detail

/// Attack objective; lower is better for the attacker in every mode.
inline double loss(const ScoreVector& scores, const LossSpec& spec) {
  spec.validate();
  if ((spec.mode == LossMode::partial_margin) != scores.is_partial())
    throw DomainError(std::string("loss mode ") + to_string(spec.mode) + " does not match score form");
  switch (spec.mode) {
    case LossMode::targeted_cross_entropy: {
      const auto& p = scores.probabilities();
      return -std::log(p[detail::class_index(*spec.target_class, p.size())] + kLogEpsilon);
    }
    case LossMode::untargeted_margin: {
      const auto& p = scores.probabilities();
      const std::size_t src = detail::class_index(*spec.source_class, p.size());
      double other = 0.0;
      for (std::size_t r = 0; r < p.size(); ++r)
        if (r != src) other = std::max(other, p[r]);
      return p[src] - other;
    }
    case LossMode::partial_margin: {
      const auto& l = scores.labeled();
      if (l.empty()) throw DomainError("partial score list is empty");
      const auto& target = std::get<std::string>(*spec.target_class);
      double top = l.front().score;
      double target_score = 0.0;
      for (const auto& e : l) {
        top = std::max(top, e.score);
        if (e.label == target) target_score = e.score;
      }
      return top - target_score;
    }
  }
  return 0.0;
}

/// Arg-max class; ties go to the lowest index or lexicographically smallest label.
inline ClassId predicted_label(const ScoreVector& scores) {
  if (scores.size() == 0) throw DomainError("predicted_label of an empty score vector");
  if (scores.is_full()) {
    const auto& p = scores.probabilities();
    std::size_t best = 0;
    for (std::size_t r = 1; r < p.size(); ++r)
      if (p[r] > p[best]) best = r;
    return best;
  }
  const auto& l = scores.labeled();
  const LabeledScore* best = &l.front();
  for (const auto& e : l)
    if (e.score > best->score || (e.score == best->score && e.label < best->label)) best = &e;
  return best->label;
}

/// Targeted: prediction equals the target. Untargeted: prediction left the source.
inline bool goal_met(const ScoreVector& scores, const LossSpec& spec) {
  const ClassId y = predicted_label(scores);
  if (spec.targeted()) return y == *spec.target_class;
  return y != *spec.source_class;
}

inline bool goal_met(const ClassId& prediction, const LossSpec& spec) {
  if (spec.targeted()) return prediction == *spec.target_class;
  return prediction != *spec.source_class;
}

}  // namespace sparsemask
