#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "sparsemask/bayes.hpp"
#include "sparsemask/errors.hpp"
#include "sparsemask/image.hpp"
#include "sparsemask/oracle.hpp"
#include "sparsemask/random.hpp"
#include "sparsemask/scores.hpp"
#include "sparsemask/synth.hpp"

namespace sparsemask {

enum class SchedulerKind { power_step, step_decay, cosine_annealing };
enum class LearningMode { bayesian, uniform_ablation };

inline const char* to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::power_step: return "power-step";
    case SchedulerKind::step_decay: return "step-decay";
    case SchedulerKind::cosine_annealing: return "cosine-annealing";
  }
  return "?";
}

inline SchedulerKind parse_scheduler(const std::string& s) {
  if (s == "power-step") return SchedulerKind::power_step;
  if (s == "step-decay") return SchedulerKind::step_decay;
  if (s == "cosine-annealing") return SchedulerKind::cosine_annealing;
  throw ConfigError("unknown scheduler '" + s + "'");
}

inline const char* to_string(LearningMode m) {
  return m == LearningMode::bayesian ? "bayesian" : "uniform-ablation";
}

inline LearningMode parse_learning(const std::string& s) {
  if (s == "bayesian") return LearningMode::bayesian;
  if (s == "uniform-ablation") return LearningMode::uniform_ablation;
  throw ConfigError("unknown learning mode '" + s + "'");
}

inline constexpr double kDefaultLambda0Untargeted = 0.3;
inline constexpr double kDefaultLambda0Targeted = 0.15;

struct AttackConfig {
  std::size_t budget = 1;          // B, perturbed pixels
  std::size_t query_limit = 10000;  // T
  std::size_t initial_samples = 10;  // N
  std::optional<double> lambda0;     // unset: 0.3 untargeted, 0.15 targeted
  double m1 = 0.24;
  double m2 = 0.997;
  double alpha_prior = 1.0;
  double z = kDefaultSmoothing;
  SchedulerKind scheduler = SchedulerKind::power_step;
  std::size_t step_interval = 100;  // step-decay only
  double step_gamma = 0.5;          // step-decay only
  bool use_dissimilarity_map = true;
  LearningMode learning = LearningMode::bayesian;
  SynthScheme synth;
  SamplerSeed seed;

  double lambda0_for(const LossSpec& spec) const {
    return lambda0.value_or(spec.targeted() ? kDefaultLambda0Targeted : kDefaultLambda0Untargeted);
  }

  void validate() const {
    if (budget < 1) throw ConfigError("budget must be >= 1");
    if (initial_samples < 1) throw ConfigError("initial_samples must be >= 1");
    if (query_limit < initial_samples) throw ConfigError("query_limit must be >= initial_samples");
    if (lambda0 && !(*lambda0 > 0.0 && *lambda0 <= 1.0)) throw ConfigError("lambda0 must lie in (0, 1]");
    if (!(m1 > 0.0)) throw ConfigError("m1 must be > 0");
    if (!(m2 > 0.0 && m2 < 1.0)) throw ConfigError("m2 must lie in (0, 1)");
    if (!(alpha_prior >= 1.0)) throw ConfigError("alpha_prior must be >= 1");
    if (!(z > 0.0)) throw ConfigError("z must be > 0");
    if (scheduler == SchedulerKind::step_decay && (step_interval < 1 || !(step_gamma > 0.0 && step_gamma <= 1.0)))
      throw ConfigError("step-decay needs step_interval >= 1 and step_gamma in (0, 1]");
  }

  void validate(const Shape& shape) const {
    validate();
    if (budget > shape.pixels())
      throw ConfigError("budget " + std::to_string(budget) + " exceeds the " + std::to_string(shape.pixels()) +
                        " pixels of the image");
  }
};

struct ScheduleStep {
  double lambda = 0.0;
  std::size_t keep = 0;  // b = ceil((1 - lambda) B)
};

/// Kept-pixel count for a changing rate, clamped to [0, B].
inline std::size_t keep_count(double lambda, std::size_t budget) {
  const double b = std::ceil((1.0 - lambda) * static_cast<double>(budget));
  return static_cast<std::size_t>(std::clamp(b, 0.0, static_cast<double>(budget)));
}

/// Changing rate for round t >= 1, clamped to [0, 1].
///
/// power-step:       lambda0 (t^m1 + m2^t)
/// step-decay:       lambda0 (1 + m2) gamma^floor((t - 1) / interval)
/// cosine-annealing: lambda0 (1 + m2) (1 + cos(pi min(t, T) / T)) / 2
inline ScheduleStep schedule(std::size_t t, const AttackConfig& cfg, double lambda0) {
  const double td = static_cast<double>(std::max<std::size_t>(t, 1));
  const double peak = lambda0 * (1.0 + cfg.m2);
  double lambda = 0.0;
  switch (cfg.scheduler) {
    case SchedulerKind::power_step:
      lambda = lambda0 * (std::pow(td, cfg.m1) + std::pow(cfg.m2, td));
      break;
    case SchedulerKind::step_decay:
      lambda = peak * std::pow(cfg.step_gamma, std::floor((td - 1.0) / static_cast<double>(cfg.step_interval)));
      break;
    case SchedulerKind::cosine_annealing: {
      const double horizon = static_cast<double>(std::max<std::size_t>(cfg.query_limit, 1));
      lambda = peak * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(td, horizon) / horizon));
      break;
    }
  }
  lambda = std::clamp(lambda, 0.0, 1.0);
  return {lambda, keep_count(lambda, cfg.budget)};
}

inline ScheduleStep schedule(std::size_t t, const AttackConfig& cfg) {
  return schedule(t, cfg, cfg.lambda0.value_or(kDefaultLambda0Targeted));
}

/// B distinct pixels chosen uniformly at random.
template <class URBG>
PixelMask random_mask(std::uint32_t width, std::uint32_t height, std::size_t budget, URBG& rng) {
  const std::size_t n = std::size_t{width} * height;
  if (budget > n) throw DomainError("budget exceeds pixel count");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < budget; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(budget);
  return PixelMask(width, height, std::span<const std::size_t>(idx));
}

/// New candidate mask: keep b pixels of `prev` weighted by theta, draw B - b fresh
/// pixels weighted by theta * M. When fewer than B - b pixels are unselected the
/// turnover shrinks and b grows to match.
template <class URBG>
PixelMask generate(const BeliefState& belief, const DissimilarityMap& dissim, const PixelMask& prev,
                   double lambda, const AttackConfig& cfg, URBG& rng) {
  const std::size_t budget = prev.budget();
  if (budget != cfg.budget)
    throw DimensionError("generate: mask has " + std::to_string(budget) + " pixels, budget is " +
                         std::to_string(cfg.budget));
  if (dissim.values.size() != prev.size() || belief.theta().size() != prev.size())
    throw DimensionError("generate: belief, dissimilarity map and mask grids differ");
  std::size_t keep = keep_count(std::clamp(lambda, 0.0, 1.0), budget);
  const std::size_t free_pixels = prev.size() - budget;
  if (budget - keep > free_pixels) keep = budget - free_pixels;

  std::vector<double> uniform;
  std::span<const double> theta = belief.theta();
  std::span<const double> weights = dissim.values;
  if (cfg.learning == LearningMode::uniform_ablation) {
    uniform.assign(prev.size(), 1.0);
    theta = uniform;
    weights = uniform;
  } else if (!cfg.use_dissimilarity_map) {
    uniform.assign(prev.size(), 1.0);
    weights = uniform;
  }
  auto kept = sample_keep(theta, prev, keep, rng);
  const auto fresh = sample_new(theta, weights, prev, budget - keep, rng);
  kept.insert(kept.end(), fresh.begin(), fresh.end());
  return PixelMask(prev.width(), prev.height(), std::span<const std::size_t>(kept));
}

struct UpdateOutcome {
  PixelMask mask;
  double loss = 0.0;
  bool accepted = false;
};

/// Records the round in the belief, then keeps the candidate iff its loss is strictly lower.
inline UpdateOutcome update_step(const PixelMask& cand, double loss_cand, const PixelMask& prev, double loss_prev,
                                 BeliefState& belief) {
  belief.record_outcome(prev, cand, loss_prev, loss_cand);
  if (loss_cand < loss_prev) return {cand, loss_cand, true};
  return {prev, loss_prev, false};
}

enum class Termination { goal_reached, already_adversarial, query_limit, oracle_budget, oracle_failure };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::goal_reached: return "goal-reached";
    case Termination::already_adversarial: return "already-adversarial";
    case Termination::query_limit: return "query-limit";
    case Termination::oracle_budget: return "oracle-budget";
    case Termination::oracle_failure: return "oracle-failure";
  }
  return "?";
}

struct LossPoint {
  std::size_t query = 0;  // 1-based index of the query that produced the loss
  double loss = 0.0;
  bool operator==(const LossPoint&) const = default;
};

struct AttackResult {
  bool success = false;
  Termination termination = Termination::query_limit;
  PixelMask final_mask;
  Image adversarial;
  std::size_t queries_used = 0;
  std::size_t iterations = 0;  // generate/evaluate rounds after initialization
  std::vector<LossPoint> loss_trace;  // accepted losses, non-increasing
  double achieved_sparsity = 0.0;
  std::optional<ClassId> final_prediction;
  std::string error;

  bool operator==(const AttackResult&) const = default;
};

/// Optional observation points of a run.
struct AttackHooks {
  /// Known clean prediction of the source; if it already meets the goal the run returns without querying.
  std::optional<ClassId> clean_prediction;
  /// Called for every evaluated mask with its loss and scores.
  std::function<void(const PixelMask&, double, const ScoreVector&)> on_query;
  /// Called once with the final belief state (not called if the run ends during initialization).
  std::function<void(const BeliefState&)> on_belief;
};

namespace detail {

struct Evaluation {
  double loss = 0.0;
  bool goal = false;
  ClassId prediction;
};

class MaskEvaluator {
 public:
  MaskEvaluator(const Image& x, const Image& x_syn, const LossSpec& spec, ScoreOracle& oracle,
                const AttackHooks* hooks)
      : x_(x), x_syn_(x_syn), spec_(spec), oracle_(oracle), hooks_(hooks) {}

  Evaluation operator()(const PixelMask& mask) {
    const ScoreVector scores = oracle_.query(apply_mask(mask, x_, x_syn_));
    ++queries_;
    Evaluation e{loss(scores, spec_), false, predicted_label(scores)};
    e.goal = goal_met(e.prediction, spec_);
    if (hooks_ && hooks_->on_query) hooks_->on_query(mask, e.loss, scores);
    return e;
  }

  std::size_t queries() const noexcept { return queries_; }

 private:
  const Image& x_;
  const Image& x_syn_;
  const LossSpec& spec_;
  ScoreOracle& oracle_;
  const AttackHooks* hooks_;
  std::size_t queries_ = 0;
};

}  // namespace detail

struct InitResult {
  PixelMask mask;
  double loss = std::numeric_limits<double>::infinity();
  std::size_t queries = 0;
  bool goal_reached = false;
  ClassId prediction;
};

/// Raised when the oracle runs dry during initialization; carries the best mask seen, if any.
class InitBudgetError : public BudgetError {
 public:
  InitBudgetError(std::size_t limit, std::optional<InitResult> partial)
      : BudgetError(limit), partial_(std::move(partial)) {}
  const std::optional<InitResult>& partial() const noexcept { return partial_; }

 private:
  std::optional<InitResult> partial_;
};

namespace detail {

template <class URBG>
InitResult initialize_with(MaskEvaluator& eval, const Shape& shape, const AttackConfig& cfg, URBG& rng) {
  InitResult best;
  for (std::size_t i = 0; i < cfg.initial_samples; ++i) {
    PixelMask u = random_mask(shape.width, shape.height, cfg.budget, rng);
    Evaluation e;
    try {
      e = eval(u);
    } catch (const BudgetError& b) {
      std::optional<InitResult> partial;
      if (best.queries > 0) partial = best;
      throw InitBudgetError(b.limit(), std::move(partial));
    }
    best.queries = eval.queries();
    if (e.loss < best.loss || best.mask.size() == 0 || e.goal) {
      best.mask = std::move(u);
      best.loss = e.loss;
      best.prediction = e.prediction;
    }
    if (e.goal) {
      best.goal_reached = true;
      break;
    }
  }
  return best;
}

}  // namespace detail

/// N uniformly random B-pixel masks, one query each; returns the lowest-loss mask.
/// Stops early on a mask that already meets the goal.
template <class URBG>
InitResult initialize(const Image& x, const Image& x_syn, const LossSpec& spec, const AttackConfig& cfg,
                      ScoreOracle& oracle, URBG& rng) {
  spec.validate();
  cfg.validate(x.shape());
  if (x_syn.shape() != x.shape()) throw DimensionError("initialize: source and synthetic shapes differ");
  detail::MaskEvaluator eval(x, x_syn, spec, oracle, nullptr);
  return detail::initialize_with(eval, x.shape(), cfg, rng);
}

/// Full query loop: initialize, then schedule -> generate -> query -> update until the
/// candidate meets the goal or `query_limit` queries are spent.
inline AttackResult run_attack(const Image& x, const LossSpec& spec, const AttackConfig& cfg, ScoreOracle& oracle,
                               const AttackHooks& hooks = {}) {
  spec.validate();
  cfg.validate(x.shape());
  const Shape& shape = x.shape();

  AttackResult result;
  result.final_mask = PixelMask(shape.width, shape.height);
  if (hooks.clean_prediction && goal_met(*hooks.clean_prediction, spec)) {
    result.success = true;
    result.termination = Termination::already_adversarial;
    result.adversarial = x;
    result.final_prediction = hooks.clean_prediction;
    return result;
  }

  Engine rng = make_engine(cfg.seed);
  const Image x_syn = generate_synthetic(shape, cfg.synth, derive(cfg.seed, "synth"), &x);
  const DissimilarityMap dissim = cfg.use_dissimilarity_map && cfg.learning == LearningMode::bayesian
                                      ? dissimilarity_map(x, x_syn)
                                      : DissimilarityMap::ones(shape.width, shape.height);
  const double lambda0 = cfg.lambda0_for(spec);
  detail::MaskEvaluator eval(x, x_syn, spec, oracle, &hooks);

  PixelMask current;
  double current_loss = std::numeric_limits<double>::infinity();
  std::optional<BeliefState> belief;

  auto finish = [&](Termination why, const PixelMask* winner) {
    result.termination = why;
    result.success = why == Termination::goal_reached;
    result.queries_used = eval.queries();
    if (winner) {
      result.final_mask = *winner;
    } else if (current.size() != 0) {
      result.final_mask = current;
    }
    result.adversarial = apply_mask(result.final_mask, x, x_syn);
    result.achieved_sparsity = sparsity(x, result.adversarial);
    if (belief && hooks.on_belief) hooks.on_belief(*belief);
    return result;
  };

  try {
    InitResult init = detail::initialize_with(eval, shape, cfg, rng);
    current = init.mask;
    current_loss = init.loss;
    result.final_prediction = init.prediction;
    result.loss_trace.push_back({eval.queries(), current_loss});
    if (init.goal_reached) return finish(Termination::goal_reached, &current);

    belief.emplace(shape.width, shape.height, cfg.alpha_prior, cfg.z);
    belief->seed_selection(current);

    for (std::size_t t = 1; eval.queries() < cfg.query_limit; ++t) {
      const ScheduleStep step = schedule(t, cfg, lambda0);
      PixelMask cand = generate(*belief, dissim, current, step.lambda, cfg, rng);
      const detail::Evaluation e = eval(cand);
      ++result.iterations;
      UpdateOutcome up = update_step(cand, e.loss, current, current_loss, *belief);
      if (up.accepted) {
        current = std::move(up.mask);
        current_loss = up.loss;
        result.loss_trace.push_back({eval.queries(), current_loss});
      }
      if (e.goal) {
        result.final_prediction = e.prediction;
        return finish(Termination::goal_reached, &cand);
      }
    }
    return finish(Termination::query_limit, nullptr);
  } catch (const InitBudgetError& e) {
    if (e.partial()) {
      current = e.partial()->mask;
      result.loss_trace.push_back({e.partial()->queries, e.partial()->loss});
    }
    result.error = e.what();
    return finish(Termination::oracle_budget, nullptr);
  } catch (const BudgetError& e) {
    result.error = e.what();
    return finish(Termination::oracle_budget, nullptr);
  } catch (const TransportError& e) {
    result.error = e.what();
    return finish(Termination::oracle_failure, nullptr);
  } catch (const ProtocolError& e) {
    result.error = e.what();
    return finish(Termination::oracle_failure, nullptr);
  }
}

/// Ablation comparator: the same loop with uniform theta and no dissimilarity map.
inline AttackResult run_baseline_uniform(const Image& x, const LossSpec& spec, const AttackConfig& cfg,
                                         ScoreOracle& oracle, const AttackHooks& hooks = {}) {
  AttackConfig uniform = cfg;
  uniform.learning = LearningMode::uniform_ablation;
  return run_attack(x, spec, uniform, oracle, hooks);
}

inline nlohmann::json class_to_json(const ClassId& c) {
  if (const auto* i = std::get_if<std::size_t>(&c)) return *i;
  return std::get<std::string>(c);
}

inline nlohmann::json result_to_json(const AttackResult& r) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& p : r.loss_trace) trace.push_back({p.query, p.loss});
  nlohmann::json j{
      {"success", r.success},
      {"termination", to_string(r.termination)},
      {"queries_used", r.queries_used},
      {"iterations", r.iterations},
      {"achieved_sparsity", r.achieved_sparsity},
      {"width", r.final_mask.width()},
      {"height", r.final_mask.height()},
      {"budget", r.final_mask.budget()},
      {"final_mask", r.final_mask.selected()},
      {"loss_trace", trace},
  };
  j["final_prediction"] = r.final_prediction ? class_to_json(*r.final_prediction) : nlohmann::json(nullptr);
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

}  // namespace sparsemask
