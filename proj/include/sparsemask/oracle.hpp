#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "sparsemask/errors.hpp"
#include "sparsemask/image.hpp"
#include "sparsemask/random.hpp"
#include "sparsemask/scores.hpp"

namespace sparsemask {

/// A victim model as the attacker sees it: image in, scores out.
///
/// Implementations must be safe to call from several threads at once.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual ScoreVector evaluate(const Image& image) const = 0;
  virtual Shape input_shape() const = 0;
  virtual std::size_t classes() const = 0;
};

inline std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - top);
    total += out[k];
  }
  for (double& v : out) v /= total;
  return out;
}

/// softmax(W * flatten(image) + bias); W is classes x (c*w*h), row-major.
class LinearSoftmaxModel : public ScoreModel {
 public:
  LinearSoftmaxModel(Shape shape, std::vector<double> weights, std::vector<double> bias)
      : shape_(shape), weights_(std::move(weights)), bias_(std::move(bias)) {
    if (bias_.empty()) throw DimensionError("linear model needs at least one class");
    if (weights_.size() != bias_.size() * shape_.size())
      throw DimensionError("linear model: weight count " + std::to_string(weights_.size()) + " != classes x " +
                           std::to_string(shape_.size()));
  }

  /// Random weights N(0, weight_scale^2) and bias N(0, bias_scale^2), fixed by `seed`.
  static LinearSoftmaxModel random(Shape shape, std::size_t classes, const SamplerSeed& seed,
                                   double weight_scale = 1.0, double bias_scale = 0.1) {
    Engine rng = make_engine(seed);
    std::normal_distribution<double> w(0.0, weight_scale);
    std::normal_distribution<double> b(0.0, bias_scale);
    std::vector<double> weights(classes * shape.size());
    for (double& v : weights) v = w(rng);
    std::vector<double> bias(classes);
    for (double& v : bias) v = b(rng);
    return LinearSoftmaxModel(shape, std::move(weights), std::move(bias));
  }

  std::vector<double> logits(const Image& image) const {
    if (image.shape() != shape_)
      throw DimensionError("model expects " + to_string(shape_) + ", got " + to_string(image.shape()));
    const auto x = image.data();
    const std::size_t d = shape_.size();
    std::vector<double> out(bias_);
    for (std::size_t k = 0; k < out.size(); ++k) {
      const double* row = weights_.data() + k * d;
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += row[i] * static_cast<double>(x[i]);
      out[k] += acc;
    }
    return out;
  }

  ScoreVector evaluate(const Image& image) const override {
    const auto z = logits(image);
    return ScoreVector::full(softmax(z));
  }

  Shape input_shape() const override { return shape_; }
  std::size_t classes() const override { return bias_.size(); }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<double>& bias() const noexcept { return bias_; }

 private:
  Shape shape_;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

/// Interchange model file: a JSON dense network.
///
///   {"format": "sparsemask-dense-v1", "shape": [c, w, h],
///    "layers": [{"weights": [[...], ...], "bias": [...], "activation": "relu"|"linear"}, ...]}
///
/// Layer weights are out x in. The last layer's output goes through softmax.
class DenseNetworkModel : public ScoreModel {
 public:
  struct Layer {
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::vector<double> weights;
    std::vector<double> bias;
    bool relu = false;
  };

  DenseNetworkModel(Shape shape, std::vector<Layer> layers) : shape_(shape), layers_(std::move(layers)) {
    if (layers_.empty()) throw ConfigError("dense model has no layers");
    std::size_t width = shape_.size();
    for (const auto& l : layers_) {
      if (l.inputs != width)
        throw ConfigError("dense model: layer expects " + std::to_string(l.inputs) + " inputs, previous gives " +
                          std::to_string(width));
      if (l.weights.size() != l.inputs * l.outputs || l.bias.size() != l.outputs)
        throw ConfigError("dense model: layer parameter sizes inconsistent");
      width = l.outputs;
    }
  }

  static DenseNetworkModel from_json(const nlohmann::json& j) {
    try {
      if (j.value("format", std::string{}) != "sparsemask-dense-v1")
        throw ConfigError("model file: unsupported format, expected sparsemask-dense-v1");
      const auto dims = j.at("shape").get<std::vector<std::uint32_t>>();
      if (dims.size() != 3) throw ConfigError("model file: shape must be [c, w, h]");
      std::vector<Layer> layers;
      for (const auto& jl : j.at("layers")) {
        Layer l;
        const auto rows = jl.at("weights").get<std::vector<std::vector<double>>>();
        l.outputs = rows.size();
        l.inputs = rows.empty() ? 0 : rows.front().size();
        for (const auto& r : rows) {
          if (r.size() != l.inputs) throw ConfigError("model file: ragged weight matrix");
          l.weights.insert(l.weights.end(), r.begin(), r.end());
        }
        l.bias = jl.at("bias").get<std::vector<double>>();
        const auto act = jl.value("activation", std::string("linear"));
        if (act != "relu" && act != "linear") throw ConfigError("model file: unknown activation '" + act + "'");
        l.relu = act == "relu";
        layers.push_back(std::move(l));
      }
      return DenseNetworkModel(Shape{dims[0], dims[1], dims[2]}, std::move(layers));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("model file: ") + e.what());
    }
  }

  static DenseNetworkModel load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open model file " + path.string());
    try {
      return from_json(nlohmann::json::parse(f));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }

  ScoreVector evaluate(const Image& image) const override {
    if (image.shape() != shape_)
      throw DimensionError("model expects " + to_string(shape_) + ", got " + to_string(image.shape()));
    std::vector<double> act(image.data().begin(), image.data().end());
    for (const auto& l : layers_) {
      std::vector<double> next(l.bias);
      for (std::size_t o = 0; o < l.outputs; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < l.inputs; ++i) acc += l.weights[o * l.inputs + i] * act[i];
        next[o] += acc;
        if (l.relu) next[o] = std::max(0.0, next[o]);
      }
      act = std::move(next);
    }
    return ScoreVector::full(softmax(act));
  }

  Shape input_shape() const override { return shape_; }
  std::size_t classes() const override { return layers_.back().outputs; }

 private:
  Shape shape_;
  std::vector<Layer> layers_;
};

inline nlohmann::json to_dense_json(const LinearSoftmaxModel& m) {
  const Shape s = m.input_shape();
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < m.classes(); ++k)
    rows.push_back(std::vector<double>(m.weights().begin() + static_cast<std::ptrdiff_t>(k * s.size()),
                                       m.weights().begin() + static_cast<std::ptrdiff_t>((k + 1) * s.size())));
  return {{"format", "sparsemask-dense-v1"},
          {"shape", {s.channels, s.width, s.height}},
          {"layers", {{{"weights", rows}, {"bias", m.bias()}, {"activation", "linear"}}}}};
}

/// Random-noise defense: adds N(0, sigma^2) to every input, clipped to [0,1].
class RndModel : public ScoreModel {
 public:
  RndModel(std::shared_ptr<const ScoreModel> inner, double sigma, const SamplerSeed& seed)
      : inner_(std::move(inner)), sigma_(sigma), rng_(make_engine(seed)) {
    if (!(sigma >= 0.0)) throw DomainError("RND sigma must be >= 0");
  }

  ScoreVector evaluate(const Image& image) const override {
    if (sigma_ == 0.0) return inner_->evaluate(image);
    std::vector<float> noisy(image.data().begin(), image.data().end());
    {
      std::lock_guard lock(mutex_);
      std::normal_distribution<double> noise(0.0, sigma_);
      for (float& v : noisy) v = static_cast<float>(std::clamp(static_cast<double>(v) + noise(rng_), 0.0, 1.0));
    }
    return inner_->evaluate(Image(image.shape(), std::move(noisy)));
  }

  Shape input_shape() const override { return inner_->input_shape(); }
  std::size_t classes() const override { return inner_->classes(); }
  double sigma() const noexcept { return sigma_; }

 private:
  std::shared_ptr<const ScoreModel> inner_;
  double sigma_;
  mutable std::mutex mutex_;
  mutable Engine rng_;
};

/// Query counter; `used` never passes `limit`.
class QueryBudget {
 public:
  explicit QueryBudget(std::size_t limit) : limit_(limit) {}
  QueryBudget(const QueryBudget& o) : limit_(o.limit_), used_(o.used()) {}

  std::size_t limit() const noexcept { return limit_; }
  std::size_t used() const noexcept { return used_.load(); }
  std::size_t remaining() const noexcept { return limit_ - used(); }

  /// Reserves one query; false when the budget is spent.
  bool try_acquire() noexcept {
    std::size_t cur = used_.load();
    while (cur < limit_) {
      if (used_.compare_exchange_weak(cur, cur + 1)) return true;
    }
    return false;
  }
  void release() noexcept { used_.fetch_sub(1); }

 private:
  std::size_t limit_;
  std::atomic<std::size_t> used_{0};
};

/// A model behind a query budget. One delivered score == one counted query.
class ScoreOracle {
 public:
  ScoreOracle(std::shared_ptr<const ScoreModel> model, std::size_t limit)
      : ScoreOracle(std::move(model), QueryBudget(limit)) {}

  ScoreOracle(std::shared_ptr<const ScoreModel> model, const QueryBudget& budget)
      : model_(std::move(model)), budget_(budget) {
    if (!model_) throw ConfigError("oracle needs a model");
  }

  ScoreVector query(const Image& image) {
    if (image.shape() != model_->input_shape())
      throw DimensionError("oracle expects " + to_string(model_->input_shape()) + ", got " +
                           to_string(image.shape()));
    if (!budget_.try_acquire()) throw BudgetError(budget_.limit());
    try {
      return model_->evaluate(image);
    } catch (...) {
      budget_.release();
      throw;
    }
  }

  const QueryBudget& budget() const noexcept { return budget_; }
  std::size_t used() const noexcept { return budget_.used(); }
  const std::shared_ptr<const ScoreModel>& model() const noexcept { return model_; }
  Shape input_shape() const { return model_->input_shape(); }

 private:
  std::shared_ptr<const ScoreModel> model_;
  QueryBudget budget_;
};

/// The same model behind the random-noise defense, carrying over the budget state.
inline ScoreOracle wrap_rnd(const ScoreOracle& oracle, double sigma, const SamplerSeed& seed) {
  return ScoreOracle(std::make_shared<RndModel>(oracle.model(), sigma, seed), oracle.budget());
}

}  // namespace sparsemask
