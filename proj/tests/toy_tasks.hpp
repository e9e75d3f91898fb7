#pragma once

// Small victims and datasets shared by the harness tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sparsemask/harness.hpp"
#include "sparsemask/oracle.hpp"
#include "test_util.hpp"

namespace toytasks {

using namespace sparsemask;

/// In-memory image dataset labeled by the victim itself, so every image is clean-correct
/// unless listed in `mislabel`.
struct Suite {
  std::shared_ptr<const LinearSoftmaxModel> model;
  std::vector<ManifestEntry> manifest;
  std::map<std::string, Image> images;

  ImageLoader loader() const {
    return [this](const std::string& id) { return images.at(id); };
  }
};

inline Suite make_suite(const Shape& shape, std::size_t classes, std::size_t count, std::uint64_t seed,
                        double weight_scale, std::size_t mislabel = 0) {
  Suite s;
  s.model = std::make_shared<LinearSoftmaxModel>(LinearSoftmaxModel::random(shape, classes, {seed, 1}, weight_scale));
  Engine rng = make_engine({seed, 2});
  for (std::size_t i = 0; i < count; ++i) {
    Image x = testutil::random_image(shape, rng());
    std::size_t label = std::get<std::size_t>(predicted_label(s.model->evaluate(x)));
    if (i < mislabel) label = (label + 1) % classes;
    const std::string id = "img" + std::to_string(i);
    s.images.emplace(id, std::move(x));
    s.manifest.push_back({id, label});
  }
  return s;
}

/// 3x3x3 victim whose dominant source class cannot be displaced by any 2-pixel paste,
/// so a targeted run toward class 1 spends its full budget.
struct SealedInstance {
  std::shared_ptr<const LinearSoftmaxModel> model;
  Image source;
  Image synthetic;
  double global_min = 0.0;  // exhaustive minimum of -log(p1 + eps) over all 36 masks
};

inline SealedInstance sealed_instance(std::uint64_t seed, const SamplerSeed& attack_seed, const SynthScheme& scheme) {
  const Shape shape{3, 3, 3};
  const auto base = LinearSoftmaxModel::random(shape, 4, {seed, 1});
  SealedInstance inst;
  inst.source = testutil::random_image(shape, seed + 1000);
  inst.synthetic = generate_synthetic(shape, scheme, derive(attack_seed, "synth"), &inst.source);
  for (double lift = 10.0;; lift += 2.0) {
    auto bias = base.bias();
    bias[0] += lift;
    auto model = std::make_shared<LinearSoftmaxModel>(shape, base.weights(), bias);
    double best = std::numeric_limits<double>::infinity();
    bool reachable = false;
    testutil::for_each_combination(9, 2, [&](const std::vector<std::size_t>& idx) {
      const auto p = testutil::reference_softmax_scores(*model, testutil::paste(inst.source, inst.synthetic, idx));
      best = std::min(best, -std::log(p[1] + kLogEpsilon));
      reachable |= std::max_element(p.begin(), p.end()) - p.begin() == 1;
    });
    if (reachable) continue;
    inst.model = std::move(model);
    inst.global_min = best;
    return inst;
  }
}

/// 8x8 victim where only `hot` pixels move the target logit; a dark source image.
struct SparseInfluenceTask {
  std::shared_ptr<const LinearSoftmaxModel> model;
  Image source;
  std::vector<std::size_t> hot_pixels;
};

inline SparseInfluenceTask sparse_influence_task(std::uint64_t seed, std::size_t hot = 6, double hot_weight = 1.0,
                                                 double lead = 0.9) {
  const Shape shape{3, 8, 8};
  const std::size_t d = shape.size(), wh = shape.pixels(), classes = 3;
  Engine rng = make_engine({seed, 5});
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<double> w(classes * d), b(classes, 0.0);
  for (double& v : w) v = noise(rng);
  std::vector<std::size_t> pixels(wh);
  std::iota(pixels.begin(), pixels.end(), 0);
  std::shuffle(pixels.begin(), pixels.end(), rng);
  pixels.resize(hot);
  for (std::size_t p : pixels)
    for (std::size_t ch = 0; ch < shape.channels; ++ch) w[1 * d + ch * wh + p] += hot_weight;
  b[0] = lead * static_cast<double>(hot) * hot_weight;
  std::uniform_real_distribution<float> dark(0.0f, 0.2f);
  std::vector<float> x(d);
  for (float& v : x) v = dark(rng);
  return {std::make_shared<LinearSoftmaxModel>(shape, std::move(w), std::move(b)), Image(shape, std::move(x)),
          std::move(pixels)};
}

}  // namespace toytasks
