#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sparsemask/errors.hpp"
#include "sparsemask/image.hpp"
#include "sparsemask/random.hpp"

namespace sparsemask {

enum class SynthKind { binary_uniform, uniform_continuous, gaussian_clipped, inverted_frequency };

struct SynthScheme {
  SynthKind kind = SynthKind::binary_uniform;
  double gaussian_mean = 0.5;
  double gaussian_stddev = 0.17;
};

inline const char* to_string(SynthKind k) {
  switch (k) {
    case SynthKind::binary_uniform: return "binary-uniform";
    case SynthKind::uniform_continuous: return "uniform-continuous";
    case SynthKind::gaussian_clipped: return "gaussian-clipped";
    case SynthKind::inverted_frequency: return "inverted-frequency";
  }
  return "?";
}

inline SynthKind parse_synth_kind(const std::string& s) {
  if (s == "binary-uniform") return SynthKind::binary_uniform;
  if (s == "uniform-continuous") return SynthKind::uniform_continuous;
  if (s == "gaussian-clipped") return SynthKind::gaussian_clipped;
  if (s == "inverted-frequency") return SynthKind::inverted_frequency;
  throw ConfigError("unknown synthetic scheme '" + s + "'");
}

/// The color image whose pixels are pasted into the source wherever the mask is set.
inline Image generate_synthetic(const Shape& shape, const SynthScheme& scheme, const SamplerSeed& seed,
                                const Image* source = nullptr) {
  if (shape.size() == 0) throw DimensionError("synthetic image shape must be non-empty");
  Engine rng = make_engine(seed);
  std::vector<float> data(shape.size());
  switch (scheme.kind) {
    case SynthKind::binary_uniform: {
      std::bernoulli_distribution coin(0.5);
      for (float& v : data) v = coin(rng) ? 1.0f : 0.0f;
      break;
    }
    case SynthKind::uniform_continuous: {
      std::uniform_real_distribution<float> u(0.0f, 1.0f);
      for (float& v : data) v = u(rng);
      break;
    }
    case SynthKind::gaussian_clipped: {
      std::normal_distribution<double> g(scheme.gaussian_mean, scheme.gaussian_stddev);
      for (float& v : data) v = static_cast<float>(std::clamp(g(rng), 0.0, 1.0));
      break;
    }
    case SynthKind::inverted_frequency: {
      if (!source) throw ConfigError("inverted-frequency synthesis needs a source image");
      if (source->shape() != shape)
        throw DimensionError("source shape " + to_string(source->shape()) + " != requested " + to_string(shape));
      // 256-bin histogram of (1 - x) per channel; channels sampled independently.
      const std::size_t wh = shape.pixels();
      for (std::size_t ch = 0; ch < shape.channels; ++ch) {
        std::array<double, 256> hist{};
        for (std::size_t p = 0; p < wh; ++p) {
          const double inv = 1.0 - static_cast<double>(source->at(ch, p));
          hist[static_cast<std::size_t>(std::lround(inv * 255.0))] += 1.0;
        }
        std::discrete_distribution<int> bins(hist.begin(), hist.end());
        for (std::size_t p = 0; p < wh; ++p) data[ch * wh + p] = static_cast<float>(bins(rng)) / 255.0f;
      }
      break;
    }
  }
  return Image(shape, std::move(data));
}

/// Per-pixel mean absolute channel difference, in [0,1].
struct DissimilarityMap {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<double> values;

  static DissimilarityMap ones(std::uint32_t width, std::uint32_t height) {
    return {width, height, std::vector<double>(std::size_t{width} * height, 1.0)};
  }
};

inline DissimilarityMap dissimilarity_map(const Image& x, const Image& x_syn) {
  const Shape& s = x.shape();
  if (x_syn.shape() != s)
    throw DimensionError("dissimilarity_map: shapes " + to_string(s) + " and " + to_string(x_syn.shape()) +
                         " differ");
  const std::size_t wh = s.pixels();
  DissimilarityMap m{s.width, s.height, std::vector<double>(wh, 0.0)};
  for (std::size_t p = 0; p < wh; ++p) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < s.channels; ++ch)
      acc += std::abs(static_cast<double>(x.at(ch, p)) - static_cast<double>(x_syn.at(ch, p)));
    m.values[p] = acc / static_cast<double>(s.channels);
  }
  return m;
}

}  // namespace sparsemask
