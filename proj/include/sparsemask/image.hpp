#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sparsemask/errors.hpp"

namespace sparsemask {

/// Tensor extent: channels x width x height.
struct Shape {
  std::uint32_t channels = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;

  std::size_t pixels() const noexcept { return std::size_t{width} * height; }
  std::size_t size() const noexcept { return pixels() * channels; }
  bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.width) + "x" + std::to_string(s.height);
}

/// Dense float image in [0,1], channel-major.
///
/// Pixel (i, j), i along width and j along height, has flat index
/// p = i * height + j; channel ch of that pixel lives at ch * w * h + p.
/// Masks and maps use the same pixel index.
class Image {
 public:
  Image() = default;

  Image(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
    if (shape_.channels == 0 || shape_.width == 0 || shape_.height == 0)
      throw DimensionError("image extents must be positive, got " + to_string(shape_));
    if (data_.size() != shape_.size())
      throw DimensionError("image data length " + std::to_string(data_.size()) + " != " +
                           std::to_string(shape_.size()) + " for shape " + to_string(shape_));
    for (float v : data_) {
      if (!(v >= 0.0f && v <= 1.0f))
        throw DomainError("image value outside [0,1]: " + std::to_string(v));
    }
  }

  static Image filled(Shape shape, float value) {
    return Image(shape, std::vector<float>(shape.size(), value));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t pixels() const noexcept { return shape_.pixels(); }
  std::span<const float> data() const noexcept { return data_; }

  float at(std::size_t channel, std::size_t pixel) const {
    return data_[channel * shape_.pixels() + pixel];
  }

  bool operator==(const Image&) const = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Binary selection over the w x h pixel grid with a fixed popcount.
class PixelMask {
 public:
  PixelMask() = default;

  /// All-zeros mask.
  PixelMask(std::uint32_t width, std::uint32_t height)
      : width_(width), height_(height), bits_(std::size_t{width} * height, 0) {}

  PixelMask(std::uint32_t width, std::uint32_t height, std::span<const std::size_t> selected)
      : PixelMask(width, height) {
    for (std::size_t p : selected) {
      if (p >= bits_.size())
        throw DimensionError("pixel index " + std::to_string(p) + " outside " + std::to_string(width) +
                             "x" + std::to_string(height) + " mask");
      if (bits_[p]) throw DomainError("pixel index " + std::to_string(p) + " selected twice");
      bits_[p] = 1;
    }
    budget_ = selected.size();
  }

  PixelMask(std::uint32_t width, std::uint32_t height, std::initializer_list<std::size_t> selected)
      : PixelMask(width, height, std::span<const std::size_t>(selected.begin(), selected.size())) {}

  static PixelMask from_bits(std::uint32_t width, std::uint32_t height, std::vector<std::uint8_t> bits) {
    if (bits.size() != std::size_t{width} * height)
      throw DimensionError("mask bit count does not match " + std::to_string(width) + "x" +
                           std::to_string(height));
    PixelMask m(width, height);
    for (auto& b : bits) b = b ? 1 : 0;
    m.budget_ = static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    m.bits_ = std::move(bits);
    return m;
  }

  static PixelMask all_ones(std::uint32_t width, std::uint32_t height) {
    return from_bits(width, height, std::vector<std::uint8_t>(std::size_t{width} * height, 1));
  }

  std::uint32_t width() const noexcept { return width_; }
  std::uint32_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }
  std::size_t budget() const noexcept { return budget_; }
  bool test(std::size_t pixel) const { return bits_[pixel] != 0; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  std::vector<std::size_t> selected() const { return indices(1); }
  std::vector<std::size_t> unselected() const { return indices(0); }

  bool same_grid(const PixelMask& o) const noexcept { return width_ == o.width_ && height_ == o.height_; }
  bool operator==(const PixelMask&) const = default;

 private:
  std::vector<std::size_t> indices(std::uint8_t value) const {
    std::vector<std::size_t> out;
    out.reserve(value ? budget_ : bits_.size() - budget_);
    for (std::size_t p = 0; p < bits_.size(); ++p)
      if (bits_[p] == value) out.push_back(p);
    return out;
  }

  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  std::vector<std::uint8_t> bits_;
  std::size_t budget_ = 0;
};

/// Copies synthetic pixels where the mask is set, source pixels elsewhere.
inline Image apply_mask(const PixelMask& mask, const Image& source, const Image& synthetic) {
  const Shape& s = source.shape();
  if (synthetic.shape() != s)
    throw DimensionError("source " + to_string(s) + " and synthetic " + to_string(synthetic.shape()) +
                         " differ in shape");
  if (mask.width() != s.width || mask.height() != s.height)
    throw DimensionError("mask grid does not match image " + to_string(s));
  const std::size_t wh = s.pixels();
  std::vector<float> out(source.data().begin(), source.data().end());
  const auto syn = synthetic.data();
  for (std::size_t p = 0; p < wh; ++p) {
    if (!mask.test(p)) continue;
    for (std::size_t ch = 0; ch < s.channels; ++ch) out[ch * wh + p] = syn[ch * wh + p];
  }
  return Image(s, std::move(out));
}

/// Fraction of pixels that differ from the source in at least one channel.
inline double sparsity(const Image& source, const Image& adversarial) {
  const Shape& s = source.shape();
  if (adversarial.shape() != s)
    throw DimensionError("sparsity: shapes " + to_string(s) + " and " + to_string(adversarial.shape()) +
                         " differ");
  const std::size_t wh = s.pixels();
  const auto a = source.data();
  const auto b = adversarial.data();
  std::size_t changed = 0;
  for (std::size_t p = 0; p < wh; ++p) {
    for (std::size_t ch = 0; ch < s.channels; ++ch) {
      if (a[ch * wh + p] != b[ch * wh + p]) {
        ++changed;
        break;
      }
    }
  }
  return static_cast<double>(changed) / static_cast<double>(wh);
}

}  // namespace sparsemask
