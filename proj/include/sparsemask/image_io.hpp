#pragma once

#include <png.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sparsemask/image.hpp"

namespace sparsemask {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32_le(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

inline std::uint32_t get_u32_le(const unsigned char* b) {
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
         (std::uint32_t{b[3]} << 24);
}

}  // namespace detail

// Raw container: u32 c, u32 w, u32 h, then c*w*h float32, all little-endian,
// data in Image's channel-major order.

inline std::vector<unsigned char> encode_raw(const Image& img) {
  std::ostringstream os(std::ios::binary);
  const Shape& s = img.shape();
  detail::put_u32_le(os, s.channels);
  detail::put_u32_le(os, s.width);
  detail::put_u32_le(os, s.height);
  for (float v : img.data()) detail::put_u32_le(os, std::bit_cast<std::uint32_t>(v));
  const std::string bytes = std::move(os).str();
  return {bytes.begin(), bytes.end()};
}

inline Image decode_raw(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12) throw IoError("raw image: truncated header");
  const Shape s{detail::get_u32_le(bytes.data()), detail::get_u32_le(bytes.data() + 4),
                detail::get_u32_le(bytes.data() + 8)};
  if (bytes.size() != 12 + 4 * s.size())
    throw IoError("raw image: payload of " + std::to_string(bytes.size() - 12) + " bytes does not match shape " +
                  to_string(s));
  std::vector<float> data(s.size());
  for (std::size_t k = 0; k < data.size(); ++k)
    data[k] = std::bit_cast<float>(detail::get_u32_le(bytes.data() + 12 + 4 * k));
  return Image(s, std::move(data));
}

inline void write_raw(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_raw(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

inline Image read_raw(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_raw(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

/// Decodes any PNG to 8-bit RGB, values v/255.
inline Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str()))
    throw IoError(path.string() + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&png);
    throw IoError(path.string() + ": " + png.message);
  }
  const Shape s{3, png.width, png.height};
  std::vector<float> data(s.size());
  for (std::uint32_t row = 0; row < png.height; ++row) {
    for (std::uint32_t col = 0; col < png.width; ++col) {
      const std::size_t p = std::size_t{col} * s.height + row;
      for (std::size_t ch = 0; ch < 3; ++ch)
        data[ch * s.pixels() + p] = static_cast<float>(buf[(std::size_t{row} * png.width + col) * 3 + ch]) / 255.0f;
    }
  }
  return Image(s, std::move(data));
}

/// Writes 1-channel images as gray and 3-channel images as RGB, quantized to 8 bits.
inline void write_png(const std::filesystem::path& path, const Image& img) {
  const Shape& s = img.shape();
  if (s.channels != 1 && s.channels != 3)
    throw DimensionError("PNG output supports 1 or 3 channels, got " + std::to_string(s.channels));
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = s.width;
  png.height = s.height;
  png.format = s.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> buf(std::size_t{s.width} * s.height * s.channels);
  for (std::uint32_t row = 0; row < s.height; ++row)
    for (std::uint32_t col = 0; col < s.width; ++col)
      for (std::size_t ch = 0; ch < s.channels; ++ch) {
        const float v = img.at(ch, std::size_t{col} * s.height + row);
        buf[(std::size_t{row} * s.width + col) * s.channels + ch] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buf.data(), 0, nullptr))
    throw IoError(path.string() + ": " + png.message);
}

/// Dispatches on extension: .png, anything else is the raw container.
inline Image read_image(const std::filesystem::path& path) {
  return path.extension() == ".png" ? read_png(path) : read_raw(path);
}

inline void write_image(const std::filesystem::path& path, const Image& img) {
  if (path.extension() == ".png")
    write_png(path, img);
  else
    write_raw(path, img);
}

}  // namespace sparsemask
