#include <gtest/gtest.h>

#include <filesystem>

#include "sparsemask/image_io.hpp"
#include "test_util.hpp"

using namespace sparsemask;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sparsemask_image_io_test";
  fs::create_directories(dir);
  return dir / name;
}
}  // namespace

TEST(RawIo, RoundTrip) {
  const Image x = testutil::random_image({3, 7, 5}, 4);
  EXPECT_EQ(decode_raw(encode_raw(x)), x);
  write_raw(scratch("a.raw"), x);
  EXPECT_EQ(read_raw(scratch("a.raw")), x);
  EXPECT_EQ(read_image(scratch("a.raw")), x);
}

TEST(RawIo, RejectsTruncated) {
  auto bytes = encode_raw(Image::filled({1, 2, 2}, 0.5f));
  bytes.pop_back();
  EXPECT_ANY_THROW(decode_raw(bytes));
  EXPECT_THROW(read_raw(scratch("missing.raw")), IoError);
}

TEST(PngIo, RoundTripAtEightBits) {
  std::vector<float> d(3 * 4 * 3);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>((i * 23) % 256) / 255.0f;
  const Image x({3, 4, 3}, d);
  write_png(scratch("a.png"), x);
  const Image y = read_image(scratch("a.png"));
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_FLOAT_EQ(y.data()[i], x.data()[i]);
}

TEST(PngIo, GrayscaleExpandsToRgb) {
  const Image g({1, 2, 2}, {0.0f, 1.0f, 0.2f, 0.6f});
  write_png(scratch("g.png"), g);
  const Image y = read_png(scratch("g.png"));
  EXPECT_EQ(y.shape(), (Shape{3, 2, 2}));
  EXPECT_FLOAT_EQ(y.at(2, 1), 1.0f);
}

TEST(PngIo, MissingFile) { EXPECT_THROW(read_png(scratch("missing.png")), IoError); }
