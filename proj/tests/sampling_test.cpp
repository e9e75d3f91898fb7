#include <gtest/gtest.h>

#include <set>

#include "sparsemask/sampling.hpp"
#include "test_util.hpp"

using namespace sparsemask;

TEST(WeightedSample, DistinctAndInRange) {
  Engine rng = make_engine({5, 0});
  const std::vector<double> w{1, 2, 3, 4, 5, 0, 0};
  for (int i = 0; i < 500; ++i) {
    const auto got = weighted_sample_without_replacement(std::span<const double>(w), 7, rng);
    ASSERT_EQ(std::set<std::size_t>(got.begin(), got.end()).size(), 7u);
    // zero-weight items only fill the last slots
    ASSERT_GE(got[5], 5u);
    ASSERT_GE(got[6], 5u);
  }
}

TEST(WeightedSample, Errors) {
  Engine rng = make_engine({5, 1});
  const std::vector<double> w{1, 2};
  EXPECT_THROW(weighted_sample_without_replacement(std::span<const double>(w), 3, rng), DomainError);
  const std::vector<double> neg{1, -1};
  EXPECT_THROW(weighted_sample_without_replacement(std::span<const double>(neg), 1, rng), DomainError);
  const std::vector<double> inf{1, std::numeric_limits<double>::infinity()};
  EXPECT_THROW(weighted_sample_without_replacement(std::span<const double>(inf), 1, rng), DomainError);
}

TEST(WeightedSample, Deterministic) {
  const std::vector<double> w{0.1, 0.4, 0.2, 0.3};
  Engine a = make_engine({6, 0}), b = make_engine({6, 0});
  for (int i = 0; i < 50; ++i)
    ASSERT_EQ(weighted_sample_without_replacement(std::span<const double>(w), 2, a),
              weighted_sample_without_replacement(std::span<const double>(w), 2, b));
}

// Second draw follows the renormalized remainder: P(i then j) = w_i w_j / (1 - w_i).
// Checked over 20 independent streams; under the null at most 3 of 20 p-values
// fall below 0.01 except with probability ~4e-5.
TEST(WeightedSample, OrderedPairLaw) {
  const std::vector<double> w{0.5, 0.3, 0.2};
  std::vector<double> probs;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) probs.push_back(w[i] * w[j] / (1.0 - w[i]));
  int low = 0;
  for (std::uint64_t stream = 0; stream < 20; ++stream) {
    Engine rng = make_engine({7, stream});
    std::vector<double> counts(6, 0.0);
    for (int t = 0; t < 20000; ++t) {
      const auto d = weighted_sample_without_replacement(std::span<const double>(w), 2, rng);
      counts[d[0] * 2 + (d[1] > d[0] ? d[1] - 1 : d[1])] += 1;
    }
    low += testutil::chi_square_p(counts, probs) < 0.01;
  }
  EXPECT_LE(low, 3);
}
