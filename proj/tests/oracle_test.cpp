#include <gtest/gtest.h>

#include <thread>

#include "sparsemask/oracle.hpp"
#include "test_util.hpp"

using namespace sparsemask;

namespace {
const Shape kShape{3, 4, 4};

std::shared_ptr<LinearSoftmaxModel> toy(std::uint64_t seed = 1) {
  return std::make_shared<LinearSoftmaxModel>(LinearSoftmaxModel::random(kShape, 5, {seed, 0}));
}
}  // namespace

TEST(Softmax, SumsToOneAndStable) {
  const std::vector<double> z{1000.0, 1001.0, 999.0};
  const auto p = softmax(z);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
  EXPECT_GT(p[1], p[0]);
}

TEST(LinearModel, MatchesReference) {
  const auto m = toy();
  Engine rng = make_engine({2, 0});
  for (int i = 0; i < 50; ++i) {
    const Image x = testutil::random_image(kShape, rng());
    const auto got = m->evaluate(x).probabilities();
    const auto ref = testutil::reference_softmax_scores(*m, x);
    for (std::size_t k = 0; k < ref.size(); ++k) ASSERT_NEAR(got[k], ref[k], 1e-12);
    // argmax of scores equals argmax of logits
    const auto z = m->logits(x);
    ASSERT_EQ(std::get<std::size_t>(predicted_label(m->evaluate(x))),
              static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()));
  }
  EXPECT_THROW(LinearSoftmaxModel(kShape, {1.0}, {0.0}), DimensionError);
}

TEST(DenseModel, RoundTripsLinearModel) {
  const auto m = toy(3);
  const auto dense = DenseNetworkModel::from_json(to_dense_json(*m));
  Engine rng = make_engine({3, 0});
  for (int i = 0; i < 20; ++i) {
    const Image x = testutil::random_image(kShape, rng());
    const auto a = m->evaluate(x).probabilities();
    const auto b = dense.evaluate(x).probabilities();
    for (std::size_t k = 0; k < a.size(); ++k) ASSERT_NEAR(a[k], b[k], 1e-12);
  }
  EXPECT_EQ(dense.classes(), 5u);
}

TEST(DenseModel, HiddenReluLayer) {
  // 1 input, hidden relu [x, -x], output linear [h0 - h1, 0]: logits (|x|, 0) for x >= 0
  const nlohmann::json j{{"format", "sparsemask-dense-v1"},
                         {"shape", {1, 1, 1}},
                         {"layers",
                          {{{"weights", {{1.0}, {-1.0}}}, {"bias", {0.0, 0.0}}, {"activation", "relu"}},
                           {{"weights", {{1.0, -1.0}, {0.0, 0.0}}}, {"bias", {0.0, 0.0}}, {"activation", "linear"}}}}};
  const auto m = DenseNetworkModel::from_json(j);
  const auto p = m.evaluate(Image({1, 1, 1}, {0.5f})).probabilities();
  EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-0.5)), 1e-12);
}

TEST(DenseModel, RejectsBadFiles) {
  EXPECT_ANY_THROW(DenseNetworkModel::from_json({{"format", "other"}}));
  const nlohmann::json mismatch{{"format", "sparsemask-dense-v1"},
                                {"shape", {1, 1, 2}},
                                {"layers", {{{"weights", {{1.0}}}, {"bias", {0.0}}, {"activation", "linear"}}}}};
  EXPECT_ANY_THROW(DenseNetworkModel::from_json(mismatch));
}

TEST(Oracle, BudgetExactness) {
  ScoreOracle o(toy(), 3);
  const Image x = Image::filled(kShape, 0.5f);
  for (int i = 0; i < 3; ++i) o.query(x);
  EXPECT_EQ(o.used(), 3u);
  EXPECT_THROW(o.query(x), BudgetError);
  EXPECT_EQ(o.used(), 3u);
}

TEST(Oracle, ShapeErrorConsumesNothing) {
  ScoreOracle o(toy(), 3);
  EXPECT_THROW(o.query(Image::filled({3, 4, 5}, 0.5f)), DimensionError);
  EXPECT_EQ(o.used(), 0u);
}

namespace {
struct Failing : ScoreModel {
  ScoreVector evaluate(const Image&) const override { throw TransportError("down", 3); }
  Shape input_shape() const override { return kShape; }
  std::size_t classes() const override { return 2; }
};
}  // namespace

TEST(Oracle, FailedDeliveryIsNotCounted) {
  ScoreOracle o(std::make_shared<Failing>(), 3);
  EXPECT_THROW(o.query(Image::filled(kShape, 0.5f)), TransportError);
  EXPECT_EQ(o.used(), 0u);
}

TEST(Oracle, ConcurrentCountingIsExact) {
  auto counting = std::make_shared<testutil::CountingModel>(toy());
  ScoreOracle o(counting, 1000);
  const Image x = Image::filled(kShape, 0.5f);
  std::vector<std::jthread> pool;
  std::atomic<int> refused{0};
  for (int t = 0; t < 4; ++t)
    pool.emplace_back([&] {
      for (int i = 0; i < 300; ++i) try {
          o.query(x);
        } catch (const BudgetError&) {
          ++refused;
        }
    });
  pool.clear();
  EXPECT_EQ(o.used(), 1000u);
  EXPECT_EQ(counting->count(), 1000u);
  EXPECT_EQ(refused.load(), 200);
}

TEST(Rnd, ZeroSigmaIsTransparent) {
  ScoreOracle plain(toy(), 100);
  ScoreOracle wrapped = wrap_rnd(plain, 0.0, {5, 0});
  Engine rng = make_engine({4, 0});
  for (int i = 0; i < 30; ++i) {
    const Image x = testutil::random_image(kShape, rng());
    ASSERT_EQ(plain.query(x).probabilities(), wrapped.query(x).probabilities());
  }
}

TEST(Rnd, CarriesBudgetAndPerturbs) {
  ScoreOracle plain(toy(), 10);
  const Image x = Image::filled(kShape, 0.5f);
  plain.query(x);
  ScoreOracle noisy = wrap_rnd(plain, 0.1, {6, 0});
  EXPECT_EQ(noisy.used(), 1u);
  EXPECT_EQ(noisy.budget().limit(), 10u);
  EXPECT_NE(noisy.query(x).probabilities(), plain.query(x).probabilities());
  EXPECT_THROW(RndModel(toy(), -1.0, {1, 0}), DomainError);
}
