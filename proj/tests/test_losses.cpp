#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "loss_oracle.hpp"
#include "segcurate/error.hpp"
#include "segcurate/losses.hpp"

namespace segcurate {
namespace {

using testing::max_relative_error;
using testing::mean_of_maps;
using testing::random_spatial_instance;
using testing::spatial_loss_fd;
using testing::spatial_loss_oracle;

GroundTruthGrid grid_of(int d, std::vector<std::uint8_t> cells) { return {d, std::move(cells)}; }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::Io;
}

TEST(Aggregate, MeanOfMaps) {
  const AttentionStack one(1, 1, 2, {0.7, 0.1, 0.1, 0.1});
  EXPECT_EQ(aggregate_attention(one).grid, (std::vector<double>{0.7, 0.1, 0.1, 0.1}));
  const auto two = AttentionStack::from_maps(1, 2, {{0.2}, {0.4}});
  EXPECT_NEAR(aggregate_attention(two).grid[0], 0.3, 1e-15);
  EXPECT_EQ(code_of([] { AttentionStack::from_maps(1, 2, {{0.2}, {0.4, 0.1, 0.1, 0.1}}); }),
            ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([] { AttentionStack(1, 1, 2, {0.1, 0.1, 0.1}); }), ErrorCode::ShapeMismatch);
  EXPECT_THROW(AttentionStack(1, 1, 1, {-0.5}), Error);
}

TEST(BackgroundMean, AveragesBackgroundCells) {
  const AttentionSummary s{2, {0.7, 0.1, 0.1, 0.1}};
  EXPECT_NEAR(background_mean(s, grid_of(2, {1, 0, 0, 0})), 0.1, 1e-15);
  EXPECT_NEAR(background_mean(s, grid_of(2, {0, 0, 0, 0})), 0.25, 1e-15);
  EXPECT_EQ(code_of([&] { background_mean(s, grid_of(2, {1, 1, 1, 1})); }), ErrorCode::NoBackground);
}

TEST(SpatialLoss, HandExample) {
  const AttentionStack stack(1, 1, 2, {0.7, 0.1, 0.1, 0.1});
  const SpatialLoss l = spatial_attention_loss(stack, grid_of(2, {1, 0, 0, 0}));
  EXPECT_FALSE(l.skipped());
  EXPECT_NEAR(l.background_mean, 0.1, 1e-12);
  EXPECT_NEAR(l.separation, 0.36, 1e-12);
  EXPECT_NEAR(l.value, -std::log(0.36), 1e-12);
  EXPECT_NEAR(l.value, 1.0217, 1e-4);
}

TEST(SpatialLoss, DegenerateGroundTruthIsSkipped) {
  const AttentionStack stack(1, 1, 2, {0.7, 0.1, 0.1, 0.1});
  const SpatialLoss none = spatial_attention_loss(stack, grid_of(2, {0, 0, 0, 0}));
  EXPECT_EQ(none.skip, SpatialSkip::NoForeground);
  EXPECT_TRUE(none.gradient.empty());
  const SpatialLoss all = spatial_attention_loss(stack, grid_of(2, {1, 1, 1, 1}));
  EXPECT_EQ(all.skip, SpatialSkip::NoBackground);
  EXPECT_EQ(code_of([&] { spatial_attention_loss(stack, grid_of(3, std::vector<std::uint8_t>(9))); }),
            ErrorCode::ShapeMismatch);
}

TEST(SpatialLoss, ConstantAttentionIsClamped) {
  const AttentionStack stack(1, 2, 2, std::vector<double>(8, 0.25));
  const SpatialLoss l = spatial_attention_loss(stack, grid_of(2, {1, 0, 0, 1}));
  EXPECT_TRUE(l.clamped);
  EXPECT_NEAR(l.value, -std::log(kDefaultLogEpsilon), 1e-12);
  for (const double g : l.gradient) EXPECT_EQ(g, 0.0);
}

TEST(SpatialLoss, MatchesDirectFormulaAndFiniteDifferences) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 10; ++i) {
    const auto inst = random_spatial_instance(rng, 2, 4, 12);
    const AttentionStack stack(inst.blocks, inst.heads, inst.d, inst.values);
    const GroundTruthGrid g = grid_of(inst.d, inst.grid);
    const SpatialLoss l = spatial_attention_loss(stack, g);
    const auto a_s = mean_of_maps(inst.values, stack.map_count(), stack.cells());
    EXPECT_NEAR(l.value, spatial_loss_oracle(a_s, inst.grid), 1e-12);
    const auto fd = spatial_loss_fd(inst.values, stack.map_count(), stack.cells(), inst.grid, 1e-5);
    EXPECT_LT(max_relative_error(l.gradient, fd), 1e-4);
  }
}

TEST(SpatialLoss, InvariantUnderMapPermutation) {
  std::mt19937_64 rng(77);
  const auto inst = random_spatial_instance(rng, 2, 3, 8);
  const GroundTruthGrid g = grid_of(inst.d, inst.grid);
  const std::size_t cells = 64;
  std::vector<std::size_t> order(6);
  std::iota(order.begin(), order.end(), 0u);
  const double base = spatial_attention_loss(AttentionStack(2, 3, 8, inst.values), g).value;
  for (int t = 0; t < 10; ++t) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> permuted;
    for (const auto k : order) {
      permuted.insert(permuted.end(), inst.values.begin() + static_cast<std::ptrdiff_t>(k * cells),
                      inst.values.begin() + static_cast<std::ptrdiff_t>((k + 1) * cells));
    }
    EXPECT_NEAR(spatial_attention_loss(AttentionStack(2, 3, 8, permuted), g).value, base, 1e-12);
  }
}

TEST(SpatialLoss, ShiftAndScaleProperties) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> shift(0.0, 5.0);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int i = 0; i < 50; ++i) {
    const auto inst = random_spatial_instance(rng, 1, 2, 10);
    const GroundTruthGrid g = grid_of(inst.d, inst.grid);
    const double base = spatial_attention_loss(AttentionStack(1, 2, 10, inst.values), g).value;
    const double c = shift(rng);
    const double s = scale(rng);
    auto shifted = inst.values;
    for (auto& v : shifted) v += c;
    auto scaled = inst.values;
    for (auto& v : scaled) v *= s;
    EXPECT_NEAR(spatial_attention_loss(AttentionStack(1, 2, 10, shifted), g).value, base, 1e-9);
    EXPECT_NEAR(spatial_attention_loss(AttentionStack(1, 2, 10, scaled), g).value,
                base - 2.0 * std::log(s), 1e-9);
  }
}

TEST(Bce, Examples) {
  const std::vector<double> zeros(5, 0.0);
  const std::vector<std::uint8_t> t{1, 0, 1, 1, 0};
  EXPECT_NEAR(bce_loss(zeros, t), std::log(2.0), 1e-12);
  std::vector<double> sure;
  for (const auto v : t) sure.push_back(v ? 50.0 : -50.0);
  EXPECT_LT(bce_loss(sure, t), 1e-9);
  EXPECT_NEAR(bce_loss(std::vector<double>{50.0}, std::vector<std::uint8_t>{0}), 50.0, 1e-9);
  EXPECT_EQ(code_of([] { bce_loss(std::vector<double>{0.0}, std::vector<std::uint8_t>{0, 1}); }),
            ErrorCode::ShapeMismatch);
}

TEST(Dice, Examples) {
  const std::vector<std::uint8_t> gt{1, 1, 1, 1, 0, 0, 0, 0};
  const std::vector<double> same{1, 1, 1, 1, 0, 0, 0, 0};
  const std::vector<double> disjoint{0, 0, 0, 0, 1, 1, 1, 1};
  EXPECT_NEAR(dice_loss(same, gt), 0.0, 1e-15);
  EXPECT_NEAR(dice_loss(disjoint, gt), 1.0 - 1.0 / 9.0, 1e-12);
  EXPECT_NEAR(dice_loss(std::vector<double>(3, 0.0), std::vector<std::uint8_t>(3, 0)), 0.0, 1e-15);
  EXPECT_EQ(code_of([] { dice_loss(std::vector<double>{1.5}, std::vector<std::uint8_t>{1}); }),
            ErrorCode::OutOfRange);
}

TEST(BceDice, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(404);
  std::normal_distribution<double> logit(0.0, 3.0);
  std::uniform_real_distribution<double> prob(0.01, 0.99);
  std::bernoulli_distribution bit(0.4);
  const double h = 1e-5;
  for (int i = 0; i < 20; ++i) {
    const std::size_t n = 64;
    std::vector<double> x(n);
    std::vector<double> p(n);
    std::vector<std::uint8_t> t(n);
    for (std::size_t k = 0; k < n; ++k) {
      x[k] = logit(rng);
      p[k] = prob(rng);
      t[k] = bit(rng) ? 1 : 0;
    }
    std::vector<double> gb(n);
    std::vector<double> gd(n);
    EXPECT_NEAR(bce_loss_grad(x, t, gb), bce_loss(x, t), 1e-15);
    EXPECT_NEAR(dice_loss_grad(p, t, gd), dice_loss(p, t), 1e-15);
    std::vector<double> fb(n);
    std::vector<double> fdice(n);
    for (std::size_t k = 0; k < n; ++k) {
      auto xp = x;
      auto xm = x;
      xp[k] += h;
      xm[k] -= h;
      fb[k] = (bce_loss(xp, t) - bce_loss(xm, t)) / (2 * h);
      auto pp = p;
      auto pm = p;
      pp[k] += h;
      pm[k] -= h;
      fdice[k] = (dice_loss(pp, t) - dice_loss(pm, t)) / (2 * h);
    }
    EXPECT_LT(max_relative_error(gb, fb), 1e-4);
    EXPECT_LT(max_relative_error(gd, fdice), 1e-4);
  }
}

TEST(BceDice, RangesOnRandomInputs) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> prob(0.0, 1.0);
  std::normal_distribution<double> logit(0.0, 10.0);
  std::bernoulli_distribution bit(0.5);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> x(16);
    std::vector<double> p(16);
    std::vector<std::uint8_t> t(16);
    for (std::size_t k = 0; k < 16; ++k) {
      x[k] = logit(rng);
      p[k] = prob(rng);
      t[k] = bit(rng) ? 1 : 0;
    }
    EXPECT_GE(bce_loss(x, t), 0.0);
    const double d = dice_loss(p, t);
    EXPECT_GE(d, 0.0);
    EXPECT_LT(d, 1.0);
  }
}

TEST(TokenCe, Examples) {
  const std::vector<double> uniform(3 * 8, 0.0);
  const std::vector<long long> ids{1, 7, 0};
  EXPECT_NEAR(token_ce(uniform, 8, ids), std::log(8.0), 1e-12);
  std::vector<double> peaked(3 * 8, 0.0);
  for (std::size_t r = 0; r < 3; ++r) peaked[r * 8 + static_cast<std::size_t>(ids[r])] = 50.0;
  EXPECT_LT(token_ce(peaked, 8, ids), 1e-9);
  // an ignored position does not enter the mean
  const std::vector<long long> partial{1, kDefaultIgnoreId, 0};
  EXPECT_NEAR(token_ce(uniform, 8, partial), std::log(8.0), 1e-12);
  const std::vector<long long> none{kDefaultIgnoreId, kDefaultIgnoreId, kDefaultIgnoreId};
  EXPECT_EQ(code_of([&] { token_ce(uniform, 8, none); }), ErrorCode::EmptyAfterIgnore);
  const std::vector<long long> oov{1, 8, 0};
  EXPECT_EQ(code_of([&] { token_ce(uniform, 8, oov); }), ErrorCode::TargetOutOfVocab);
}

TEST(TotalLoss, WeightedSum) {
  LossParts parts{1.0, 2.0, 3.0, 0.5};
  const LossReport r = total_loss(parts);
  EXPECT_NEAR(r.total, 6.005, 1e-12);
  EXPECT_FALSE(r.skipped_spatial);

  LossWeights off;
  off.lambda_s = 0.0;
  parts.spatial = 1e6;
  EXPECT_EQ(total_loss(parts, off).total, 6.0);

  parts.spatial.reset();
  const LossReport skipped = total_loss(parts);
  EXPECT_TRUE(skipped.skipped_spatial);
  EXPECT_EQ(skipped.l_spatial, 0.0);
  EXPECT_EQ(skipped.total, 6.0);

  parts.bce = std::nan("");
  EXPECT_EQ(code_of([&] { total_loss(parts); }), ErrorCode::NonFiniteComponent);
}

TEST(TotalLoss, WeightsJsonRoundTrip) {
  LossWeights w;
  w.lambda_s = 0.5;
  const nlohmann::json j = w;
  EXPECT_EQ(j.get<LossWeights>().lambda_s, 0.5);
  EXPECT_EQ(j.get<LossWeights>().w_text, 1.0);
}

}  // namespace
}  // namespace segcurate
