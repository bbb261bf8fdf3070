#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "qsdc/corruption.hpp"
#include "qsdc/errors.hpp"
#include "qsdc/monitor.hpp"
#include "support/oracles.hpp"

using namespace qsdc;

namespace {

Network small_net(std::uint64_t seed) {
  return parse_topology(std::string("input 1 10 10\nclasses 3\nconv2d 4 3 1 1\nrelu\nconv2d 5 3 1 1\nrelu\n"
                                    "maxpool2d 2 2\nlinear 3\n"),
                        seed);
}

}  // namespace

TEST(FeatureSums, MatchOracle) {
  std::mt19937_64 rng(1);
  const Tensor4 t = oracle::random_tensor({3, 4, 5, 6}, rng, -2.0f, 2.0f);
  const FeatureSums s = feature_sums(t);
  ASSERT_EQ(s.n, 3u);
  ASSERT_EQ(s.c, 4u);
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(float_bits(s.row(n)[c]), float_bits(oracle::feature_sum(t, n, c)));
  }
}

TEST(Quantiles, SmallExamples) {
  const std::vector<float> one{3.0f};
  for (float q : layer_quantiles(one)) EXPECT_EQ(q, 3.0f);
  const std::vector<float> v{4.0f, 0.0f, 2.0f, 1.0f, 3.0f};
  const auto q = layer_quantiles(v);
  EXPECT_FLOAT_EQ(q[0], 0.0f);
  EXPECT_FLOAT_EQ(q[1], 0.4f);
  EXPECT_FLOAT_EQ(q[5], 2.0f);
  EXPECT_FLOAT_EQ(q[9], 3.6f);
  EXPECT_FLOAT_EQ(q[10], 4.0f);
  const std::vector<float> eleven{10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0};
  const auto qe = layer_quantiles(eleven);
  for (std::size_t i = 0; i < kQuantileCount; ++i) EXPECT_EQ(qe[i], static_cast<float>(i));
  EXPECT_THROW((void)layer_quantiles(std::span<const float>()), ConfigError);
}

TEST(Quantiles, NanPropagates) {
  const std::vector<float> v{1.0f, std::numeric_limits<float>::quiet_NaN(), 2.0f};
  for (float q : layer_quantiles(v)) EXPECT_TRUE(std::isnan(q));
}

TEST(Quantiles, MatchOracleAndMonotone) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 1 + rng() % 64;
    std::vector<float> v(c);
    std::uniform_real_distribution<float> d(-100.0f, 100.0f);
    for (auto& x : v) x = d(rng);
    const auto q = layer_quantiles(v);
    for (std::size_t i = 0; i < kQuantileCount; ++i) {
      EXPECT_EQ(float_bits(q[i]), float_bits(oracle::quantile(v, kPercentiles[i])));
      if (i > 0) {
        EXPECT_LE(q[i - 1], q[i]);
      }
    }
  }
}

TEST(FNorm, Examples) {
  EXPECT_EQ(f_norm(0.5, 0.0, 1.0), std::tanh(-0.5 / (1.0 + kNormEpsilon)));
  EXPECT_LT(f_norm(0.5, 0.0, 1.0), 0.0);
  EXPECT_NEAR(f_norm(1.0, 0.0, 1.0), 0.0, 1e-12);
  EXPECT_GT(f_norm(2.0, 0.0, 1.0), 0.0);
  EXPECT_NEAR(f_norm(2.0, 0.0, 1.0), std::tanh(1.0), 1e-7);
  EXPECT_NEAR(f_norm(-1.0, 1.0, 2.0), std::tanh(2.0), 1e-7);
  EXPECT_GT(f_norm(-1.0, 1.0, 2.0), 0.0);
}

TEST(Anomaly, LayoutNamesAndRange) {
  EXPECT_EQ(feature_index(0, 0, 4), 0u);
  EXPECT_EQ(feature_index(3, 0, 4), 3u);
  EXPECT_EQ(feature_index(0, 1, 4), 4u);
  EXPECT_EQ(feature_index(2, 10, 4), 42u);
  EXPECT_EQ(feature_name(42, 4), "q[layer=3][p=100]");
  EXPECT_EQ(feature_name(5, 4), "q[layer=2][p=10]");
  for (std::size_t i = 0; i < 44; ++i) {
    EXPECT_EQ(feature_index(feature_layer(i, 4), feature_percentile_index(i, 4), 4), i);
  }

  QuantileBounds b;
  b.layers = 2;
  b.min.assign(22, 0.0f);
  b.max.assign(22, 1.0f);
  QuantileSet q(2);
  q.at(0, 0) = 0.5f;
  q.at(1, 0) = 1e30f;
  q.at(0, 1) = -1e30f;
  q.at(1, 1) = std::numeric_limits<float>::quiet_NaN();
  q.at(0, 2) = std::numeric_limits<float>::infinity();
  const auto v = anomaly_vector(q, b);
  ASSERT_EQ(v.size(), 22u);
  for (double x : v) {
    EXPECT_GT(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_LT(v[0], 0.5);
  EXPECT_GT(v[1], 0.99);
  EXPECT_GT(v[2], 0.99);
  EXPECT_EQ(v[3], std::nextafter(1.0, 0.0));
  EXPECT_EQ(v[4], std::nextafter(1.0, 0.0));
  QuantileSet bad(3);
  EXPECT_THROW((void)anomaly_vector(bad, b), ConfigError);
}

TEST(Anomaly, InsideBoundsBelowHalf) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> d(-5.0f, 5.0f);
  for (int t = 0; t < 1000; ++t) {
    QuantileBounds b;
    b.layers = 1;
    QuantileSet q(1);
    for (std::size_t p = 0; p < kQuantileCount; ++p) {
      float lo = d(rng), hi = d(rng);
      if (lo > hi) std::swap(lo, hi);
      b.min.push_back(lo);
      b.max.push_back(hi);
      q.at(0, p) = std::uniform_real_distribution<float>(lo, hi)(rng);
    }
    for (double x : anomaly_vector(q, b)) EXPECT_LE(x, 0.5);
  }
}

TEST(Monitor, MatchesLayerQuantilesOnRecordedOutputs) {
  const Network net = small_net(1);
  std::mt19937_64 rng(4);
  const Tensor4 img = oracle::random_tensor({3, 1, 10, 10}, rng, 0.0f, 1.0f);
  std::vector<Tensor4> outs(2);
  QuantileMonitor mon(2);
  mon.reset(3);
  const std::array<ConvHook, 2> hooks{[&](std::size_t l, Tensor4& t) { outs[l] = t; }, mon.hook()};
  (void)forward(net, img, hooks);
  ASSERT_EQ(mon.quantiles().size(), 3u);
  EXPECT_FALSE(mon.any_due());
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t l = 0; l < 2; ++l) {
      const FeatureSums s = feature_sums(outs[l]);
      const auto q = layer_quantiles(s.row(n));
      for (std::size_t p = 0; p < kQuantileCount; ++p) {
        EXPECT_EQ(float_bits(mon.quantiles()[n].at(l, p)), float_bits(q[p]));
      }
    }
  }
}

TEST(Monitor, SelectionLeavesUntappedAtZero) {
  const Network net = small_net(2);
  std::mt19937_64 rng(5);
  const Tensor4 img = oracle::random_tensor({1, 1, 10, 10}, rng, 0.0f, 1.0f);
  const std::vector<std::size_t> feats{feature_index(1, 3, 2)};
  const MonitorSelection sel = MonitorSelection::from_features(feats, 2);
  EXPECT_EQ(sel.tapped_layers(), 1u);
  QuantileMonitor part(sel), full(2);
  part.reset(1);
  full.reset(1);
  const std::array<ConvHook, 2> hooks{part.hook(), full.hook()};
  (void)forward(net, img, hooks);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t p = 0; p < kQuantileCount; ++p) {
      if (l == 1 && p == 3) {
        EXPECT_EQ(part.quantiles()[0].at(l, p), full.quantiles()[0].at(l, p));
      } else {
        EXPECT_EQ(part.quantiles()[0].at(l, p), 0.0f);
      }
    }
  }
}

TEST(Monitor, OverflowIsDue) {
  QuantileMonitor mon(1);
  mon.reset(2);
  Tensor4 t({2, 2, 4, 4}, 1.0f);
  t.at(1, 0, 0, 0) = 3e38f;
  t.at(1, 0, 0, 1) = 3e38f;
  mon.observe(0, t);
  EXPECT_FALSE(mon.due(0));
  EXPECT_TRUE(mon.due(1));
  EXPECT_TRUE(mon.any_due());
  EXPECT_FALSE(due_check(Tensor4({1, 1, 1, 1}, 3e38f)));
  EXPECT_TRUE(due_check(Tensor4({1, 1, 1, 1}, std::numeric_limits<float>::infinity())));
  mon.reset(2);
  EXPECT_FALSE(mon.any_due());
}

TEST(Bounds, ExtractIsElementwiseEnvelope) {
  std::vector<QuantileSet> sets(3, QuantileSet(1));
  for (std::size_t p = 0; p < kQuantileCount; ++p) {
    sets[0].at(0, p) = 1.0f;
    sets[1].at(0, p) = -2.0f;
    sets[2].at(0, p) = static_cast<float>(p);
  }
  const QuantileBounds b = extract_bounds(sets, "unit");
  EXPECT_EQ(b.provenance, "unit");
  for (std::size_t p = 0; p < kQuantileCount; ++p) {
    EXPECT_EQ(b.lo(0, p), -2.0f);
    EXPECT_EQ(b.hi(0, p), std::max(1.0f, static_cast<float>(p)));
  }
  EXPECT_THROW((void)extract_bounds(std::span<const QuantileSet>()), ConfigError);
  sets[1].at(0, 4) = std::numeric_limits<float>::infinity();
  EXPECT_THROW((void)extract_bounds(sets), DueError);
  sets[1].at(0, 4) = 0.0f;
  sets.push_back(QuantileSet(2));
  EXPECT_THROW((void)extract_bounds(sets), ConfigError);
}

TEST(Bounds, CalibrationImagesScoreInside) {
  const Network net = small_net(3);
  std::mt19937_64 rng(6);
  const Tensor4 imgs = oracle::random_tensor({12, 1, 10, 10}, rng, 0.0f, 1.0f);
  const QuantileBounds b = extract_bounds(net, imgs, "cal", 5);
  QuantileMonitor mon(2);
  mon.reset(12);
  const ConvHook h = mon.hook();
  (void)forward(net, imgs, std::span<const ConvHook>(&h, 1));
  for (const auto& q : mon.quantiles()) {
    for (double x : anomaly_vector(q, b)) EXPECT_LE(x, 0.5);
  }
}

TEST(Bounds, CsvRoundTrip) {
  QuantileBounds b;
  b.layers = 2;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> d(-1e6f, 1e6f);
  for (std::size_t i = 0; i < 22; ++i) {
    const float x = d(rng), y = d(rng);
    b.min.push_back(std::min(x, y));
    b.max.push_back(std::max(x, y));
  }
  const auto path = std::filesystem::temp_directory_path() / "qsdc_test_bounds.csv";
  write_bounds_csv(b, path);
  const QuantileBounds r = read_bounds_csv(path);
  EXPECT_EQ(r.layers, 2u);
  for (std::size_t i = 0; i < 22; ++i) {
    EXPECT_EQ(float_bits(r.min[i]), float_bits(b.min[i]));
    EXPECT_EQ(float_bits(r.max[i]), float_bits(b.max[i]));
  }
  EXPECT_THROW((void)read_bounds_csv(path.string() + ".missing"), IoError);
}
