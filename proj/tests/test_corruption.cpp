#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "qsdc/corruption.hpp"
#include "qsdc/errors.hpp"
#include "qsdc/monitor.hpp"
#include "support/oracles.hpp"

using namespace qsdc;

namespace {

Network small_net(std::uint64_t seed) {
  return parse_topology(std::string("input 1 10 10\nclasses 3\nconv2d 4 3 1 1\nrelu\nconv2d 4 3 1 1\nrelu\n"
                                    "maxpool2d 2 2\nlinear 3\n"),
                        seed);
}

Tensor4 random_image(Shape4 s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_tensor(s, rng, 0.0f, 1.0f);
}

}  // namespace

TEST(FlipBit, IeeeExamples) {
  EXPECT_EQ(flip_bit(1.0f, 31), -1.0f);
  EXPECT_EQ(flip_bit(1.0f, 30), std::numeric_limits<float>::infinity());
  EXPECT_EQ(flip_bit(1.0f, 23), 0.5f);
  EXPECT_THROW((void)flip_bit(1.0f, 32), ConfigError);
  EXPECT_THROW((void)flip_bit(1.0f, -1), ConfigError);
}

TEST(FlipBit, InvolutionOnEveryBit) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const float v = float_from_bits(static_cast<std::uint32_t>(rng()));
    for (int b = 0; b < 32; ++b) {
      const float f = flip_bit(v, b);
      EXPECT_EQ(float_bits(f) ^ float_bits(v), 1u << b);
      EXPECT_EQ(float_bits(flip_bit(f, b)), float_bits(v));
    }
  }
}

TEST(Noise, ZeroSigmaIsIdentity) {
  const Tensor4 img = random_image({1, 1, 8, 8}, 2);
  EXPECT_EQ(apply_gaussian_noise(img, 0.0, 1.0 / 255.0, 5), img);
}

TEST(Noise, SeededAndClipped) {
  const Tensor4 img = random_image({1, 1, 16, 16}, 3);
  const Tensor4 a = apply_gaussian_noise(img, 10.0, 1.0 / 255.0, 77);
  EXPECT_EQ(a, apply_gaussian_noise(img, 10.0, 1.0 / 255.0, 77));
  EXPECT_NE(a, apply_gaussian_noise(img, 10.0, 1.0 / 255.0, 78));
  const Tensor4 big = apply_gaussian_noise(img, 1000.0, 1.0 / 255.0, 1);
  for (float v : big.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Noise, SampleMomentsMatchSigmaTimesScale) {
  const double stddev = 10.0 / 255.0;
  const auto s = gaussian_noise_samples(1'000'000, stddev, 42);
  double sum = 0.0, sq = 0.0;
  for (float v : s) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double mean = sum / static_cast<double>(s.size());
  const double sd = std::sqrt(sq / static_cast<double>(s.size()) - mean * mean);
  EXPECT_LT(std::abs(mean), 0.01 * stddev);
  EXPECT_NEAR(sd, stddev, 0.01 * stddev);
}

TEST(Blur, KernelIsNormalized) {
  for (double sigma : {0.3, 1.0, 3.0}) {
    for (std::size_t size : {5u, 9u}) {
      const auto k = gaussian_kernel1d(size, sigma);
      double sum = 0.0;
      for (float v : k) sum += v;
      EXPECT_NEAR(sum, 1.0, 1e-6);
      EXPECT_EQ(k.front(), k.back());
    }
  }
}

TEST(Blur, ConstantImageUnchanged) {
  const Tensor4 img({1, 1, 12, 12}, 0.25f);
  const Tensor4 out = apply_gaussian_blur(img, 3.0);
  for (float v : out.data()) EXPECT_NEAR(v, 0.25f, 1e-6f);
}

TEST(Blur, ImpulseResponseIsTheKernel) {
  Tensor4 img({1, 1, 15, 15}, 0.0f);
  img.at(0, 0, 7, 7) = 1.0f;
  const double sigma = 1.0;
  const Tensor4 out = apply_gaussian_blur(img, sigma, 5, 9);
  const auto kh = gaussian_kernel1d(5, sigma), kw = gaussian_kernel1d(9, sigma);
  double total = 0.0;
  for (std::size_t y = 0; y < 15; ++y) {
    for (std::size_t x = 0; x < 15; ++x) {
      const long dy = static_cast<long>(y) - 7, dx = static_cast<long>(x) - 7;
      float want = 0.0f;
      if (std::abs(dy) <= 2 && std::abs(dx) <= 4) want = kh[static_cast<std::size_t>(dy + 2)] * kw[static_cast<std::size_t>(dx + 4)];
      EXPECT_NEAR(out.at(0, 0, y, x), want, 1e-7f) << y << "," << x;
      total += out.at(0, 0, y, x);
    }
  }
  EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(Blur, ImageSmallerThanKernelIsConfigError) {
  EXPECT_THROW((void)apply_gaussian_blur(Tensor4({1, 1, 4, 12}), 1.0), ConfigError);
  EXPECT_THROW((void)apply_gaussian_blur(Tensor4({1, 1, 12, 8}), 1.0), ConfigError);
}

TEST(Contrast, Examples) {
  const Tensor4 two({1, 1, 1, 2}, std::vector<float>{0.0f, 1.0f});
  const Tensor4 half = apply_contrast(two, 0.5);
  EXPECT_FLOAT_EQ(half.data()[0], 0.25f);
  EXPECT_FLOAT_EQ(half.data()[1], 0.75f);
  const Tensor4 img = random_image({1, 1, 6, 6}, 4);
  EXPECT_EQ(apply_contrast(img, 1.0), img);
  double mean = 0.0;
  for (float v : img.data()) mean += v;
  mean /= 36.0;
  const Tensor4 flat = apply_contrast(img, 0.0);
  for (float v : flat.data()) EXPECT_NEAR(v, mean, 1e-6);
}

TEST(Contrast, RgbUsesLuminanceMean) {
  Tensor4 img({1, 3, 1, 1}, std::vector<float>{1.0f, 0.0f, 0.0f});
  const Tensor4 out = apply_contrast(img, 0.0);
  for (float v : out.data()) EXPECT_NEAR(v, 0.299, 1e-3);
}

TEST(InputFaults, PreserveShapeAndRange) {
  const CorruptionParams params;
  const Tensor4 img = random_image({1, 1, 28, 28}, 5);
  for (FaultClass c : {FaultClass::noise, FaultClass::blur, FaultClass::contrast}) {
    for (Magnitude m : {Magnitude::low, Magnitude::med, Magnitude::high}) {
      FaultSpec s;
      s.cls = c;
      s.magnitude = m;
      s.seed = 9;
      const Tensor4 out = apply_input_fault(img, s, params);
      EXPECT_EQ(out.shape(), img.shape());
      for (float v : out.data()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
      }
    }
  }
}

TEST(WeightFault, InvolutionAndSingleScalar) {
  Network net = small_net(1);
  const Network pristine = net;
  FaultSpec s;
  s.cls = FaultClass::memory;
  s.target = MemoryTarget::weight;
  s.layer = 1;
  s.coord = {2, 3, 1, 0};
  s.bit = 30;
  const WeightPatch patch = inject_weight_fault(net, s);
  patch.apply(net);
  std::size_t diff = 0;
  for (std::size_t l = 0; l < net.conv_count(); ++l) {
    const std::span<const float> a = net.conv(l).weight.data(), b = pristine.conv(l).weight.data();
    for (std::size_t i = 0; i < a.size(); ++i) diff += float_bits(a[i]) != float_bits(b[i]);
  }
  EXPECT_EQ(diff, 1u);
  patch.apply(net);
  EXPECT_TRUE(bitwise_equal(net, pristine));
  {
    ScopedWeightFault guard(net, patch);
    EXPECT_FALSE(bitwise_equal(net, pristine));
  }
  EXPECT_EQ(network_hash(net), network_hash(pristine));
}

TEST(WeightFault, OutOfRangeCoordinate) {
  const Network net = small_net(2);
  FaultSpec s;
  s.cls = FaultClass::memory;
  s.target = MemoryTarget::weight;
  s.layer = 0;
  s.coord = {4, 0, 0, 0};
  EXPECT_THROW((void)inject_weight_fault(net, s), ConfigError);
  s.coord = {0, 0, 0, 0};
  s.layer = 2;
  EXPECT_THROW((void)inject_weight_fault(net, s), ConfigError);
  s.layer = 0;
  s.bit = 32;
  EXPECT_THROW((void)inject_weight_fault(net, s), ConfigError);
}

TEST(WeightFault, HighExponentBitBlowsUpActivations) {
  Network net = small_net(3);
  net.conv(0).weight.at(0, 0, 1, 1) = 0.5f;
  FaultSpec s;
  s.cls = FaultClass::memory;
  s.target = MemoryTarget::weight;
  s.layer = 0;
  s.coord = {0, 0, 1, 1};
  s.bit = 30;
  const Tensor4 img({1, 1, 10, 10}, 0.5f);
  float peak = 0.0f;
  const ConvHook probe = [&](std::size_t l, Tensor4& t) {
    if (l == 0) {
      for (float v : t.data()) peak = std::max(peak, std::abs(v));
    }
  };
  ScopedWeightFault guard(net, inject_weight_fault(net, s));
  (void)forward(net, img, std::span<const ConvHook>(&probe, 1));
  EXPECT_GT(peak, 1e30f);
}

TEST(NeuronFault, FlipsOneElementBeforeMonitor) {
  const Network net = small_net(4);
  const Tensor4 img = random_image({1, 1, 10, 10}, 6);
  FaultSpec s;
  s.cls = FaultClass::memory;
  s.target = MemoryTarget::neuron;
  s.layer = 1;
  s.coord = {0, 2, 3, 4};
  s.bit = 30;
  Tensor4 clean_out, faulty_out;
  const ConvHook grab_clean = [&](std::size_t l, Tensor4& t) {
    if (l == 1) clean_out = t;
  };
  (void)forward(net, img, std::span<const ConvHook>(&grab_clean, 1));
  const std::array<ConvHook, 2> hooks{inject_neuron_fault(net, s), [&](std::size_t l, Tensor4& t) {
                                        if (l == 1) faulty_out = t;
                                      }};
  (void)forward(net, img, hooks);
  std::size_t diff = 0;
  for (std::size_t i = 0; i < clean_out.size(); ++i) {
    diff += float_bits(clean_out.data()[i]) != float_bits(faulty_out.data()[i]);
  }
  EXPECT_EQ(diff, 1u);
  EXPECT_EQ(float_bits(faulty_out.at(0, 2, 3, 4)), float_bits(clean_out.at(0, 2, 3, 4)) ^ (1u << 30));
}

TEST(NeuronFault, PositiveActivationBit30IsInfAtMonitor) {
  const Network net = small_net(5);
  const Tensor4 img = random_image({1, 1, 10, 10}, 7);
  float original = 0.0f;
  const ConvHook set = [&](std::size_t l, Tensor4& t) {
    if (l == 0) {
      original = t.at(0, 1, 2, 2);
      t.at(0, 1, 2, 2) = 1.25f;
    }
  };
  FaultSpec s;
  s.cls = FaultClass::memory;
  s.target = MemoryTarget::neuron;
  s.layer = 0;
  s.coord = {0, 1, 2, 2};
  s.bit = 30;
  QuantileMonitor mon(net.conv_count());
  mon.reset(1);
  const std::array<ConvHook, 3> hooks{set, inject_neuron_fault(net, s), mon.hook()};
  (void)forward(net, img, hooks);
  (void)original;
  EXPECT_TRUE(mon.due(0));
}

TEST(NeuronFault, DoubleFlipRestoresLogits) {
  const Network net = small_net(6);
  const Tensor4 img = random_image({1, 1, 10, 10}, 8);
  FaultSpec s;
  s.cls = FaultClass::memory;
  s.target = MemoryTarget::neuron;
  s.layer = 0;
  s.coord = {0, 3, 9, 9};
  s.bit = 27;
  const ConvHook f = inject_neuron_fault(net, s);
  const std::array<ConvHook, 2> twice{f, f};
  EXPECT_TRUE(bitwise_equal(forward(net, img, twice).data(), forward(net, img).data()));
}

TEST(NeuronFault, MantissaLsbIsMasked) {
  const Network net = small_net(7);
  const Tensor4 img = random_image({1, 1, 10, 10}, 9);
  FaultSpec s;
  s.cls = FaultClass::memory;
  s.target = MemoryTarget::neuron;
  s.layer = 0;
  s.coord = {0, 0, 5, 5};
  s.bit = 0;
  const ConvHook f = inject_neuron_fault(net, s);
  EXPECT_EQ(top1(forward(net, img, std::span<const ConvHook>(&f, 1)).data()), top1(forward(net, img).data()));
  s.coord = {0, 4, 0, 0};
  EXPECT_THROW((void)inject_neuron_fault(net, s), ConfigError);
}

TEST(Sampling, RespectsConfigAndSeed) {
  const Network net = small_net(8);
  FaultSamplingConfig cfg;
  cfg.classes = {FaultClass::noise};
  cfg.magnitudes = {Magnitude::low};
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const FaultSpec s = sample_fault_spec(cfg, net, rng);
    EXPECT_EQ(s.cls, FaultClass::noise);
    EXPECT_EQ(s.magnitude, Magnitude::low);
  }
  FaultSamplingConfig all;
  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_fault_spec(all, net, a), sample_fault_spec(all, net, b));
  cfg.classes.clear();
  EXPECT_THROW((void)sample_fault_spec(cfg, net, rng), ConfigError);
}

TEST(Sampling, AcceleratedBitsUniform) {
  const Network net = small_net(9);
  FaultSamplingConfig cfg;
  cfg.classes = {FaultClass::memory};
  cfg.accelerated = true;
  std::mt19937_64 rng(3);
  std::array<std::size_t, 3> counts{};
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const FaultSpec s = sample_fault_spec(cfg, net, rng);
    ASSERT_TRUE(s.accelerated);
    ASSERT_GE(s.bit, 28);
    ASSERT_LE(s.bit, 30);
    ++counts[static_cast<std::size_t>(s.bit - 28)];
    // every sampled coordinate must be injectable
    if (i < 2000) {
      if (s.target == MemoryTarget::weight) {
        EXPECT_NO_THROW((void)inject_weight_fault(net, s));
      } else {
        EXPECT_NO_THROW((void)inject_neuron_fault(net, s));
      }
    }
  }
  for (auto c : counts) EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 3.0, 0.02 / 3.0);
}
