#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <sstream>

#include "qsdc/errors.hpp"
#include "qsdc/layers.hpp"
#include "qsdc/network.hpp"
#include "qsdc/tensor.hpp"
#include "support/oracles.hpp"

using namespace qsdc;

namespace {

const float kNaN = std::numeric_limits<float>::quiet_NaN();

Conv2d make_conv(std::size_t out, std::size_t in, std::size_t kh, std::size_t kw, std::size_t stride,
                 std::size_t pad, std::mt19937_64& rng) {
  Conv2d c;
  c.weight = oracle::random_tensor({out, in, kh, kw}, rng);
  c.bias.resize(out);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  for (float& b : c.bias) b = d(rng);
  c.stride = stride;
  c.padding = pad;
  return c;
}

const char* kSmallNet =
    "input 2 9 9\n"
    "classes 3\n"
    "# comment line\n"
    "conv2d 4 3 1 1\n"
    "relu\n"
    "conv2d 5 3 2 0\n"
    "relu\n"
    "maxpool2d 2 1\n"
    "linear 3\n";

}  // namespace

TEST(Tensor, ShapeAndLengthInvariants) {
  Tensor4 t({2, 3, 4, 5}, 1.5f);
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(t.at(1, 2, 3, 4), 1.5f);
  EXPECT_THROW(Tensor4({1, 1, 2, 2}, std::vector<float>(3)), ConfigError);
}

TEST(Tensor, IndexingIsBoundsChecked) {
  Tensor4 t({1, 2, 3, 3});
  EXPECT_THROW((void)t.at(1, 0, 0, 0), std::out_of_range);
  EXPECT_THROW((void)t.at(0, 2, 0, 0), std::out_of_range);
  EXPECT_THROW((void)t.at(0, 0, 3, 0), std::out_of_range);
  EXPECT_THROW((void)t.at(0, 0, 0, 3), std::out_of_range);
}

TEST(Tensor, SliceCopiesSamples) {
  std::mt19937_64 rng(1);
  const Tensor4 t = oracle::random_tensor({4, 2, 3, 3}, rng);
  const Tensor4 s = t.slice(1, 2);
  EXPECT_EQ(s.shape(), (Shape4{2, 2, 3, 3}));
  EXPECT_EQ(s.at(1, 1, 2, 2), t.at(2, 1, 2, 2));
  EXPECT_THROW((void)t.slice(3, 2), std::out_of_range);
}

TEST(Tensor, BitwiseEqualSeesSignedZeroAndNaN) {
  const std::vector<float> a{0.0f, kNaN}, b{-0.0f, kNaN}, c{0.0f, kNaN};
  EXPECT_FALSE(bitwise_equal(a, b));
  EXPECT_TRUE(bitwise_equal(a, c));
}

TEST(Conv2d, AllOnesKernel) {
  Conv2d c;
  c.weight = Tensor4({1, 1, 2, 2}, 1.0f);
  c.bias = {0.0f};
  const Tensor4 y = conv2d(Tensor4({1, 1, 3, 3}, 1.0f), c);
  EXPECT_EQ(y.shape(), (Shape4{1, 1, 2, 2}));
  for (float v : y.data()) EXPECT_EQ(v, 4.0f);
}

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(2);
  const Tensor4 x = oracle::random_tensor({1, 1, 3, 3}, rng);
  Conv2d c;
  c.weight = Tensor4({1, 1, 1, 1}, 1.0f);
  c.bias = {0.0f};
  EXPECT_TRUE(bitwise_equal(conv2d(x, c).data(), x.data()));
}

TEST(Conv2d, MatchesQuadrupleLoopOracle) {
  std::mt19937_64 rng(3);
  const Tensor4 x = oracle::random_tensor({2, 3, 8, 8}, rng);
  for (std::size_t pad : {0u, 1u, 2u}) {
    for (std::size_t stride : {1u, 2u, 3u}) {
      const Conv2d c = make_conv(4, 3, 3, 3, stride, pad, rng);
      const Tensor4 got = conv2d(x, c);
      const Tensor4 want = oracle::conv2d(x, c);
      ASSERT_EQ(got.shape(), want.shape());
      EXPECT_TRUE(bitwise_equal(got.data(), want.data())) << "pad " << pad << " stride " << stride;
    }
  }
}

TEST(Conv2d, RectangularKernelsMatchOracle) {
  std::mt19937_64 rng(4);
  const Tensor4 x = oracle::random_tensor({1, 2, 7, 10}, rng);
  const Conv2d c = make_conv(3, 2, 2, 5, 1, 2, rng);
  EXPECT_TRUE(bitwise_equal(conv2d(x, c).data(), oracle::conv2d(x, c).data()));
}

TEST(Conv2d, ShapeMismatchIsConfigError) {
  std::mt19937_64 rng(5);
  const Conv2d c = make_conv(2, 3, 3, 3, 1, 0, rng);
  EXPECT_THROW((void)conv2d(Tensor4({1, 2, 5, 5}), c), ConfigError);
  EXPECT_THROW((void)conv2d(Tensor4({1, 3, 2, 2}), c), ConfigError);
}

TEST(Conv2d, RepeatedCallsAreBitIdentical) {
  std::mt19937_64 rng(6);
  const Tensor4 x = oracle::random_tensor({2, 3, 9, 9}, rng);
  const Conv2d c = make_conv(5, 3, 3, 3, 1, 1, rng);
  EXPECT_TRUE(bitwise_equal(conv2d(x, c).data(), conv2d(x, c).data()));
}

TEST(ShapeAlgebra, OutputExtentFormula) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> d(1, 9);
  for (int i = 0; i < 500; ++i) {
    const std::size_t in = d(rng) + 2, k = std::min<std::size_t>(d(rng) % 5 + 1, in), s = d(rng) % 3 + 1,
                      p = d(rng) % 3;
    const auto e = conv_out_extent(in, k, s, p);
    ASSERT_TRUE(e.has_value());
    EXPECT_EQ(*e, (in + 2 * p - k) / s + 1);
    Conv2d c;
    c.weight = Tensor4({2, 1, k, k});
    c.bias = {0, 0};
    c.stride = s;
    c.padding = p;
    EXPECT_EQ(output_shape(c, {1, 1, in, in}), (Shape4{1, 2, *e, *e}));
    EXPECT_EQ(conv2d(Tensor4({1, 1, in, in}), c).shape(), (Shape4{1, 2, *e, *e}));
  }
  EXPECT_FALSE(conv_out_extent(2, 5, 1, 0).has_value());
}

TEST(Relu, ClipsNegativesKeepsNaN) {
  const Tensor4 y = relu(Tensor4({1, 1, 1, 4}, std::vector<float>{-1.0f, 0.0f, 2.0f, kNaN}));
  EXPECT_EQ(y.data()[0], 0.0f);
  EXPECT_EQ(y.data()[1], 0.0f);
  EXPECT_EQ(y.data()[2], 2.0f);
  EXPECT_TRUE(std::isnan(y.data()[3]));
  const Tensor4 z = relu(Tensor4({1, 2, 3, 3}, -4.0f));
  for (float v : z.data()) EXPECT_EQ(v, 0.0f);
}

TEST(MaxPool, Examples) {
  const Tensor4 y = maxpool2d(Tensor4({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4}), 2, 2);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(y.data()[0], 4.0f);
  const Tensor4 c = maxpool2d(Tensor4({1, 2, 6, 6}, 3.0f), 2, 2);
  EXPECT_EQ(c.shape(), (Shape4{1, 2, 3, 3}));
  for (float v : c.data()) EXPECT_EQ(v, 3.0f);
  EXPECT_THROW((void)maxpool2d(Tensor4({1, 1, 2, 2}), 3, 1), ConfigError);
}

TEST(MaxPool, NaNInWindowYieldsNaN) {
  Tensor4 x({1, 1, 4, 4}, 1.0f);
  x.at(0, 0, 3, 0) = kNaN;
  const Tensor4 y = maxpool2d(x, 2, 2);
  EXPECT_TRUE(std::isnan(y.at(0, 0, 1, 0)));
  EXPECT_EQ(y.at(0, 0, 0, 0), 1.0f);
}

TEST(MaxPool, MatchesOracle) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    const Tensor4 x = oracle::random_tensor({2, 3, 7, 6}, rng);
    const std::size_t win = 1 + i % 3, stride = 1 + i % 2;
    EXPECT_TRUE(bitwise_equal(maxpool2d(x, win, stride).data(), oracle::maxpool2d(x, win, stride).data()));
  }
}

TEST(Linear, IdentityAndBiasOnly) {
  Linear id{3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 0}};
  const Tensor4 x({1, 3, 1, 1}, std::vector<float>{0.5f, -2.0f, 7.0f});
  EXPECT_TRUE(bitwise_equal(linear(x, id).data(), x.data()));
  Linear zero{2, 3, std::vector<float>(6, 0.0f), {1.0f, 2.0f}};
  const Tensor4 y = linear(x, zero);
  EXPECT_EQ(y.data()[0], 1.0f);
  EXPECT_EQ(y.data()[1], 2.0f);
  EXPECT_THROW((void)linear(Tensor4({1, 4, 1, 1}), id), ConfigError);
}

TEST(Linear, MatchesOracle) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> d(-1, 1);
  Linear l{5, 2 * 3 * 3, {}, {}};
  for (std::size_t i = 0; i < 5 * 18; ++i) l.weight.push_back(d(rng));
  for (int i = 0; i < 5; ++i) l.bias.push_back(d(rng));
  const Tensor4 x = oracle::random_tensor({3, 2, 3, 3}, rng);
  EXPECT_TRUE(bitwise_equal(linear(x, l).data(), oracle::linear(x, l).data()));
}

TEST(Top1, Examples) {
  EXPECT_EQ(top1(std::vector<float>{0.1f, 0.9f, 0.3f}), 1u);
  EXPECT_EQ(top1(std::vector<float>{0.5f, 0.5f}), 0u);
  EXPECT_FALSE(top1(std::vector<float>{kNaN, 1.0f}).has_value());
  EXPECT_THROW((void)top1(std::vector<float>{}), ConfigError);
}

TEST(Network, ParseTopologyAndValidate) {
  const Network net = parse_topology(std::string(kSmallNet), 3);
  EXPECT_EQ(net.conv_count(), 2u);
  EXPECT_EQ(net.classes, 3u);
  const auto shapes = net.conv_output_shapes(2);
  EXPECT_EQ(shapes[0], (Shape4{2, 4, 9, 9}));
  EXPECT_EQ(shapes[1], (Shape4{2, 5, 4, 4}));
  EXPECT_THROW((void)parse_topology(std::string("input 1 4 4\nclasses 2\nconv2d 2 7 1 0\nlinear 2\n"), 1), ConfigError);
  EXPECT_THROW((void)parse_topology(std::string("input 1 4 4\nclasses 2\nbogus 1\n"), 1), ConfigError);
}

TEST(Network, HookCallsInLayerOrder) {
  const Network net = parse_topology(std::string(kSmallNet), 4);
  std::mt19937_64 rng(10);
  const Tensor4 x = oracle::random_tensor({2, 2, 9, 9}, rng, 0, 1);
  std::vector<std::size_t> calls;
  const ConvHook count = [&](std::size_t l, Tensor4&) { calls.push_back(l); };
  const Tensor4 hooked = forward(net, x, std::span<const ConvHook>(&count, 1));
  EXPECT_EQ(calls, (std::vector<std::size_t>{0, 1}));
  EXPECT_TRUE(bitwise_equal(hooked.data(), forward(net, x).data()));
}

TEST(Network, ForwardEqualsLayerComposition) {
  const Network net = parse_topology(std::string(kSmallNet), 5);
  std::mt19937_64 rng(11);
  const Tensor4 x = oracle::random_tensor({3, 2, 9, 9}, rng, 0, 1);
  Tensor4 t = x;
  for (const auto& layer : net.layers) {
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      t = oracle::conv2d(t, *c);
    } else if (const auto* p = std::get_if<MaxPool2d>(&layer)) {
      t = oracle::maxpool2d(t, p->window, p->stride);
    } else if (const auto* l = std::get_if<Linear>(&layer)) {
      t = oracle::linear(t, *l);
    } else {
      for (float& v : t.data()) v = v > 0.0f ? v : (std::isnan(v) ? v : 0.0f);
    }
  }
  EXPECT_TRUE(bitwise_equal(forward(net, x).data(), t.data()));
}

TEST(Network, HookCorruptionReachesLaterHooksAndOutput) {
  const Network net = parse_topology(std::string(kSmallNet), 6);
  const Tensor4 x({1, 2, 9, 9}, 0.5f);
  float seen = 0.0f;
  const std::array<ConvHook, 2> hooks{
      [](std::size_t l, Tensor4& t) {
        if (l == 0) t.data()[0] = 1e6f;
      },
      [&](std::size_t l, Tensor4& t) {
        if (l == 0) seen = t.data()[0];
      }};
  const Tensor4 faulty = forward(net, x, hooks);
  EXPECT_EQ(seen, 1e6f);
  EXPECT_FALSE(bitwise_equal(faulty.data(), forward(net, x).data()));
}

TEST(Network, ForwardFromMatchesFullForward) {
  const Network net = parse_topology(std::string(kSmallNet), 7);
  std::mt19937_64 rng(12);
  const Tensor4 x = oracle::random_tensor({1, 2, 9, 9}, rng, 0, 1);
  std::vector<Tensor4> inputs;
  const Tensor4 full = forward_recording(net, x, {}, inputs);
  ASSERT_EQ(inputs.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) EXPECT_TRUE(bitwise_equal(forward_from(net, l, inputs[l]).data(), full.data()));
  EXPECT_THROW((void)forward_from(net, 2, inputs[0]), ConfigError);
}

TEST(NetworkFormat, RoundTripIsBitwiseEqual) {
  const Network net = parse_topology(std::string(kSmallNet), 8);
  std::stringstream ss;
  write_network(net, ss);
  const Network back = read_network(ss);
  EXPECT_TRUE(bitwise_equal(net, back));
  EXPECT_EQ(network_hash(net), network_hash(back));
}

TEST(NetworkFormat, DistinctParseErrors) {
  const Network net = parse_topology(std::string(kSmallNet), 9);
  std::stringstream ss;
  write_network(net, ss);
  const std::string bytes = ss.str();

  std::string bad = bytes;
  bad.replace(0, 4, "XXXX");
  std::istringstream in_magic(bad);
  EXPECT_THROW((void)read_network(in_magic), BadMagicError);

  std::string ver = bytes;
  ver[4] = 9;
  std::istringstream in_ver(ver);
  EXPECT_THROW((void)read_network(in_ver), VersionMismatchError);

  std::istringstream in_trunc(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW((void)read_network(in_trunc), TruncatedError);
}

TEST(NetworkFormat, ScalarOneIsLittleEndianBinary32) {
  Network net;
  net.input = {1, 1, 1, 1};
  net.classes = 1;
  Conv2d c;
  c.weight = Tensor4({1, 1, 1, 1}, 1.0f);
  c.bias = {0.0f};
  net.layers = {c, Linear{1, 1, {2.0f}, {0.0f}}};
  std::stringstream ss;
  write_network(net, ss);
  const std::string bytes = ss.str();
  const char one[4] = {0x00, 0x00, static_cast<char>(0x80), 0x3F};
  EXPECT_NE(bytes.find(std::string(one, 4)), std::string::npos);
  EXPECT_EQ(bytes.substr(0, 4), "QSNT");
}

TEST(NetworkHash, ChangesWithAnyWeightBit) {
  Network net = parse_topology(std::string(kSmallNet), 10);
  const auto h = network_hash(net);
  float& w = net.conv(1).weight.data()[7];
  std::uint32_t bits;
  std::memcpy(&bits, &w, 4);
  bits ^= 1u;
  std::memcpy(&w, &bits, 4);
  EXPECT_NE(network_hash(net), h);
}
