#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "qsdc/tensor.hpp"

namespace qsdc {

struct Conv2d {
  Tensor4 weight;  // (out_ch, in_ch, kh, kw)
  std::vector<float> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  [[nodiscard]] std::size_t out_channels() const { return weight.n(); }
  [[nodiscard]] std::size_t in_channels() const { return weight.c(); }
};

struct Relu {};

struct MaxPool2d {
  std::size_t window = 2;
  std::size_t stride = 2;
};

// Consumes the input as (n, c*h*w) and produces (n, out, 1, 1).
struct Linear {
  std::size_t out_features = 0;
  std::size_t in_features = 0;
  std::vector<float> weight;  // row-major (out, in)
  std::vector<float> bias;
};

using Layer = std::variant<Conv2d, Relu, MaxPool2d, Linear>;

enum class LayerKind : unsigned { conv2d = 1, relu = 2, maxpool2d = 3, linear = 4 };

[[nodiscard]] LayerKind kind_of(const Layer& layer);

// floor((in + 2*padding - k)/stride) + 1, or nullopt when not positive.
[[nodiscard]] std::optional<std::size_t> conv_out_extent(std::size_t in, std::size_t k,
                                                         std::size_t stride, std::size_t padding);

// Output shape of `layer` applied to `in`; throws ConfigError when incompatible.
[[nodiscard]] Shape4 output_shape(const Layer& layer, const Shape4& in);

// Zero padding. Each output element accumulates from 0 over (in_ch, kh, kw)
// in that order, padded taps included, then adds the bias. The order is part
// of the contract.
[[nodiscard]] Tensor4 conv2d(const Tensor4& input, const Conv2d& spec);

// max(0, x); NaN propagates.
[[nodiscard]] Tensor4 relu(const Tensor4& input);
void relu_inplace(Tensor4& t);

// Window maximum; a NaN anywhere in the window yields NaN.
[[nodiscard]] Tensor4 maxpool2d(const Tensor4& input, std::size_t window, std::size_t stride);

// y = W x + b with x accumulated in input order, bias added last.
[[nodiscard]] Tensor4 linear(const Tensor4& input, const Linear& spec);

[[nodiscard]] Tensor4 apply_layer(const Tensor4& input, const Layer& layer);

/// Index of the largest logit, lowest index on ties. Returns nullopt if any
/// logit is NaN (the caller treats that as a DUE).
[[nodiscard]] std::optional<std::size_t> top1(std::span<const float> logits);

}  // namespace qsdc
