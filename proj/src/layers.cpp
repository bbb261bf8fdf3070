#include "qsdc/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "qsdc/errors.hpp"

namespace qsdc {

LayerKind kind_of(const Layer& layer) {
  struct Visitor {
    LayerKind operator()(const Conv2d&) const { return LayerKind::conv2d; }
    LayerKind operator()(const Relu&) const { return LayerKind::relu; }
    LayerKind operator()(const MaxPool2d&) const { return LayerKind::maxpool2d; }
    LayerKind operator()(const Linear&) const { return LayerKind::linear; }
  };
  return std::visit(Visitor{}, layer);
}

std::optional<std::size_t> conv_out_extent(std::size_t in, std::size_t k, std::size_t stride,
                                           std::size_t padding) {
  if (stride == 0 || k == 0) return std::nullopt;
  if (in + 2 * padding < k) return std::nullopt;
  return (in + 2 * padding - k) / stride + 1;
}

namespace {

void validate_conv(const Shape4& in, const Conv2d& spec) {
  const Shape4& ws = spec.weight.shape();
  if (spec.stride == 0) throw ConfigError("conv2d stride must be >= 1");
  if (ws.c != in.c) {
    throw ConfigError("conv2d expects " + std::to_string(ws.c) + " input channels, got " +
                      std::to_string(in.c));
  }
  if (spec.bias.size() != ws.n) throw ConfigError("conv2d bias length does not match out channels");
}

}  // namespace

Shape4 output_shape(const Layer& layer, const Shape4& in) {
  switch (kind_of(layer)) {
    case LayerKind::conv2d: {
      const auto& spec = std::get<Conv2d>(layer);
      validate_conv(in, spec);
      auto oh = conv_out_extent(in.h, spec.weight.h(), spec.stride, spec.padding);
      auto ow = conv_out_extent(in.w, spec.weight.w(), spec.stride, spec.padding);
      if (!oh || !ow) throw ConfigError("conv2d kernel larger than padded input");
      return {in.n, spec.out_channels(), *oh, *ow};
    }
    case LayerKind::relu:
      return in;
    case LayerKind::maxpool2d: {
      const auto& spec = std::get<MaxPool2d>(layer);
      if (spec.window == 0 || spec.stride == 0) throw ConfigError("maxpool2d window/stride must be positive");
      auto oh = conv_out_extent(in.h, spec.window, spec.stride, 0);
      auto ow = conv_out_extent(in.w, spec.window, spec.stride, 0);
      if (!oh || !ow) throw ConfigError("maxpool2d window larger than input");
      return {in.n, in.c, *oh, *ow};
    }
    case LayerKind::linear: {
      const auto& spec = std::get<Linear>(layer);
      if (spec.in_features != in.c * in.h * in.w) {
        throw ConfigError("linear expects " + std::to_string(spec.in_features) + " inputs, got " +
                          std::to_string(in.c * in.h * in.w));
      }
      if (spec.weight.size() != spec.out_features * spec.in_features ||
          spec.bias.size() != spec.out_features) {
        throw ConfigError("linear weight/bias size mismatch");
      }
      return {in.n, spec.out_features, 1, 1};
    }
  }
  throw ConfigError("unknown layer kind");
}

Tensor4 conv2d(const Tensor4& input, const Conv2d& spec) {
  const Shape4 os = output_shape(spec, input.shape());
  const std::size_t kh = spec.weight.h();
  const std::size_t kw = spec.weight.w();
  const std::size_t in_c = input.c();
  const std::size_t pad = spec.padding;
  const std::size_t stride = spec.stride;
  const std::size_t ph = input.h() + 2 * pad;
  const std::size_t pw = input.w() + 2 * pad;
  Tensor4 out(os);

  // Zero-padded copy of one sample, with kw slack so the widened rows below
  // never read past the end.
  std::vector<float> padded(in_c * ph * pw + kw, 0.0f);
  // Accumulator over oh rows of the padded width; columns >= ow are scratch.
  std::vector<float> acc(os.h * pw);
  const std::size_t span = stride == 1 ? os.h * pw : 0;

  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t ic = 0; ic < in_c; ++ic) {
      for (std::size_t y = 0; y < input.h(); ++y) {
        const float* src = input.data().data() + input.offset(n, ic, y, 0);
        std::copy_n(src, input.w(), padded.data() + ic * ph * pw + (y + pad) * pw + pad);
      }
    }
    for (std::size_t oc = 0; oc < os.c; ++oc) {
      std::fill(acc.begin(), acc.end(), 0.0f);
      float* a = acc.data();
      // each output element accumulates its terms in (ic, ky, kx) order
      for (std::size_t ic = 0; ic < in_c; ++ic) {
        const float* plane = padded.data() + ic * ph * pw;
        const float* ker = spec.weight.data().data() + spec.weight.offset(oc, ic, 0, 0);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const float k = ker[ky * kw + kx];
            if (stride == 1) {
              const float* s = plane + ky * pw + kx;
              for (std::size_t j = 0; j < span; ++j) a[j] += k * s[j];
            } else {
              for (std::size_t oy = 0; oy < os.h; ++oy) {
                const float* s = plane + (oy * stride + ky) * pw + kx;
                float* r = a + oy * pw;
                for (std::size_t ox = 0; ox < os.w; ++ox) r[ox] += k * s[ox * stride];
              }
            }
          }
        }
      }
      const float b = spec.bias[oc];
      float* o = out.data().data() + out.offset(n, oc, 0, 0);
      for (std::size_t oy = 0; oy < os.h; ++oy) {
        for (std::size_t ox = 0; ox < os.w; ++ox) o[oy * os.w + ox] = a[oy * pw + ox] + b;
      }
    }
  }
  return out;
}

void relu_inplace(Tensor4& t) {
  for (float& v : t.data()) {
    // NaN compares false and is kept
    if (v < 0.0f) v = 0.0f;
  }
}

Tensor4 relu(const Tensor4& input) {
  Tensor4 out = input;
  relu_inplace(out);
  return out;
}

Tensor4 maxpool2d(const Tensor4& input, std::size_t window, std::size_t stride) {
  const Shape4 os = output_shape(MaxPool2d{window, stride}, input.shape());
  Tensor4 out(os);
  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t c = 0; c < os.c; ++c) {
      for (std::size_t oy = 0; oy < os.h; ++oy) {
        for (std::size_t ox = 0; ox < os.w; ++ox) {
          float m = input(n, c, oy * stride, ox * stride);
          for (std::size_t ky = 0; ky < window && !std::isnan(m); ++ky) {
            for (std::size_t kx = 0; kx < window; ++kx) {
              const float v = input(n, c, oy * stride + ky, ox * stride + kx);
              if (std::isnan(v)) {
                m = v;
                break;
              }
              if (v > m) m = v;
            }
          }
          out(n, c, oy, ox) = m;
        }
      }
    }
  }
  return out;
}

Tensor4 linear(const Tensor4& input, const Linear& spec) {
  const Shape4 os = output_shape(spec, input.shape());
  Tensor4 out(os);
  const std::size_t in_f = spec.in_features;
  for (std::size_t n = 0; n < os.n; ++n) {
    const float* x = input.data().data() + n * in_f;
    for (std::size_t o = 0; o < spec.out_features; ++o) {
      const float* wr = spec.weight.data() + o * in_f;
      float acc = 0.0f;
      for (std::size_t i = 0; i < in_f; ++i) acc += wr[i] * x[i];
      out(n, o, 0, 0) = acc + spec.bias[o];
    }
  }
  return out;
}

Tensor4 apply_layer(const Tensor4& input, const Layer& layer) {
  switch (kind_of(layer)) {
    case LayerKind::conv2d:
      return conv2d(input, std::get<Conv2d>(layer));
    case LayerKind::relu:
      return relu(input);
    case LayerKind::maxpool2d: {
      const auto& p = std::get<MaxPool2d>(layer);
      return maxpool2d(input, p.window, p.stride);
    }
    case LayerKind::linear:
      return linear(input, std::get<Linear>(layer));
  }
  throw ConfigError("unknown layer kind");
}

std::optional<std::size_t> top1(std::span<const float> logits) {
  if (logits.empty()) throw ConfigError("top1 needs at least one class");
  std::size_t best = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (std::isnan(logits[i])) return std::nullopt;
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

}  // namespace qsdc
