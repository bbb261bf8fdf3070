#include "qsdc/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "qsdc/errors.hpp"

namespace qsdc {

namespace {

// Gradient buffers mirror the parameter layout of each layer.
struct LayerGrad {
  std::vector<float> weight;
  std::vector<float> bias;
};

// Eight interleaved partial sums so the reduction vectorizes; training does
// not need a fixed summation order.
float dot(const float* a, const float* b, std::size_t len) {
  float part[8] = {};
  std::size_t j = 0;
  for (; j + 8 <= len; j += 8) {
    for (std::size_t k = 0; k < 8; ++k) part[k] += a[j + k] * b[j + k];
  }
  float total = 0.0f;
  for (; j < len; ++j) total += a[j] * b[j];
  for (float p : part) total += p;
  return total;
}

// dx may be null when the input gradient is not needed (first layer).
void conv_backward(const Conv2d& spec, const Tensor4& x, const Tensor4& dy, Tensor4* dx, LayerGrad& g) {
  const std::size_t kh = spec.weight.h();
  const std::size_t kw = spec.weight.w();
  const std::size_t pad = spec.padding;
  const std::size_t stride = spec.stride;
  const std::size_t in_c = x.c();
  const std::size_t ph = x.h() + 2 * pad;
  const std::size_t pw = x.w() + 2 * pad;
  const std::size_t oh = dy.h(), ow = dy.w();
  std::vector<float> xpad(in_c * ph * pw + kw, 0.0f);
  std::vector<float> dxpad(in_c * ph * pw + kw, 0.0f);
  // dy widened to the padded row pitch, zeros in the scratch columns
  std::vector<float> dyw(oh * pw, 0.0f);
  if (dx) *dx = Tensor4(x.shape());
  for (std::size_t n = 0; n < dy.n(); ++n) {
    for (std::size_t ic = 0; ic < in_c; ++ic) {
      for (std::size_t y = 0; y < x.h(); ++y) {
        std::copy_n(x.data().data() + x.offset(n, ic, y, 0), x.w(), xpad.data() + ic * ph * pw + (y + pad) * pw + pad);
      }
    }
    std::fill(dxpad.begin(), dxpad.end(), 0.0f);
    for (std::size_t oc = 0; oc < dy.c(); ++oc) {
      const float* d = dy.data().data() + dy.offset(n, oc, 0, 0);
      float bsum = 0.0f;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          dyw[oy * pw + ox] = d[oy * ow + ox];
          bsum += d[oy * ow + ox];
        }
      }
      g.bias[oc] += bsum;
      for (std::size_t ic = 0; ic < in_c; ++ic) {
        const float* plane = xpad.data() + ic * ph * pw;
        float* dplane = dxpad.data() + ic * ph * pw;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t widx = spec.weight.offset(oc, ic, ky, kx);
            const float wv = spec.weight.data()[widx];
            float gsum = 0.0f;
            if (stride == 1) {
              const float* s = plane + ky * pw + kx;
              float* ds = dplane + ky * pw + kx;
              gsum = dot(dyw.data(), s, oh * pw);
              if (dx) {
                for (std::size_t j = 0; j < oh * pw; ++j) ds[j] += dyw[j] * wv;
              }
            } else {
              for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                  const std::size_t at = (oy * stride + ky) * pw + ox * stride + kx;
                  gsum += dyw[oy * pw + ox] * plane[at];
                  if (dx) dplane[at] += dyw[oy * pw + ox] * wv;
                }
              }
            }
            g.weight[widx] += gsum;
          }
        }
      }
    }
    if (dx) {
      for (std::size_t ic = 0; ic < in_c; ++ic) {
        for (std::size_t y = 0; y < x.h(); ++y) {
          std::copy_n(dxpad.data() + ic * ph * pw + (y + pad) * pw + pad, x.w(), dx->data().data() + dx->offset(n, ic, y, 0));
        }
      }
    }
  }
}

void maxpool_backward(const MaxPool2d& spec, const Tensor4& x, const Tensor4& dy, Tensor4& dx) {
  dx = Tensor4(x.shape());
  for (std::size_t n = 0; n < dy.n(); ++n) {
    for (std::size_t c = 0; c < dy.c(); ++c) {
      for (std::size_t oy = 0; oy < dy.h(); ++oy) {
        for (std::size_t ox = 0; ox < dy.w(); ++ox) {
          std::size_t by = oy * spec.stride, bx = ox * spec.stride;
          for (std::size_t ky = 0; ky < spec.window; ++ky) {
            for (std::size_t kx = 0; kx < spec.window; ++kx) {
              const std::size_t yy = oy * spec.stride + ky, xx = ox * spec.stride + kx;
              if (x(n, c, yy, xx) > x(n, c, by, bx)) {
                by = yy;
                bx = xx;
              }
            }
          }
          dx(n, c, by, bx) += dy(n, c, oy, ox);
        }
      }
    }
  }
}

void linear_backward(const Linear& spec, const Tensor4& x, const Tensor4& dy, Tensor4& dx, LayerGrad& g) {
  dx = Tensor4(x.shape());
  const std::size_t in_f = spec.in_features;
  for (std::size_t n = 0; n < dy.n(); ++n) {
    const float* xr = x.data().data() + n * in_f;
    float* dxr = dx.data().data() + n * in_f;
    for (std::size_t o = 0; o < spec.out_features; ++o) {
      const float d = dy(n, o, 0, 0);
      g.bias[o] += d;
      const float* wr = spec.weight.data() + o * in_f;
      float* gw = g.weight.data() + o * in_f;
      for (std::size_t i = 0; i < in_f; ++i) {
        gw[i] += d * xr[i];
        dxr[i] += d * wr[i];
      }
    }
  }
}

std::span<float> weights_of(Layer& layer) {
  if (auto* c = std::get_if<Conv2d>(&layer)) return c->weight.data();
  if (auto* l = std::get_if<Linear>(&layer)) return l->weight;
  return {};
}

std::span<float> biases_of(Layer& layer) {
  if (auto* c = std::get_if<Conv2d>(&layer)) return c->bias;
  if (auto* l = std::get_if<Linear>(&layer)) return l->bias;
  return {};
}

Tensor4 gather(const Tensor4& images, std::span<const std::size_t> idx) {
  const std::size_t per = images.c() * images.h() * images.w();
  Tensor4 out({idx.size(), images.c(), images.h(), images.w()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

}  // namespace

void train_sgd(Network& net, const Tensor4& images, std::span<const int> labels, const TrainOptions& options,
               const EpochCallback& on_epoch) {
  if (images.n() != labels.size()) throw ConfigError("train_sgd: image/label count mismatch");
  if (images.n() == 0) throw ConfigError("train_sgd: empty training set");
  net.validate();
  const std::size_t n_layers = net.layers.size();
  std::vector<LayerGrad> grads(n_layers);
  std::vector<LayerGrad> velocity(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    grads[i].weight.resize(weights_of(net.layers[i]).size());
    grads[i].bias.resize(biases_of(net.layers[i]).size());
    velocity[i] = grads[i];
  }

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(images.n());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Tensor4> acts(n_layers + 1);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    // last epoch runs at a fifth of the base rate
    const float lr = options.learning_rate * (epoch + 1 == options.epochs && options.epochs > 1 ? 0.2f : 1.0f);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t count = std::min(options.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, count);
      acts[0] = gather(images, idx);
      for (std::size_t i = 0; i < n_layers; ++i) acts[i + 1] = apply_layer(acts[i], net.layers[i]);

      // softmax cross-entropy gradient
      const Tensor4& logits = acts[n_layers];
      Tensor4 grad(logits.shape());
      for (std::size_t n = 0; n < count; ++n) {
        float mx = logits(n, 0, 0, 0);
        for (std::size_t k = 1; k < net.classes; ++k) mx = std::max(mx, logits(n, k, 0, 0));
        double z = 0.0;
        for (std::size_t k = 0; k < net.classes; ++k) z += std::exp(static_cast<double>(logits(n, k, 0, 0) - mx));
        const auto label = static_cast<std::size_t>(labels[idx[n]]);
        for (std::size_t k = 0; k < net.classes; ++k) {
          const double p = std::exp(static_cast<double>(logits(n, k, 0, 0) - mx)) / z;
          grad(n, k, 0, 0) = static_cast<float>((p - (k == label ? 1.0 : 0.0)) / static_cast<double>(count));
          if (k == label) loss_sum -= std::log(std::max(p, 1e-30));
        }
      }

      for (auto& g : grads) {
        std::fill(g.weight.begin(), g.weight.end(), 0.0f);
        std::fill(g.bias.begin(), g.bias.end(), 0.0f);
      }
      for (std::size_t i = n_layers; i-- > 0;) {
        const Layer& layer = net.layers[i];
        Tensor4 dx;
        switch (kind_of(layer)) {
          case LayerKind::conv2d:
            conv_backward(std::get<Conv2d>(layer), acts[i], grad, i == 0 ? nullptr : &dx, grads[i]);
            break;
          case LayerKind::relu:
            dx = grad;
            for (std::size_t j = 0; j < dx.size(); ++j) {
              if (!(acts[i + 1].data()[j] > 0.0f)) dx.data()[j] = 0.0f;
            }
            break;
          case LayerKind::maxpool2d:
            maxpool_backward(std::get<MaxPool2d>(layer), acts[i], grad, dx);
            break;
          case LayerKind::linear:
            linear_backward(std::get<Linear>(layer), acts[i], grad, dx, grads[i]);
            break;
        }
        grad = std::move(dx);
      }

      for (std::size_t i = 0; i < n_layers; ++i) {
        auto w = weights_of(net.layers[i]);
        auto b = biases_of(net.layers[i]);
        for (std::size_t j = 0; j < w.size(); ++j) {
          velocity[i].weight[j] = options.momentum * velocity[i].weight[j] + grads[i].weight[j] + options.weight_decay * w[j];
          w[j] -= lr * velocity[i].weight[j];
        }
        for (std::size_t j = 0; j < b.size(); ++j) {
          velocity[i].bias[j] = options.momentum * velocity[i].bias[j] + grads[i].bias[j];
          b[j] -= lr * velocity[i].bias[j];
        }
      }
    }
    if (on_epoch) on_epoch(epoch, loss_sum / static_cast<double>(order.size()));
  }
}

double accuracy(const Network& net, const Tensor4& images, std::span<const int> labels, std::size_t batch_size) {
  if (images.n() != labels.size()) throw ConfigError("accuracy: image/label count mismatch");
  if (images.n() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < images.n(); start += batch_size) {
    const std::size_t count = std::min(batch_size, images.n() - start);
    const Tensor4 logits = forward(net, images.slice(start, count));
    for (std::size_t n = 0; n < count; ++n) {
      const auto pred = top1(logits.data().subspan(n * net.classes, net.classes));
      if (pred && static_cast<int>(*pred) == labels[start + n]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(images.n());
}

}  // namespace qsdc
