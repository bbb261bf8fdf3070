#pragma once

// Brute-force reference implementations. They favour the most literal
// reading of each definition over speed.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "qsdc/detector.hpp"
#include "qsdc/layers.hpp"
#include "qsdc/monitor.hpp"
#include "qsdc/tensor.hpp"

namespace oracle {

using qsdc::Shape4;
using qsdc::Tensor4;

inline Tensor4 random_tensor(Shape4 s, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  Tensor4 t(s);
  for (float& v : t.data()) v = d(rng);
  return t;
}

inline Tensor4 conv2d(const Tensor4& x, const qsdc::Conv2d& k) {
  const std::size_t kh = k.weight.h(), kw = k.weight.w(), s = k.stride, p = k.padding;
  const std::size_t oh = (x.h() + 2 * p - kh) / s + 1;
  const std::size_t ow = (x.w() + 2 * p - kw) / s + 1;
  Tensor4 y({x.n(), k.weight.n(), oh, ow});
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t oc = 0; oc < k.weight.n(); ++oc) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          float acc = 0.0f;
          for (std::size_t ic = 0; ic < x.c(); ++ic) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long iy = static_cast<long>(oy * s + ky) - static_cast<long>(p);
                const long ix = static_cast<long>(ox * s + kx) - static_cast<long>(p);
                float v = 0.0f;
                if (iy >= 0 && ix >= 0 && iy < static_cast<long>(x.h()) && ix < static_cast<long>(x.w())) {
                  v = x.at(n, ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                }
                acc += k.weight.at(oc, ic, ky, kx) * v;
              }
            }
          }
          y.at(n, oc, oy, ox) = acc + k.bias[oc];
        }
      }
    }
  }
  return y;
}

inline Tensor4 maxpool2d(const Tensor4& x, std::size_t window, std::size_t stride) {
  const std::size_t oh = (x.h() - window) / stride + 1, ow = (x.w() - window) / stride + 1;
  Tensor4 y({x.n(), x.c(), oh, ow});
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          float m = -std::numeric_limits<float>::infinity();
          bool nan = false;
          for (std::size_t dy = 0; dy < window; ++dy) {
            for (std::size_t dx = 0; dx < window; ++dx) {
              const float v = x.at(n, c, oy * stride + dy, ox * stride + dx);
              if (std::isnan(v)) nan = true;
              if (v > m) m = v;
            }
          }
          y.at(n, c, oy, ox) = nan ? std::numeric_limits<float>::quiet_NaN() : m;
        }
      }
    }
  }
  return y;
}

inline Tensor4 linear(const Tensor4& x, const qsdc::Linear& l) {
  const std::size_t in = x.c() * x.h() * x.w();
  Tensor4 y({x.n(), l.out_features, 1, 1});
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t o = 0; o < l.out_features; ++o) {
      float acc = 0.0f;
      for (std::size_t i = 0; i < in; ++i) acc += l.weight[o * in + i] * x.data()[n * in + i];
      y.at(n, o, 0, 0) = acc + l.bias[o];
    }
  }
  return y;
}

inline float feature_sum(const Tensor4& t, std::size_t n, std::size_t c) {
  float acc = 0.0f;
  for (std::size_t y = 0; y < t.h(); ++y) {
    for (std::size_t x = 0; x < t.w(); ++x) acc += t.at(n, c, y, x);
  }
  return acc;
}

// Type-7 quantile: position (c-1)*p/100 between order statistics.
inline float quantile(std::vector<float> v, int percent) {
  std::sort(v.begin(), v.end());
  const std::size_t k = (v.size() - 1) * static_cast<std::size_t>(percent);
  const std::size_t lo = k / 100;
  const double frac = static_cast<double>(k % 100) / 100.0;
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return static_cast<float>(static_cast<double>(v[lo]) + frac * (static_cast<double>(v[hi]) - static_cast<double>(v[lo])));
}

struct RootSplit {
  bool exists = false;
  std::size_t feature = 0;
  double lo = 0.0;  // threshold lies in [lo, hi)
  double hi = 0.0;
  double gain = 0.0;
};

// Weighted Gini decrease of a partition, from scratch.
inline double split_gain(const qsdc::LabeledDataset& d, const std::vector<double>& w, std::size_t f, double thr) {
  const std::size_t k = d.num_classes();
  std::vector<double> all(k, 0.0), left(k, 0.0), right(k, 0.0);
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const auto c = static_cast<std::size_t>(d.label(i));
    all[c] += w[c];
    (d.value(i, f) <= thr ? left : right)[c] += w[c];
  }
  auto mass = [](const std::vector<double>& m) { return std::accumulate(m.begin(), m.end(), 0.0); };
  auto gini = [&](const std::vector<double>& m) {
    double s = 0.0;
    for (double x : m) s += (x / mass(m)) * (x / mass(m));
    return 1.0 - s;
  };
  return mass(all) * gini(all) - mass(left) * gini(left) - mass(right) * gini(right);
}

// Exhaustive best root split: largest decrease; near-ties (within 1e-9 of
// the root mass) go to the lowest feature, then the lowest threshold.
inline RootSplit best_root_split(const qsdc::LabeledDataset& d) {
  std::vector<double> counts(d.num_classes(), 0.0);
  for (int l : d.labels()) counts[static_cast<std::size_t>(l)] += 1.0;
  std::size_t present = 0;
  for (double c : counts) present += c > 0;
  std::vector<double> w(d.num_classes(), 0.0);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) w[c] = static_cast<double>(d.rows()) / (static_cast<double>(present) * counts[c]);
  }
  RootSplit best;
  if (present < 2) return best;
  std::vector<RootSplit> all;
  for (std::size_t f = 0; f < d.cols(); ++f) {
    std::vector<double> vals;
    for (std::size_t i = 0; i < d.rows(); ++i) vals.push_back(d.value(i, f));
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t j = 0; j + 1 < vals.size(); ++j) {
      all.push_back({true, f, vals[j], vals[j + 1], split_gain(d, w, f, vals[j])});
    }
  }
  if (all.empty()) return best;
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& s : all) top = std::max(top, s.gain);
  const double tol = 1e-9 * static_cast<double>(d.rows());
  for (const auto& s : all) {
    if (s.gain >= top - tol) return s;  // `all` is in (feature, threshold) order
  }
  return best;
}

}  // namespace oracle
