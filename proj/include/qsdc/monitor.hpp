#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qsdc/network.hpp"
#include "qsdc/tensor.hpp"

namespace qsdc {

inline constexpr std::size_t kQuantileCount = 11;
inline constexpr std::array<int, kQuantileCount> kPercentiles{0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
inline constexpr double kNormEpsilon = 1e-8;

// Spatial sums of every (sample, channel) feature map of one layer.
struct FeatureSums {
  std::size_t n = 0;
  std::size_t c = 0;
  std::vector<float> values;  // (n, c) row-major

  [[nodiscard]] std::span<const float> row(std::size_t sample) const {
    return std::span<const float>(values).subspan(sample * c, c);
  }
};

// Sum over (h, w) in row-major order, binary32 accumulation.
[[nodiscard]] FeatureSums feature_sums(const Tensor4& t);

/// Deciles of one row of feature sums by linear interpolation between order
/// statistics: position (c-1)*p/100, so q0 is the minimum and q100 the
/// maximum. A NaN anywhere makes every decile NaN.
[[nodiscard]] std::array<float, kQuantileCount> layer_quantiles(std::span<const float> sums);

// One sample's deciles for each monitored layer.
struct QuantileSet {
  std::size_t layers = 0;
  std::vector<float> values;  // layer-major: values[l * 11 + p_index]

  QuantileSet() = default;
  explicit QuantileSet(std::size_t layer_count) : layers(layer_count), values(layer_count * kQuantileCount, 0.0f) {}

  [[nodiscard]] float at(std::size_t layer, std::size_t p_index) const { return values[layer * kQuantileCount + p_index]; }
  float& at(std::size_t layer, std::size_t p_index) { return values[layer * kQuantileCount + p_index]; }

  friend bool operator==(const QuantileSet&, const QuantileSet&) = default;
};

// Fault-free envelopes per (layer, percentile).
struct QuantileBounds {
  std::size_t layers = 0;
  std::vector<float> min;  // layer-major, like QuantileSet
  std::vector<float> max;
  std::string provenance;  // names the calibration set

  [[nodiscard]] float lo(std::size_t layer, std::size_t p) const { return min[layer * kQuantileCount + p]; }
  [[nodiscard]] float hi(std::size_t layer, std::size_t p) const { return max[layer * kQuantileCount + p]; }
};

// Elementwise min/max over the sets. Throws ConfigError on an empty span or
// mismatched layer counts, DueError when a set holds a non-finite value.
[[nodiscard]] QuantileBounds extract_bounds(std::span<const QuantileSet> sets, std::string provenance = {});

/// Runs fault-free inference over `images` and extracts the bounds. Any
/// NaN/Inf during the pass aborts with DueError.
[[nodiscard]] QuantileBounds extract_bounds(const Network& net, const Tensor4& images, std::string provenance = {},
                                            std::size_t batch_size = 10);

/// tanh((a - a_max)/(|a_max| + eps)) when a >= a_min, otherwise
/// tanh((a_min - a)/(|a_min| + eps)). Positive outside [a_min, a_max].
[[nodiscard]] double f_norm(double a, double a_min, double a_max);

// --- anomaly feature layout ---
// Percentile-major: index = p_index * L + layer, i.e.
// [q(l1,p0), q(l2,p0), ..., q(lL,p0), q(l1,p10), ..., q(lL,p100)].

[[nodiscard]] constexpr std::size_t feature_index(std::size_t layer, std::size_t p_index, std::size_t layers) {
  return p_index * layers + layer;
}
[[nodiscard]] constexpr std::size_t feature_layer(std::size_t index, std::size_t layers) { return index % layers; }
[[nodiscard]] constexpr std::size_t feature_percentile_index(std::size_t index, std::size_t layers) {
  return index / layers;
}
// "q[layer=<1-based layer>][p=<percentile>]"
[[nodiscard]] std::string feature_name(std::size_t index, std::size_t layers);

/// Component = (f_norm(q, q_min, q_max) + 1) / 2, kept strictly inside
/// (0,1) by clamping to the nearest representable interior value.
[[nodiscard]] std::vector<double> anomaly_vector(const QuantileSet& q, const QuantileBounds& b);

// True iff any element is NaN or +-Inf.
[[nodiscard]] bool due_check(const Tensor4& t);
[[nodiscard]] bool due_check(const FeatureSums& s);

// Which (layer, percentile) markers a monitor computes.
struct MonitorSelection {
  std::vector<std::vector<std::size_t>> percentiles;  // per layer: p indices; empty = layer not tapped

  [[nodiscard]] static MonitorSelection full(std::size_t layers);
  [[nodiscard]] static MonitorSelection from_features(std::span<const std::size_t> feature_indices, std::size_t layers);
  [[nodiscard]] std::size_t tapped_layers() const;
};

/// Conv hook that distills each tapped layer into deciles. One instance per
/// inference stream; not shareable across threads.
class QuantileMonitor {
 public:
  explicit QuantileMonitor(std::size_t layers) : QuantileMonitor(MonitorSelection::full(layers)) {}
  explicit QuantileMonitor(MonitorSelection selection);

  // Clears per-inference state; call before every forward pass.
  void reset(std::size_t batch);
  void observe(std::size_t conv_index, const Tensor4& output);
  [[nodiscard]] ConvHook hook();

  // Untapped markers are left at 0.
  [[nodiscard]] const std::vector<QuantileSet>& quantiles() const { return quantiles_; }
  // A feature sum was non-finite, which also covers any NaN/Inf activation.
  [[nodiscard]] bool due(std::size_t sample) const { return due_[sample] != 0; }
  [[nodiscard]] bool any_due() const;

 private:
  MonitorSelection selection_;
  std::vector<QuantileSet> quantiles_;
  std::vector<char> due_;
  std::vector<float> scratch_;
};

// CSV persistence. Bounds: layer,percentile,min,max (layer 1-based).
void write_bounds_csv(const QuantileBounds& b, const std::filesystem::path& path);
[[nodiscard]] QuantileBounds read_bounds_csv(const std::filesystem::path& path);

}  // namespace qsdc
