#include "qsdc/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qsdc/csv.hpp"
#include "qsdc/errors.hpp"

namespace qsdc {

FeatureSums feature_sums(const Tensor4& t) {
  FeatureSums s;
  s.n = t.n();
  s.c = t.c();
  s.values.resize(s.n * s.c);
  const std::size_t plane = t.h() * t.w();
  const float* p = t.data().data();
  for (std::size_t i = 0; i < s.n * s.c; ++i, p += plane) {
    float acc = 0.0f;
    for (std::size_t j = 0; j < plane; ++j) acc += p[j];
    s.values[i] = acc;
  }
  return s;
}

namespace {

// Deciles of an already sorted, NaN-free row.
float sorted_quantile(std::span<const float> sorted, std::size_t p_index) {
  const std::size_t c = sorted.size();
  const std::size_t scaled = (c - 1) * static_cast<std::size_t>(kPercentiles[p_index]);
  const std::size_t below = scaled / 100;
  const std::size_t rem = scaled % 100;
  const float lo = sorted[below];
  if (rem == 0) return lo;
  const float hi = sorted[below + 1];
  if (lo == hi) return lo;
  const double frac = static_cast<double>(rem) / 100.0;
  return static_cast<float>(static_cast<double>(lo) + frac * (static_cast<double>(hi) - static_cast<double>(lo)));
}

bool has_nan(std::span<const float> v) {
  return std::any_of(v.begin(), v.end(), [](float x) { return std::isnan(x); });
}

}  // namespace

std::array<float, kQuantileCount> layer_quantiles(std::span<const float> sums) {
  if (sums.empty()) throw ConfigError("layer_quantiles needs at least one channel");
  std::array<float, kQuantileCount> out{};
  if (has_nan(sums)) {
    out.fill(std::numeric_limits<float>::quiet_NaN());
    return out;
  }
  std::vector<float> sorted(sums.begin(), sums.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t p = 0; p < kQuantileCount; ++p) out[p] = sorted_quantile(sorted, p);
  return out;
}

QuantileBounds extract_bounds(std::span<const QuantileSet> sets, std::string provenance) {
  if (sets.empty()) throw ConfigError("extract_bounds: empty bounds dataset");
  QuantileBounds b;
  b.layers = sets.front().layers;
  b.provenance = std::move(provenance);
  b.min.assign(b.layers * kQuantileCount, std::numeric_limits<float>::infinity());
  b.max.assign(b.layers * kQuantileCount, -std::numeric_limits<float>::infinity());
  for (std::size_t n = 0; n < sets.size(); ++n) {
    const QuantileSet& q = sets[n];
    if (q.layers != b.layers || q.values.size() != b.min.size()) {
      throw ConfigError("extract_bounds: quantile sets cover different layer counts");
    }
    for (std::size_t i = 0; i < q.values.size(); ++i) {
      const float v = q.values[i];
      if (!std::isfinite(v)) {
        throw DueError("extract_bounds: non-finite quantile in bounds sample " + std::to_string(n) +
                       "; bounds must come from fault-free inference");
      }
      b.min[i] = std::min(b.min[i], v);
      b.max[i] = std::max(b.max[i], v);
    }
  }
  return b;
}

QuantileBounds extract_bounds(const Network& net, const Tensor4& images, std::string provenance,
                              std::size_t batch_size) {
  if (images.n() == 0) throw ConfigError("extract_bounds: empty bounds dataset");
  QuantileMonitor monitor(net.conv_count());
  const ConvHook hook = monitor.hook();
  std::vector<QuantileSet> sets;
  sets.reserve(images.n());
  for (std::size_t start = 0; start < images.n(); start += batch_size) {
    const std::size_t count = std::min(batch_size, images.n() - start);
    monitor.reset(count);
    const Tensor4 logits = forward(net, images.slice(start, count), std::span<const ConvHook>(&hook, 1));
    if (monitor.any_due() || due_check(logits)) {
      throw DueError("extract_bounds: NaN/Inf during fault-free inference (batch at image " + std::to_string(start) + ")");
    }
    sets.insert(sets.end(), monitor.quantiles().begin(), monitor.quantiles().end());
  }
  return extract_bounds(sets, std::move(provenance));
}

double f_norm(double a, double a_min, double a_max) {
  if (a >= a_min) return std::tanh((a - a_max) / (std::abs(a_max) + kNormEpsilon));
  return std::tanh((a_min - a) / (std::abs(a_min) + kNormEpsilon));
}

std::string feature_name(std::size_t index, std::size_t layers) {
  return "q[layer=" + std::to_string(feature_layer(index, layers) + 1) +
         "][p=" + std::to_string(kPercentiles[feature_percentile_index(index, layers)]) + "]";
}

std::vector<double> anomaly_vector(const QuantileSet& q, const QuantileBounds& b) {
  if (q.layers != b.layers || q.values.size() != b.min.size() || b.min.size() != b.max.size()) {
    throw ConfigError("anomaly_vector: quantile grid does not match bounds grid");
  }
  static const double kLow = std::nextafter(0.0, 1.0);
  static const double kHigh = std::nextafter(1.0, 0.0);
  const std::size_t layers = q.layers;
  std::vector<double> out(layers * kQuantileCount);
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t p = 0; p < kQuantileCount; ++p) {
      const double v = 0.5 * (f_norm(q.at(l, p), b.lo(l, p), b.hi(l, p)) + 1.0);
      // NaN input (a DUE inference) maps to the outside-bounds extreme
      out[feature_index(l, p, layers)] = std::isnan(v) ? kHigh : std::clamp(v, kLow, kHigh);
    }
  }
  return out;
}

bool due_check(const Tensor4& t) {
  const auto d = t.data();
  return std::any_of(d.begin(), d.end(), [](float x) { return !std::isfinite(x); });
}

bool due_check(const FeatureSums& s) {
  return std::any_of(s.values.begin(), s.values.end(), [](float x) { return !std::isfinite(x); });
}

MonitorSelection MonitorSelection::full(std::size_t layers) {
  MonitorSelection s;
  s.percentiles.assign(layers, {});
  for (auto& p : s.percentiles) {
    for (std::size_t i = 0; i < kQuantileCount; ++i) p.push_back(i);
  }
  return s;
}

MonitorSelection MonitorSelection::from_features(std::span<const std::size_t> feature_indices, std::size_t layers) {
  MonitorSelection s;
  s.percentiles.assign(layers, {});
  for (std::size_t f : feature_indices) {
    if (f >= layers * kQuantileCount) throw ConfigError("feature index out of range");
    auto& p = s.percentiles[feature_layer(f, layers)];
    const std::size_t pi = feature_percentile_index(f, layers);
    if (std::find(p.begin(), p.end(), pi) == p.end()) p.push_back(pi);
  }
  for (auto& p : s.percentiles) std::sort(p.begin(), p.end());
  return s;
}

std::size_t MonitorSelection::tapped_layers() const {
  return static_cast<std::size_t>(
      std::count_if(percentiles.begin(), percentiles.end(), [](const auto& p) { return !p.empty(); }));
}

QuantileMonitor::QuantileMonitor(MonitorSelection selection) : selection_(std::move(selection)) {}

void QuantileMonitor::reset(std::size_t batch) {
  quantiles_.assign(batch, QuantileSet(selection_.percentiles.size()));
  due_.assign(batch, 0);
}

void QuantileMonitor::observe(std::size_t conv_index, const Tensor4& output) {
  if (conv_index >= selection_.percentiles.size()) throw ConfigError("monitor: conv index out of range");
  const auto& wanted = selection_.percentiles[conv_index];
  if (wanted.empty()) return;
  if (output.n() != quantiles_.size()) throw ConfigError("monitor: batch size changed without reset()");
  const FeatureSums sums = feature_sums(output);
  for (std::size_t n = 0; n < sums.n; ++n) {
    const auto row = sums.row(n);
    QuantileSet& q = quantiles_[n];
    if (has_nan(row)) {
      due_[n] = 1;
      for (std::size_t p : wanted) q.at(conv_index, p) = std::numeric_limits<float>::quiet_NaN();
      continue;
    }
    if (std::any_of(row.begin(), row.end(), [](float x) { return std::isinf(x); })) due_[n] = 1;
    scratch_.assign(row.begin(), row.end());
    std::sort(scratch_.begin(), scratch_.end());
    for (std::size_t p : wanted) q.at(conv_index, p) = sorted_quantile(scratch_, p);
  }
}

ConvHook QuantileMonitor::hook() {
  return [this](std::size_t conv_index, Tensor4& output) { observe(conv_index, output); };
}

bool QuantileMonitor::any_due() const {
  return std::any_of(due_.begin(), due_.end(), [](char d) { return d != 0; });
}

void write_bounds_csv(const QuantileBounds& b, const std::filesystem::path& path) {
  std::ostringstream os;
  if (!b.provenance.empty()) os << "# bounds dataset: " << b.provenance << "\n";
  os << "layer,percentile,min,max\n";
  for (std::size_t l = 0; l < b.layers; ++l) {
    for (std::size_t p = 0; p < kQuantileCount; ++p) {
      os << l + 1 << ',' << kPercentiles[p] << ',' << csv::format(b.lo(l, p)) << ',' << csv::format(b.hi(l, p)) << "\n";
    }
  }
  csv::write_text(path, os.str());
}

QuantileBounds read_bounds_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const std::size_t cl = t.column("layer"), cp = t.column("percentile"), cmin = t.column("min"), cmax = t.column("max");
  std::size_t layers = 0;
  for (const auto& row : t.rows) layers = std::max(layers, static_cast<std::size_t>(csv::parse_int(row[cl])));
  QuantileBounds b;
  b.layers = layers;
  b.min.assign(layers * kQuantileCount, std::numeric_limits<float>::quiet_NaN());
  b.max = b.min;
  for (const auto& row : t.rows) {
    const auto l = csv::parse_int(row[cl]);
    const auto pct = csv::parse_int(row[cp]);
    const auto it = std::find(kPercentiles.begin(), kPercentiles.end(), static_cast<int>(pct));
    if (l < 1 || it == kPercentiles.end()) throw ParseError("bounds CSV: bad layer/percentile");
    const std::size_t at = static_cast<std::size_t>(l - 1) * kQuantileCount + static_cast<std::size_t>(it - kPercentiles.begin());
    b.min[at] = csv::parse_float(row[cmin]);
    b.max[at] = csv::parse_float(row[cmax]);
  }
  for (std::size_t i = 0; i < b.min.size(); ++i) {
    if (std::isnan(b.min[i]) || std::isnan(b.max[i])) throw ParseError("bounds CSV: incomplete grid");
    if (b.min[i] > b.max[i]) throw ParseError("bounds CSV: min exceeds max");
  }
  for (const auto& c : t.comments) {
    const std::string key = " bounds dataset: ";
    if (c.rfind(key, 0) == 0) b.provenance = c.substr(key.size());
  }
  return b;
}

}  // namespace qsdc
