#include "qsdc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "qsdc/csv.hpp"
#include "qsdc/errors.hpp"

namespace qsdc {

std::string_view to_string(BenchVariant v) {
  switch (v) {
    case BenchVariant::plain:
      return "plain";
    case BenchVariant::reduced:
      return "reduced_monitor";
    case BenchVariant::full:
      return "full_monitor";
    case BenchVariant::tracing:
      return "feature_map_tracing";
  }
  return "?";
}

namespace {

// Stores every layer's feature-map sums, the way a tracing approach would.
class SumTracer {
 public:
  void reset() { traces_.clear(); }
  ConvHook hook() {
    return [this](std::size_t, Tensor4& output) { traces_.push_back(feature_sums(output)); };
  }
  [[nodiscard]] std::size_t size() const { return traces_.size(); }

 private:
  std::vector<FeatureSums> traces_;
};

class VariantRunner {
 public:
  VariantRunner(const Network& net, const Tensor4& images, const MonitorSelection& reduced, std::size_t batch)
      : net_(net),
        images_(images),
        batch_(batch),
        reduced_(reduced),
        full_(net.conv_count()),
        reduced_hook_(reduced_.hook()),
        full_hook_(full_.hook()),
        trace_hook_(tracer_.hook()) {}

  [[nodiscard]] std::size_t batches() const { return (images_.n() + batch_ - 1) / batch_; }

  // One forward pass over batch `b`; returns a value derived from the
  // output so the work cannot be optimized away.
  float run(BenchVariant v, std::size_t b) {
    const std::size_t start = b * batch_;
    const std::size_t count = std::min(batch_, images_.n() - start);
    const Tensor4 batch = images_.slice(start, count);
    std::span<const ConvHook> hooks;
    switch (v) {
      case BenchVariant::plain:
        break;
      case BenchVariant::reduced:
        reduced_.reset(count);
        hooks = std::span<const ConvHook>(&reduced_hook_, 1);
        break;
      case BenchVariant::full:
        full_.reset(count);
        hooks = std::span<const ConvHook>(&full_hook_, 1);
        break;
      case BenchVariant::tracing:
        tracer_.reset();
        hooks = std::span<const ConvHook>(&trace_hook_, 1);
        break;
    }
    const Tensor4 logits = forward(net_, batch, hooks);
    return logits.data()[0];
  }

 private:
  const Network& net_;
  const Tensor4& images_;
  std::size_t batch_;
  QuantileMonitor reduced_;
  QuantileMonitor full_;
  SumTracer tracer_;
  ConvHook reduced_hook_;
  ConvHook full_hook_;
  ConvHook trace_hook_;
};

struct MeanSpread {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t n = 0;
  [[nodiscard]] double half95() const { return 1.96 * stddev / std::sqrt(static_cast<double>(n)); }
};

MeanSpread mean_spread(const std::vector<double>& v) {
  MeanSpread m;
  m.n = v.size();
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(m.n);
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.stddev = m.n > 1 ? std::sqrt(ss / static_cast<double>(m.n - 1)) : 0.0;
  return m;
}

}  // namespace

OverheadReport bench_overhead(const Network& net, const Tensor4& images, const MonitorSelection& reduced,
                              const BenchOptions& options) {
  if (options.warmup < 1) throw ConfigError("bench_overhead: warmup must be at least 1");
  if (options.repetitions < 10) throw ConfigError("bench_overhead: at least 10 repetitions required");
  if (images.n() == 0 || options.batch == 0) throw ConfigError("bench_overhead: nothing to time");
  if (reduced.percentiles.size() != net.conv_count()) throw ConfigError("bench_overhead: selection layer mismatch");

  VariantRunner runner(net, images, reduced, options.batch);
  volatile float sink = 0.0f;
  for (std::size_t w = 0; w < options.warmup; ++w) {
    for (std::size_t b = 0; b < runner.batches(); ++b) {
      for (BenchVariant v : kAllBenchVariants) sink = sink + runner.run(v, b);
    }
  }
  OverheadReport rep;
  rep.images = images.n();
  rep.batch = options.batch;
  rep.repetitions = options.repetitions;
  for (const auto& p : reduced.percentiles) rep.reduced_features += p.size();
  rep.reduced_layers = reduced.tapped_layers();
  rep.variants.resize(kAllBenchVariants.size());
  for (std::size_t i = 0; i < kAllBenchVariants.size(); ++i) rep.variants[i].variant = kAllBenchVariants[i];

  // Every batch is run by all variants back to back, so they share the
  // machine's state at that moment; the order rotates to spread cache and
  // drift effects evenly.
  using Clock = std::chrono::steady_clock;
  const std::size_t nv = kAllBenchVariants.size();
  std::size_t turn = 0;
  for (std::size_t r = 0; r < options.repetitions; ++r) {
    std::array<double, kAllBenchVariants.size()> ms{};
    for (std::size_t b = 0; b < runner.batches(); ++b, ++turn) {
      for (std::size_t j = 0; j < nv; ++j) {
        const std::size_t v = (turn + j) % nv;
        const auto t0 = Clock::now();
        sink = sink + runner.run(kAllBenchVariants[v], b);
        const auto t1 = Clock::now();
        ms[v] += std::chrono::duration<double, std::milli>(t1 - t0).count();
      }
    }
    for (std::size_t v = 0; v < nv; ++v) rep.variants[v].samples.push_back(ms[v] / static_cast<double>(images.n()));
  }
  const std::size_t reps = options.repetitions;
  const auto n = static_cast<double>(reps);
  std::vector<double> level(reps, 0.0);
  double grand = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    for (const auto& vt : rep.variants) level[r] += vt.samples[r];
    level[r] /= static_cast<double>(nv);
    grand += level[r];
  }
  grand /= n;
  const double morey = std::sqrt(static_cast<double>(nv) / static_cast<double>(nv - 1));
  const auto& plain = rep.at(BenchVariant::plain).samples;
  for (auto& vt : rep.variants) {
    std::vector<double> normalized(reps), ratio(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      normalized[r] = vt.samples[r] - level[r] + grand;
      ratio[r] = vt.samples[r] / plain[r] - 1.0;
    }
    const MeanSpread raw = mean_spread(vt.samples);
    const MeanSpread within = mean_spread(normalized);
    const MeanSpread over = mean_spread(ratio);
    vt.mean = raw.mean;
    vt.stddev = raw.stddev;
    std::vector<double> sorted = vt.samples;
    std::sort(sorted.begin(), sorted.end());
    vt.median = reps % 2 ? sorted[reps / 2] : 0.5 * (sorted[reps / 2 - 1] + sorted[reps / 2]);
    vt.raw_ci_low = raw.mean - raw.half95();
    vt.raw_ci_high = raw.mean + raw.half95();
    vt.ci_low = raw.mean - morey * within.half95();
    vt.ci_high = raw.mean + morey * within.half95();
    vt.overhead = over.mean;
    vt.overhead_ci_low = over.mean - over.half95();
    vt.overhead_ci_high = over.mean + over.half95();
  }
  return rep;
}

std::string overhead_csv(const OverheadReport& r) {
  std::ostringstream os;
  os << "variant,mean_ms,median_ms,stddev_ms,ci95_low_ms,ci95_high_ms,raw_ci95_low_ms,raw_ci95_high_ms,overhead,"
        "overhead_ci95_low,overhead_ci95_high,repetitions,images,batch\n";
  for (const auto& v : r.variants) {
    os << to_string(v.variant) << ',' << csv::format(v.mean) << ',' << csv::format(v.median) << ','
       << csv::format(v.stddev) << ','
       << csv::format(v.ci_low) << ',' << csv::format(v.ci_high) << ',' << csv::format(v.raw_ci_low) << ','
       << csv::format(v.raw_ci_high) << ',' << csv::format(v.overhead) << ',' << csv::format(v.overhead_ci_low)
       << ',' << csv::format(v.overhead_ci_high) << ',' << r.repetitions << ',' << r.images << ',' << r.batch
       << "\n";
  }
  return os.str();
}

}  // namespace qsdc
