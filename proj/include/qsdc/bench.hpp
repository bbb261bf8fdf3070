#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qsdc/monitor.hpp"
#include "qsdc/network.hpp"
#include "qsdc/tensor.hpp"

namespace qsdc {

enum class BenchVariant : std::uint8_t { plain = 0, reduced = 1, full = 2, tracing = 3 };
inline constexpr std::array<BenchVariant, 4> kAllBenchVariants{BenchVariant::plain, BenchVariant::reduced,
                                                               BenchVariant::full, BenchVariant::tracing};

[[nodiscard]] std::string_view to_string(BenchVariant v);

struct BenchOptions {
  std::size_t batch = 10;
  std::size_t warmup = 5;
  std::size_t repetitions = 1000;
};

struct VariantTiming {
  BenchVariant variant = BenchVariant::plain;
  std::vector<double> samples;  // per-image milliseconds, one per repetition
  double mean = 0.0;
  double median = 0.0;  // median over repetitions of the per-image mean
  double stddev = 0.0;
  // 95% interval of the mean after removing each repetition's common level
  // (within-repetition normalization with Morey's correction), so machine
  // speed drift shared by all variants of a repetition cancels.
  double ci_low = 0.0;
  double ci_high = 0.0;
  // Plain 95% interval over the raw samples, drift included.
  double raw_ci_low = 0.0;
  double raw_ci_high = 0.0;
  // Mean and 95% interval of the per-repetition ratio to plain, minus 1.
  double overhead = 0.0;
  double overhead_ci_low = 0.0;
  double overhead_ci_high = 0.0;
};

struct OverheadReport {
  std::size_t images = 0;
  std::size_t batch = 0;
  std::size_t repetitions = 0;
  std::size_t reduced_features = 0;
  std::size_t reduced_layers = 0;
  std::vector<VariantTiming> variants;  // kAllBenchVariants order

  [[nodiscard]] const VariantTiming& at(BenchVariant v) const { return variants[static_cast<std::size_t>(v)]; }
};

/// Times per-image inference over `images` for every variant: no monitor, a
/// monitor restricted to `reduced`, the full monitor, and tracing that keeps
/// every feature-map sum. Variants are interleaved and their order rotates
/// each repetition so drift hits them evenly; warmup passes are discarded.
[[nodiscard]] OverheadReport bench_overhead(const Network& net, const Tensor4& images, const MonitorSelection& reduced,
                                            const BenchOptions& options);

// variant,mean_ms,median_ms,stddev_ms,ci95_low_ms,ci95_high_ms,raw_ci95_low_ms,raw_ci95_high_ms,
// overhead,overhead_ci95_low,overhead_ci95_high,repetitions,images,batch
[[nodiscard]] std::string overhead_csv(const OverheadReport& r);

}  // namespace qsdc
