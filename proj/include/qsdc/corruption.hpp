#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "qsdc/labels.hpp"
#include "qsdc/network.hpp"
#include "qsdc/tensor.hpp"

namespace qsdc {

// --- binary32 bit manipulation ---

inline constexpr int kSignBit = 31;
inline constexpr int kExponentLowBit = 23;
// The three most significant exponent bits, used for accelerated injection.
inline constexpr std::array<int, 3> kAcceleratedBits{28, 29, 30};

[[nodiscard]] inline std::uint32_t float_bits(float v) { return std::bit_cast<std::uint32_t>(v); }
[[nodiscard]] inline float float_from_bits(std::uint32_t b) { return std::bit_cast<float>(b); }

/// XOR of the value's bit pattern with 1 << bit. Bit 31 is the sign, 30..23
/// the exponent, 22..0 the mantissa. Throws ConfigError for bit outside [0,31].
[[nodiscard]] float flip_bit(float value, int bit);

// --- fault description ---

enum class Magnitude : std::uint8_t { low = 0, med = 1, high = 2 };
enum class MemoryTarget : std::uint8_t { weight = 0, neuron = 1 };

[[nodiscard]] std::string_view to_string(Magnitude m);
[[nodiscard]] std::string_view to_string(MemoryTarget t);
[[nodiscard]] Magnitude parse_magnitude(std::string_view name);
[[nodiscard]] MemoryTarget parse_memory_target(std::string_view name);

struct FaultSpec {
  FaultClass cls = FaultClass::none;
  Magnitude magnitude = Magnitude::low;  // input faults
  MemoryTarget target = MemoryTarget::weight;
  std::size_t layer = 0;                  // 0-based monitored (conv) layer
  std::array<std::size_t, 4> coord{};     // weight: (out, in, ky, kx); neuron: (sample, c, h, w)
  int bit = 0;
  bool accelerated = false;
  std::uint64_t seed = 0;                 // drives stochastic input faults

  friend bool operator==(const FaultSpec&, const FaultSpec&) = default;
};

// Magnitude triples for the input faults.
struct CorruptionParams {
  std::array<double, 3> noise_sigmas{0.1, 1.0, 10.0};
  double noise_scale = 1.0 / 255.0;  // pixel-scale constant applied to the sigmas
  std::array<double, 3> blur_sigmas{0.3, 1.0, 3.0};
  std::size_t blur_kernel_h = 5;
  std::size_t blur_kernel_w = 9;
  std::array<double, 3> contrast_factors{0.8, 0.4, 0.1};
};

// --- input corruptions (images in [0,1]) ---

// The pre-clip noise samples apply_gaussian_noise adds, in pixel order.
[[nodiscard]] std::vector<float> gaussian_noise_samples(std::size_t count, double stddev, std::uint64_t seed);

/// Adds i.i.d. N(0, (sigma*scale)^2) noise and clips to [0,1].
[[nodiscard]] Tensor4 apply_gaussian_noise(const Tensor4& img, double sigma, double scale, std::uint64_t seed);

// Normalized 1-D Gaussian taps at offsets -(k-1)/2 .. (k-1)/2.
[[nodiscard]] std::vector<float> gaussian_kernel1d(std::size_t size, double sigma);

/// Separable Gaussian blur with reflect padding; kernel is kernel_h x kernel_w.
[[nodiscard]] Tensor4 apply_gaussian_blur(const Tensor4& img, double sigma, std::size_t kernel_h = 5,
                                          std::size_t kernel_w = 9);

/// out = m + factor*(in - m), m the per-image mean of the luminance-weighted
/// grayscale (the plain mean for one channel), clipped to [0,1].
[[nodiscard]] Tensor4 apply_contrast(const Tensor4& img, double factor);

// Applies spec to an image when it is an input fault; otherwise returns img.
[[nodiscard]] Tensor4 apply_input_fault(const Tensor4& img, const FaultSpec& spec, const CorruptionParams& params);

// --- memory faults ---

/// A single flipped weight bit. apply() is an involution: calling it twice
/// restores the network bit-exactly.
class WeightPatch {
 public:
  WeightPatch(std::size_t layer, std::array<std::size_t, 4> coord, int bit)
      : layer_(layer), coord_(coord), bit_(bit) {}
  void apply(Network& net) const;
  [[nodiscard]] std::size_t layer() const { return layer_; }

 private:
  std::size_t layer_;
  std::array<std::size_t, 4> coord_;
  int bit_;
};

// Validates the spec against the network; throws ConfigError when the
// coordinate is out of range or the spec is not a weight fault.
[[nodiscard]] WeightPatch inject_weight_fault(const Network& net, const FaultSpec& spec);

// Applies a weight patch for the lifetime of the guard.
class ScopedWeightFault {
 public:
  ScopedWeightFault(Network& net, const WeightPatch& patch) : net_(net), patch_(patch) { patch_.apply(net_); }
  ~ScopedWeightFault() { patch_.apply(net_); }
  ScopedWeightFault(const ScopedWeightFault&) = delete;
  ScopedWeightFault& operator=(const ScopedWeightFault&) = delete;

 private:
  Network& net_;
  WeightPatch patch_;
};

/// Hook that flips one element of the chosen conv layer's output. Place it
/// before the monitor in the hook list.
[[nodiscard]] ConvHook inject_neuron_fault(const Network& net, const FaultSpec& spec);

// --- sampling ---

struct FaultSamplingConfig {
  std::vector<FaultClass> classes{FaultClass::noise, FaultClass::blur, FaultClass::contrast, FaultClass::memory};
  std::vector<Magnitude> magnitudes{Magnitude::low, Magnitude::med, Magnitude::high};
  std::vector<MemoryTarget> targets{MemoryTarget::weight, MemoryTarget::neuron};
  bool accelerated = false;
};

/// Class uniform over config.classes, magnitude uniform over
/// config.magnitudes; memory faults pick target, conv layer, coordinate and
/// bit uniformly (bit from {28,29,30} when accelerated).
[[nodiscard]] FaultSpec sample_fault_spec(const FaultSamplingConfig& config, const Network& net,
                                          std::mt19937_64& rng);

[[nodiscard]] std::string describe(const FaultSpec& spec);

}  // namespace qsdc
