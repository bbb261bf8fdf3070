#include "qsdc/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qsdc/errors.hpp"

namespace qsdc {

float flip_bit(float value, int bit) {
  if (bit < 0 || bit > 31) throw ConfigError("bit index " + std::to_string(bit) + " outside [0,31]");
  return float_from_bits(float_bits(value) ^ (std::uint32_t{1} << bit));
}

std::string_view to_string(Magnitude m) {
  switch (m) {
    case Magnitude::low:
      return "low";
    case Magnitude::med:
      return "med";
    case Magnitude::high:
      return "high";
  }
  return "?";
}

std::string_view to_string(MemoryTarget t) { return t == MemoryTarget::weight ? "weight" : "neuron"; }

Magnitude parse_magnitude(std::string_view name) {
  for (Magnitude m : {Magnitude::low, Magnitude::med, Magnitude::high}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown magnitude '" + std::string(name) + "'");
}

MemoryTarget parse_memory_target(std::string_view name) {
  if (name == "weight") return MemoryTarget::weight;
  if (name == "neuron") return MemoryTarget::neuron;
  throw ConfigError("unknown memory target '" + std::string(name) + "'");
}

std::vector<float> gaussian_noise_samples(std::size_t count, double stddev, std::uint64_t seed) {
  std::vector<float> out(count, 0.0f);
  if (stddev <= 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  for (float& v : out) v = static_cast<float>(dist(rng));
  return out;
}

Tensor4 apply_gaussian_noise(const Tensor4& img, double sigma, double scale, std::uint64_t seed) {
  if (sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
  if (sigma == 0.0) return img;
  const auto noise = gaussian_noise_samples(img.size(), sigma * scale, seed);
  Tensor4 out = img;
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::clamp(data[i] + noise[i], 0.0f, 1.0f);
  return out;
}

std::vector<float> gaussian_kernel1d(std::size_t size, double sigma) {
  if (size == 0 || size % 2 == 0) throw ConfigError("blur kernel size must be odd and positive");
  if (!(sigma > 0.0)) throw ConfigError("blur sigma must be > 0");
  std::vector<double> taps(size);
  const double half = static_cast<double>(size - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double x = (static_cast<double>(i) - half) / sigma;
    taps[i] = std::exp(-0.5 * x * x);
    total += taps[i];
  }
  std::vector<float> out(size);
  for (std::size_t i = 0; i < size; ++i) out[i] = static_cast<float>(taps[i] / total);
  return out;
}

namespace {

// Reflect without repeating the edge: -1 -> 1, n -> n-2.
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto len = static_cast<std::ptrdiff_t>(n);
  if (i < 0) i = -i;
  if (i >= len) i = 2 * (len - 1) - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

Tensor4 apply_gaussian_blur(const Tensor4& img, double sigma, std::size_t kernel_h, std::size_t kernel_w) {
  const auto kv = gaussian_kernel1d(kernel_h, sigma);
  const auto kh = gaussian_kernel1d(kernel_w, sigma);
  if (img.h() < kernel_h || img.w() < kernel_w) {
    throw ConfigError("image smaller than the blur kernel");
  }
  const auto rv = static_cast<std::ptrdiff_t>(kernel_h / 2);
  const auto rh = static_cast<std::ptrdiff_t>(kernel_w / 2);
  Tensor4 tmp(img.shape());
  Tensor4 out(img.shape());
  for (std::size_t n = 0; n < img.n(); ++n) {
    for (std::size_t c = 0; c < img.c(); ++c) {
      for (std::size_t y = 0; y < img.h(); ++y) {
        for (std::size_t x = 0; x < img.w(); ++x) {
          float acc = 0.0f;
          for (std::ptrdiff_t j = -rh; j <= rh; ++j) {
            acc += kh[static_cast<std::size_t>(j + rh)] * img(n, c, y, reflect(static_cast<std::ptrdiff_t>(x) + j, img.w()));
          }
          tmp(n, c, y, x) = acc;
        }
      }
      for (std::size_t y = 0; y < img.h(); ++y) {
        for (std::size_t x = 0; x < img.w(); ++x) {
          float acc = 0.0f;
          for (std::ptrdiff_t i = -rv; i <= rv; ++i) {
            acc += kv[static_cast<std::size_t>(i + rv)] * tmp(n, c, reflect(static_cast<std::ptrdiff_t>(y) + i, img.h()), x);
          }
          out(n, c, y, x) = acc;
        }
      }
    }
  }
  return out;
}

Tensor4 apply_contrast(const Tensor4& img, double factor) {
  if (factor < 0.0 || factor > 1.0) throw ConfigError("contrast factor must lie in [0,1]");
  Tensor4 out(img.shape());
  static constexpr std::array<double, 3> kLuma{0.299, 0.587, 0.114};
  const std::size_t plane = img.h() * img.w();
  for (std::size_t n = 0; n < img.n(); ++n) {
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      double gray = 0.0;
      if (img.c() == 3) {
        for (std::size_t c = 0; c < 3; ++c) gray += kLuma[c] * img.data()[img.offset(n, c, 0, 0) + i];
      } else {
        // other channel counts: plain channel mean
        for (std::size_t c = 0; c < img.c(); ++c) gray += img.data()[img.offset(n, c, 0, 0) + i];
        gray /= static_cast<double>(img.c());
      }
      mean += gray;
    }
    mean /= static_cast<double>(plane);
    for (std::size_t c = 0; c < img.c(); ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t at = img.offset(n, c, 0, 0) + i;
        const double v = mean + factor * (static_cast<double>(img.data()[at]) - mean);
        out.data()[at] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

Tensor4 apply_input_fault(const Tensor4& img, const FaultSpec& spec, const CorruptionParams& params) {
  const auto m = static_cast<std::size_t>(spec.magnitude);
  switch (spec.cls) {
    case FaultClass::noise:
      return apply_gaussian_noise(img, params.noise_sigmas.at(m), params.noise_scale, spec.seed);
    case FaultClass::blur:
      return apply_gaussian_blur(img, params.blur_sigmas.at(m), params.blur_kernel_h, params.blur_kernel_w);
    case FaultClass::contrast:
      return apply_contrast(img, params.contrast_factors.at(m));
    default:
      return img;
  }
}

void WeightPatch::apply(Network& net) const {
  float& w = net.conv(layer_).weight.at(coord_[0], coord_[1], coord_[2], coord_[3]);
  w = flip_bit(w, bit_);
}

namespace {

void check_bit(const FaultSpec& spec) {
  if (spec.bit < 0 || spec.bit > 31) throw ConfigError("fault bit index outside [0,31]");
  if (spec.accelerated &&
      std::find(kAcceleratedBits.begin(), kAcceleratedBits.end(), spec.bit) == kAcceleratedBits.end()) {
    throw ConfigError("accelerated faults must target bits 28..30");
  }
}

}  // namespace

WeightPatch inject_weight_fault(const Network& net, const FaultSpec& spec) {
  if (spec.cls != FaultClass::memory || spec.target != MemoryTarget::weight) {
    throw ConfigError("inject_weight_fault needs a memory/weight spec");
  }
  check_bit(spec);
  const Shape4& s = net.conv(spec.layer).weight.shape();
  const auto& k = spec.coord;
  if (k[0] >= s.n || k[1] >= s.c || k[2] >= s.h || k[3] >= s.w) {
    throw ConfigError("weight coordinate out of range for conv layer " + std::to_string(spec.layer));
  }
  return WeightPatch(spec.layer, spec.coord, spec.bit);
}

ConvHook inject_neuron_fault(const Network& net, const FaultSpec& spec) {
  if (spec.cls != FaultClass::memory || spec.target != MemoryTarget::neuron) {
    throw ConfigError("inject_neuron_fault needs a memory/neuron spec");
  }
  check_bit(spec);
  const auto shapes = net.conv_output_shapes(1);
  if (spec.layer >= shapes.size()) throw ConfigError("neuron fault layer out of range");
  const Shape4& s = shapes[spec.layer];
  const auto& k = spec.coord;
  if (k[1] >= s.c || k[2] >= s.h || k[3] >= s.w) {
    throw ConfigError("neuron coordinate out of range for conv layer " + std::to_string(spec.layer));
  }
  return [layer = spec.layer, k, bit = spec.bit](std::size_t conv_index, Tensor4& output) {
    if (conv_index != layer) return;
    float& v = output.at(k[0], k[1], k[2], k[3]);
    v = flip_bit(v, bit);
  };
}

FaultSpec sample_fault_spec(const FaultSamplingConfig& config, const Network& net, std::mt19937_64& rng) {
  if (config.classes.empty()) throw ConfigError("fault sampling config enables no fault classes");
  auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  FaultSpec spec;
  spec.cls = config.classes[pick(config.classes.size())];
  spec.accelerated = false;
  switch (spec.cls) {
    case FaultClass::none:
      break;
    case FaultClass::memory: {
      if (config.targets.empty()) throw ConfigError("memory faults enabled without targets");
      spec.target = config.targets[pick(config.targets.size())];
      const std::size_t layers = net.conv_count();
      spec.layer = pick(layers);
      if (spec.target == MemoryTarget::weight) {
        const Shape4& s = net.conv(spec.layer).weight.shape();
        spec.coord = {pick(s.n), pick(s.c), pick(s.h), pick(s.w)};
      } else {
        const Shape4 s = net.conv_output_shapes(1)[spec.layer];
        spec.coord = {0, pick(s.c), pick(s.h), pick(s.w)};
      }
      spec.accelerated = config.accelerated;
      spec.bit = config.accelerated ? kAcceleratedBits[pick(kAcceleratedBits.size())] : static_cast<int>(pick(32));
      break;
    }
    default:
      if (config.magnitudes.empty()) throw ConfigError("input faults enabled without magnitudes");
      spec.magnitude = config.magnitudes[pick(config.magnitudes.size())];
      break;
  }
  spec.seed = rng();
  return spec;
}

std::string describe(const FaultSpec& spec) {
  std::ostringstream os;
  os << to_string(spec.cls);
  if (spec.cls == FaultClass::memory) {
    os << "/" << to_string(spec.target) << " layer=" << spec.layer + 1 << " coord=(" << spec.coord[0] << ","
       << spec.coord[1] << "," << spec.coord[2] << "," << spec.coord[3] << ") bit=" << spec.bit
       << (spec.accelerated ? " accelerated" : "");
  } else if (spec.cls != FaultClass::none) {
    os << "@" << to_string(spec.magnitude);
  }
  return os.str();
}

}  // namespace qsdc
