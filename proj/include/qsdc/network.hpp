#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qsdc/layers.hpp"
#include "qsdc/tensor.hpp"

namespace qsdc {

struct Network {
  Shape4 input;  // n is ignored; c, h, w describe one sample
  std::size_t classes = 0;
  std::vector<Layer> layers;

  // Positions in `layers` of the monitored (convolution) layers, in order.
  [[nodiscard]] std::vector<std::size_t> conv_positions() const;
  [[nodiscard]] std::size_t conv_count() const { return conv_positions().size(); }

  // Throws ConfigError when adjacent shapes do not chain or the final
  // output is not (classes, 1, 1).
  void validate() const;

  // Output shapes of every monitored layer for a batch of n.
  [[nodiscard]] std::vector<Shape4> conv_output_shapes(std::size_t n = 1) const;

  [[nodiscard]] Conv2d& conv(std::size_t index);
  [[nodiscard]] const Conv2d& conv(std::size_t index) const;
};

// Called with the 0-based monitored-layer index and that layer's output,
// before the next layer consumes it. Hooks may modify the buffer.
using ConvHook = std::function<void(std::size_t conv_index, Tensor4& output)>;

/// Runs the network. Every conv output is passed through `hooks` in list
/// order, so a fault hook placed first is seen by every later hook and by
/// the downstream layers.
[[nodiscard]] Tensor4 forward(const Network& net, const Tensor4& batch,
                              std::span<const ConvHook> hooks = {});

// Same as forward(), additionally recording the input of every monitored
// layer so a later run can resume from it.
[[nodiscard]] Tensor4 forward_recording(const Network& net, const Tensor4& batch,
                                        std::span<const ConvHook> hooks,
                                        std::vector<Tensor4>& conv_inputs);

// Resumes at monitored layer `start_conv` given its recorded input. Hooks
// fire only for layers start_conv..L-1. Produces the same logits as a full
// forward() whenever the layers before start_conv are unchanged.
[[nodiscard]] Tensor4 forward_from(const Network& net, std::size_t start_conv,
                                   const Tensor4& conv_input, std::span<const ConvHook> hooks = {});

// FNV-1a over every parameter bit pattern plus the topology.
[[nodiscard]] std::uint64_t network_hash(const Network& net);

[[nodiscard]] bool bitwise_equal(const Network& a, const Network& b);

/// Plain-text topology, one layer per line:
///
///   input 1 28 28
///   classes 10
///   conv2d <out_ch> <kernel> <stride> <padding>
///   relu
///   maxpool2d <window> <stride>
///   linear <out_features>
///
/// Blank lines and '#' comments are ignored. Weights get a seeded He
/// initialization and zero biases.
[[nodiscard]] Network parse_topology(std::istream& in, std::uint64_t seed);
[[nodiscard]] Network parse_topology(const std::string& text, std::uint64_t seed);

[[nodiscard]] std::string describe(const Network& net);

inline constexpr std::uint32_t kNetworkFormatVersion = 1;

// "QSNT" little-endian binary format.
void save_network(const Network& net, const std::filesystem::path& path);
[[nodiscard]] Network load_network(const std::filesystem::path& path);
void write_network(const Network& net, std::ostream& out);
[[nodiscard]] Network read_network(std::istream& in);

}  // namespace qsdc
