#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "qsdc/tensor.hpp"

namespace qsdc {

// Images in [0,1], one label per sample.
struct ImageSet {
  Tensor4 images;
  std::vector<int> labels;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] Tensor4 image(std::size_t i) const { return images.slice(i, 1); }
};

inline constexpr std::size_t kShapeClasses = 10;

/// Ten-class synthetic shapes (squares, discs, rings, triangles, crosses,
/// bars, diamonds) rendered at `side` x `side`, one channel. Position, size,
/// stroke, rotation, intensity and background clutter are randomized. Pixel
/// values are quantized to 1/255 so they survive an IDX round trip.
[[nodiscard]] ImageSet generate_shapes(std::size_t count, std::uint64_t seed, std::size_t side = 28);

// IDX (MNIST-style) unsigned-byte files: 3-D images (magic 0x803) and 1-D
// labels (magic 0x801).
void write_idx_images(const Tensor4& images, const std::filesystem::path& path);
void write_idx_labels(const std::vector<int>& labels, const std::filesystem::path& path);
[[nodiscard]] Tensor4 read_idx_images(const std::filesystem::path& path);
[[nodiscard]] std::vector<int> read_idx_labels(const std::filesystem::path& path);

// Reads <dir>/<prefix>-images.idx3-ubyte and <dir>/<prefix>-labels.idx1-ubyte.
[[nodiscard]] ImageSet load_idx_set(const std::filesystem::path& dir, const std::string& prefix);
void save_idx_set(const ImageSet& set, const std::filesystem::path& dir, const std::string& prefix);

}  // namespace qsdc
