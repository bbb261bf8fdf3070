#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace qsdc {

struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  [[nodiscard]] std::size_t count() const { return n * c * h * w; }
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

/// Dense NCHW tensor of binary32 values, row-major.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, float fill = 0.0f);
  Tensor4(Shape4 shape, std::vector<float> data);

  [[nodiscard]] const Shape4& shape() const { return shape_; }
  [[nodiscard]] std::size_t n() const { return shape_.n; }
  [[nodiscard]] std::size_t c() const { return shape_.c; }
  [[nodiscard]] std::size_t h() const { return shape_.h; }
  [[nodiscard]] std::size_t w() const { return shape_.w; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }

  [[nodiscard]] std::size_t offset(std::size_t n, std::size_t c, std::size_t h,
                                   std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  // Bounds-checked access; throws std::out_of_range.
  [[nodiscard]] float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  [[nodiscard]] float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  float& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[offset(n, c, h, w)];
  }
  float operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
  }

  [[nodiscard]] std::span<float> data() { return data_; }
  [[nodiscard]] std::span<const float> data() const { return data_; }

  // One (n, c) feature map as a contiguous h*w span.
  [[nodiscard]] std::span<const float> feature_map(std::size_t n, std::size_t c) const;

  // Samples [first, first + count) as a new tensor.
  [[nodiscard]] Tensor4 slice(std::size_t first, std::size_t count) const;

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  Shape4 shape_{};
  std::vector<float> data_;
};

// Bitwise comparison (distinguishes -0.0/+0.0 and treats equal NaN payloads as equal).
[[nodiscard]] bool bitwise_equal(std::span<const float> a, std::span<const float> b);

}  // namespace qsdc
