#include "qsdc/tensor.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

#include "qsdc/errors.hpp"

namespace qsdc {

Tensor4::Tensor4(Shape4 shape, float fill) : shape_(shape), data_(shape.count(), fill) {}

Tensor4::Tensor4(Shape4 shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.count()) {
    throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                      " does not match shape element count " + std::to_string(shape_.count()));
  }
}

namespace {
void check_index(const Shape4& s, std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  if (n >= s.n || c >= s.c || h >= s.h || w >= s.w) {
    throw std::out_of_range("tensor index (" + std::to_string(n) + "," + std::to_string(c) + "," +
                            std::to_string(h) + "," + std::to_string(w) + ") out of range");
  }
}
}  // namespace

float& Tensor4::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  check_index(shape_, n, c, h, w);
  return data_[offset(n, c, h, w)];
}

float Tensor4::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  check_index(shape_, n, c, h, w);
  return data_[offset(n, c, h, w)];
}

std::span<const float> Tensor4::feature_map(std::size_t n, std::size_t c) const {
  check_index(shape_, n, c, 0, 0);
  return std::span<const float>(data_).subspan(offset(n, c, 0, 0), shape_.h * shape_.w);
}

Tensor4 Tensor4::slice(std::size_t first, std::size_t count) const {
  if (first + count > shape_.n) throw std::out_of_range("tensor slice out of range");
  const std::size_t per = shape_.c * shape_.h * shape_.w;
  Shape4 s = shape_;
  s.n = count;
  return Tensor4(s, std::vector<float>(data_.begin() + static_cast<std::ptrdiff_t>(first * per),
                                       data_.begin() + static_cast<std::ptrdiff_t>((first + count) * per)));
}

bool bitwise_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace qsdc
