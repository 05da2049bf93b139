#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace relprop {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float32 array. Immutable once constructed: every
/// operation returns a new tensor, so a const Tensor can be shared freely
/// across threads.
class Tensor {
 public:
  /// Rank-1 tensor holding a single zero. Exists so Tensor is regular.
  Tensor();
  Tensor(Shape shape, std::vector<float> data);
  Tensor(Shape shape, std::initializer_list<float> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, float value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> values() const noexcept { return data_; }
  float operator[](std::size_t flat) const { return data_[flat]; }
  float at(std::span<const std::size_t> index) const;
  float at(std::initializer_list<std::size_t> index) const;

  std::size_t flat_offset(std::span<const std::size_t> index) const;
  std::vector<std::size_t> multi_index(std::size_t flat) const;

  /// Same data, new shape of equal element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  /// Moves the payload out; the tensor is left as the default value.
  std::vector<float> release() &&;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

enum class ElementwiseOp { Add, Sub, Mul, Max };

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);

/// y[k] = sum_j w[k, j] * a[j], accumulated in double left to right.
Tensor matvec(const Tensor& w, const Tensor& a);

/// Left-to-right double accumulation over the flat data.
double sum(const Tensor& t);
float max_value(const Tensor& t);
/// Ties resolve to the lowest flat index.
std::size_t argmax(const Tensor& t);
std::size_t argmax(std::span<const float> values);

/// Bitwise equality of shapes and payloads (distinguishes -0.0 and NaN
/// payloads, unlike operator==).
bool bit_identical(const Tensor& a, const Tensor& b);

}  // namespace relprop
