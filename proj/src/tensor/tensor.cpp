#include "relprop/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <utility>

#include "relprop/error.hpp"
#include "relprop/kernels.hpp"

namespace relprop {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

namespace {

void check_shape(const Shape& shape, std::size_t data_size) {
  if (shape.empty()) throw InvalidInput("tensor rank must be at least 1");
  for (auto d : shape) {
    if (d == 0) throw InvalidInput("tensor dimension of size 0 in " + shape_string(shape));
  }
  if (shape_size(shape) != data_size) {
    throw InvalidInput("tensor shape " + shape_string(shape) + " holds " +
                       std::to_string(shape_size(shape)) + " elements, got " +
                       std::to_string(data_size));
  }
}

}  // namespace

Tensor::Tensor() : shape_{1}, data_(1, 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_, data_.size());
}

Tensor::Tensor(Shape shape, std::initializer_list<float> data)
    : Tensor(std::move(shape), std::vector<float>(data)) {}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0f); }

Tensor Tensor::filled(Shape shape, float value) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<float>(n, value));
}

std::size_t Tensor::flat_offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw InvalidInput("index rank " + std::to_string(index.size()) +
                       " does not match tensor rank " + std::to_string(shape_.size()));
  }
  std::size_t flat = 0;
  for (std::size_t axis = 0; axis < shape_.size(); ++axis) {
    if (index[axis] >= shape_[axis]) throw InvalidInput("index out of range");
    flat = flat * shape_[axis] + index[axis];
  }
  return flat;
}

std::vector<std::size_t> Tensor::multi_index(std::size_t flat) const {
  if (flat >= data_.size()) throw InvalidInput("flat index out of range");
  std::vector<std::size_t> index(shape_.size());
  for (std::size_t axis = shape_.size(); axis-- > 0;) {
    index[axis] = flat % shape_[axis];
    flat /= shape_[axis];
  }
  return index;
}

float Tensor::at(std::span<const std::size_t> index) const {
  return data_[flat_offset(index)];
}

float Tensor::at(std::initializer_list<std::size_t> index) const {
  return at(std::span<const std::size_t>(index.begin(), index.size()));
}

Tensor Tensor::reshaped(Shape shape) const& { return Tensor(std::move(shape), data_); }

Tensor Tensor::reshaped(Shape shape) && {
  return Tensor(std::move(shape), std::move(data_));
}

std::vector<float> Tensor::release() && {
  auto out = std::move(data_);
  shape_ = {1};
  data_.assign(1, 0.0f);
  return out;
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw InvalidInput("elementwise shape mismatch: " + shape_string(a.shape()) + " vs " +
                       shape_string(b.shape()));
  }
  const auto x = a.values();
  const auto y = b.values();
  std::vector<float> out(x.size());
  switch (op) {
    case ElementwiseOp::Add:
      std::transform(x.begin(), x.end(), y.begin(), out.begin(), std::plus<>{});
      break;
    case ElementwiseOp::Sub:
      std::transform(x.begin(), x.end(), y.begin(), out.begin(), std::minus<>{});
      break;
    case ElementwiseOp::Mul:
      std::transform(x.begin(), x.end(), y.begin(), out.begin(), std::multiplies<>{});
      break;
    case ElementwiseOp::Max:
      std::transform(x.begin(), x.end(), y.begin(), out.begin(),
                     [](float p, float q) { return std::max(p, q); });
      break;
  }
  return Tensor(a.shape(), std::move(out));
}

Tensor matvec(const Tensor& w, const Tensor& a) {
  if (w.rank() != 2 || a.rank() != 1) {
    throw InvalidInput("matvec expects a rank-2 matrix and a rank-1 vector");
  }
  const auto rows = w.dim(0);
  const auto cols = w.dim(1);
  if (cols != a.dim(0)) {
    throw InvalidInput("matvec dimension mismatch: matrix " + shape_string(w.shape()) +
                       " vs vector of length " + std::to_string(a.dim(0)));
  }
  std::vector<double> acc(rows);
  kernels::matvec(w.values(), rows, cols, a.values(), acc);
  return Tensor({rows}, std::vector<float>(acc.begin(), acc.end()));
}

double sum(const Tensor& t) {
  double acc = 0.0;
  for (float v : t.values()) acc += v;
  return acc;
}

float max_value(const Tensor& t) {
  return t.values()[argmax(t)];
}

std::size_t argmax(std::span<const float> values) {
  if (values.empty()) throw InvalidInput("argmax of an empty sequence");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t argmax(const Tensor& t) { return argmax(t.values()); }

bool bit_identical(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(float)) == 0;
}

}  // namespace relprop
