#pragma once

// Double-precision propagation core shared by the public single-layer rules
// and relevance_map. Relevance stays in double between layers so that
// conservation is limited by the model, not by float round-off.

#include <functional>
#include <span>
#include <vector>

#include "relprop/lrp.hpp"

namespace relprop::lrp::detail {

/// A Conv2D or Dense layer viewed as the linear map x -> Wx.
struct LinearMap {
  std::size_t in_size = 0;
  std::size_t out_size = 0;
  std::size_t bias_period = 0;  // bias index = output index % bias_period
  std::function<void(std::span<const float> x, std::span<const float> w, std::span<double> z)>
      apply;
  std::function<void(std::span<const double> s, std::span<const float> w, std::span<double> out)>
      apply_transposed;
};

LinearMap dense_map(const Tensor& weights);
LinearMap conv_map(const Tensor& weights, const Shape& input_shape, std::size_t stride,
                   Padding padding);

std::vector<double> propagate_linear(const LinearMap& map, std::span<const double> r_out,
                                     const Tensor& weights, const Tensor& bias,
                                     const Tensor& input, const Rule& rule);

std::vector<double> propagate_zbox(const LinearMap& map, std::span<const double> r_out,
                                   const Tensor& weights, const Tensor& bias,
                                   const Tensor& input, double low, double high);

std::vector<double> propagate_pool(std::span<const double> r_out, std::size_t in_size,
                                   std::span<const std::size_t> winners);

}  // namespace relprop::lrp::detail
