#include <algorithm>

#include "propagate_internal.hpp"
#include "relprop/error.hpp"
#include "relprop/kernels.hpp"

namespace relprop::lrp::detail {
namespace {

std::vector<float> transform_weights(std::span<const float> w, const Rule& rule) {
  std::vector<float> out(w.begin(), w.end());
  if (rule.kind == Rule::Kind::Gamma) {
    const auto g = static_cast<float>(rule.gamma);
    for (auto& v : out) v += g * std::max(v, 0.0f);
  }
  return out;
}

void check_sizes(const LinearMap& map, std::span<const double> r_out, const Tensor& bias,
                 const Tensor& input) {
  if (r_out.size() != map.out_size) {
    throw InvalidInput("relevance has " + std::to_string(r_out.size()) +
                       " entries, layer produces " + std::to_string(map.out_size));
  }
  if (input.size() != map.in_size) {
    throw InvalidInput("input activation has " + std::to_string(input.size()) +
                       " entries, layer expects " + std::to_string(map.in_size));
  }
  if (bias.size() != map.bias_period) throw InvalidInput("bias length mismatch");
}

inline double ratio(double r, double z) { return z != 0.0 ? r / z : 0.0; }

}  // namespace

LinearMap dense_map(const Tensor& weights) {
  if (weights.rank() != 2) throw InvalidInput("dense weights must be rank 2 (out x in)");
  const std::size_t rows = weights.dim(0), cols = weights.dim(1);
  LinearMap m;
  m.in_size = cols;
  m.out_size = rows;
  m.bias_period = rows;
  m.apply = [rows, cols](auto x, auto w, auto z) { kernels::matvec(w, rows, cols, x, z); };
  m.apply_transposed = [rows, cols](auto s, auto w, auto out) {
    kernels::matvec_transposed(w, rows, cols, s, out);
  };
  return m;
}

LinearMap conv_map(const Tensor& weights, const Shape& input_shape, std::size_t stride,
                   Padding padding) {
  if (weights.rank() != 4) throw InvalidInput("conv weights must be kh x kw x Cin x Cout");
  const auto g = conv_geometry(input_shape, weights.dim(0), weights.dim(1), weights.dim(3),
                               stride, padding);
  if (weights.dim(2) != g.in_c) throw InvalidInput("conv weights do not match input channels");
  LinearMap m;
  m.in_size = g.input_size();
  m.out_size = g.output_size();
  m.bias_period = g.out_c;
  m.apply = [g](auto x, auto w, auto z) { kernels::conv2d(g, x, w, z); };
  m.apply_transposed = [g](auto s, auto w, auto out) { kernels::conv2d_transposed(g, s, w, out); };
  return m;
}

std::vector<double> propagate_linear(const LinearMap& map, std::span<const double> r_out,
                                     const Tensor& weights, const Tensor& bias,
                                     const Tensor& input, const Rule& rule) {
  if (rule.kind != Rule::Kind::Zero && rule.kind != Rule::Kind::Epsilon &&
      rule.kind != Rule::Kind::Gamma) {
    throw InvalidInput("rule " + rule.describe() + " does not apply to a linear layer");
  }
  check_sizes(map, r_out, bias, input);

  const auto w = transform_weights(weights.values(), rule);
  const auto b = transform_weights(bias.values(), rule);

  std::vector<double> z(map.out_size);
  map.apply(input.values(), w, z);
  std::vector<double> s(map.out_size);
  for (std::size_t k = 0; k < z.size(); ++k) {
    double denom = z[k] + static_cast<double>(b[k % map.bias_period]);
    if (rule.kind == Rule::Kind::Epsilon) denom += denom >= 0.0 ? rule.epsilon : -rule.epsilon;
    s[k] = ratio(r_out[k], denom);
  }

  std::vector<double> c(map.in_size);
  map.apply_transposed(s, w, c);
  const auto a = input.values();
  for (std::size_t j = 0; j < c.size(); ++j) c[j] *= static_cast<double>(a[j]);
  return c;
}

std::vector<double> propagate_zbox(const LinearMap& map, std::span<const double> r_out,
                                   const Tensor& weights, const Tensor& bias,
                                   const Tensor& input, double low, double high) {
  if (!(low < high)) throw InvalidInput("zbox bounds need low < high");
  check_sizes(map, r_out, bias, input);

  const auto w = weights.values();
  std::vector<float> w_pos(w.size()), w_neg(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w_pos[i] = std::max(w[i], 0.0f);
    w_neg[i] = std::min(w[i], 0.0f);
  }
  // The bounds apply to every real input; zero padding stays outside them.
  const std::vector<float> ones(map.in_size, 1.0f);

  std::vector<double> z(map.out_size), z_pos(map.out_size), z_neg(map.out_size);
  map.apply(input.values(), w, z);
  map.apply(ones, w_pos, z_pos);
  map.apply(ones, w_neg, z_neg);
  std::vector<double> s(map.out_size);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double denom = z[k] - low * z_pos[k] - high * z_neg[k] +
                         static_cast<double>(bias[k % map.bias_period]);
    s[k] = ratio(r_out[k], denom);
  }

  std::vector<double> c(map.in_size), c_pos(map.in_size), c_neg(map.in_size);
  map.apply_transposed(s, w, c);
  map.apply_transposed(s, w_pos, c_pos);
  map.apply_transposed(s, w_neg, c_neg);
  const auto a = input.values();
  std::vector<double> r_in(map.in_size);
  for (std::size_t j = 0; j < r_in.size(); ++j) {
    r_in[j] = static_cast<double>(a[j]) * c[j] - low * c_pos[j] - high * c_neg[j];
  }
  return r_in;
}

std::vector<double> propagate_pool(std::span<const double> r_out, std::size_t in_size,
                                   std::span<const std::size_t> winners) {
  if (winners.size() != r_out.size()) {
    throw ConsistencyError("pooling winners do not match the relevance being routed");
  }
  std::vector<double> r_in(in_size, 0.0);
  for (std::size_t o = 0; o < r_out.size(); ++o) {
    if (winners[o] >= in_size) {
      throw ConsistencyError("pooling winner index " + std::to_string(winners[o]) +
                             " outside input of size " + std::to_string(in_size));
    }
    r_in[winners[o]] += r_out[o];
  }
  return r_in;
}

}  // namespace relprop::lrp::detail
