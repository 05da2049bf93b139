// Reference kernels. These define the accumulation order every other
// backend has to reproduce.

#include <algorithm>

#include "relprop/kernels.hpp"

namespace relprop::kernels::scalar {
namespace {

void matvec(std::span<const float> w, std::size_t rows, std::size_t cols,
            std::span<const float> x, std::span<double> out) {
  for (std::size_t k = 0; k < rows; ++k) {
    const float* row = w.data() + k * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      acc += static_cast<double>(row[j]) * static_cast<double>(x[j]);
    }
    out[k] = acc;
  }
}

void matvec_transposed(std::span<const float> w, std::size_t rows, std::size_t cols,
                       std::span<const double> s, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t k = 0; k < rows; ++k) {
    const float* row = w.data() + k * cols;
    const double sk = s[k];
    for (std::size_t j = 0; j < cols; ++j) {
      out[j] += static_cast<double>(row[j]) * sk;
    }
  }
}

void conv2d(const ConvGeometry& g, std::span<const float> input,
            std::span<const float> weights, std::span<double> out) {
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      double* dst = out.data() + (oy * g.out_w + ox) * g.out_c;
      for (std::size_t co = 0; co < g.out_c; ++co) {
        double acc = 0.0;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            const float* px = input.data() + (iy * g.in_w + ix) * g.in_c;
            const float* wk = weights.data() + (ky * g.kernel_w + kx) * g.in_c * g.out_c;
            for (std::size_t ci = 0; ci < g.in_c; ++ci) {
              acc += static_cast<double>(px[ci]) * static_cast<double>(wk[ci * g.out_c + co]);
            }
          }
        }
        dst[co] = acc;
      }
    }
  }
}

void conv2d_transposed(const ConvGeometry& g, std::span<const double> s,
                       std::span<const float> weights, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const double* src = s.data() + (oy * g.out_w + ox) * g.out_c;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                        static_cast<std::ptrdiff_t>(g.pad_top);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                          static_cast<std::ptrdiff_t>(g.pad_left);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
          double* dst = out.data() + (iy * g.in_w + ix) * g.in_c;
          const float* wk = weights.data() + (ky * g.kernel_w + kx) * g.in_c * g.out_c;
          for (std::size_t co = 0; co < g.out_c; ++co) {
            for (std::size_t ci = 0; ci < g.in_c; ++ci) {
              dst[ci] += static_cast<double>(wk[ci * g.out_c + co]) * src[co];
            }
          }
        }
      }
    }
  }
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{matvec, matvec_transposed, conv2d, conv2d_transposed};
  return t;
}

}  // namespace relprop::kernels::scalar
