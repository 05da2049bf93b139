// AVX2 kernels. Four double lanes, each lane owning one output element, so
// per-element accumulation order matches scalar.cpp exactly. Multiply and add
// stay separate (no FMA): a fused product would skip a rounding step the
// reference performs.

#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "relprop/kernels.hpp"

namespace relprop::kernels::avx2 {
namespace {

inline __m256d widen(const float* p) { return _mm256_cvtps_pd(_mm_loadu_ps(p)); }

void matvec(std::span<const float> w, std::size_t rows, std::size_t cols,
            std::span<const float> x, std::span<double> out) {
  std::size_t k = 0;
  for (; k + 4 <= rows; k += 4) {
    const float* r0 = w.data() + (k + 0) * cols;
    const float* r1 = w.data() + (k + 1) * cols;
    const float* r2 = w.data() + (k + 2) * cols;
    const float* r3 = w.data() + (k + 3) * cols;
    __m256d acc = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      __m128 c0 = _mm_loadu_ps(r0 + j);
      __m128 c1 = _mm_loadu_ps(r1 + j);
      __m128 c2 = _mm_loadu_ps(r2 + j);
      __m128 c3 = _mm_loadu_ps(r3 + j);
      _MM_TRANSPOSE4_PS(c0, c1, c2, c3);
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_cvtps_pd(c0), _mm256_set1_pd(x[j + 0])));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_cvtps_pd(c1), _mm256_set1_pd(x[j + 1])));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_cvtps_pd(c2), _mm256_set1_pd(x[j + 2])));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_cvtps_pd(c3), _mm256_set1_pd(x[j + 3])));
    }
    for (; j < cols; ++j) {
      const __m256d col = _mm256_set_pd(r3[j], r2[j], r1[j], r0[j]);
      acc = _mm256_add_pd(acc, _mm256_mul_pd(col, _mm256_set1_pd(x[j])));
    }
    _mm256_storeu_pd(out.data() + k, acc);
  }
  for (; k < rows; ++k) {
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
  double* dst = out.data();
  for (std::size_t k = 0; k < rows; ++k) {
    const float* row = w.data() + k * cols;
    const __m256d sk = _mm256_set1_pd(s[k]);
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      const __m256d cur = _mm256_loadu_pd(dst + j);
      _mm256_storeu_pd(dst + j, _mm256_add_pd(cur, _mm256_mul_pd(widen(row + j), sk)));
    }
    for (; j < cols; ++j) dst[j] += static_cast<double>(row[j]) * s[k];
  }
}

void conv2d(const ConvGeometry& g, std::span<const float> input,
            std::span<const float> weights, std::span<double> out) {
  const auto in_h = static_cast<std::ptrdiff_t>(g.in_h);
  const auto in_w = static_cast<std::ptrdiff_t>(g.in_w);
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      double* dst = out.data() + (oy * g.out_w + ox) * g.out_c;
      std::size_t co = 0;
      for (; co + 4 <= g.out_c; co += 4) {
        __m256d acc = _mm256_setzero_pd();
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= in_h) continue;
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix < 0 || ix >= in_w) continue;
            const float* px = input.data() + (iy * in_w + ix) * g.in_c;
            const float* wk = weights.data() + (ky * g.kernel_w + kx) * g.in_c * g.out_c + co;
            for (std::size_t ci = 0; ci < g.in_c; ++ci) {
              const __m256d xv = _mm256_set1_pd(px[ci]);
              acc = _mm256_add_pd(acc, _mm256_mul_pd(xv, widen(wk + ci * g.out_c)));
            }
          }
        }
        _mm256_storeu_pd(dst + co, acc);
      }
      for (; co < g.out_c; ++co) {
        double acc = 0.0;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= in_h) continue;
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix < 0 || ix >= in_w) continue;
            const float* px = input.data() + (iy * in_w + ix) * g.in_c;
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
  // Re-layout to kh x kw x Cout x Cin so input channels are contiguous.
  std::vector<float> wt(weights.size());
  const std::size_t taps = g.kernel_h * g.kernel_w;
  for (std::size_t t = 0; t < taps; ++t) {
    const float* src = weights.data() + t * g.in_c * g.out_c;
    float* dst = wt.data() + t * g.in_c * g.out_c;
    for (std::size_t ci = 0; ci < g.in_c; ++ci) {
      for (std::size_t co = 0; co < g.out_c; ++co) dst[co * g.in_c + ci] = src[ci * g.out_c + co];
    }
  }

  std::fill(out.begin(), out.end(), 0.0);
  const auto in_h = static_cast<std::ptrdiff_t>(g.in_h);
  const auto in_w = static_cast<std::ptrdiff_t>(g.in_w);
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const double* src = s.data() + (oy * g.out_w + ox) * g.out_c;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                        static_cast<std::ptrdiff_t>(g.pad_top);
        if (iy < 0 || iy >= in_h) continue;
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                          static_cast<std::ptrdiff_t>(g.pad_left);
          if (ix < 0 || ix >= in_w) continue;
          double* dst = out.data() + (iy * in_w + ix) * g.in_c;
          const float* wk = wt.data() + (ky * g.kernel_w + kx) * g.in_c * g.out_c;
          for (std::size_t co = 0; co < g.out_c; ++co) {
            const float* wrow = wk + co * g.in_c;
            const __m256d sv = _mm256_set1_pd(src[co]);
            std::size_t ci = 0;
            for (; ci + 4 <= g.in_c; ci += 4) {
              const __m256d cur = _mm256_loadu_pd(dst + ci);
              _mm256_storeu_pd(dst + ci, _mm256_add_pd(cur, _mm256_mul_pd(widen(wrow + ci), sv)));
            }
            for (; ci < g.in_c; ++ci) dst[ci] += static_cast<double>(wrow[ci]) * src[co];
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

}  // namespace relprop::kernels::avx2
