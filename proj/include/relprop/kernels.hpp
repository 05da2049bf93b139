#pragma once

// Arithmetic inner loops shared by inference, finetuning and relevance
// propagation. Every kernel has a scalar reference implementation and, where
// the CPU allows, a SIMD variant selected at runtime. Variants vectorize
// across independent outputs only, so each output element sees the same
// sequence of double-precision additions in every backend: results are
// bit-identical, not merely close.

#include <cstddef>
#include <span>
#include <string_view>

namespace relprop::kernels {

enum class Backend { Scalar, Avx2 };

std::string_view backend_name(Backend backend);

/// True when the backend is compiled in and supported by this CPU.
bool available(Backend backend);

/// Backend used by the dispatched entry points. Chosen on first use: AVX2
/// when available, unless RELPROP_KERNELS=scalar is set in the environment.
Backend active_backend();
void set_active_backend(Backend backend);

struct ConvGeometry {
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t kernel_h = 0, kernel_w = 0, out_c = 0;
  std::size_t stride = 1;
  std::size_t pad_top = 0, pad_left = 0;
  std::size_t out_h = 0, out_w = 0;

  std::size_t input_size() const { return in_h * in_w * in_c; }
  std::size_t output_size() const { return out_h * out_w * out_c; }
  std::size_t weight_size() const { return kernel_h * kernel_w * in_c * out_c; }
};

/// out[k] = sum_j w[k*cols + j] * x[j], j ascending.
using MatvecFn = void (*)(std::span<const float> w, std::size_t rows, std::size_t cols,
                          std::span<const float> x, std::span<double> out);

/// out[j] = sum_k w[k*cols + j] * s[k], k ascending.
using MatvecTransposedFn = void (*)(std::span<const float> w, std::size_t rows,
                                    std::size_t cols, std::span<const double> s,
                                    std::span<double> out);

/// Cross-correlation without bias. Input H x W x Cin, weights
/// kh x kw x Cin x Cout, output H' x W' x Cout. Per output element the
/// terms are added in (ky, kx, ci) order; taps falling in the zero padding
/// are skipped.
using Conv2dFn = void (*)(const ConvGeometry& g, std::span<const float> input,
                          std::span<const float> weights, std::span<double> out);

/// Adjoint of Conv2dFn: scatters output-space values s back to input space.
/// Per input element the terms are added in (oy, ox, ky, kx, co) order.
using Conv2dTransposedFn = void (*)(const ConvGeometry& g, std::span<const double> s,
                                    std::span<const float> weights, std::span<double> out);

struct KernelTable {
  MatvecFn matvec;
  MatvecTransposedFn matvec_transposed;
  Conv2dFn conv2d;
  Conv2dTransposedFn conv2d_transposed;
};

/// Throws InvalidInput if the backend is not available.
const KernelTable& table(Backend backend);

namespace scalar {
const KernelTable& table();
}

namespace avx2 {
/// Only meaningful when available(Backend::Avx2).
const KernelTable& table();
}

// Dispatched entry points with size checking.
void matvec(std::span<const float> w, std::size_t rows, std::size_t cols,
            std::span<const float> x, std::span<double> out);
void matvec_transposed(std::span<const float> w, std::size_t rows, std::size_t cols,
                       std::span<const double> s, std::span<double> out);
void conv2d(const ConvGeometry& g, std::span<const float> input,
            std::span<const float> weights, std::span<double> out);
void conv2d_transposed(const ConvGeometry& g, std::span<const double> s,
                       std::span<const float> weights, std::span<double> out);

}  // namespace relprop::kernels
