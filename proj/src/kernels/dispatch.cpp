#include <atomic>
#include <cstdlib>
#include <string>

#include "relprop/error.hpp"
#include "relprop/kernels.hpp"

namespace relprop::kernels {

#ifndef RELPROP_HAVE_AVX2
namespace avx2 {
const KernelTable& table() { throw InvalidInput("AVX2 kernels were not compiled in"); }
}  // namespace avx2
#endif

namespace {

constexpr int kUnset = -1;
std::atomic<int> g_active{kUnset};

Backend pick_default() {
  if (const char* env = std::getenv("RELPROP_KERNELS")) {
    const std::string choice(env);
    if (choice == "scalar") return Backend::Scalar;
    if (choice == "avx2" && available(Backend::Avx2)) return Backend::Avx2;
  }
  return available(Backend::Avx2) ? Backend::Avx2 : Backend::Scalar;
}

void check(bool ok, const char* what) {
  if (!ok) throw InvalidInput(std::string("kernel size mismatch: ") + what);
}

}  // namespace

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
  }
  return "unknown";
}

bool available(Backend backend) {
  switch (backend) {
    case Backend::Scalar: return true;
    case Backend::Avx2:
#if defined(RELPROP_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Backend active_backend() {
  int current = g_active.load(std::memory_order_acquire);
  if (current == kUnset) {
    int chosen = static_cast<int>(pick_default());
    g_active.compare_exchange_strong(current, chosen, std::memory_order_acq_rel);
    current = g_active.load(std::memory_order_acquire);
  }
  return static_cast<Backend>(current);
}

void set_active_backend(Backend backend) {
  if (!available(backend)) {
    throw InvalidInput("kernel backend '" + std::string(backend_name(backend)) +
                       "' is not available on this machine");
  }
  g_active.store(static_cast<int>(backend), std::memory_order_release);
}

const KernelTable& table(Backend backend) {
  if (!available(backend)) {
    throw InvalidInput("kernel backend '" + std::string(backend_name(backend)) +
                       "' is not available on this machine");
  }
  return backend == Backend::Avx2 ? avx2::table() : scalar::table();
}

void matvec(std::span<const float> w, std::size_t rows, std::size_t cols,
            std::span<const float> x, std::span<double> out) {
  check(w.size() == rows * cols && x.size() == cols && out.size() == rows, "matvec");
  table(active_backend()).matvec(w, rows, cols, x, out);
}

void matvec_transposed(std::span<const float> w, std::size_t rows, std::size_t cols,
                       std::span<const double> s, std::span<double> out) {
  check(w.size() == rows * cols && s.size() == rows && out.size() == cols,
        "matvec_transposed");
  table(active_backend()).matvec_transposed(w, rows, cols, s, out);
}

void conv2d(const ConvGeometry& g, std::span<const float> input,
            std::span<const float> weights, std::span<double> out) {
  check(input.size() == g.input_size() && weights.size() == g.weight_size() &&
            out.size() == g.output_size(),
        "conv2d");
  table(active_backend()).conv2d(g, input, weights, out);
}

void conv2d_transposed(const ConvGeometry& g, std::span<const double> s,
                       std::span<const float> weights, std::span<double> out) {
  check(s.size() == g.output_size() && weights.size() == g.weight_size() &&
            out.size() == g.input_size(),
        "conv2d_transposed");
  table(active_backend()).conv2d_transposed(g, s, weights, out);
}

}  // namespace relprop::kernels
