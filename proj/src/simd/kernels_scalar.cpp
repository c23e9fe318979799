#include <cmath>

#include "usermodel/simd/kernels.hpp"

namespace usermodel::simd {
namespace {

float dot_scalar(const float* a, const float* b, std::size_t n) {
  float sum = 0.0f;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matvec_scalar(const float* w, const float* x, float* y, std::size_t rows,
                   std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_scalar(w + r * cols, x, cols);
}

void rmsnorm_scalar(const float* x, const float* gain, float* out,
                    std::size_t n, float eps) {
  float ss = dot_scalar(x, x, n);
  const float inv = 1.0f / std::sqrt(ss / static_cast<float>(n) + eps);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * inv * gain[i];
}

void add_scalar(const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::kScalar, dot_scalar, axpy_scalar,
                                 matvec_scalar, rmsnorm_scalar, add_scalar};
  return table;
}

}  // namespace usermodel::simd
