#include "usermodel/simd/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

namespace usermodel::simd {
namespace {

float dot_neon(const float* a, const float* b, std::size_t n) {
  float32x4_t acc0 = vdupq_n_f32(0.0f);
  float32x4_t acc1 = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
    acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
  }
  float sum = vaddvq_f32(vaddq_f32(acc0, acc1));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy_neon(float alpha, const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    vst1q_f32(y + i, vfmaq_n_f32(vld1q_f32(y + i), vld1q_f32(x + i), alpha));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void matvec_neon(const float* w, const float* x, float* y, std::size_t rows,
                 std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_neon(w + r * cols, x, cols);
}

void rmsnorm_neon(const float* x, const float* gain, float* out, std::size_t n,
                  float eps) {
  const float inv = 1.0f / std::sqrt(dot_neon(x, x, n) / static_cast<float>(n) + eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    vst1q_f32(out + i,
              vmulq_f32(vmulq_n_f32(vld1q_f32(x + i), inv), vld1q_f32(gain + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * inv * gain[i];
}

void add_neon(const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    vst1q_f32(y + i, vaddq_f32(vld1q_f32(y + i), vld1q_f32(x + i)));
  }
  for (; i < n; ++i) y[i] += x[i];
}

}  // namespace

const KernelTable* neon_kernels() {
  static const KernelTable table{Isa::kNeon, dot_neon, axpy_neon, matvec_neon,
                                 rmsnorm_neon, add_neon};
  return &table;
}

}  // namespace usermodel::simd

#else

namespace usermodel::simd {
const KernelTable* neon_kernels() { return nullptr; }
}  // namespace usermodel::simd

#endif
