#pragma once

// Dense float kernels used by the engine and the probe trainer.
//
// Every kernel has a scalar reference implementation. Vector variants
// (AVX2+FMA on x86-64, NEON on aarch64) are selected once at startup from
// the CPU feature bits; USERMODEL_KERNELS=scalar|avx2|neon overrides the
// choice. The selected table never changes during a process, so results
// are bit-stable within a run and across runs on the same machine.

#include <cstddef>
#include <span>
#include <string_view>

namespace usermodel::simd {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  float (*dot)(const float* a, const float* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
  // y[r] = sum_c w[r * cols + c] * x[c]; w is row-major rows x cols
  void (*matvec)(const float* w, const float* x, float* y, std::size_t rows,
                 std::size_t cols);
  // out[i] = x[i] * gain[i] / sqrt(mean(x^2) + eps)
  void (*rmsnorm)(const float* x, const float* gain, float* out, std::size_t n,
                  float eps);
  // y[i] += x[i]
  void (*add)(const float* x, float* y, std::size_t n);
};

const KernelTable& scalar_kernels();
// nullptr when the variant is not compiled in or the CPU lacks the feature.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// The process-wide active table.
const KernelTable& kernels();

// Convenience wrappers over the active table.
inline float dot(std::span<const float> a, std::span<const float> b) {
  return kernels().dot(a.data(), b.data(), a.size());
}

inline void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  kernels().axpy(alpha, x.data(), y.data(), x.size());
}

inline void add(std::span<const float> x, std::span<float> y) {
  kernels().add(x.data(), y.data(), x.size());
}

}  // namespace usermodel::simd
