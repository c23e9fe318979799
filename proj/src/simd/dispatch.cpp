#include <cstdlib>
#include <string>

#include "usermodel/simd/kernels.hpp"

namespace usermodel::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

namespace {

const KernelTable& select() {
  const char* forced = std::getenv("USERMODEL_KERNELS");
  if (forced != nullptr) {
    const std::string want(forced);
    if (want == "scalar") return scalar_kernels();
    if (want == "avx2" && avx2_kernels() != nullptr) return *avx2_kernels();
    if (want == "neon" && neon_kernels() != nullptr) return *neon_kernels();
  }
  if (const KernelTable* t = avx2_kernels()) return *t;
  if (const KernelTable* t = neon_kernels()) return *t;
  return scalar_kernels();
}

}  // namespace

const KernelTable& kernels() {
  static const KernelTable& active = select();
  return active;
}

}  // namespace usermodel::simd
