#pragma once

// Dense double-precision inner loops. Every kernel has a portable scalar
// reference and an AVX2+FMA variant; the variant is chosen once at runtime
// from CPUID and can be pinned through EDGELAM_ISA=scalar|avx2.
//
// All matrices are row-major with explicit leading dimensions so callers can
// address column slices in place.

#include <cstddef>
#include <string_view>

namespace edgelam::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[M x N] = A[M x K] * B[K x N]
  void (*gemm)(std::size_t m, std::size_t k, std::size_t n,
               const double* a, std::size_t lda,
               const double* b, std::size_t ldb,
               double* c, std::size_t ldc);
  // y[M] = A[M x N] * x[N]
  void (*gemv)(std::size_t m, std::size_t n, const double* a, std::size_t lda,
               const double* x, double* y);
};

const KernelTable& scalar_table();
// Returns nullptr when the binary was built without AVX2 support.
const KernelTable* avx2_table();

bool isa_supported(Isa isa);

// The table in use by every caller in the library.
const KernelTable& active();

// Pins the active table; throws invalid-parameter if the CPU lacks `isa`.
void select(Isa isa);

std::string_view isa_name(Isa isa);

inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline void gemm(std::size_t m, std::size_t k, std::size_t n, const double* a,
                 std::size_t lda, const double* b, std::size_t ldb, double* c,
                 std::size_t ldc) {
  active().gemm(m, k, n, a, lda, b, ldb, c, ldc);
}
inline void gemv(std::size_t m, std::size_t n, const double* a, std::size_t lda,
                 const double* x, double* y) {
  active().gemv(m, n, a, lda, x, y);
}

}  // namespace edgelam::kernels
