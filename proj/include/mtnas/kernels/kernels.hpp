#pragma once

// Dense double-precision kernels behind the autodiff ops.
//
// Every kernel has a scalar reference implementation and, on x86-64 builds,
// an AVX2+FMA variant. The variant is chosen once at startup from CPUID and
// can be forced with MTNAS_KERNELS=scalar|avx2. Within one variant every
// output row depends only on the matching input row, so results do not change
// with batch composition.

#include <cstddef>
#include <string_view>

namespace mtnas::kernels {

struct KernelTable {
  const char* name;
  /// c[m×n] += a[m×k] · b[k×n]
  void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c);
  /// c[k×n] += aᵀ · d, with a[m×k] and d[m×n]
  void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* d,
                  double* c);
  /// c[m×k] += d · bᵀ, with d[m×n] and b[k×n]
  void (*gemm_nt)(std::size_t m, std::size_t k, std::size_t n, const double* d, const double* b,
                  double* c);
  /// y += alpha · x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  double (*dot)(std::size_t n, const double* x, const double* y);
  /// y += a ⊙ b
  void (*mul_acc)(std::size_t n, const double* a, const double* b, double* y);
};

const KernelTable& scalar();

/// AVX2+FMA table, or nullptr when not compiled in or not supported by the CPU.
const KernelTable* avx2();

/// Table used by the autodiff ops.
const KernelTable& active();

/// Overrides the active table (tests and benchmarks).
void use(const KernelTable& table);

/// Looks a table up by name ("scalar", "avx2"); nullptr when unavailable.
const KernelTable* find(std::string_view name);

}  // namespace mtnas::kernels
