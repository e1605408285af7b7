#include "mtnas/kernels/kernels.hpp"

namespace mtnas::kernels {
namespace {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      double acc = crow[j];
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      crow[j] = acc;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* d,
             double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    double* crow = c + p * n;
    for (std::size_t j = 0; j < n; ++j) {
      double acc = crow[j];
      for (std::size_t i = 0; i < m; ++i) acc += a[i * k + p] * d[i * n + j];
      crow[j] = acc;
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* d, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += d[i * n + j] * b[p * n + j];
      c[i * k + p] += acc;
    }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot(std::size_t n, const double* x, const double* y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void mul_acc(std::size_t n, const double* a, const double* b, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

constexpr KernelTable kScalar{"scalar", gemm_nn, gemm_tn, gemm_nt, axpy, dot, mul_acc};

}  // namespace

const KernelTable& scalar() { return kScalar; }

}  // namespace mtnas::kernels
