#pragma once

// Dense inner loops used by the autodiff ops and the retrieval evaluator.
//
// Every kernel exists twice: a plain serial reference and an OpenMP version
// that splits the outermost row loop across threads. Each output element is
// accumulated in the same order in both, so the two agree bitwise; the tests
// rely on that. The unqualified entry points dispatch on problem size.

#include <cstddef>
#include <span>

namespace metareid::kernels {

namespace serial {

// c[m,n] = a[m,k] * b[k,n]
template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n);

// out[cols,rows] = in[rows,cols]^T
template <typename T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols);

// out[i,j] = sum_k (x[i,k] - x[j,k])^2, exact zero on the diagonal
template <typename T>
void pairwise_sqdist(std::span<const T> x, std::span<T> out, std::size_t rows, std::size_t dim);

// out[i,j] = sum_k (q[i,k] - g[j,k])^2
template <typename T>
void cross_sqdist(std::span<const T> q, std::span<const T> g, std::span<T> out, std::size_t nq,
                  std::size_t ng, std::size_t dim);

// out[i] = log sum_j exp(x[i,j]), shifted by the row max
template <typename T>
void logsumexp_rows(std::span<const T> x, std::span<T> out, std::size_t rows, std::size_t cols);

}  // namespace serial

namespace parallel {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n);

template <typename T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols);

template <typename T>
void pairwise_sqdist(std::span<const T> x, std::span<T> out, std::size_t rows, std::size_t dim);

template <typename T>
void cross_sqdist(std::span<const T> q, std::span<const T> g, std::span<T> out, std::size_t nq,
                  std::size_t ng, std::size_t dim);

template <typename T>
void logsumexp_rows(std::span<const T> x, std::span<T> out, std::size_t rows, std::size_t cols);

}  // namespace parallel

/// True when the library was compiled with OpenMP.
bool openmp_enabled();

/// Work (multiply-adds) below which the dispatchers stay serial.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n) {
  if (m * k * n >= kParallelThreshold && m > 1) {
    parallel::matmul(a, b, c, m, k, n);
  } else {
    serial::matmul(a, b, c, m, k, n);
  }
}

template <typename T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols) {
  serial::transpose(in, out, rows, cols);
}

template <typename T>
void pairwise_sqdist(std::span<const T> x, std::span<T> out, std::size_t rows, std::size_t dim) {
  if (rows * rows * dim >= kParallelThreshold) {
    parallel::pairwise_sqdist(x, out, rows, dim);
  } else {
    serial::pairwise_sqdist(x, out, rows, dim);
  }
}

template <typename T>
void cross_sqdist(std::span<const T> q, std::span<const T> g, std::span<T> out, std::size_t nq,
                  std::size_t ng, std::size_t dim) {
  if (nq * ng * dim >= kParallelThreshold) {
    parallel::cross_sqdist(q, g, out, nq, ng, dim);
  } else {
    serial::cross_sqdist(q, g, out, nq, ng, dim);
  }
}

template <typename T>
void logsumexp_rows(std::span<const T> x, std::span<T> out, std::size_t rows, std::size_t cols) {
  if (rows * cols >= kParallelThreshold) {
    parallel::logsumexp_rows(x, out, rows, cols);
  } else {
    serial::logsumexp_rows(x, out, rows, cols);
  }
}

}  // namespace metareid::kernels
