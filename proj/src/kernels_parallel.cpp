#include "metareid/kernels.hpp"

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kernel_rows.hpp"

namespace metareid::kernels {

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

namespace parallel {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    detail::matmul_row(a.data() + r * k, b.data(), c.data() + r * n, k, n);
  }
}

template <typename T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols) {
  const auto n = static_cast<std::int64_t>(cols);
#pragma omp parallel for schedule(static)
  for (std::int64_t jj = 0; jj < n; ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    for (std::size_t i = 0; i < rows; ++i) {
      out[j * rows + i] = in[i * cols + j];
    }
  }
}

template <typename T>
void pairwise_sqdist(std::span<const T> x, std::span<T> out, std::size_t rows, std::size_t dim) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    detail::pairwise_row(x.data(), out.data() + r * rows, r, rows, dim);
  }
}

template <typename T>
void cross_sqdist(std::span<const T> q, std::span<const T> g, std::span<T> out, std::size_t nq,
                  std::size_t ng, std::size_t dim) {
  const auto n = static_cast<std::int64_t>(nq);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    detail::cross_row(q.data() + r * dim, g.data(), out.data() + r * ng, ng, dim);
  }
}

template <typename T>
void logsumexp_rows(std::span<const T> x, std::span<T> out, std::size_t rows, std::size_t cols) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    out[r] = detail::logsumexp_row(x.data() + r * cols, cols);
  }
}

#define METAREID_INSTANTIATE(T)                                                              \
  template void matmul<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, \
                          std::size_t, std::size_t);                                         \
  template void transpose<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t);    \
  template void pairwise_sqdist<T>(std::span<const T>, std::span<T>, std::size_t,            \
                                   std::size_t);                                             \
  template void cross_sqdist<T>(std::span<const T>, std::span<const T>, std::span<T>,        \
                                std::size_t, std::size_t, std::size_t);                      \
  template void logsumexp_rows<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t);

METAREID_INSTANTIATE(float)
METAREID_INSTANTIATE(double)
#undef METAREID_INSTANTIATE

}  // namespace parallel
}  // namespace metareid::kernels
