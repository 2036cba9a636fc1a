#include "metareid/kernels.hpp"

#include "kernel_rows.hpp"

namespace metareid::kernels::serial {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    detail::matmul_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
  }
}

template <typename T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      out[j * rows + i] = in[i * cols + j];
    }
  }
}

template <typename T>
void pairwise_sqdist(std::span<const T> x, std::span<T> out, std::size_t rows, std::size_t dim) {
  for (std::size_t i = 0; i < rows; ++i) {
    detail::pairwise_row(x.data(), out.data() + i * rows, i, rows, dim);
  }
}

template <typename T>
void cross_sqdist(std::span<const T> q, std::span<const T> g, std::span<T> out, std::size_t nq,
                  std::size_t ng, std::size_t dim) {
  for (std::size_t i = 0; i < nq; ++i) {
    detail::cross_row(q.data() + i * dim, g.data(), out.data() + i * ng, ng, dim);
  }
}

template <typename T>
void logsumexp_rows(std::span<const T> x, std::span<T> out, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    out[i] = detail::logsumexp_row(x.data() + i * cols, cols);
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

}  // namespace metareid::kernels::serial
