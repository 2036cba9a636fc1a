#pragma once

// Per-row bodies shared by the serial and OpenMP kernels. Keeping the
// arithmetic in one place is what makes the two paths bitwise identical.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

namespace metareid::kernels::detail {

template <typename T>
inline void matmul_row(const T* a_row, const T* b, T* c_row, std::size_t k, std::size_t n) {
  std::fill(c_row, c_row + n, T{0});
  for (std::size_t p = 0; p < k; ++p) {
    const T aip = a_row[p];
    const T* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) {
      c_row[j] += aip * b_row[j];
    }
  }
}

template <typename T>
inline T sqdist(const T* x, const T* y, std::size_t dim) {
  T acc{0};
  for (std::size_t d = 0; d < dim; ++d) {
    const T diff = x[d] - y[d];
    acc += diff * diff;
  }
  return acc;
}

template <typename T>
inline void pairwise_row(const T* x, T* out_row, std::size_t i, std::size_t rows, std::size_t dim) {
  const T* xi = x + i * dim;
  for (std::size_t j = 0; j < rows; ++j) {
    out_row[j] = (i == j) ? T{0} : sqdist(xi, x + j * dim, dim);
  }
}

template <typename T>
inline void cross_row(const T* qi, const T* g, T* out_row, std::size_t ng, std::size_t dim) {
  for (std::size_t j = 0; j < ng; ++j) {
    out_row[j] = sqdist(qi, g + j * dim, dim);
  }
}

template <typename T>
inline T logsumexp_row(const T* x, std::size_t cols) {
  const T m = *std::max_element(x, x + cols);
  if (!std::isfinite(m)) return m;
  T acc{0};
  for (std::size_t j = 0; j < cols; ++j) acc += std::exp(x[j] - m);
  return m + std::log(acc);
}

}  // namespace metareid::kernels::detail
