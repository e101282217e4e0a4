#include "quisg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace quisg::kernels {

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelGrain = 1 << 15;
}  // namespace

void matmul_nn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelGrain)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const double* ai = a + i * static_cast<std::ptrdiff_t>(k);
    double* ci = c + i * static_cast<std::ptrdiff_t>(n);
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * b[p * n + j];
      ci[j] = accumulate ? ci[j] + acc : acc;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelGrain)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const double* ai = a + i * static_cast<std::ptrdiff_t>(k);
    double* ci = c + i * static_cast<std::ptrdiff_t>(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + acc : acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelGrain)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* ci = c + i * static_cast<std::ptrdiff_t>(n);
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      ci[j] = accumulate ? ci[j] + acc : acc;
    }
  }
}

namespace {

inline std::ptrdiff_t softmax_row(const double* x, const std::uint8_t* mask,
                                  double* y, std::size_t cols) {
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < cols; ++j) {
    if (mask[j]) {
      any = true;
      mx = std::max(mx, x[j]);
    }
  }
  if (!any) return 1;
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    if (mask[j]) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    } else {
      y[j] = 0.0;
    }
  }
  for (std::size_t j = 0; j < cols; ++j) {
    if (mask[j]) y[j] /= sum;
  }
  return 0;
}

}  // namespace

std::ptrdiff_t softmax_rows_masked(const double* x, const std::uint8_t* mask,
                                   double* y, std::size_t rows,
                                   std::size_t cols) {
  std::ptrdiff_t bad = -1;
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelGrain)
  for (std::ptrdiff_t i = 0; i < r; ++i) {
    if (softmax_row(x + i * static_cast<std::ptrdiff_t>(cols),
                    mask + i * static_cast<std::ptrdiff_t>(cols),
                    y + i * static_cast<std::ptrdiff_t>(cols), cols)) {
#pragma omp critical
      {
        if (bad < 0 || i < bad) bad = i;
      }
    }
  }
  return bad;
}

void add(const double* a, const double* b, double* c, std::size_t n) {
  const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n > kParallelGrain)
  for (std::ptrdiff_t i = 0; i < len; ++i) c[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* c, std::size_t n) {
  const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n > kParallelGrain)
  for (std::ptrdiff_t i = 0; i < len; ++i) c[i] = a[i] * b[i];
}

namespace serial {

void matmul_nn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

std::ptrdiff_t softmax_rows_masked(const double* x, const std::uint8_t* mask,
                                   double* y, std::size_t rows,
                                   std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    if (softmax_row(x + i * cols, mask + i * cols, y + i * cols, cols)) {
      return static_cast<std::ptrdiff_t>(i);
    }
  }
  return -1;
}

void add(const double* a, const double* b, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

}  // namespace serial

}  // namespace quisg::kernels
