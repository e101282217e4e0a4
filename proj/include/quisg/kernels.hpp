#pragma once

#include <cstddef>
#include <cstdint>

// Dense kernels used by the tape primitives. Each kernel has an OpenMP
// variant (default) and a serial reference variant under kernels::serial.
// The parallel variants assign every output element to exactly one thread
// and keep the per-element accumulation order identical to the serial
// code, so both variants produce bit-identical results.

namespace quisg::kernels {

// c = a(m x k) * b(k x n), row-major. accumulate=true adds into c.
void matmul_nn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);

// c = a(m x k) * b(n x k)^T
void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);

// c = a(k x m)^T * b(k x n)
void matmul_tn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);

// Row-wise masked softmax. x, y: rows x cols. mask: same layout, nonzero
// entries participate; masked entries of y are exactly 0. A row whose mask
// is all zero is reported through the return value (index of the first
// such row, or -1 when every row is fine) and left unwritten.
std::ptrdiff_t softmax_rows_masked(const double* x, const std::uint8_t* mask,
                                   double* y, std::size_t rows,
                                   std::size_t cols);

void add(const double* a, const double* b, double* c, std::size_t n);
void mul(const double* a, const double* b, double* c, std::size_t n);

namespace serial {

void matmul_nn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);
std::ptrdiff_t softmax_rows_masked(const double* x, const std::uint8_t* mask,
                                   double* y, std::size_t rows,
                                   std::size_t cols);
void add(const double* a, const double* b, double* c, std::size_t n);
void mul(const double* a, const double* b, double* c, std::size_t n);

}  // namespace serial

}  // namespace quisg::kernels
