#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "quisg/errors.hpp"

namespace quisg::nn {

// All tensors are dense row-major matrices of 64-bit floats. Vectors are
// rows (1 x n) or columns (n x 1); scalars are 1 x 1.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

namespace detail {

struct Storage {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward first touches it
  bool requires_grad = false;
};

}  // namespace detail

// Value-semantics handle onto shared storage. Copies alias the same data;
// gradients accumulate into the shared buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor constant(Shape shape, double value);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor row_vector(std::vector<double> values);
  static Tensor col_vector(std::vector<double> values);

  bool defined() const { return static_cast<bool>(st_); }
  const Shape& shape() const { return st_->shape; }
  std::size_t rows() const { return st_->shape.rows; }
  std::size_t cols() const { return st_->shape.cols; }
  std::size_t size() const { return st_->shape.size(); }
  bool requires_grad() const { return st_->requires_grad; }

  double at(std::size_t r, std::size_t c) const {
    return st_->values[r * cols() + c];
  }
  void set(std::size_t r, std::size_t c, double v) {
    st_->values[r * cols() + c] = v;
  }
  // Scalar convenience; requires size() == 1.
  double value() const;

  std::span<const double> values() const { return st_->values; }
  std::span<double> values_mut() { return st_->values; }
  const double* data() const { return st_->values.data(); }
  double* data_mut() { return st_->values.data(); }

  // Gradient of the last recorded scalar w.r.t. this tensor; zeros when
  // backward never reached it.
  std::vector<double> grad() const;
  bool has_grad() const { return !st_->grad.empty(); }

  bool same_storage(const Tensor& other) const { return st_ == other.st_; }

  std::shared_ptr<detail::Storage> storage() const { return st_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Storage> st) : st_(std::move(st)) {}

  std::shared_ptr<detail::Storage> st_;

  friend class Tape;
};

// Throws NumericError naming `op` if any value is NaN or Inf.
void check_finite(const Tensor& t, const char* op);

}  // namespace quisg::nn
