#include "quisg/tensor.hpp"

#include <cmath>

namespace quisg::nn {

std::string to_string(const Shape& s) {
  return std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto st = std::make_shared<detail::Storage>();
  st->shape = shape;
  st->values.assign(shape.size(), 0.0);
  st->requires_grad = requires_grad;
  return Tensor(std::move(st));
}

Tensor Tensor::constant(Shape shape, double value) {
  auto st = std::make_shared<detail::Storage>();
  st->shape = shape;
  st->values.assign(shape.size(), value);
  return Tensor(std::move(st));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  if (values.size() != shape.size()) {
    throw DimensionError("from_values: " + std::to_string(values.size()) +
                         " values for shape " + to_string(shape));
  }
  auto st = std::make_shared<detail::Storage>();
  st->shape = shape;
  st->values = std::move(values);
  st->requires_grad = requires_grad;
  return Tensor(std::move(st));
}

Tensor Tensor::scalar(double value) {
  return from_values({1, 1}, {value});
}

Tensor Tensor::row_vector(std::vector<double> values) {
  Shape s{1, values.size()};
  return from_values(s, std::move(values));
}

Tensor Tensor::col_vector(std::vector<double> values) {
  Shape s{values.size(), 1};
  return from_values(s, std::move(values));
}

double Tensor::value() const {
  if (size() != 1) {
    throw DimensionError("value(): tensor is " + to_string(shape()) +
                         ", expected 1x1");
  }
  return st_->values[0];
}

std::vector<double> Tensor::grad() const {
  if (st_->grad.empty()) return std::vector<double>(size(), 0.0);
  return st_->grad;
}

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
}

}  // namespace quisg::nn
