#include "dfl/tensor.hpp"

#include <cmath>
#include <string>

namespace dfl {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data,
               bool validate)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("tensor shape does not match data length (" +
                         std::to_string(shape_product(shape_)) + " vs " +
                         std::to_string(data_.size()) + ")");
  }
  if (validate && !all_finite()) {
    throw DomainError("tensor contains non-finite values");
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), false);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::row_vector(std::vector<double> data) {
  std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) throw DimensionError("rows() on rank-0 tensor");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) throw DimensionError("cols() on rank-0 tensor");
  return shape_.size() >= 2 ? shape_[1] : 1;
}

double Tensor::item() const {
  if (!is_scalar()) throw DimensionError("item() on non-scalar tensor");
  return data_[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data_[r * cols() + c];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data_[r * cols() + c];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace dfl
