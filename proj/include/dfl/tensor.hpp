#ifndef DFL_TENSOR_HPP
#define DFL_TENSOR_HPP

#include <cstddef>
#include <vector>

#include "dfl/errors.hpp"

namespace dfl {

/// Dense row-major float64 array. Values are immutable by convention once a
/// tensor has been handed to the autodiff graph; nothing enforces that, so
/// treat shared tensors as read-only.
class Tensor {
 public:
  Tensor() = default;
  /// Validation rejects NaN/Inf; internal ops construct with validate=false.
  Tensor(std::vector<std::size_t> shape, std::vector<double> data,
         bool validate = true);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data);
  static Tensor row_vector(std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// First / second dimension with rank checks; a rank-1 tensor has cols()==1.
  std::size_t rows() const;
  std::size_t cols() const;

  bool is_scalar() const { return data_.size() == 1; }
  double item() const;

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const;
  double& at(std::size_t r, std::size_t c);

  const double* data() const { return data_.data(); }
  double* data() { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace dfl

#endif  // DFL_TENSOR_HPP
