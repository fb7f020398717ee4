#include "rlaux/nn/tensor.hpp"

#include <cmath>
#include <sstream>

#include "rlaux/error.hpp"

namespace rlaux::nn {

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

namespace {

void validate_shape(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive");
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_product(shape_), 0.0f);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
  }
}

Tensor Tensor::from_matrix(const MatrixF& m) {
  std::vector<float> data(m.data(), m.data() + m.size());
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                std::move(data));
}

std::size_t Tensor::row_size() const {
  return shape_.empty() ? 0 : data_.size() / shape_[0];
}

Eigen::Map<MatrixF> Tensor::matrix() {
  return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(row_size())};
}

Eigen::Map<const MatrixF> Tensor::matrix() const {
  return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(row_size())};
}

void Tensor::check_finite(const std::string& what) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw DomainError(what + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  return os.str();
}

}  // namespace rlaux::nn
