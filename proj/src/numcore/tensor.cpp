#include "pathweaver/numcore/tensor.hpp"

#include <cmath>
#include <string>

#include "pathweaver/error.hpp"

namespace pathweaver::num {

Tensor::Tensor(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, Real(0)) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<Real> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Tensor Tensor::filled(std::size_t rows, std::size_t cols, Real value) {
  Tensor t(rows, cols);
  t.fill(value);
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<Real> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = Real(1);
  return t;
}

Real Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on a tensor with " + std::to_string(data_.size()) + " elements");
  return data_[0];
}

void Tensor::fill(Real value) {
  for (auto& x : data_) x = value;
}

void Tensor::accumulate(const Tensor& other) {
  if (!same_shape(other)) throw DimensionError("accumulate: shape mismatch");
  const Real* src = other.data();
  Real* dst = data();
  for (std::size_t i = 0, n = data_.size(); i < n; ++i) dst[i] += src[i];
}

bool Tensor::all_finite() const {
  for (Real x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace pathweaver::num
