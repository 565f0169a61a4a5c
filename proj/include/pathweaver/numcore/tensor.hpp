#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "pathweaver/numcore/real.hpp"

namespace pathweaver::num {

// Dense row-major matrix. Vectors are 1 x n, scalars 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols);
  Tensor(std::size_t rows, std::size_t cols, std::vector<Real> data);

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols); }
  static Tensor filled(std::size_t rows, std::size_t cols, Real value);
  static Tensor scalar(Real value) { return filled(1, 1, value); }
  static Tensor from_rows(std::initializer_list<std::initializer_list<Real>> rows);
  static Tensor identity(std::size_t n);

  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool same_shape(const Tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  Real* row(std::size_t r) noexcept { return data_.data() + r * cols_; }
  const Real* row(std::size_t r) const noexcept { return data_.data() + r * cols_; }
  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }

  Real item() const;
  void fill(Real value);
  // this += other (same shape).
  void accumulate(const Tensor& other);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

}  // namespace pathweaver::num
