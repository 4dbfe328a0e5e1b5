#pragma once

#include <cstddef>
#include <vector>

namespace semeig {

/// Dense in-memory matrix, column-major. Used for the b×b and m×m
/// coefficient matrices that pair with on-disk blocks.
class SmallMatrix {
 public:
  SmallMatrix() = default;
  SmallMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static SmallMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }
  const double* col_ptr(std::size_t j) const { return data_.data() + j * rows_; }
  const std::vector<double>& data() const { return data_; }

  SmallMatrix transpose() const;
  SmallMatrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const;
  void set_block(std::size_t r0, std::size_t c0, const SmallMatrix& src);
  /// Keeps the listed columns, in order.
  SmallMatrix select_cols(const std::vector<std::size_t>& cols) const;

  double max_abs() const;
  double frobenius() const;

  friend SmallMatrix operator*(const SmallMatrix& a, const SmallMatrix& b);
  friend SmallMatrix operator+(const SmallMatrix& a, const SmallMatrix& b);
  friend SmallMatrix operator-(const SmallMatrix& a, const SmallMatrix& b);
  friend SmallMatrix operator*(double s, const SmallMatrix& a);
  friend bool operator==(const SmallMatrix&, const SmallMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace semeig
