#include "semeig/small_matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace semeig {

SmallMatrix SmallMatrix::identity(std::size_t n) {
  SmallMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

SmallMatrix SmallMatrix::transpose() const {
  SmallMatrix t(cols_, rows_);
  for (std::size_t j = 0; j < cols_; ++j)
    for (std::size_t i = 0; i < rows_; ++i) t(j, i) = (*this)(i, j);
  return t;
}

SmallMatrix SmallMatrix::block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
  if (r0 + nr > rows_ || c0 + nc > cols_) throw std::out_of_range("SmallMatrix::block");
  SmallMatrix out(nr, nc);
  for (std::size_t j = 0; j < nc; ++j)
    for (std::size_t i = 0; i < nr; ++i) out(i, j) = (*this)(r0 + i, c0 + j);
  return out;
}

void SmallMatrix::set_block(std::size_t r0, std::size_t c0, const SmallMatrix& src) {
  if (r0 + src.rows_ > rows_ || c0 + src.cols_ > cols_) throw std::out_of_range("SmallMatrix::set_block");
  for (std::size_t j = 0; j < src.cols_; ++j)
    for (std::size_t i = 0; i < src.rows_; ++i) (*this)(r0 + i, c0 + j) = src(i, j);
}

SmallMatrix SmallMatrix::select_cols(const std::vector<std::size_t>& cols) const {
  SmallMatrix out(rows_, cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (cols[k] >= cols_) throw std::out_of_range("SmallMatrix::select_cols");
    for (std::size_t i = 0; i < rows_; ++i) out(i, k) = (*this)(i, cols[k]);
  }
  return out;
}

double SmallMatrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double SmallMatrix::frobenius() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

SmallMatrix operator*(const SmallMatrix& a, const SmallMatrix& b) {
  if (a.cols_ != b.rows_) throw std::invalid_argument("SmallMatrix product shape mismatch");
  SmallMatrix c(a.rows_, b.cols_);
  for (std::size_t j = 0; j < b.cols_; ++j)
    for (std::size_t k = 0; k < a.cols_; ++k) {
      const double bkj = b(k, j);
      for (std::size_t i = 0; i < a.rows_; ++i) c(i, j) += a(i, k) * bkj;
    }
  return c;
}

SmallMatrix operator+(const SmallMatrix& a, const SmallMatrix& b) {
  if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw std::invalid_argument("SmallMatrix sum shape mismatch");
  SmallMatrix c = a;
  for (std::size_t i = 0; i < c.data_.size(); ++i) c.data_[i] += b.data_[i];
  return c;
}

SmallMatrix operator-(const SmallMatrix& a, const SmallMatrix& b) {
  if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw std::invalid_argument("SmallMatrix difference shape mismatch");
  SmallMatrix c = a;
  for (std::size_t i = 0; i < c.data_.size(); ++i) c.data_[i] -= b.data_[i];
  return c;
}

SmallMatrix operator*(double s, const SmallMatrix& a) {
  SmallMatrix c = a;
  for (double& v : c.data_) v *= s;
  return c;
}

}  // namespace semeig
