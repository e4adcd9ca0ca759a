#include "bae/matrix.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>

#include "bae/errors.hpp"

namespace bae {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::row(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

namespace {

struct GemmShape {
  std::size_t m, n, k;
};

GemmShape check_gemm(const Matrix& a, const Matrix& b, bool ta, bool tb) {
  const std::size_t ar = ta ? a.cols() : a.rows();
  const std::size_t ac = ta ? a.rows() : a.cols();
  const std::size_t br = tb ? b.cols() : b.rows();
  const std::size_t bc = tb ? b.rows() : b.cols();
  if (ac != br) {
    throw DimensionError("matmul: incompatible shapes " + a.shape_str() + (ta ? "^T" : "") +
                         " and " + b.shape_str() + (tb ? "^T" : ""));
  }
  return {ar, bc, ac};
}

}  // namespace

void matmul_accumulate(const Matrix& a, const Matrix& b, Matrix& out, bool trans_a,
                       bool trans_b) {
  const auto s = check_gemm(a, b, trans_a, trans_b);
  if (out.rows() != s.m || out.cols() != s.n) {
    throw DimensionError("matmul: output shape " + out.shape_str() + " expected " +
                         std::to_string(s.m) + "x" + std::to_string(s.n));
  }
  if (s.m == 0 || s.n == 0) return;
  if (s.k == 0) return;
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(s.m),
              static_cast<int>(s.n), static_cast<int>(s.k), 1.0, a.data().data(),
              static_cast<int>(a.cols()), b.data().data(), static_cast<int>(b.cols()), 1.0,
              out.data().data(), static_cast<int>(out.cols()));
}

Matrix matmul(const Matrix& a, const Matrix& b, bool trans_a, bool trans_b) {
  const auto s = check_gemm(a, b, trans_a, trans_b);
  Matrix out(s.m, s.n, 0.0);
  matmul_accumulate(a, b, out, trans_a, trans_b);
  return out;
}

}  // namespace bae
