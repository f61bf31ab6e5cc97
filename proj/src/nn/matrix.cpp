// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/nn/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cfdhar/error.hpp"

namespace cfdhar::nn {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorCode::kShape, "matrix data length " + std::to_string(data_.size()) +
                                       " does not match " + std::to_string(rows_) + "x" +
                                       std::to_string(cols_));
  }
}

Matrix Matrix::from_row(std::span<const double> row) {
  return Matrix(1, row.size(), std::vector<double>(row.begin(), row.end()));
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

namespace {

void require(bool ok, const char* what, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw Error(ErrorCode::kShape, std::string(what) + ": " + std::to_string(a.rows()) + "x" +
                                       std::to_string(a.cols()) + " vs " +
                                       std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul", a, b);
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* dst = out.data().data() + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* src = b.data().data() + k * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn", a, b);
  Matrix out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* brow = b.data().data() + r * n;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ari = a(r, i);
      if (ari == 0.0) continue;
      double* dst = out.data().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += ari * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  const std::size_t k = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.data().data() + i * k;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.data().data() + j * k;
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix hconcat(const Matrix& left, const Matrix& right) {
  require(left.rows() == right.rows(), "hconcat", left, right);
  Matrix out(left.rows(), left.cols() + right.cols());
  for (std::size_t r = 0; r < left.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(left.row(r).begin(), left.row(r).end(), dst.begin());
    std::copy(right.row(r).begin(), right.row(r).end(), dst.begin() + left.cols());
  }
  return out;
}

Matrix column_slice(const Matrix& m, std::size_t begin, std::size_t count) {
  if (begin + count > m.cols()) {
    throw Error(ErrorCode::kShape, "column slice out of range");
  }
  Matrix out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r).subspan(begin, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= m.rows()) throw Error(ErrorCode::kIndex, "row index out of range");
    auto src = m.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace cfdhar::nn
