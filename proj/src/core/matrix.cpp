#include "edgelam/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "edgelam/error.hpp"
#include "edgelam/kernels.hpp"

namespace edgelam {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    fail(Errc::dimension_mismatch,
         "matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " * " +
             std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix c(a.rows(), b.cols());
  if (c.empty()) return c;
  kernels::gemm(a.rows(), a.cols(), b.cols(), a.data(), a.cols(), b.data(), b.cols(),
                c.data(), c.cols());
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

Matrix column_slice(const Matrix& m, std::size_t col0, std::size_t width) {
  if (col0 + width > m.cols()) {
    fail(Errc::dimension_mismatch, "column slice out of range");
  }
  Matrix s(m.rows(), width);
  for (std::size_t i = 0; i < m.rows(); ++i)
    std::copy_n(m.row(i).data() + col0, width, s.row(i).data());
  return s;
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.flat()) s += v * v;
  return std::sqrt(s);
}

double relative_frobenius_error(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(Errc::dimension_mismatch, "relative_frobenius_error: shape mismatch");
  }
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.flat()[i] - b.flat()[i];
    diff += d * d;
  }
  return std::sqrt(diff) / std::max(frobenius_norm(b), 1e-300);
}

}  // namespace edgelam
