#include "distillgan/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "distillgan/error.hpp"

namespace distillgan {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(const std::vector<double>& d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double Matrix::trace() const {
  double t = 0.0;
  for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
  return t;
}

double Matrix::frobenius() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

double Matrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Matrix::is_symmetric(double tol) const {
  if (rows_ != cols_) return false;
  const double bound = tol * std::max(1.0, max_abs());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = r + 1; c < cols_; ++c)
      if (std::abs((*this)(r, c) - (*this)(c, r)) > bound) return false;
  return true;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols_ != b.rows_) throw ShapeError("matrix product: inner dimensions differ");
  Matrix c(a.rows_, b.cols_);
  for (std::size_t i = 0; i < a.rows_; ++i)
    for (std::size_t k = 0; k < a.cols_; ++k) {
      const double v = a(i, k);
      for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += v * b(k, j);
    }
  return c;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw ShapeError("matrix sum: shapes differ");
  Matrix c = a;
  for (std::size_t i = 0; i < c.data_.size(); ++i) c.data_[i] += b.data_[i];
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) { return a + (-1.0) * b; }

Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (double& v : c.data_) v *= s;
  return c;
}

EigenDecomposition symmetric_eigen(const Matrix& input, double tol, int max_sweeps) {
  if (!input.is_symmetric(1e-6)) throw ContractError("symmetric_eigen: matrix is not symmetric");
  const std::size_t n = input.rows();
  Matrix a = input;
  Matrix v = Matrix::identity(n);
  const double target = tol * input.frobenius();

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
    return std::sqrt(s);
  };

  EigenDecomposition out;
  while (out.sweeps < max_sweeps && off_norm() > target) {
    ++out.sweeps;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle that zeroes a(p, q) (Golub & Van Loan, sym.schur2).
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (off_norm() > target) throw NumericError("symmetric_eigen: Jacobi sweeps did not converge");
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = a(i, i);
  out.vectors = std::move(v);
  return out;
}

Matrix matrix_sqrt_psd(const Matrix& a) {
  if (a.rows() != a.cols()) throw ContractError("matrix_sqrt_psd: matrix is not square");
  if (!a.is_symmetric(1e-6)) throw ContractError("matrix_sqrt_psd: matrix is not symmetric");
  const std::size_t n = a.rows();
  const EigenDecomposition e = symmetric_eigen(a);
  // S = V diag(sqrt(max(l, 0))) V^T
  Matrix s(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const double r = std::sqrt(std::max(e.values[j], 0.0));
    if (r == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double vi = e.vectors(i, j) * r;
      for (std::size_t k = 0; k < n; ++k) s(i, k) += vi * e.vectors(k, j);
    }
  }
  return s;
}

}  // namespace distillgan
