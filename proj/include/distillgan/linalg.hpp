#pragma once

#include <cstddef>
#include <vector>

namespace distillgan {

// Small dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix diagonal(const std::vector<double>& d);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  const std::vector<double>& data() const { return data_; }

  Matrix transpose() const;
  double trace() const;
  double frobenius() const;
  double max_abs() const;
  // |a_ij - a_ji| <= tol * max(1, max|a|) for all i, j.
  bool is_symmetric(double tol) const;

  friend Matrix operator*(const Matrix& a, const Matrix& b);
  friend Matrix operator+(const Matrix& a, const Matrix& b);
  friend Matrix operator-(const Matrix& a, const Matrix& b);
  friend Matrix operator*(double s, const Matrix& a);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct EigenDecomposition {
  std::vector<double> values;
  Matrix vectors;  // column j is the eigenvector of values[j]
  int sweeps = 0;
};

// Cyclic Jacobi rotations until the off-diagonal Frobenius norm falls below
// tol * ||A||_F. Input must be symmetric.
EigenDecomposition symmetric_eigen(const Matrix& a, double tol = 1e-10, int max_sweeps = 100);

// Principal square root of a symmetric PSD matrix. Negative eigenvalues
// (rounding noise) are clamped to 0. Throws ContractError if `a` is not
// square or not symmetric within 1e-6.
Matrix matrix_sqrt_psd(const Matrix& a);

}  // namespace distillgan
