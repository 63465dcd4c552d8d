#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace paircfr {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Small and deliberately plain: every
// reduction runs in a fixed order so results are bit-reproducible.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  Vec data_;
};

// ---- vector helpers ----

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
// cosine of the angle between a and b; 1 if both are zero, 0 if exactly one is.
double cosine_angle(std::span<const double> a, std::span<const double> b);

// ---- matrix products ----

Matrix matmul(const Matrix& a, const Matrix& b);     // A * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // A^T * B
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // A * B^T
Matrix transpose(const Matrix& a);
Vec matvec(const Matrix& a, std::span<const double> x);    // A * x
Vec matvec_t(const Matrix& a, std::span<const double> x);  // A^T * x

double frobenius(const Matrix& a);
double max_abs(const Matrix& a);
// y += alpha * x, elementwise over the flat storage; shapes must match.
void add_scaled(Matrix& y, double alpha, const Matrix& x);

// ---- symmetric solves ----

// Cholesky factorization A = L L^T of a symmetric positive-definite matrix.
// Returns false (leaving `lower` unspecified) if a non-positive pivot appears.
bool cholesky(const Matrix& a, Matrix& lower);

// Solves A x = b with A SPD via Cholesky. Throws std::runtime_error if the
// factorization fails.
Vec cholesky_solve(const Matrix& a, std::span<const double> b);

// Cyclic Jacobi eigendecomposition of a symmetric matrix: A = V diag(w) V^T.
// Eigenvalues are returned in ascending order.
void jacobi_eigen_sym(const Matrix& a, Vec& eigenvalues, Matrix& eigenvectors);

// Condition number estimate (|lambda|_max / |lambda|_min) from Jacobi;
// returns infinity for a singular matrix.
double sym_condition_estimate(const Matrix& a);

}  // namespace paircfr
