#include "paircfr/matrix.hpp"

#include <cmath>
#include <limits>

namespace paircfr {

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_angle(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: shape mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw std::invalid_argument("matmul_tn: shape mismatch");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k)
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aki * b(k, j);
    }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("matmul_nt: shape mismatch");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      c(i, j) = s;
    }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Vec matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size())
    throw std::invalid_argument("matvec: shape mismatch");
  Vec y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

Vec matvec_t(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size())
    throw std::invalid_argument("matvec_t: shape mismatch");
  Vec y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += r[j] * xi;
  }
  return y;
}

double frobenius(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
  return std::sqrt(s);
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a.data()[i]));
  return m;
}

void add_scaled(Matrix& y, double alpha, const Matrix& x) {
  if (y.rows() != x.rows() || y.cols() != x.cols())
    throw std::invalid_argument("add_scaled: shape mismatch");
  for (std::size_t i = 0; i < y.size(); ++i)
    y.data()[i] += alpha * x.data()[i];
}

bool cholesky(const Matrix& a, Matrix& lower) {
  if (a.rows() != a.cols()) return false;
  const std::size_t n = a.rows();
  lower = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= lower(j, k) * lower(j, k);
    if (!(d > 0.0)) return false;
    lower(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
      lower(i, j) = s / lower(j, j);
    }
  }
  return true;
}

Vec cholesky_solve(const Matrix& a, std::span<const double> b) {
  Matrix l;
  if (!cholesky(a, l))
    throw std::runtime_error("cholesky_solve: matrix not positive definite");
  const std::size_t n = a.rows();
  if (b.size() != n)
    throw std::invalid_argument("cholesky_solve: rhs length mismatch");
  Vec y(n), x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

void jacobi_eigen_sym(const Matrix& a, Vec& eigenvalues, Matrix& eigenvectors) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("jacobi_eigen_sym: matrix not square");
  const std::size_t n = a.rows();
  Matrix m = a;
  eigenvectors = Matrix::identity(n);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += m(i, j) * m(i, j);
    if (off < 1e-30) break;

    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (m(p, q) == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * m(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m(k, p), mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m(p, k), mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = eigenvectors(k, p), vkq = eigenvectors(k, q);
          eigenvectors(k, p) = c * vkp - s * vkq;
          eigenvectors(k, q) = s * vkp + c * vkq;
        }
      }
  }

  eigenvalues.resize(n);
  for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = m(i, i);
  // selection sort, carrying eigenvector columns along
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t lo = i;
    for (std::size_t j = i + 1; j < n; ++j)
      if (eigenvalues[j] < eigenvalues[lo]) lo = j;
    if (lo != i) {
      std::swap(eigenvalues[i], eigenvalues[lo]);
      for (std::size_t k = 0; k < n; ++k)
        std::swap(eigenvectors(k, i), eigenvectors(k, lo));
    }
  }
}

double sym_condition_estimate(const Matrix& a) {
  Vec w;
  Matrix v;
  jacobi_eigen_sym(a, w, v);
  double amax = 0.0, amin = std::numeric_limits<double>::infinity();
  for (double x : w) {
    amax = std::max(amax, std::fabs(x));
    amin = std::min(amin, std::fabs(x));
  }
  if (amin == 0.0) return std::numeric_limits<double>::infinity();
  return amax / amin;
}

}  // namespace paircfr
