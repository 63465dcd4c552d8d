#include "paircfr/closed_form.hpp"

#include <cmath>
#include <stdexcept>

namespace paircfr {

MomentPair empirical_moments(const PairedDataset& dataset) {
  if (dataset.size() == 0)
    throw std::invalid_argument("empirical_moments: empty dataset");
  if (dataset.has_neutral_samples())
    throw std::invalid_argument("closed-form analysis is binary-only");

  const std::size_t m = dataset.layout().total();
  MomentPair mp;
  mp.m = Matrix(m, m);
  mp.mu_vec.assign(m, 0.0);
  mp.n = dataset.size();

  for (const Sample& s : dataset.samples()) {
    const double y = signed_label(s.label);
    for (std::size_t i = 0; i < m; ++i) {
      mp.mu_vec[i] += s.x[i] * y;
      for (std::size_t j = i; j < m; ++j) mp.m(i, j) += s.x[i] * s.x[j];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(mp.n);
  for (std::size_t i = 0; i < m; ++i) {
    mp.mu_vec[i] *= inv_n;
    for (std::size_t j = i; j < m; ++j) {
      mp.m(i, j) *= inv_n;
      mp.m(j, i) = mp.m(i, j);
    }
  }
  return mp;
}

Vec solve_least_squares(const MomentPair& moments, double ridge) {
  if (ridge < 0.0) throw std::invalid_argument("ridge must be >= 0");
  Matrix a = moments.m;
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += ridge;
  Matrix l;
  if (cholesky(a, l)) return cholesky_solve(a, moments.mu_vec);

  // Not positive definite: fall back to the eigendecomposition to decide
  // between a genuinely singular system and a marginally conditioned one.
  Vec w;
  Matrix v;
  jacobi_eigen_sym(a, w, v);
  double wmax = 0.0;
  for (double x : w) wmax = std::max(wmax, std::fabs(x));
  const double tol = wmax * 1e-12;
  for (double x : w)
    if (x <= tol) {
      const double cond = sym_condition_estimate(a);
      throw std::runtime_error(
          "solve_least_squares: singular system (condition estimate " +
          std::to_string(cond) + "); raise the ridge parameter");
    }
  // all eigenvalues positive: solve via V diag(1/w) V^T
  const std::size_t n = a.rows();
  Vec tmp(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += v(i, k) * moments.mu_vec[i];
    tmp[k] = c / w[k];
  }
  Vec x(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) x[i] += v(i, k) * tmp[k];
  return x;
}

std::array<double, 3> block_mass(std::span<const double> w,
                                 const BlockLayout& layout) {
  if (w.size() != layout.total())
    throw std::invalid_argument("block_mass: length mismatch");
  auto seg_norm = [&w](std::size_t off, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += w[off + i] * w[off + i];
    return std::sqrt(s);
  };
  return {seg_norm(layout.offset_r1(), layout.dim_r1),
          seg_norm(layout.offset_r2(), layout.dim_r2),
          seg_norm(layout.offset_s(), layout.dim_s)};
}

WeightReport make_weight_report(const Vec& w, const FeatureModelSpec& spec) {
  WeightReport r;
  r.w = w;
  r.block_norms = block_mass(w, spec.layout);
  const std::size_t d1 = spec.layout.dim_r1;
  Vec w_r1(w.begin(), w.begin() + d1);
  Vec ref = cholesky_solve(spec.sigma_r1, spec.mu_r1);
  r.direction_cosine_r1 = cosine_angle(w_r1, ref);
  return r;
}

PopulationWeights population_cad_weights(const FeatureModelSpec& spec) {
  require_valid_spec(spec);
  if (spec.classes != 2)
    throw std::invalid_argument("closed-form analysis is binary-only");

  const std::size_t d1 = spec.layout.dim_r1;
  const std::size_t m = spec.layout.total();

  //   exact:  (Sigma_r1 + mu mu^T)^-1 mu  =  Sigma_r1^-1 mu / (1 + mu^T Sigma_r1^-1 mu)
  Vec sig_inv_mu = cholesky_solve(spec.sigma_r1, spec.mu_r1);
  const double quad = dot(spec.mu_r1, sig_inv_mu);
  const double shrink = 1.0 / (1.0 + quad);

  PopulationWeights out;
  out.shrink_factor = shrink;
  out.direction_form.assign(m, 0.0);
  Vec exact(m, 0.0);
  for (std::size_t i = 0; i < d1; ++i) {
    out.direction_form[i] = sig_inv_mu[i];
    exact[i] = sig_inv_mu[i] * shrink;
  }
  out.exact = make_weight_report(exact, spec);
  out.exact.direction_cosine_r1 = 1.0;  // parallel by construction
  return out;
}

}  // namespace paircfr
