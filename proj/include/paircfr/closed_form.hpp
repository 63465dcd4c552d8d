#pragma once

#include <array>

#include "paircfr/feature_model.hpp"
#include "paircfr/matrix.hpp"

namespace paircfr {

// Uncentered second moments of a dataset: M = E[x x^T], mu_vec = E[x y]
// with the signed label encoding y in {-1,+1}.
struct MomentPair {
  Matrix m;
  Vec mu_vec;
  std::size_t n = 0;
};

struct WeightReport {
  Vec w;
  std::array<double, 3> block_norms{0, 0, 0};  // (||w_r1||, ||w_r2||, ||w_s||)
  double direction_cosine_r1 = 1.0;  // cosine(w_r1, Sigma_r1^-1 mu_r1)
};

MomentPair empirical_moments(const PairedDataset& dataset);

// Solves (M + ridge*I) w = mu_vec through a symmetric positive-definite
// factorization. A singular system with ridge == 0 raises std::runtime_error
// carrying a condition estimate.
Vec solve_least_squares(const MomentPair& moments, double ridge = 0.0);

std::array<double, 3> block_mass(std::span<const double> w,
                                 const BlockLayout& layout);

// Exact population least-squares weights on pooled CAD with exact-opposite
// edits. The r2 and s components are identically zero; the r1 component is
// (Sigma_r1 + mu_r1 mu_r1^T)^-1 mu_r1, which is parallel to Sigma_r1^-1 mu_r1
// and shorter by the factor 1/(1 + mu_r1^T Sigma_r1^-1 mu_r1).
struct PopulationWeights {
  WeightReport exact;   // full-moment inverse
  Vec direction_form;   // [Sigma_r1^-1 mu_r1, 0, 0], the unshrunk direction
  double shrink_factor = 1.0;
};

PopulationWeights population_cad_weights(const FeatureModelSpec& spec);

WeightReport make_weight_report(const Vec& w, const FeatureModelSpec& spec);

}  // namespace paircfr
