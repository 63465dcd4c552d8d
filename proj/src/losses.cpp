#include "paircfr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace paircfr {

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("LossConfig: tau must be > 0");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("LossConfig: lambda must lie in [0,1]");
}

double similarity(std::span<const double> a, std::span<const double> b,
                  Similarity mode) {
  if (a.size() != b.size())
    throw std::invalid_argument("similarity: length mismatch");
  if (mode == Similarity::dot) return dot(a, b);
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0)
    throw std::invalid_argument("cosine similarity undefined for zero-norm vector");
  return dot(a, b) / (na * nb);
}

CeResult ce_loss_and_grad(const Matrix& logits,
                          const std::vector<int>& labels) {
  const std::size_t n = logits.rows(), k = logits.cols();
  if (k < 2) throw std::invalid_argument("ce_loss_and_grad: K must be >= 2");
  if (labels.size() != n)
    throw std::invalid_argument("ce_loss_and_grad: labels/logits mismatch");

  CeResult out;
  out.grad_logits = Matrix(n, k);
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw std::invalid_argument("ce_loss_and_grad: label out of range");
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(logits(i, j) - mx);
    loss += -(logits(i, y) - mx - std::log(denom));
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(logits(i, j) - mx) / denom;
      out.grad_logits(i, j) =
          (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) * inv_n;
    }
  }
  out.loss = loss * inv_n;
  return out;
}

namespace {

struct AnchorSets {
  std::vector<std::size_t> participating;
  // per participating anchor, positives and negatives in ascending order
  std::vector<std::vector<std::size_t>> positives;
  std::vector<std::vector<std::size_t>> negatives;
};

AnchorSets build_anchor_sets(const std::vector<int>& labels,
                             const LossConfig& cfg) {
  AnchorSets sets;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!(cfg.neutral_excluded && labels[i] == kNeutralClass))
      sets.participating.push_back(i);
  sets.positives.resize(sets.participating.size());
  sets.negatives.resize(sets.participating.size());
  for (std::size_t ai = 0; ai < sets.participating.size(); ++ai) {
    const std::size_t a = sets.participating[ai];
    for (std::size_t j : sets.participating) {
      if (j == a) continue;
      (labels[j] == labels[a] ? sets.positives[ai] : sets.negatives[ai])
          .push_back(j);
    }
  }
  return sets;
}

void check_cosine_norms(const Matrix& z,
                        const std::vector<std::size_t>& participating) {
  for (std::size_t i : participating)
    if (norm2(z.row(i)) == 0.0)
      throw std::invalid_argument(
          "cosine similarity undefined for zero-norm embedding (row " +
          std::to_string(i) + ")");
}

// d(s_ab)/d(z_a) and d(s_ab)/d(z_b), scaled by `g`, accumulated into grad.
void accumulate_similarity_grad(Matrix& grad, const Matrix& z, std::size_t a,
                                std::size_t b, Similarity mode, double g) {
  const std::size_t d = z.cols();
  auto za = z.row(a), zb = z.row(b);
  if (mode == Similarity::dot) {
    for (std::size_t j = 0; j < d; ++j) {
      grad(a, j) += g * zb[j];
      grad(b, j) += g * za[j];
    }
    return;
  }
  const double na = norm2(za), nb = norm2(zb);
  const double s = dot(za, zb) / (na * nb);
  for (std::size_t j = 0; j < d; ++j) {
    grad(a, j) += g * (zb[j] / (na * nb) - s * za[j] / (na * na));
    grad(b, j) += g * (za[j] / (na * nb) - s * zb[j] / (nb * nb));
  }
}

}  // namespace

ClResult cl_loss_and_grad(const EmbeddingBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  const std::size_t n = batch.z.rows(), d = batch.z.cols();
  if (batch.labels.size() != n)
    throw std::invalid_argument("cl_loss_and_grad: labels/z mismatch");
  if (n < 2) throw std::invalid_argument("cl_loss_and_grad: need n >= 2");

  AnchorSets sets = build_anchor_sets(batch.labels, cfg);
  if (cfg.similarity == Similarity::cosine)
    check_cosine_norms(batch.z, sets.participating);

  // scaled similarities t_ij = s_ij / tau for the pairs we will touch
  Matrix t(n, n);
  for (std::size_t ai = 0; ai < sets.participating.size(); ++ai) {
    const std::size_t a = sets.participating[ai];
    for (std::size_t j : sets.participating) {
      if (j == a) continue;
      t(a, j) = similarity(batch.z.row(a), batch.z.row(j), cfg.similarity) /
                cfg.tau;
    }
  }

  Matrix dldt(n, n);  // d(sum of anchor losses)/d t_aj, anchor a in the row
  double loss_sum = 0.0;
  std::size_t contributing = 0;

  for (std::size_t ai = 0; ai < sets.participating.size(); ++ai) {
    const std::size_t a = sets.participating[ai];
    const auto& pos = sets.positives[ai];
    const auto& neg = sets.negatives[ai];

    if (!pos.empty()) {
      double mx = t(a, pos[0]);
      for (std::size_t p : pos) mx = std::max(mx, t(a, p));
      for (std::size_t m : neg) mx = std::max(mx, t(a, m));
      double sneg = 0.0;
      for (std::size_t m : neg) sneg += std::exp(t(a, m) - mx);

      const double inv_p = 1.0 / static_cast<double>(pos.size());
      double anchor_loss = 0.0;
      for (std::size_t p : pos) {
        const double ep = std::exp(t(a, p) - mx);
        const double denom = ep + sneg;
        anchor_loss += std::log(denom) - (t(a, p) - mx);
        dldt(a, p) += (ep / denom - 1.0) * inv_p;
        for (std::size_t m : neg)
          dldt(a, m) += (std::exp(t(a, m) - mx) / denom) * inv_p;
      }
      loss_sum += anchor_loss * inv_p;
      ++contributing;
    } else if (!neg.empty() &&
               cfg.no_positive_policy == NoPositivePolicy::repulsion_only) {
      double mx = t(a, neg[0]);
      for (std::size_t m : neg) mx = std::max(mx, t(a, m));
      double ssum = 0.0;
      for (std::size_t m : neg) ssum += std::exp(t(a, m) - mx);
      loss_sum += mx + std::log(ssum);
      for (std::size_t m : neg) dldt(a, m) += std::exp(t(a, m) - mx) / ssum;
      ++contributing;
    }
    // P and N both empty, or skip_anchor without positives: not contributing
  }

  if (contributing == 0)
    throw std::runtime_error("CL undefined: no contrastive structure");

  ClResult out;
  out.loss = loss_sum / static_cast<double>(contributing);
  out.contributing_anchors = contributing;
  out.grad_z = Matrix(n, d);
  const double scale = 1.0 / (static_cast<double>(contributing) * cfg.tau);
  for (std::size_t ai = 0; ai < sets.participating.size(); ++ai) {
    const std::size_t a = sets.participating[ai];
    for (std::size_t j : sets.participating) {
      if (j == a || dldt(a, j) == 0.0) continue;
      accumulate_similarity_grad(out.grad_z, batch.z, a, j, cfg.similarity,
                                 dldt(a, j) * scale);
    }
  }
  return out;
}

namespace {

// Softmax-style recognition weight of negative `n` for anchor `i`; the
// repulsion_only generalization when the anchor has no positives.
double negative_weight(const Matrix& t, const std::vector<std::size_t>& pos,
                       const std::vector<std::size_t>& neg, std::size_t a,
                       std::size_t n_idx, const LossConfig& cfg,
                       bool require_positives) {
  if (std::find(neg.begin(), neg.end(), n_idx) == neg.end())
    throw std::invalid_argument("p_in: n is not a negative of anchor i");
  if (pos.empty()) {
    if (require_positives ||
        cfg.no_positive_policy != NoPositivePolicy::repulsion_only)
      throw std::invalid_argument("p_in: anchor has no positives");
    double mx = t(a, neg[0]);
    for (std::size_t m : neg) mx = std::max(mx, t(a, m));
    double ssum = 0.0;
    for (std::size_t m : neg) ssum += std::exp(t(a, m) - mx);
    return std::exp(t(a, n_idx) - mx) / ssum;
  }
  double mx = t(a, pos[0]);
  for (std::size_t p : pos) mx = std::max(mx, t(a, p));
  for (std::size_t m : neg) mx = std::max(mx, t(a, m));
  double sneg = 0.0;
  for (std::size_t m : neg) sneg += std::exp(t(a, m) - mx);
  double acc = 0.0;
  for (std::size_t p : pos)
    acc += std::exp(t(a, n_idx) - mx) / (std::exp(t(a, p) - mx) + sneg);
  return acc / static_cast<double>(pos.size());
}

Matrix scaled_similarities(const EmbeddingBatch& batch, const LossConfig& cfg,
                           const AnchorSets& sets) {
  const std::size_t n = batch.z.rows();
  Matrix t(n, n);
  for (std::size_t a : sets.participating)
    for (std::size_t j : sets.participating) {
      if (j == a) continue;
      t(a, j) = similarity(batch.z.row(a), batch.z.row(j), cfg.similarity) /
                cfg.tau;
    }
  return t;
}

std::size_t participating_index(const AnchorSets& sets, std::size_t i) {
  auto it = std::find(sets.participating.begin(), sets.participating.end(), i);
  if (it == sets.participating.end())
    throw std::invalid_argument("anchor is excluded from the contrastive batch");
  return static_cast<std::size_t>(it - sets.participating.begin());
}

}  // namespace

double p_in(const EmbeddingBatch& batch, const LossConfig& cfg, std::size_t i,
            std::size_t n) {
  cfg.validate();
  AnchorSets sets = build_anchor_sets(batch.labels, cfg);
  if (cfg.similarity == Similarity::cosine)
    check_cosine_norms(batch.z, sets.participating);
  const std::size_t ai = participating_index(sets, i);
  Matrix t = scaled_similarities(batch, cfg, sets);
  return negative_weight(t, sets.positives[ai], sets.negatives[ai], i, n, cfg,
                         /*require_positives=*/true);
}

Matrix outer_sym(std::span<const double> x_i, std::span<const double> x_n) {
  if (x_i.size() != x_n.size())
    throw std::invalid_argument("outer_sym: length mismatch");
  const std::size_t m = x_i.size();
  Matrix a(m, m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < m; ++c)
      a(r, c) = x_i[r] * x_n[c] + x_n[r] * x_i[c];
  return a;
}

Matrix cl_grad_negative_branch(const Matrix& features,
                               const std::vector<int>& labels,
                               const Matrix& encoder, const LossConfig& cfg,
                               std::size_t i, std::size_t n) {
  cfg.validate();
  if (cfg.similarity != Similarity::dot)
    throw std::invalid_argument(
        "cl_grad_negative_branch: stated for dot similarity only");
  if (features.cols() != encoder.rows())
    throw std::invalid_argument("cl_grad_negative_branch: feature/encoder mismatch");

  EmbeddingBatch batch{matmul(features, encoder), labels, {}};
  AnchorSets sets = build_anchor_sets(labels, cfg);
  const std::size_t ai = participating_index(sets, i);
  Matrix t = scaled_similarities(batch, cfg, sets);
  const double w = negative_weight(t, sets.positives[ai], sets.negatives[ai],
                                   i, n, cfg, /*require_positives=*/false);

  Matrix a_in = outer_sym(features.row(i), features.row(n));
  Matrix out = matmul(a_in, encoder);
  const double scale = w / cfg.tau;
  for (std::size_t idx = 0; idx < out.size(); ++idx) out.data()[idx] *= scale;
  return out;
}

PairGradReport ce_pair_gradient(const Sample& x_o, const Sample& x_c,
                                const Matrix& weights,
                                const BlockLayout& layout) {
  const std::size_t m = layout.total();
  if (x_o.x.size() != m || x_c.x.size() != m)
    throw std::invalid_argument("ce_pair_gradient: sample length != layout m");
  if (weights.rows() != m || weights.cols() != 2)
    throw std::invalid_argument("ce_pair_gradient: weights must be m x 2");
  if (x_o.label == kNeutralClass || x_c.label == kNeutralClass ||
      x_o.label == x_c.label)
    throw std::invalid_argument("ce_pair_gradient: binary pair required");
  for (std::size_t i = 0; i < layout.dim_r1; ++i)
    if (x_c.x[i] != -x_o.x[i])
      throw std::invalid_argument("ce_pair_gradient: pair not exact_opposite");
  for (std::size_t i = layout.dim_r1; i < m; ++i)
    if (x_c.x[i] != x_o.x[i])
      throw std::invalid_argument("ce_pair_gradient: pair not exact_opposite");

  auto own_prob = [&weights](const Vec& x, int label, Vec& grad2) {
    Vec logits = matvec_t(weights, x);
    const double mx = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
    const double denom = e0 + e1;
    grad2 = {e0 / denom - (label == 0 ? 1.0 : 0.0),
             e1 / denom - (label == 1 ? 1.0 : 0.0)};
    return (label == 0 ? e0 : e1) / denom;
  };

  PairGradReport r;
  Vec g_o, g_c;
  r.yhat_o = own_prob(x_o.x, x_o.label, g_o);
  r.yhat_c = own_prob(x_c.x, x_c.label, g_c);

  r.grad = Matrix(m, 2);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      r.grad(i, j) = x_o.x[i] * g_o[j] + x_c.x[i] * g_c[j];

  double context_sq = 0.0, unedited_sq = 0.0;
  for (std::size_t i = layout.dim_r1; i < m; ++i) {
    context_sq += x_o.x[i] * x_o.x[i];
    for (std::size_t j = 0; j < 2; ++j) {
      r.unedited_max_abs = std::max(r.unedited_max_abs, std::fabs(r.grad(i, j)));
      unedited_sq += r.grad(i, j) * r.grad(i, j);
    }
  }
  r.unedited_norm = std::sqrt(unedited_sq);
  r.predicted_unedited_norm =
      std::fabs(r.yhat_o - r.yhat_c) * std::sqrt(2.0) * std::sqrt(context_sq);
  r.unedited_rows_vanish = r.unedited_max_abs <= 1e-12;
  return r;
}

SigmoidPairGrad sigmoid_pair_gradient(double x_r, double x_c_feat, double w_r,
                                      double w_c) {
  auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  const double z_x = w_r * x_r + w_c * x_c_feat;
  const double z_c = -w_r * x_r + w_c * x_c_feat;  // edited feature negated
  const double sx = sigmoid(z_x), sc = sigmoid(z_c);
  // L = -log f(x) - log(1 - f(c))
  SigmoidPairGrad g;
  g.dw_r = x_r * (sx - 1.0 - sc);
  g.dw_c = x_c_feat * (sx - 1.0 + sc);
  return g;
}

ExpectedPairA expected_pair_A(const FeatureModelSpec& spec, std::size_t n_mc,
                              std::uint64_t seed) {
  require_valid_spec(spec);
  if (spec.classes != 2)
    throw std::invalid_argument("expected_pair_A: binary spec required");
  if (n_mc < 1) throw std::invalid_argument("expected_pair_A: n_mc >= 1");

  const std::size_t m = spec.layout.total();
  ExpectedPairA out;
  out.mc_mean = Matrix(m, m);
  Matrix m2(m, m);  // running sum of squared deviations (Welford)

  Rng root(seed);
  for (std::size_t i = 0; i < n_mc; ++i) {
    const int label = (i % 2 == 0) ? 1 : 0;
    Rng orig_rng = root.child(2 * i);
    Sample orig = sample_original(spec, label, orig_rng);
    Rng cf_rng = root.child(2 * i + 1);
    Sample cf =
        derive_counterfactual(orig, spec, EditMode::exact_opposite, cf_rng);
    Matrix a = outer_sym(orig.x, cf.x);
    const double k = static_cast<double>(i + 1);
    for (std::size_t e = 0; e < a.size(); ++e) {
      const double delta = a.data()[e] - out.mc_mean.data()[e];
      out.mc_mean.data()[e] += delta / k;
      m2.data()[e] += delta * (a.data()[e] - out.mc_mean.data()[e]);
    }
  }

  // exact expectation: 2 diag(-(S_r1 + mu mu^T), S_r2 + mu mu^T, S_s + mu mu^T)
  // plus the 2 mu_r2 mu_s^T cross block
  out.exact = Matrix(m, m);
  out.zero_mean_form = Matrix(m, m);
  const auto& L = spec.layout;
  auto fill_block = [&](std::size_t off, const Matrix& sigma, const Vec& mu,
                        double sign) {
    for (std::size_t i = 0; i < sigma.rows(); ++i)
      for (std::size_t j = 0; j < sigma.cols(); ++j) {
        out.exact(off + i, off + j) =
            sign * 2.0 * (sigma(i, j) + mu[i] * mu[j]);
        out.zero_mean_form(off + i, off + j) = sign * 2.0 * sigma(i, j);
      }
  };
  fill_block(L.offset_r1(), spec.sigma_r1, spec.mu_r1, -1.0);
  fill_block(L.offset_r2(), spec.sigma_r2, spec.mu_r2, 1.0);
  fill_block(L.offset_s(), spec.sigma_s, spec.mu_s, 1.0);
  for (std::size_t i = 0; i < L.dim_r2; ++i)
    for (std::size_t j = 0; j < L.dim_s; ++j) {
      out.exact(L.offset_r2() + i, L.offset_s() + j) =
          2.0 * spec.mu_r2[i] * spec.mu_s[j];
      out.exact(L.offset_s() + j, L.offset_r2() + i) =
          2.0 * spec.mu_s[j] * spec.mu_r2[i];
    }

  for (std::size_t e = 0; e < out.exact.size(); ++e) {
    const double dev = std::fabs(out.mc_mean.data()[e] - out.exact.data()[e]);
    out.max_abs_dev_exact = std::max(out.max_abs_dev_exact, dev);
    if (n_mc >= 2) {
      const double var = m2.data()[e] / static_cast<double>(n_mc - 1);
      const double se = std::sqrt(var / static_cast<double>(n_mc));
      if (se > 0.0)
        out.max_stderr_units = std::max(out.max_stderr_units, dev / se);
      else if (dev > 0.0)
        out.max_stderr_units = std::numeric_limits<double>::infinity();
    }
  }
  return out;
}

CombinedResult combined_loss_and_grad(const LinearModel& model,
                                      const FeatureBatch& batch,
                                      const LossConfig& cfg) {
  cfg.validate();
  const std::size_t n = batch.x.rows();
  if (batch.labels.size() != n)
    throw std::invalid_argument("combined_loss_and_grad: labels/x mismatch");

  Forward f = forward(model, batch.x);
  const std::size_t d = model.embedding_dim(), k = model.num_classes();

  CombinedResult out;
  out.grad.grad_head = Matrix(d, k);
  if (model.has_bias()) out.grad.grad_bias.assign(k, 0.0);
  Matrix grad_z(n, d);

  const double lam = cfg.lambda;
  if (lam < 1.0) {
    CeResult ce = ce_loss_and_grad(f.logits, batch.labels);
    out.ce_loss = ce.loss;
    Matrix gu = matmul_tn(f.z, ce.grad_logits);
    add_scaled(out.grad.grad_head, 1.0 - lam, gu);
    if (model.has_bias())
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j)
          out.grad.grad_bias[j] += (1.0 - lam) * ce.grad_logits(i, j);
    Matrix gz_ce = matmul_nt(ce.grad_logits, model.head);
    add_scaled(grad_z, 1.0 - lam, gz_ce);
  }
  if (lam > 0.0) {
    ClResult cl =
        cl_loss_and_grad(EmbeddingBatch{f.z, batch.labels, batch.pair_ids}, cfg);
    out.cl_loss = cl.loss;
    add_scaled(grad_z, lam, cl.grad_z);
  }
  out.loss = lam * out.cl_loss + (1.0 - lam) * out.ce_loss;

  out.grad.grad_encoder = matmul_tn(batch.x, grad_z);
  const auto& L = model.layout;
  auto block_fro = [&](std::size_t off, std::size_t dim) {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < d; ++j)
        s += out.grad.grad_encoder(off + i, j) *
             out.grad.grad_encoder(off + i, j);
    return std::sqrt(s);
  };
  out.grad.encoder_block_norms = {block_fro(L.offset_r1(), L.dim_r1),
                                  block_fro(L.offset_r2(), L.dim_r2),
                                  block_fro(L.offset_s(), L.dim_s)};
  return out;
}

}  // namespace paircfr
