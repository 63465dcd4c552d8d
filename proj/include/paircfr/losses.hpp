#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "paircfr/feature_model.hpp"
#include "paircfr/matrix.hpp"
#include "paircfr/model.hpp"

namespace paircfr {

enum class Similarity { cosine, dot };
enum class NoPositivePolicy { repulsion_only, skip_anchor };

struct LossConfig {
  double lambda = 0.5;  // weight of the contrastive term in the combined loss
  double tau = 0.3;     // contrastive temperature
  Similarity similarity = Similarity::cosine;
  bool neutral_excluded = true;  // drop neutral-labeled samples from CL
  NoPositivePolicy no_positive_policy = NoPositivePolicy::repulsion_only;

  void validate() const;
};

// Embeddings with their labels; pair links ride along for diagnostics.
struct EmbeddingBatch {
  Matrix z;  // n x d
  std::vector<int> labels;
  std::vector<std::int64_t> pair_ids;
};

// Features with their labels, as sliced from a dataset by the batcher.
struct FeatureBatch {
  Matrix x;  // n x m
  std::vector<int> labels;
  std::vector<std::int64_t> pair_ids;
};

double similarity(std::span<const double> a, std::span<const double> b,
                  Similarity mode);

struct CeResult {
  double loss = 0.0;
  Matrix grad_logits;  // n x K, already divided by n
};

// Mean cross-entropy with softmax probabilities; per-sample logit gradient is
// (softmax - onehot)/n. Max-subtraction keeps the softmax stable.
CeResult ce_loss_and_grad(const Matrix& logits, const std::vector<int>& labels);

struct ClResult {
  double loss = 0.0;
  Matrix grad_z;  // n x d
  std::size_t contributing_anchors = 0;
};

// Supervised contrastive loss, per-anchor per-positive form: each positive's
// denominator holds that positive plus all negatives. Anchors without
// positives contribute log-sum-exp over their negatives (repulsion_only) or
// are skipped. The batch loss is the mean over contributing anchors; anchors
// and partners are visited in ascending index order so the reduction is
// bit-reproducible.
ClResult cl_loss_and_grad(const EmbeddingBatch& batch, const LossConfig& cfg);

// Probability of anchor i being recognized as its negative n: the mean over
// positives p of exp(s_in/tau) / (exp(s_ip/tau) + sum_neg exp(s_in'/tau)).
// Defined only for anchors with at least one positive.
double p_in(const EmbeddingBatch& batch, const LossConfig& cfg, std::size_t i,
            std::size_t n);

// A_in = x_i x_n^T + x_n x_i^T.
Matrix outer_sym(std::span<const double> x_i, std::span<const double> x_n);

// The negative-branch encoder gradient (1/tau) * P_in * A_in * W for dot
// similarity; for an anchor without positives under repulsion_only, P_in is
// the softmax weight of n among the anchor's negatives.
Matrix cl_grad_negative_branch(const Matrix& features,
                               const std::vector<int>& labels,
                               const Matrix& encoder, const LossConfig& cfg,
                               std::size_t i, std::size_t n);

// Summed softmax gradient of one exact-opposite pair through z = W^T x with
// K = 2, plus the structure quantities of the cancellation result: unedited
// feature rows equal h_k * (yhat_o - yhat_c, yhat_c - yhat_o).
struct PairGradReport {
  Matrix grad;  // m x 2
  double yhat_o = 0.0, yhat_c = 0.0;  // each sample's own-label probability
  double unedited_max_abs = 0.0;
  double unedited_norm = 0.0;
  double predicted_unedited_norm = 0.0;  // |yo-yc| * sqrt(2) * ||(h_r2,h_s)||
  bool unedited_rows_vanish = false;     // max |entry| <= 1e-12
};

PairGradReport ce_pair_gradient(const Sample& x_o, const Sample& x_c,
                                const Matrix& weights,
                                const BlockLayout& layout);

// Toy sigmoid model f = sigmoid(w_r x_r + w_c x_c) on a pair (x, c) with
// c_r = -x_r; gradients of -log f(x) - log(1 - f(c)).
struct SigmoidPairGrad {
  double dw_r = 0.0;
  double dw_c = 0.0;
};

SigmoidPairGrad sigmoid_pair_gradient(double x_r, double x_c_feat, double w_r,
                                      double w_c);

// Monte-Carlo estimate of E[A_{o,c}] over exact-opposite pairs, against the
// exact expectation (which keeps the mu mu^T second-moment terms and the
// r2-s cross block) and its zero-mean form 2 diag(-S_r1, S_r2, S_s).
struct ExpectedPairA {
  Matrix mc_mean;
  Matrix exact;
  Matrix zero_mean_form;
  double max_abs_dev_exact = 0.0;    // max |mc - exact| over entries
  double max_stderr_units = 0.0;     // same deviation measured in MC stderrs
};

ExpectedPairA expected_pair_A(const FeatureModelSpec& spec, std::size_t n_mc,
                              std::uint64_t seed);

struct GradReport {
  Matrix grad_encoder;  // m x d
  Matrix grad_head;     // d x K
  Vec grad_bias;        // empty, or K
  std::array<double, 3> encoder_block_norms{0, 0, 0};
};

struct CombinedResult {
  double loss = 0.0;
  double ce_loss = 0.0;
  double cl_loss = 0.0;
  GradReport grad;
};

// lambda * CL(z) + (1 - lambda) * CE(logits). The CL term never touches the
// head; at the endpoints the other term is not evaluated at all, so lambda=0
// is bit-identical to a pure cross-entropy path.
CombinedResult combined_loss_and_grad(const LinearModel& model,
                                      const FeatureBatch& batch,
                                      const LossConfig& cfg);

}  // namespace paircfr
