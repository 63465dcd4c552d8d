#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "paircfr/feature_model.hpp"
#include "paircfr/losses.hpp"
#include "paircfr/model.hpp"

namespace paircfr {

enum class BatchStrategy { paircad, shuffcad };
enum class OptimizerKind { sgd, adamw };

// Update rules (theta = any parameter, g = its gradient, lr_t = warmed-up rate):
//   sgd:    v <- momentum*v + g;  theta <- theta - lr_t*v
//   adamw:  m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
//           mhat = m/(1-b1^t);  vhat = v/(1-b2^t)
//           theta <- theta - lr_t*(mhat/(sqrt(vhat)+eps) + weight_decay*theta)
struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 0.1;
  double momentum = 0.0;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8, weight_decay = 0.0;
};

struct TrainConfig {
  LossConfig loss;
  std::size_t batch_size = 16;
  BatchStrategy strategy = BatchStrategy::paircad;
  OptimizerConfig optimizer;
  double warmup_ratio = 0.05;  // fraction of scheduled optimizer steps
  std::size_t max_epochs = 20;
  std::size_t patience = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t stopping_epoch = 0;  // number of epochs actually run
  std::size_t best_epoch = 0;      // 1-based epoch of the lowest valid loss
  double best_valid_loss = 0.0;
  std::vector<std::uint64_t> seed_chain;  // cfg seed, then per-epoch batch seeds
};

// Raised when a training step produces a non-finite loss.
struct TrainAbort : std::runtime_error {
  TrainAbort(std::size_t batch_index, double encoder_norm, double head_norm);
  std::size_t batch_index;
  double encoder_norm, head_norm;
};

using Batch = std::vector<std::size_t>;  // sample positions into the dataset

// paircad keeps each pair group whole, filling batches greedily with shuffled
// groups; shuffcad shuffles samples uniformly into fixed-size slices. A final
// short batch survives with >= 1 group (paircad) or >= 2 samples (shuffcad).
std::vector<Batch> make_batches(const PairedDataset& dataset,
                                BatchStrategy strategy, std::size_t batch_size,
                                std::uint64_t seed);

FeatureBatch slice_batch(const PairedDataset& dataset, const Batch& positions);

struct TrainResult {
  LinearModel best_model;
  TrainHistory history;
};

// Mini-batch training with linear LR warmup and early stopping on the
// validation loss (strict improvement, `patience` epochs). The returned model
// is the snapshot with the lowest validation loss. Deterministic for a fixed
// (model, data, cfg).
TrainResult train(const LinearModel& model, const PairedDataset& train_set,
                  const PairedDataset& valid_set, const TrainConfig& cfg);

// Central finite differences of the combined loss over the model parameters
// (a deterministic random subset of >= max_coords coordinates when the model
// is larger). Relative error uses a max(1, |analytic|) denominator; the
// maximum over checked coordinates is returned.
double finite_diff_check(const LinearModel& model, const FeatureBatch& batch,
                         const LossConfig& cfg, double epsilon,
                         std::size_t max_coords = 200,
                         std::uint64_t coord_seed = 0);

// The same checker over an arbitrary parameter span and loss callable; the
// callable must read the parameters through the span on every invocation.
double central_diff_max_rel_err(std::span<double> params,
                                std::span<const double> analytic_grad,
                                const std::function<double()>& loss_fn,
                                double epsilon,
                                const std::vector<std::size_t>& coords);

}  // namespace paircfr
