#include "paircfr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace paircfr {

void TrainConfig::validate() const {
  loss.validate();
  if (batch_size < 2)
    throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
  if (patience < 1)
    throw std::invalid_argument("TrainConfig: patience must be >= 1");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0))
    throw std::invalid_argument("TrainConfig: warmup_ratio must lie in [0,1)");
  if (max_epochs < 1)
    throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
  if (!(optimizer.lr >= 0.0))
    throw std::invalid_argument("TrainConfig: learning rate must be >= 0");
}

TrainAbort::TrainAbort(std::size_t batch_index_, double encoder_norm_,
                       double head_norm_)
    : std::runtime_error("non-finite loss at batch " +
                         std::to_string(batch_index_) + " (|W|=" +
                         std::to_string(encoder_norm_) + ", |U|=" +
                         std::to_string(head_norm_) + ")"),
      batch_index(batch_index_),
      encoder_norm(encoder_norm_),
      head_norm(head_norm_) {}

std::vector<Batch> make_batches(const PairedDataset& dataset,
                                BatchStrategy strategy, std::size_t batch_size,
                                std::uint64_t seed) {
  if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
  Rng rng(seed);
  std::vector<Batch> batches;

  if (strategy == BatchStrategy::paircad) {
    std::vector<const PairGroup*> groups;
    groups.reserve(dataset.pair_index().size());
    for (const auto& [pid, group] : dataset.pair_index()) {
      if (group.size() > batch_size)
        throw std::invalid_argument(
            "paircad: batch_size smaller than a pair group (" +
            std::to_string(group.size()) + ")");
      groups.push_back(&group);
    }
    rng.shuffle(groups);
    Batch current;
    for (const PairGroup* g : groups) {
      if (current.size() + g->size() > batch_size) {
        batches.push_back(std::move(current));
        current.clear();
      }
      current.push_back(g->original);
      for (std::size_t c : g->counterfactuals) current.push_back(c);
    }
    if (!current.empty()) batches.push_back(std::move(current));
    return batches;
  }

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    if (end - start < 2) break;  // drop a one-sample tail
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

FeatureBatch slice_batch(const PairedDataset& dataset, const Batch& positions) {
  FeatureBatch b;
  b.x = dataset.feature_matrix(positions);
  b.labels.reserve(positions.size());
  b.pair_ids.reserve(positions.size());
  for (std::size_t p : positions) {
    b.labels.push_back(dataset.sample(p).label);
    b.pair_ids.push_back(dataset.sample(p).pair_id);
  }
  return b;
}

namespace {

// Flat view over the trainable parameters: encoder (unless fixed), head, bias.
struct ParamView {
  std::vector<std::span<double>> segments;

  explicit ParamView(LinearModel& model) {
    if (!model.identity_encoder)
      segments.push_back({model.encoder.data(), model.encoder.size()});
    segments.push_back({model.head.data(), model.head.size()});
    if (model.has_bias())
      segments.push_back({model.head_bias.data(), model.head_bias.size()});
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += s.size();
    return n;
  }
  double& at(std::size_t idx) {
    for (const auto& s : segments) {
      if (idx < s.size()) return s[idx];
      idx -= s.size();
    }
    throw std::out_of_range("ParamView index");
  }
};

Vec flatten_grad(const LinearModel& model, const GradReport& g) {
  Vec out;
  if (!model.identity_encoder)
    out.insert(out.end(), g.grad_encoder.data(),
               g.grad_encoder.data() + g.grad_encoder.size());
  out.insert(out.end(), g.grad_head.data(),
             g.grad_head.data() + g.grad_head.size());
  out.insert(out.end(), g.grad_bias.begin(), g.grad_bias.end());
  return out;
}

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& cfg, std::size_t n_params)
      : cfg_(cfg), m_(n_params, 0.0), v_(n_params, 0.0) {}

  void step(ParamView& params, const Vec& grad, double lr_t) {
    ++t_;
    if (cfg_.kind == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < grad.size(); ++i) {
        m_[i] = cfg_.momentum * m_[i] + grad[i];
        params.at(i) -= lr_t * m_[i];
      }
      return;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < grad.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      double& theta = params.at(i);
      theta -= lr_t * (mhat / (std::sqrt(vhat) + cfg_.epsilon) +
                       cfg_.weight_decay * theta);
    }
  }

 private:
  OptimizerConfig cfg_;
  std::size_t t_ = 0;
  Vec m_, v_;
};

}  // namespace

TrainResult train(const LinearModel& model, const PairedDataset& train_set,
                  const PairedDataset& valid_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.size() == 0 || valid_set.size() == 0)
    throw std::invalid_argument("train: empty split");

  LinearModel current = model;
  ParamView params(current);
  Optimizer opt(cfg.optimizer, params.size());

  Rng root(cfg.seed);
  TrainHistory history;
  history.seed_chain.push_back(cfg.seed);

  const std::size_t batches_per_epoch =
      make_batches(train_set, cfg.strategy, cfg.batch_size,
                   root.child(1).seed())
          .size();
  if (batches_per_epoch == 0)
    throw std::invalid_argument("train: no usable batches");
  const std::size_t total_steps = cfg.max_epochs * batches_per_epoch;
  const std::size_t warmup_steps =
      static_cast<std::size_t>(cfg.warmup_ratio * total_steps);

  const FeatureBatch valid_all = slice_batch(
      valid_set, [&] {
        Batch all(valid_set.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return all;
      }());
  const std::vector<int> valid_labels = valid_set.labels();

  LinearModel best = current;
  double best_valid = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0, since_improvement = 0, step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const std::uint64_t epoch_seed = root.child(epoch).seed();
    history.seed_chain.push_back(epoch_seed);
    const auto batches =
        make_batches(train_set, cfg.strategy, cfg.batch_size, epoch_seed);

    double train_loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      FeatureBatch fb = slice_batch(train_set, batches[bi]);
      CombinedResult res = combined_loss_and_grad(current, fb, cfg.loss);
      if (!std::isfinite(res.loss))
        throw TrainAbort(bi, frobenius(current.encoder),
                         frobenius(current.head));
      train_loss_sum += res.loss;

      ++step;
      double lr_t = cfg.optimizer.lr;
      if (warmup_steps > 0 && step <= warmup_steps)
        lr_t *= static_cast<double>(step) / static_cast<double>(warmup_steps);
      const Vec grad = flatten_grad(current, res.grad);
      opt.step(params, grad, lr_t);
    }

    EpochStats stats;
    stats.train_loss = train_loss_sum / static_cast<double>(batches.size());
    CombinedResult vres = combined_loss_and_grad(current, valid_all, cfg.loss);
    stats.valid_loss = vres.loss;
    const std::vector<int> pred = predict(current, valid_all.x);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == valid_labels[i]) ++hits;
    stats.valid_accuracy =
        static_cast<double>(hits) / static_cast<double>(pred.size());
    history.epochs.push_back(stats);
    history.stopping_epoch = epoch;

    if (stats.valid_loss < best_valid) {
      best_valid = stats.valid_loss;
      best = current;
      best_epoch = epoch;
      since_improvement = 0;
    } else if (++since_improvement >= cfg.patience) {
      break;
    }
  }

  history.best_epoch = best_epoch;
  history.best_valid_loss = best_valid;
  return {std::move(best), std::move(history)};
}

double central_diff_max_rel_err(std::span<double> params,
                                std::span<const double> analytic_grad,
                                const std::function<double()>& loss_fn,
                                double epsilon,
                                const std::vector<std::size_t>& coords) {
  if (!(epsilon > 0.0))
    throw std::invalid_argument("central_diff_max_rel_err: epsilon must be > 0");
  double worst = 0.0;
  for (std::size_t i : coords) {
    const double saved = params[i];
    params[i] = saved + epsilon;
    const double up = loss_fn();
    params[i] = saved - epsilon;
    const double down = loss_fn();
    params[i] = saved;
    const double fd = (up - down) / (2.0 * epsilon);
    const double an = analytic_grad[i];
    worst = std::max(worst, std::fabs(fd - an) / std::max(1.0, std::fabs(an)));
  }
  return worst;
}

double finite_diff_check(const LinearModel& model, const FeatureBatch& batch,
                         const LossConfig& cfg, double epsilon,
                         std::size_t max_coords, std::uint64_t coord_seed) {
  if (!(epsilon > 0.0))
    throw std::invalid_argument("finite_diff_check: epsilon must be > 0");
  LinearModel local = model;
  ParamView params(local);
  const std::size_t n = params.size();

  CombinedResult base = combined_loss_and_grad(local, batch, cfg);
  const Vec analytic = flatten_grad(local, base.grad);

  std::vector<std::size_t> coords;
  if (n <= max_coords) {
    coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
  } else {
    Rng rng(coord_seed);
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    rng.shuffle(all);
    coords.assign(all.begin(), all.begin() + max_coords);
    std::sort(coords.begin(), coords.end());
  }

  // flat copy of the parameters so the closure sees every perturbation
  Vec flat(n);
  for (std::size_t i = 0; i < n; ++i) flat[i] = params.at(i);
  auto loss_fn = [&]() {
    for (std::size_t i = 0; i < n; ++i) params.at(i) = flat[i];
    return combined_loss_and_grad(local, batch, cfg).loss;
  };
  return central_diff_max_rel_err(flat, analytic, loss_fn, epsilon, coords);
}

}  // namespace paircfr
