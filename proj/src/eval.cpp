#include "paircfr/eval.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace paircfr {

double evaluate(const LinearModel& model, const PairedDataset& dataset) {
  if (dataset.size() == 0)
    throw std::invalid_argument("evaluate: empty dataset");
  const std::vector<int> pred = predict(model, dataset.feature_matrix());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == dataset.sample(i).label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

WeightDiagnostics weight_diagnostics(const LinearModel& model,
                                     const BlockLayout& layout) {
  if (model.feature_dim() != layout.total())
    throw std::invalid_argument("weight_diagnostics: layout/model mismatch");
  Matrix effective = matmul(model.encoder, model.head);  // m x K

  WeightDiagnostics d;
  if (model.num_classes() == 2) {
    d.discriminant.resize(effective.rows());
    for (std::size_t i = 0; i < effective.rows(); ++i)
      d.discriminant[i] = effective(i, 1) - effective(i, 0);
    d.block_masses = block_mass(d.discriminant, layout);
  } else {
    auto block_fro = [&](std::size_t off, std::size_t dim) {
      double s = 0.0;
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < effective.cols(); ++j)
          s += effective(off + i, j) * effective(off + i, j);
      return std::sqrt(s);
    };
    d.block_masses = {block_fro(layout.offset_r1(), layout.dim_r1),
                      block_fro(layout.offset_r2(), layout.dim_r2),
                      block_fro(layout.offset_s(), layout.dim_s)};
  }
  auto ratio = [&](double num) {
    if (d.block_masses[0] > 0.0) return num / d.block_masses[0];
    return num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  };
  d.ratio_r2_r1 = ratio(d.block_masses[1]);
  d.ratio_s_r1 = ratio(d.block_masses[2]);
  return d;
}

void ExperimentConfig::validate() const {
  train.validate();
  double sum = 0.0;
  for (double r : split_ratios) {
    if (!(r > 0.0))
      throw std::invalid_argument("split ratios must be positive");
    sum += r;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split ratios must sum to 1");
  if (seeds.empty()) throw std::invalid_argument("need at least one seed");
  if (embedding_dim < 1)
    throw std::invalid_argument("embedding_dim must be >= 1");
  if (data.kind != DataSourceKind::text) require_valid_spec(data.spec);
}

Splits split_dataset(const PairedDataset& dataset,
                     const std::array<double, 3>& ratios, Rng rng) {
  std::vector<std::int64_t> group_ids;
  group_ids.reserve(dataset.pair_index().size());
  for (const auto& [pid, group] : dataset.pair_index())
    group_ids.push_back(pid);
  rng.shuffle(group_ids);

  const std::size_t g = group_ids.size();
  std::size_t n_train = static_cast<std::size_t>(ratios[0] * g);
  std::size_t n_valid = static_cast<std::size_t>(ratios[1] * g);
  n_train = std::max<std::size_t>(n_train, 1);
  n_valid = std::max<std::size_t>(n_valid, 1);
  if (n_train + n_valid >= g)
    throw std::invalid_argument("split: not enough pair groups");

  auto take = [&group_ids](std::size_t from, std::size_t count) {
    return std::vector<std::int64_t>(group_ids.begin() + from,
                                     group_ids.begin() + from + count);
  };
  return Splits{dataset.subset(take(0, n_train)),
                dataset.subset(take(n_train, n_valid)),
                dataset.subset(take(n_train + n_valid, g - n_train - n_valid))};
}

namespace {

PairedDataset make_source_dataset(const ExperimentConfig& cfg,
                                  std::uint64_t seed) {
  switch (cfg.data.kind) {
    case DataSourceKind::synthetic_paircad:
      return generate_paircad(cfg.data.spec, cfg.data.n_pairs,
                              cfg.data.cfes_per_original, cfg.data.edit_mode,
                              seed);
    case DataSourceKind::synthetic_original:
      return generate_ood(cfg.data.spec, cfg.data.n_pairs, Shift::none, seed);
    case DataSourceKind::text: {
      auto records = parse_cad_table(cfg.data.path, cfg.data.schema);
      return build_text_dataset(records, cfg.data.featurizer);
    }
  }
  throw std::logic_error("unreachable");
}

SeedResult run_one_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedResult r;
  r.seed = seed;
  try {
    PairedDataset dataset = make_source_dataset(cfg, seed);
    Rng base(seed);
    Splits splits =
        split_dataset(dataset, cfg.split_ratios, base.child(kSplitStream));

    InitDescriptor init = cfg.init;
    init.seed = base.child(kInitStream).seed();
    LinearModel model =
        init_model(dataset.layout().total(), cfg.embedding_dim,
                   static_cast<std::size_t>(dataset.classes()), init,
                   dataset.layout(), cfg.identity_encoder, cfg.head_bias);

    TrainConfig tcfg = cfg.train;
    tcfg.seed = base.child(kTrainStream).seed();
    TrainResult result = train(model, splits.train, splits.valid, tcfg);

    r.id_accuracy = evaluate(result.best_model, splits.test);
    for (std::size_t si = 0; si < cfg.ood_shifts.size(); ++si) {
      const Shift shift = cfg.ood_shifts[si];
      PairedDataset ood =
          generate_ood(cfg.data.spec, cfg.n_ood, shift,
                       base.child(kOodStreamBase + si).seed());
      r.ood_accuracy[shift_name(shift)] = evaluate(result.best_model, ood);
    }
    for (const auto& [name, path] : cfg.ood_text) {
      auto records = parse_cad_table(path, cfg.data.schema);
      PairedDataset ood = build_text_dataset(records, cfg.data.featurizer);
      r.ood_accuracy[name] = evaluate(result.best_model, ood);
    }

    WeightDiagnostics diag =
        weight_diagnostics(result.best_model, dataset.layout());
    r.block_masses = diag.block_masses;
    r.stopping_epoch = result.history.stopping_epoch;
    r.best_epoch = result.history.best_epoch;
  } catch (const std::exception& e) {
    r.failed = true;
    r.error = e.what();
  }
  return r;
}

void accumulate_metric(RunReport& report, const std::string& name,
                       const std::vector<double>& values) {
  if (values.empty()) return;
  Aggregate agg{mean(values), sample_std(values)};
  report.aggregates[name] = agg;
}

}  // namespace

std::vector<double> RunReport::metric(const std::string& name) const {
  std::vector<double> out;
  for (const SeedResult& r : per_seed) {
    if (r.failed) continue;
    if (name == "id_accuracy")
      out.push_back(r.id_accuracy);
    else if (name == "w_r1")
      out.push_back(r.block_masses[0]);
    else if (name == "w_r2")
      out.push_back(r.block_masses[1]);
    else if (name == "w_s")
      out.push_back(r.block_masses[2]);
    else if (name == "stopping_epoch")
      out.push_back(static_cast<double>(r.stopping_epoch));
    else if (name.rfind("ood_", 0) == 0) {
      auto it = r.ood_accuracy.find(name.substr(4));
      if (it != r.ood_accuracy.end()) out.push_back(it->second);
    }
  }
  return out;
}

void compute_aggregates(RunReport& report) {
  report.aggregates.clear();
  std::vector<std::string> names = {"id_accuracy", "w_r1", "w_r2", "w_s",
                                    "stopping_epoch"};
  std::set<std::string> ood_names;
  for (const SeedResult& r : report.per_seed)
    for (const auto& [name, acc] : r.ood_accuracy) ood_names.insert(name);
  for (const auto& name : ood_names) names.push_back("ood_" + name);
  for (const auto& name : names)
    accumulate_metric(report, name, report.metric(name));
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunReport report;
  report.per_seed.reserve(cfg.seeds.size());
  for (std::uint64_t seed : cfg.seeds)
    report.per_seed.push_back(run_one_seed(cfg, seed));
  compute_aggregates(report);
  return report;
}

SweepReport sweep(const ExperimentConfig& base, const SweepGrid& grid,
                  unsigned threads) {
  base.validate();
  const std::vector<double> lambdas =
      grid.lambdas.empty() ? std::vector<double>{base.train.loss.lambda}
                           : grid.lambdas;
  const std::vector<double> taus =
      grid.taus.empty() ? std::vector<double>{base.train.loss.tau} : grid.taus;
  const std::vector<std::size_t> batch_sizes =
      grid.batch_sizes.empty() ? std::vector<std::size_t>{base.train.batch_size}
                               : grid.batch_sizes;
  const std::vector<std::size_t> n_pairs =
      grid.n_pairs.empty() ? std::vector<std::size_t>{base.data.n_pairs}
                           : grid.n_pairs;
  const std::vector<std::size_t> ks =
      grid.ks.empty() ? std::vector<std::size_t>{base.data.cfes_per_original}
                      : grid.ks;

  SweepReport report;
  for (double lambda : lambdas)
    for (double tau : taus)
      for (std::size_t bs : batch_sizes)
        for (std::size_t np : n_pairs)
          for (std::size_t k : ks) {
            SweepCell cell;
            cell.lambda = lambda;
            cell.tau = tau;
            cell.batch_size = bs;
            cell.n_pairs = np;
            cell.k = k;
            report.cells.push_back(std::move(cell));
          }

  auto run_cell = [&base](SweepCell& cell) {
    try {
      ExperimentConfig cfg = base;
      cfg.train.loss.lambda = cell.lambda;
      cfg.train.loss.tau = cell.tau;
      cfg.train.batch_size = cell.batch_size;
      cfg.data.n_pairs = cell.n_pairs;
      cfg.data.cfes_per_original = cell.k;
      cell.report = run_experiment(cfg);
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
  };

  if (threads <= 1) {
    for (SweepCell& cell : report.cells) run_cell(cell);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= report.cells.size()) break;
        run_cell(report.cells[i]);
      }
    };
    std::vector<std::thread> pool;
    const unsigned n_threads = std::min<unsigned>(
        threads, static_cast<unsigned>(report.cells.size()));
    pool.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return report;
}

namespace {

std::vector<std::string> collect_ood_names(const SweepReport& report) {
  std::set<std::string> names;
  for (const SweepCell& cell : report.cells)
    for (const SeedResult& r : cell.report.per_seed)
      for (const auto& [name, acc] : r.ood_accuracy) names.insert(name);
  return {names.begin(), names.end()};
}

}  // namespace

std::string sweep_to_csv(const SweepReport& report) {
  const std::vector<std::string> ood_names = collect_ood_names(report);
  std::ostringstream os;
  os << "lambda,tau,batch_size,n_pairs,k,seed,id_accuracy";
  for (const auto& name : ood_names) os << ",ood_" << name;
  os << ",w_r1,w_r2,w_s,stopping_epoch,status\n";

  auto emit_row = [&os, &ood_names](const SweepCell& cell,
                                    const std::string& seed_label,
                                    const SeedResult* r, const RunReport* agg,
                                    bool stddev) {
    os << cell.lambda << ',' << cell.tau << ',' << cell.batch_size << ','
       << cell.n_pairs << ',' << cell.k << ',' << seed_label;
    auto metric = [&](const std::string& name) -> std::string {
      if (r) {
        if (name == "id_accuracy") return std::to_string(r->id_accuracy);
        if (name == "w_r1") return std::to_string(r->block_masses[0]);
        if (name == "w_r2") return std::to_string(r->block_masses[1]);
        if (name == "w_s") return std::to_string(r->block_masses[2]);
        if (name == "stopping_epoch") return std::to_string(r->stopping_epoch);
        auto it = r->ood_accuracy.find(name.substr(4));
        return it == r->ood_accuracy.end() ? "" : std::to_string(it->second);
      }
      auto it = agg->aggregates.find(name);
      if (it == agg->aggregates.end()) return "";
      return std::to_string(stddev ? it->second.stddev : it->second.mean);
    };
    os << ',' << metric("id_accuracy");
    for (const auto& name : ood_names) os << ',' << metric("ood_" + name);
    os << ',' << metric("w_r1") << ',' << metric("w_r2") << ','
       << metric("w_s") << ',' << metric("stopping_epoch");
    if (r)
      os << ',' << (r->failed ? "failed:" + r->error : std::string("ok"));
    else
      os << ',' << (stddev ? "std" : "mean");
    os << '\n';
  };

  for (const SweepCell& cell : report.cells) {
    if (cell.failed) {
      os << cell.lambda << ',' << cell.tau << ',' << cell.batch_size << ','
         << cell.n_pairs << ',' << cell.k << ",-,,";
      for (std::size_t i = 0; i < ood_names.size(); ++i) os << ',';
      os << ",,,,failed:" << cell.error << '\n';
      continue;
    }
    for (const SeedResult& r : cell.report.per_seed)
      emit_row(cell, std::to_string(r.seed), &r, nullptr, false);
    emit_row(cell, "mean", nullptr, &cell.report, false);
    emit_row(cell, "std", nullptr, &cell.report, true);
  }
  return os.str();
}

std::string sweep_to_plotdata(const SweepReport& report) {
  std::ostringstream os;
  os << "# lambda tau batch_size n_pairs k metric mean std\n";
  for (const SweepCell& cell : report.cells) {
    if (cell.failed) continue;
    for (const auto& [name, agg] : cell.report.aggregates)
      os << cell.lambda << ' ' << cell.tau << ' ' << cell.batch_size << ' '
         << cell.n_pairs << ' ' << cell.k << ' ' << name << ' ' << agg.mean
         << ' ' << agg.stddev << '\n';
  }
  return os.str();
}

}  // namespace paircfr
