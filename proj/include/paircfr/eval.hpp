#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paircfr/closed_form.hpp"
#include "paircfr/feature_model.hpp"
#include "paircfr/stats.hpp"
#include "paircfr/text_ingest.hpp"
#include "paircfr/trainer.hpp"

namespace paircfr {

// Fraction of samples whose argmax logit matches the label.
double evaluate(const LinearModel& model, const PairedDataset& dataset);

// Block masses of the effective feature-space map W*U. For K = 2 the map
// collapses to the discriminant direction W*(U_col1 - U_col0); for K > 2 the
// per-block Frobenius norms of W*U are reported. The ratios quantify how much
// weight sits on unedited (r2) and spurious (s) features relative to r1.
struct WeightDiagnostics {
  std::array<double, 3> block_masses{0, 0, 0};
  double ratio_r2_r1 = 0.0;
  double ratio_s_r1 = 0.0;
  Vec discriminant;  // populated for K = 2
};

WeightDiagnostics weight_diagnostics(const LinearModel& model,
                                     const BlockLayout& layout);

enum class DataSourceKind { synthetic_paircad, synthetic_original, text };

struct DataSource {
  DataSourceKind kind = DataSourceKind::synthetic_paircad;
  // synthetic
  FeatureModelSpec spec;
  std::size_t n_pairs = 256;  // paircad groups, or sample count for originals
  std::size_t cfes_per_original = 1;
  EditMode edit_mode = EditMode::exact_opposite;
  // text
  std::string path;
  CadSchema schema;
  HashFeaturizer featurizer;
};

struct ExperimentConfig {
  DataSource data;
  std::array<double, 3> split_ratios{0.7, 0.1, 0.2};
  TrainConfig train;
  std::size_t embedding_dim = 8;
  InitDescriptor init{InitKind::scaled_normal, 0.1, 0};
  bool identity_encoder = false;
  bool head_bias = false;
  std::vector<Shift> ood_shifts;  // synthetic OOD suite
  std::size_t n_ood = 2000;
  std::vector<std::pair<std::string, std::string>> ood_text;  // name -> path
  std::vector<std::uint64_t> seeds{1};

  void validate() const;
};

struct SeedResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double id_accuracy = 0.0;
  std::map<std::string, double> ood_accuracy;
  std::array<double, 3> block_masses{0, 0, 0};
  std::size_t stopping_epoch = 0;
  std::size_t best_epoch = 0;
};

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // n-1 denominator
};

struct RunReport {
  std::vector<SeedResult> per_seed;
  std::map<std::string, Aggregate> aggregates;

  // Per-seed values of one metric ("id_accuracy", "ood_<name>", "w_r1", ...)
  // over the seeds that completed, in seed-list order.
  std::vector<double> metric(const std::string& name) const;
};

RunReport run_experiment(const ExperimentConfig& cfg);

struct Splits {
  PairedDataset train, valid, test;
};

// Shuffles pair groups and partitions them by the given ratios; groups are
// never split, so counterfactuals stay with their originals.
Splits split_dataset(const PairedDataset& dataset,
                     const std::array<double, 3>& ratios, Rng rng);

// Streams derived from an experiment seed (dataset generation uses the raw
// seed itself).
constexpr std::uint64_t kSplitStream = 101;
constexpr std::uint64_t kInitStream = 102;
constexpr std::uint64_t kTrainStream = 103;
constexpr std::uint64_t kOodStreamBase = 200;

// Recomputes aggregates from the per-seed rows (used after deserialization
// and by the aggregate-consistency tests).
void compute_aggregates(RunReport& report);

struct SweepGrid {
  std::vector<double> lambdas;
  std::vector<double> taus;
  std::vector<std::size_t> batch_sizes;
  std::vector<std::size_t> n_pairs;
  std::vector<std::size_t> ks;

  bool empty() const {
    return lambdas.empty() && taus.empty() && batch_sizes.empty() &&
           n_pairs.empty() && ks.empty();
  }
};

struct SweepCell {
  double lambda = 0.0, tau = 0.0;
  std::size_t batch_size = 0, n_pairs = 0, k = 0;
  RunReport report;
  bool failed = false;
  std::string error;
};

struct SweepReport {
  std::vector<SweepCell> cells;
};

// Cross product of the grid (empty dimensions pinned to the base config),
// run with up to `threads` concurrent cells. Cell order and results are
// independent of the thread count.
SweepReport sweep(const ExperimentConfig& base, const SweepGrid& grid,
                  unsigned threads = 1);

std::string sweep_to_csv(const SweepReport& report);
std::string sweep_to_plotdata(const SweepReport& report);

}  // namespace paircfr
