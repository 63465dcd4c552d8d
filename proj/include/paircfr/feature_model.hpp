#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paircfr/layout.hpp"
#include "paircfr/matrix.hpp"
#include "paircfr/rng.hpp"

namespace paircfr {

// Class ids are stored as {0, 1} plus the optional neutral class 2. The
// regression-style results use the signed encoding 0 -> -1, 1 -> +1.
constexpr int kNeutralClass = 2;

inline double signed_label(int label) {
  if (label == 0) return -1.0;
  if (label == 1) return 1.0;
  return 0.0;  // neutral: pattern-free, all block means vanish
}

// Gaussian generative model for counterfactually augmented data. Block b of
// an original with class y in {-1,+1} is drawn from N(y*mu_b, Sigma_b).
struct FeatureModelSpec {
  BlockLayout layout;
  Vec mu_r1, mu_r2, mu_s;
  Matrix sigma_r1, sigma_r2, sigma_s;
  int classes = 2;          // 2, or 3 with the pattern-free neutral class
  double label_prior = 0.5; // P(class 1); kept for robustness experiments

  // Convenience constructor: isotropic sigma^2 I covariance per block.
  static FeatureModelSpec isotropic(const BlockLayout& layout,
                                    const Vec& mu_r1, const Vec& mu_r2,
                                    const Vec& mu_s, double var_r1 = 1.0,
                                    double var_r2 = 1.0, double var_s = 1.0,
                                    int classes = 2);

  std::uint64_t content_hash() const;
};

struct SpecValidation {
  std::vector<std::string> diagnostics;
  bool ok() const { return diagnostics.empty(); }
};

SpecValidation validate_spec(const FeatureModelSpec& spec);

// Throws std::invalid_argument with the joined diagnostics if invalid.
void require_valid_spec(const FeatureModelSpec& spec);

enum class Role { original, counterfactual };
enum class EditMode { exact_opposite, resample };

struct Sample {
  Vec x;
  int label = 0;
  Role role = Role::original;
  std::int64_t pair_id = 0;
  int source_label = 0;  // class of the original in this sample's pair
};

// One pair group: the original's position and its counterfactuals' positions.
struct PairGroup {
  std::size_t original = 0;
  std::vector<std::size_t> counterfactuals;
  std::size_t size() const { return 1 + counterfactuals.size(); }
};

struct DatasetProvenance {
  std::uint64_t spec_hash = 0;
  std::uint64_t seed = 0;
  std::string mode;
};

// Immutable sample collection with explicit original<->counterfactual links.
class PairedDataset {
 public:
  PairedDataset() = default;
  PairedDataset(BlockLayout layout, int classes, std::vector<Sample> samples,
                DatasetProvenance provenance);

  const BlockLayout& layout() const { return layout_; }
  int classes() const { return classes_; }
  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& sample(std::size_t i) const { return samples_[i]; }
  std::size_t size() const { return samples_.size(); }
  const std::map<std::int64_t, PairGroup>& pair_index() const {
    return pair_index_;
  }
  const DatasetProvenance& provenance() const { return provenance_; }

  // New dataset holding the listed pair groups (samples in group order).
  PairedDataset subset(const std::vector<std::int64_t>& group_ids) const;

  // Feature rows for the given sample positions (all samples if empty).
  Matrix feature_matrix(const std::vector<std::size_t>& positions = {}) const;
  std::vector<int> labels(const std::vector<std::size_t>& positions = {}) const;

  bool has_neutral_samples() const;
  bool has_counterfactuals() const;

 private:
  BlockLayout layout_;
  int classes_ = 2;
  std::vector<Sample> samples_;
  std::map<std::int64_t, PairGroup> pair_index_;
  DatasetProvenance provenance_;
};

// Draws one original of the given class. Blocks are produced in layout order
// (r1, r2, s); each consumes dim(block) gaussians transformed by the
// Cholesky factor of its covariance.
Sample sample_original(const FeatureModelSpec& spec, int label, Rng& rng);

// Produces the label-flipped counterfactual of `original`. Unedited blocks
// (r2, s) are copied bit-exactly. The edited block is -h_r1 under
// exact_opposite; under resample it is a fresh draw from
// N(y_new * mu_r1, Sigma_r1), consistent with the flipped label.
Sample derive_counterfactual(const Sample& original,
                             const FeatureModelSpec& spec, EditMode edit_mode,
                             Rng& rng);

// Pooled CAD: n_pairs originals with stratified (alternating) labels, each
// followed by its k counterfactuals. With classes == 3 every third group is
// a single neutral original (no counterfactual), keeping the binary pairs
// balanced. Deterministic function of (spec, n_pairs, k, edit_mode, seed).
PairedDataset generate_paircad(const FeatureModelSpec& spec,
                               std::size_t n_pairs,
                               std::size_t cfes_per_original,
                               EditMode edit_mode, std::uint64_t seed);

// Distribution shifts for out-of-domain test sets (originals only).
//   none:          in-domain originals
//   spurious_flip: h_s | y ~ N(-y mu_s, Sigma_s)
//   spurious_null: h_s ~ N(0, Sigma_s)
//   edited_null:   h_r1 ~ N(0, Sigma_r1)
enum class Shift { none, spurious_flip, spurious_null, edited_null };

const char* shift_name(Shift s);
std::optional<Shift> shift_from_name(const std::string& name);

PairedDataset generate_ood(const FeatureModelSpec& spec, std::size_t n,
                           Shift shift, std::uint64_t seed);

}  // namespace paircfr
