#include "paircfr/feature_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace paircfr {

FeatureModelSpec FeatureModelSpec::isotropic(const BlockLayout& layout,
                                             const Vec& mu_r1, const Vec& mu_r2,
                                             const Vec& mu_s, double var_r1,
                                             double var_r2, double var_s,
                                             int classes) {
  FeatureModelSpec spec;
  spec.layout = layout;
  spec.mu_r1 = mu_r1;
  spec.mu_r2 = mu_r2;
  spec.mu_s = mu_s;
  auto iso = [](std::size_t n, double v) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = v;
    return m;
  };
  spec.sigma_r1 = iso(layout.dim_r1, var_r1);
  spec.sigma_r2 = iso(layout.dim_r2, var_r2);
  spec.sigma_s = iso(layout.dim_s, var_s);
  spec.classes = classes;
  return spec;
}

std::uint64_t FeatureModelSpec::content_hash() const {
  std::ostringstream os;
  os << layout.dim_r1 << ':' << layout.dim_r2 << ':' << layout.dim_s << ':'
     << classes << ':' << label_prior << ':';
  auto put_vec = [&os](const Vec& v) {
    for (double x : v) os << x << ',';
    os << ';';
  };
  auto put_mat = [&os](const Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) os << m.data()[i] << ',';
    os << ';';
  };
  put_vec(mu_r1);
  put_vec(mu_r2);
  put_vec(mu_s);
  put_mat(sigma_r1);
  put_mat(sigma_r2);
  put_mat(sigma_s);
  const std::string s = os.str();
  return fnv1a64(s.data(), s.size());
}

namespace {

void check_block(SpecValidation& v, const char* name, std::size_t dim,
                 const Vec& mu, const Matrix& sigma) {
  if (mu.size() != dim) {
    v.diagnostics.push_back(std::string("mean/layout mismatch: mu_") + name);
    return;
  }
  if (sigma.rows() != dim || sigma.cols() != dim) {
    v.diagnostics.push_back(std::string("covariance/layout mismatch: sigma_") +
                            name);
    return;
  }
  if (dim == 0) return;
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i + 1; j < dim; ++j)
      if (sigma(i, j) != sigma(j, i)) {
        v.diagnostics.push_back(std::string("sigma_") + name +
                                " not symmetric");
        return;
      }
  Matrix l;
  if (!cholesky(sigma, l))
    v.diagnostics.push_back(std::string("sigma_") + name +
                            " not positive definite");
}

}  // namespace

SpecValidation validate_spec(const FeatureModelSpec& spec) {
  SpecValidation v;
  if (!spec.layout.valid())
    v.diagnostics.push_back("layout invalid: dim_r1 >= 1 and total >= 1 required");
  if (spec.classes != 2 && spec.classes != 3)
    v.diagnostics.push_back("classes must be 2 or 3");
  if (!(spec.label_prior > 0.0 && spec.label_prior < 1.0))
    v.diagnostics.push_back("label_prior must lie in (0,1)");
  check_block(v, "r1", spec.layout.dim_r1, spec.mu_r1, spec.sigma_r1);
  check_block(v, "r2", spec.layout.dim_r2, spec.mu_r2, spec.sigma_r2);
  check_block(v, "s", spec.layout.dim_s, spec.mu_s, spec.sigma_s);
  return v;
}

void require_valid_spec(const FeatureModelSpec& spec) {
  SpecValidation v = validate_spec(spec);
  if (v.ok()) return;
  std::string msg = "invalid FeatureModelSpec:";
  for (const auto& d : v.diagnostics) msg += " " + d + ";";
  throw std::invalid_argument(msg);
}

PairedDataset::PairedDataset(BlockLayout layout, int classes,
                             std::vector<Sample> samples,
                             DatasetProvenance provenance)
    : layout_(layout),
      classes_(classes),
      samples_(std::move(samples)),
      provenance_(std::move(provenance)) {
  const std::size_t m = layout_.total();
  for (std::size_t pos = 0; pos < samples_.size(); ++pos) {
    const Sample& s = samples_[pos];
    if (s.x.size() != m)
      throw std::invalid_argument("PairedDataset: sample length != layout m");
    if (s.role != Role::original) continue;
    auto [it, inserted] = pair_index_.try_emplace(s.pair_id, PairGroup{pos, {}});
    if (!inserted)
      throw std::invalid_argument("PairedDataset: duplicate original pair_id " +
                                  std::to_string(s.pair_id));
  }
  for (std::size_t pos = 0; pos < samples_.size(); ++pos) {
    const Sample& s = samples_[pos];
    if (s.role != Role::counterfactual) continue;
    auto it = pair_index_.find(s.pair_id);
    if (it == pair_index_.end())
      throw std::invalid_argument(
          "PairedDataset: counterfactual without original (pair_id " +
          std::to_string(s.pair_id) + ")");
    if (s.label == samples_[it->second.original].label)
      throw std::invalid_argument(
          "PairedDataset: pair labels must differ (pair_id " +
          std::to_string(s.pair_id) + ")");
    it->second.counterfactuals.push_back(pos);
  }
}

PairedDataset PairedDataset::subset(
    const std::vector<std::int64_t>& group_ids) const {
  std::vector<Sample> out;
  for (std::int64_t gid : group_ids) {
    auto it = pair_index_.find(gid);
    if (it == pair_index_.end())
      throw std::invalid_argument("subset: unknown pair_id " +
                                  std::to_string(gid));
    out.push_back(samples_[it->second.original]);
    for (std::size_t cpos : it->second.counterfactuals)
      out.push_back(samples_[cpos]);
  }
  DatasetProvenance prov = provenance_;
  prov.mode += "/subset";
  return PairedDataset(layout_, classes_, std::move(out), std::move(prov));
}

Matrix PairedDataset::feature_matrix(
    const std::vector<std::size_t>& positions) const {
  const std::size_t m = layout_.total();
  if (positions.empty()) {
    Matrix x(samples_.size(), m);
    for (std::size_t i = 0; i < samples_.size(); ++i)
      std::copy(samples_[i].x.begin(), samples_[i].x.end(), &x(i, 0));
    return x;
  }
  Matrix x(positions.size(), m);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Sample& s = samples_.at(positions[i]);
    std::copy(s.x.begin(), s.x.end(), &x(i, 0));
  }
  return x;
}

std::vector<int> PairedDataset::labels(
    const std::vector<std::size_t>& positions) const {
  std::vector<int> out;
  if (positions.empty()) {
    out.reserve(samples_.size());
    for (const Sample& s : samples_) out.push_back(s.label);
  } else {
    out.reserve(positions.size());
    for (std::size_t p : positions) out.push_back(samples_.at(p).label);
  }
  return out;
}

bool PairedDataset::has_neutral_samples() const {
  return std::any_of(samples_.begin(), samples_.end(),
                     [](const Sample& s) { return s.label == kNeutralClass; });
}

bool PairedDataset::has_counterfactuals() const {
  return std::any_of(samples_.begin(), samples_.end(), [](const Sample& s) {
    return s.role == Role::counterfactual;
  });
}

namespace {

struct BlockSampler {
  Matrix l_r1, l_r2, l_s;

  explicit BlockSampler(const FeatureModelSpec& spec) {
    auto factor = [](const Matrix& sigma, Matrix& l, const char* name) {
      if (sigma.rows() == 0) {
        l = Matrix(0, 0);
        return;
      }
      if (!cholesky(sigma, l))
        throw std::invalid_argument(std::string("sigma_") + name +
                                    " not positive definite");
    };
    factor(spec.sigma_r1, l_r1, "r1");
    factor(spec.sigma_r2, l_r2, "r2");
    factor(spec.sigma_s, l_s, "s");
  }

  // h = mean + L * eps, eps drawn sequentially from rng.
  void draw_block(const Matrix& l, const Vec& mu, double y_sign, Rng& rng,
                  double* out) const {
    const std::size_t d = l.rows();
    if (d == 0) return;
    Vec eps(d);
    for (std::size_t i = 0; i < d; ++i) eps[i] = rng.next_gaussian();
    for (std::size_t i = 0; i < d; ++i) {
      double v = y_sign * mu[i];
      for (std::size_t j = 0; j <= i; ++j) v += l(i, j) * eps[j];
      out[i] = v;
    }
  }
};

Sample draw_original(const FeatureModelSpec& spec, const BlockSampler& bs,
                     int label, Rng& rng, Shift shift) {
  const double y = signed_label(label);
  Sample s;
  s.x.resize(spec.layout.total());
  s.label = label;
  s.source_label = label;
  s.role = Role::original;

  const double y_r1 = (shift == Shift::edited_null) ? 0.0 : y;
  double y_s = y;
  if (shift == Shift::spurious_flip) y_s = -y;
  if (shift == Shift::spurious_null) y_s = 0.0;

  bs.draw_block(bs.l_r1, spec.mu_r1, y_r1, rng, s.x.data());
  bs.draw_block(bs.l_r2, spec.mu_r2, y, rng,
                s.x.data() + spec.layout.offset_r2());
  bs.draw_block(bs.l_s, spec.mu_s, y_s, rng,
                s.x.data() + spec.layout.offset_s());
  return s;
}

void check_label(const FeatureModelSpec& spec, int label) {
  if (label < 0 || label >= spec.classes)
    throw std::invalid_argument("label " + std::to_string(label) +
                                " out of range for " +
                                std::to_string(spec.classes) + " classes");
}

}  // namespace

Sample sample_original(const FeatureModelSpec& spec, int label, Rng& rng) {
  require_valid_spec(spec);
  check_label(spec, label);
  BlockSampler bs(spec);
  return draw_original(spec, bs, label, rng, Shift::none);
}

Sample derive_counterfactual(const Sample& original,
                             const FeatureModelSpec& spec, EditMode edit_mode,
                             Rng& rng) {
  if (original.role != Role::original)
    throw std::invalid_argument("derive_counterfactual: input must be an original");
  if (original.label == kNeutralClass)
    throw std::invalid_argument("neutral samples have no counterfactual");
  check_label(spec, original.label);

  Sample cf = original;
  cf.role = Role::counterfactual;
  cf.label = 1 - original.label;
  cf.source_label = original.label;

  const std::size_t d1 = spec.layout.dim_r1;
  if (edit_mode == EditMode::exact_opposite) {
    for (std::size_t i = 0; i < d1; ++i) cf.x[i] = -cf.x[i];
  } else {
    const double y_new = signed_label(cf.label);
    Matrix l;
    if (!cholesky(spec.sigma_r1, l))
      throw std::invalid_argument("sigma_r1 not positive definite");
    Vec eps(d1);
    for (std::size_t i = 0; i < d1; ++i) eps[i] = rng.next_gaussian();
    for (std::size_t i = 0; i < d1; ++i) {
      double v = y_new * spec.mu_r1[i];
      for (std::size_t j = 0; j <= i; ++j) v += l(i, j) * eps[j];
      cf.x[i] = v;
    }
  }
  return cf;
}

PairedDataset generate_paircad(const FeatureModelSpec& spec,
                               std::size_t n_pairs,
                               std::size_t cfes_per_original,
                               EditMode edit_mode, std::uint64_t seed) {
  require_valid_spec(spec);
  if (n_pairs < 1) throw std::invalid_argument("generate_paircad: n_pairs >= 1");
  if (cfes_per_original < 1)
    throw std::invalid_argument("generate_paircad: k >= 1");
  if (cfes_per_original > 1 && edit_mode == EditMode::exact_opposite)
    throw std::invalid_argument("exact opposite edit is unique");

  BlockSampler bs(spec);
  Rng root(seed);
  std::vector<Sample> samples;
  samples.reserve(n_pairs * (1 + cfes_per_original));

  for (std::size_t i = 0; i < n_pairs; ++i) {
    // stratified assignment: alternate 1,0 pairs; with 3 classes every third
    // group is a lone neutral original
    int label;
    if (spec.classes == 3) {
      const std::size_t phase = i % 3;
      label = phase == 0 ? 1 : (phase == 1 ? 0 : kNeutralClass);
    } else {
      label = (i % 2 == 0) ? 1 : 0;
    }

    Rng orig_rng = root.child(2 * i);
    Sample orig = draw_original(spec, bs, label, orig_rng, Shift::none);
    orig.pair_id = static_cast<std::int64_t>(i);
    samples.push_back(std::move(orig));

    if (label == kNeutralClass) continue;
    Rng cf_root = root.child(2 * i + 1);
    for (std::size_t j = 0; j < cfes_per_original; ++j) {
      Rng cf_rng = cf_root.child(j);
      samples.push_back(
          derive_counterfactual(samples[samples.size() - 1 - j], spec,
                                edit_mode, cf_rng));
    }
  }

  DatasetProvenance prov{spec.content_hash(), seed,
                         edit_mode == EditMode::exact_opposite
                             ? "paircad/exact_opposite"
                             : "paircad/resample"};
  return PairedDataset(spec.layout, spec.classes, std::move(samples),
                       std::move(prov));
}

const char* shift_name(Shift s) {
  switch (s) {
    case Shift::none: return "none";
    case Shift::spurious_flip: return "spurious_flip";
    case Shift::spurious_null: return "spurious_null";
    case Shift::edited_null: return "edited_null";
  }
  return "?";
}

std::optional<Shift> shift_from_name(const std::string& name) {
  if (name == "none") return Shift::none;
  if (name == "spurious_flip") return Shift::spurious_flip;
  if (name == "spurious_null") return Shift::spurious_null;
  if (name == "edited_null") return Shift::edited_null;
  return std::nullopt;
}

PairedDataset generate_ood(const FeatureModelSpec& spec, std::size_t n,
                           Shift shift, std::uint64_t seed) {
  require_valid_spec(spec);
  BlockSampler bs(spec);
  Rng root(seed);
  std::vector<Sample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    int label;
    if (spec.classes == 3) {
      const std::size_t phase = i % 3;
      label = phase == 0 ? 1 : (phase == 1 ? 0 : kNeutralClass);
    } else {
      label = (i % 2 == 0) ? 1 : 0;
    }
    Rng rng = root.child(i);
    Sample s = draw_original(spec, bs, label, rng, shift);
    s.pair_id = static_cast<std::int64_t>(i);
    samples.push_back(std::move(s));
  }
  DatasetProvenance prov{spec.content_hash(), seed,
                         std::string("ood/") + shift_name(shift)};
  return PairedDataset(spec.layout, spec.classes, std::move(samples),
                       std::move(prov));
}

}  // namespace paircfr
