#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "paircfr/closed_form.hpp"
#include "paircfr/dataset_io.hpp"
#include "paircfr/feature_model.hpp"

using namespace paircfr;

namespace {

FeatureModelSpec unit_spec(int classes = 2) {
  return FeatureModelSpec::isotropic(BlockLayout{1, 1, 1}, {1.0}, {1.0}, {1.0},
                                     1.0, 1.0, 1.0, classes);
}

FeatureModelSpec near_deterministic_spec() {
  return FeatureModelSpec::isotropic(BlockLayout{1, 1, 1}, {2.0}, {1.0}, {1.0},
                                     1e-20, 1e-20, 1e-20);
}

}  // namespace

TEST_CASE("validate_spec accepts the unit spec") {
  CHECK(validate_spec(unit_spec()).ok());
}

TEST_CASE("validate_spec flags a non positive definite covariance") {
  FeatureModelSpec spec = unit_spec();
  spec.sigma_r1(0, 0) = -1.0;
  SpecValidation v = validate_spec(spec);
  REQUIRE_FALSE(v.ok());
  CHECK(v.diagnostics[0] == "sigma_r1 not positive definite");
}

TEST_CASE("validate_spec flags mean shape mismatches") {
  FeatureModelSpec spec = unit_spec();
  spec.mu_r1 = {1.0, 2.0};
  SpecValidation v = validate_spec(spec);
  REQUIRE_FALSE(v.ok());
  CHECK(v.diagnostics[0] == "mean/layout mismatch: mu_r1");
}

TEST_CASE("validate_spec flags bad class counts and priors") {
  FeatureModelSpec spec = unit_spec();
  spec.classes = 5;
  CHECK_FALSE(validate_spec(spec).ok());
  spec = unit_spec();
  spec.label_prior = 1.0;
  CHECK_FALSE(validate_spec(spec).ok());
}

TEST_CASE("sample_original zero-noise limit hits the block means") {
  FeatureModelSpec spec = near_deterministic_spec();
  Rng rng(1);
  Sample s1 = sample_original(spec, 1, rng);
  CHECK(s1.x[0] == doctest::Approx(2.0).epsilon(1e-9));
  Sample s0 = sample_original(spec, 0, rng);
  CHECK(s0.x[0] == doctest::Approx(-2.0).epsilon(1e-9));
  CHECK(s0.x[1] == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("sample_original rejects out-of-range labels") {
  Rng rng(1);
  FeatureModelSpec spec = unit_spec();
  CHECK_THROWS_AS(sample_original(spec, 2, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_original(spec, -1, rng), std::invalid_argument);
}

TEST_CASE("sample mean converges to the class mean") {
  FeatureModelSpec spec = unit_spec();
  Rng root(7);
  const int n = 100000;
  Vec sum(3, 0.0), sum_sq(3, 0.0);
  for (int i = 0; i < n; ++i) {
    Rng rng = root.child(i);
    Sample s = sample_original(spec, 1, rng);
    for (int j = 0; j < 3; ++j) {
      sum[j] += s.x[j];
      sum_sq[j] += s.x[j] * s.x[j];
    }
  }
  for (int j = 0; j < 3; ++j) {
    const double mean = sum[j] / n;
    const double var = sum_sq[j] / n - mean * mean;
    const double se = std::sqrt(var / n);
    CHECK(std::fabs(mean - 1.0) <= 4.0 * se);
  }
}

TEST_CASE("exact_opposite flips only the edited block") {
  FeatureModelSpec spec = unit_spec();
  Sample orig;
  orig.x = {3.0, 5.0, 7.0};
  orig.label = 1;
  orig.role = Role::original;
  orig.pair_id = 9;
  Rng rng(0);
  Sample cf = derive_counterfactual(orig, spec, EditMode::exact_opposite, rng);
  CHECK(cf.x == Vec{-3.0, 5.0, 7.0});
  CHECK(cf.label == 0);
  CHECK(cf.role == Role::counterfactual);
  CHECK(cf.pair_id == 9);
  CHECK(cf.source_label == 1);

  // the edit is an involution on the features
  cf.role = Role::original;
  Sample back = derive_counterfactual(cf, spec, EditMode::exact_opposite, rng);
  CHECK(back.x == orig.x);
}

TEST_CASE("resample zero-noise limit is consistent with the flipped label") {
  FeatureModelSpec spec = near_deterministic_spec();
  Rng rng(1);
  Sample orig = sample_original(spec, 1, rng);
  Sample cf = derive_counterfactual(orig, spec, EditMode::resample, rng);
  CHECK(cf.label == 0);
  // fresh draw from N(y_new * mu_r1, Sigma_r1): label 0 means -mu_r1
  CHECK(cf.x[0] == doctest::Approx(-2.0).epsilon(1e-9));
  // unedited blocks are copied bit-exactly
  CHECK(cf.x[1] == orig.x[1]);
  CHECK(cf.x[2] == orig.x[2]);
}

TEST_CASE("neutral originals have no counterfactual") {
  FeatureModelSpec spec = unit_spec(3);
  Rng rng(1);
  Sample neutral = sample_original(spec, kNeutralClass, rng);
  CHECK_THROWS_WITH_AS(
      derive_counterfactual(neutral, spec, EditMode::exact_opposite, rng),
      "neutral samples have no counterfactual", std::invalid_argument);
}

TEST_CASE("generate_paircad counts and pairing") {
  PairedDataset d = generate_paircad(unit_spec(), 2, 1,
                                     EditMode::exact_opposite, 3);
  CHECK(d.size() == 4);
  CHECK(d.pair_index().size() == 2);
  for (const auto& [pid, group] : d.pair_index()) {
    CHECK(group.counterfactuals.size() == 1);
    const Sample& o = d.sample(group.original);
    const Sample& c = d.sample(group.counterfactuals[0]);
    CHECK(o.label != c.label);
    CHECK(c.x[1] == o.x[1]);
    CHECK(c.x[2] == o.x[2]);
    CHECK(c.x[0] == -o.x[0]);
  }
}

TEST_CASE("generate_paircad is deterministic in (spec, seed)") {
  PairedDataset a = generate_paircad(unit_spec(), 50, 1,
                                     EditMode::exact_opposite, 11);
  PairedDataset b = generate_paircad(unit_spec(), 50, 1,
                                     EditMode::exact_opposite, 11);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.sample(i).x == b.sample(i).x);
    CHECK(a.sample(i).label == b.sample(i).label);
  }
}

TEST_CASE("IMDb-scale fixture matches the published split size") {
  PairedDataset d = generate_paircad(unit_spec(), 1707, 1,
                                     EditMode::exact_opposite, 1);
  CHECK(d.size() == 3414);
}

TEST_CASE("multiple counterfactuals require resample mode") {
  CHECK_THROWS_WITH_AS(
      generate_paircad(unit_spec(), 4, 2, EditMode::exact_opposite, 1),
      "exact opposite edit is unique", std::invalid_argument);
  PairedDataset d = generate_paircad(unit_spec(), 4, 3, EditMode::resample, 1);
  CHECK(d.size() == 16);
  for (const auto& [pid, group] : d.pair_index())
    CHECK(group.counterfactuals.size() == 3);
}

TEST_CASE("labels of original pairs alternate and balance") {
  PairedDataset d = generate_paircad(unit_spec(), 10, 1,
                                     EditMode::exact_opposite, 5);
  int ones = 0;
  for (const auto& [pid, group] : d.pair_index())
    ones += d.sample(group.original).label == 1;
  CHECK(ones == 5);
}

TEST_CASE("three-class generation interleaves lone neutral groups") {
  PairedDataset d = generate_paircad(unit_spec(3), 9, 1,
                                     EditMode::exact_opposite, 5);
  std::size_t neutral_groups = 0, pair_groups = 0;
  for (const auto& [pid, group] : d.pair_index()) {
    if (d.sample(group.original).label == kNeutralClass) {
      CHECK(group.counterfactuals.empty());
      ++neutral_groups;
    } else {
      CHECK(group.counterfactuals.size() == 1);
      ++pair_groups;
    }
  }
  CHECK(neutral_groups == 3);
  CHECK(pair_groups == 6);
}

TEST_CASE("pooled CAD moments cancel on unedited blocks") {
  PairedDataset d = generate_paircad(unit_spec(), 20000, 1,
                                     EditMode::exact_opposite, 17);
  MomentPair mp = empirical_moments(d);
  // adjacent pair contributions cancel exactly in the running sums
  CHECK(mp.mu_vec[1] == 0.0);
  CHECK(mp.mu_vec[2] == 0.0);
  const double se = std::sqrt(2.0 / static_cast<double>(d.size()));
  CHECK(std::fabs(mp.mu_vec[0] - 1.0) <= 4.0 * se);

  // pooled unconditional mean vanishes everywhere (balanced + exact edits)
  Vec mean(3, 0.0);
  for (const Sample& s : d.samples())
    for (int j = 0; j < 3; ++j) mean[j] += s.x[j];
  for (int j = 0; j < 3; ++j)
    CHECK(std::fabs(mean[j] / static_cast<double>(d.size())) <=
          4.0 / std::sqrt(static_cast<double>(d.size())));
}

TEST_CASE("generate_ood shift regimes") {
  FeatureModelSpec spec = near_deterministic_spec();
  PairedDataset null_s = generate_ood(spec, 4, Shift::spurious_null, 3);
  for (const Sample& s : null_s.samples())
    CHECK(std::fabs(s.x[2]) <= 1e-9);

  PairedDataset flip = generate_ood(spec, 4, Shift::spurious_flip, 3);
  for (const Sample& s : flip.samples()) {
    const double y = signed_label(s.label);
    CHECK(s.x[2] == doctest::Approx(-y * 1.0).epsilon(1e-9));
    CHECK(s.x[0] == doctest::Approx(y * 2.0).epsilon(1e-9));
  }

  PairedDataset enull = generate_ood(spec, 4, Shift::edited_null, 3);
  for (const Sample& s : enull.samples()) {
    CHECK(std::fabs(s.x[0]) <= 1e-9);
    CHECK(s.x[1] == doctest::Approx(signed_label(s.label)).epsilon(1e-9));
  }
}

TEST_CASE("an edited-only classifier is at chance on edited_null") {
  FeatureModelSpec spec = unit_spec();
  PairedDataset d = generate_ood(spec, 100000, Shift::edited_null, 21);
  std::size_t hits = 0;
  for (const Sample& s : d.samples()) {
    const int pred = s.x[0] > 0.0 ? 1 : 0;  // w = [w_r1, 0, 0]
    hits += pred == s.label;
  }
  const double acc = static_cast<double>(hits) / d.size();
  CHECK(std::fabs(acc - 0.5) <= 4.0 * std::sqrt(0.25 / d.size()));
}

TEST_CASE("subset keeps groups whole and relabels nothing") {
  PairedDataset d = generate_paircad(unit_spec(), 6, 1,
                                     EditMode::exact_opposite, 2);
  PairedDataset sub = d.subset({1, 4});
  CHECK(sub.size() == 4);
  CHECK(sub.pair_index().count(1) == 1);
  CHECK(sub.pair_index().count(4) == 1);
  CHECK(sub.sample(0).x == d.sample(d.pair_index().at(1).original).x);
}

TEST_CASE("dataset TSV round-trip is bit-identical") {
  FeatureModelSpec spec = unit_spec();
  PairedDataset d = generate_paircad(spec, 25, 1, EditMode::exact_opposite, 9);
  const auto dir = std::filesystem::temp_directory_path();
  const std::string tsv = (dir / "pcfr_roundtrip.tsv").string();
  const std::string sidecar = (dir / "pcfr_roundtrip.json").string();
  export_dataset(d, tsv, sidecar, &spec);
  PairedDataset back = import_dataset(tsv, sidecar);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.sample(i).x == d.sample(i).x);
    CHECK(back.sample(i).label == d.sample(i).label);
    CHECK(back.sample(i).pair_id == d.sample(i).pair_id);
  }
  CHECK(back.provenance().spec_hash == d.provenance().spec_hash);
  std::remove(tsv.c_str());
  std::remove(sidecar.c_str());
}

TEST_CASE("spec json round-trip") {
  FeatureModelSpec spec = FeatureModelSpec::isotropic(
      BlockLayout{2, 2, 2}, {1.0, 0.5}, {1.0, 0.0}, {0.8, 0.0});
  FeatureModelSpec back = spec_from_json(spec_to_json(spec));
  CHECK(back.content_hash() == spec.content_hash());
}

TEST_CASE("counterfactual without original is rejected") {
  Sample lone;
  lone.x = {1.0, 2.0, 3.0};
  lone.label = 0;
  lone.role = Role::counterfactual;
  lone.pair_id = 77;
  CHECK_THROWS_AS(PairedDataset(BlockLayout{1, 1, 1}, 2, {lone}, {}),
                  std::invalid_argument);
}
