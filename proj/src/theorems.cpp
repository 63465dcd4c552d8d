#include "paircfr/theorems.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "paircfr/closed_form.hpp"
#include "paircfr/eval.hpp"
#include "paircfr/losses.hpp"
#include "paircfr/trainer.hpp"

namespace paircfr {

namespace {

FeatureModelSpec canonical_spec() {
  return FeatureModelSpec::isotropic(BlockLayout{2, 2, 2}, {1.0, 0.5},
                                     {1.0, 0.0}, {0.8, 0.0});
}

TheoremResult weight_concentration(const TheoremOptions& opt) {
  TheoremResult r;
  r.name = "closed_form_weight_concentration";
  const FeatureModelSpec spec = canonical_spec();
  PairedDataset cad = generate_paircad(spec, opt.n_pairs_ols, 1,
                                       EditMode::exact_opposite, opt.seed);
  const MomentPair moments = empirical_moments(cad);
  const Vec w = solve_least_squares(moments);
  const WeightReport rep = make_weight_report(w, spec);
  const PopulationWeights pop = population_cad_weights(spec);

  const double ratio =
      std::max(rep.block_norms[1], rep.block_norms[2]) / rep.block_norms[0];
  double sup_diff = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    sup_diff = std::max(sup_diff, std::fabs(w[i] - pop.exact.w[i]));

  r.measured = ratio;
  r.tolerance = 0.02 * opt.mc_tolerance_scale;
  const double cos_floor = 1.0 - 0.001 * opt.mc_tolerance_scale;
  const double diff_tol = 0.02 * opt.mc_tolerance_scale;
  r.pass = ratio <= r.tolerance && rep.direction_cosine_r1 >= cos_floor &&
           sup_diff <= diff_tol;
  std::ostringstream d;
  d << "context/r1 norm ratio " << ratio << ", cosine "
    << rep.direction_cosine_r1 << " (floor " << cos_floor << "), |w-pop|_inf "
    << sup_diff << " (tol " << diff_tol << ")";
  r.details = d.str();
  return r;
}

// Structured weights (zero context rows) force yhat_o == yhat_c; unedited
// rows of the pair gradient must vanish to machine precision.
TheoremResult ce_pair_cancellation(const TheoremOptions& opt) {
  TheoremResult r;
  r.name = "ce_pair_cancellation";
  Rng rng(Rng(opt.seed).child(2).seed());
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const BlockLayout layout{1 + rng.next_below(3), 1 + rng.next_below(3),
                             1 + rng.next_below(3)};
    const std::size_t m = layout.total();
    Sample xo;
    xo.x.resize(m);
    for (double& v : xo.x) v = 2.0 * rng.next_gaussian();
    xo.label = static_cast<int>(rng.next_below(2));
    xo.role = Role::original;
    Sample xc = xo;
    xc.role = Role::counterfactual;
    xc.label = 1 - xo.label;
    for (std::size_t i = 0; i < layout.dim_r1; ++i) xc.x[i] = -xc.x[i];

    Matrix w(m, 2);
    for (std::size_t i = 0; i < layout.dim_r1; ++i)
      for (std::size_t j = 0; j < 2; ++j) w(i, j) = rng.next_gaussian();

    const PairGradReport rep = ce_pair_gradient(xo, xc, w, layout);
    worst = std::max(worst, rep.unedited_max_abs);
  }
  r.measured = worst;
  r.tolerance = 1e-12;
  r.pass = worst <= r.tolerance;
  r.details = "max |unedited entry| over 1000 structured pairs";
  return r;
}

// Generic weights: the unedited-row norm must equal
// |yhat_o - yhat_c| * sqrt(2) * ||(h_r2, h_s)||.
TheoremResult ce_pair_row_norm(const TheoremOptions& opt) {
  TheoremResult r;
  r.name = "ce_pair_row_norm";
  Rng rng(Rng(opt.seed).child(3).seed());
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const BlockLayout layout{1 + rng.next_below(3), 1 + rng.next_below(3),
                             1 + rng.next_below(3)};
    const std::size_t m = layout.total();
    Sample xo;
    xo.x.resize(m);
    for (double& v : xo.x) v = 2.0 * rng.next_gaussian();
    xo.label = static_cast<int>(rng.next_below(2));
    Sample xc = xo;
    xc.role = Role::counterfactual;
    xc.label = 1 - xo.label;
    for (std::size_t i = 0; i < layout.dim_r1; ++i) xc.x[i] = -xc.x[i];

    Matrix w(m, 2);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < 2; ++j) w(i, j) = rng.next_gaussian();

    const PairGradReport rep = ce_pair_gradient(xo, xc, w, layout);
    const double rel =
        std::fabs(rep.unedited_norm - rep.predicted_unedited_norm) /
        std::max(1.0, rep.predicted_unedited_norm);
    worst = std::max(worst, rel);
  }
  r.measured = worst;
  r.tolerance = 1e-9;
  r.pass = worst <= r.tolerance;
  r.details = "rel err of ||unedited rows|| vs |dy|*sqrt(2)*||context||";
  return r;
}

// A two-sample mutually-negative batch under dot similarity and the
// repulsion-only policy has encoder gradient (1/tau) A_{o,c} W exactly.
TheoremResult cl_pair_gradient(const TheoremOptions& opt) {
  TheoremResult r;
  r.name = "cl_pair_batch_gradient";
  Rng rng(Rng(opt.seed).child(4).seed());
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const BlockLayout layout{1 + rng.next_below(2), 1 + rng.next_below(2),
                             1 + rng.next_below(2)};
    const std::size_t m = layout.total();
    const std::size_t d = 1 + rng.next_below(4);
    const double tau = 0.25 + rng.next_double();

    FeatureBatch batch;
    batch.x = Matrix(2, m);
    for (std::size_t j = 0; j < m; ++j) batch.x(0, j) = rng.next_gaussian();
    for (std::size_t j = 0; j < m; ++j)
      batch.x(1, j) = j < layout.dim_r1 ? -batch.x(0, j) : batch.x(0, j);
    batch.labels = {1, 0};
    batch.pair_ids = {0, 0};

    LinearModel model = init_model(
        m, d, 2, InitDescriptor{InitKind::scaled_normal, 0.7, rng.next_u64()},
        layout);

    LossConfig cfg;
    cfg.lambda = 1.0;
    cfg.tau = tau;
    cfg.similarity = Similarity::dot;
    cfg.no_positive_policy = NoPositivePolicy::repulsion_only;
    const CombinedResult res = combined_loss_and_grad(model, batch, cfg);

    Matrix expected = matmul(outer_sym(batch.x.row(0), batch.x.row(1)),
                             model.encoder);
    for (std::size_t i = 0; i < expected.size(); ++i)
      expected.data()[i] /= tau;

    Matrix diff = res.grad.grad_encoder;
    add_scaled(diff, -1.0, expected);
    worst = std::max(worst, max_abs(diff));
  }
  r.measured = worst;
  r.tolerance = 1e-12;
  r.pass = worst <= r.tolerance;
  r.details = "max |analytic - (1/tau) A W| over 100 pair batches";
  return r;
}

TheoremResult expected_a_monte_carlo(const TheoremOptions& opt) {
  TheoremResult r;
  r.name = "expected_pair_A_monte_carlo";
  // zero-mean spec, scalar blocks with variances 1, 2, 3
  FeatureModelSpec zero_mean = FeatureModelSpec::isotropic(
      BlockLayout{1, 1, 1}, {0.0}, {0.0}, {0.0}, 1.0, 2.0, 3.0);
  const ExpectedPairA za =
      expected_pair_A(zero_mean, opt.n_mc, Rng(opt.seed).child(5).seed());
  Matrix form_diff = za.exact;
  add_scaled(form_diff, -1.0, za.zero_mean_form);
  const double zero_mean_form_gap = max_abs(form_diff);

  // nonzero mean: the exact form keeps the mu mu^T correction (r1 entry -4)
  FeatureModelSpec with_mean = FeatureModelSpec::isotropic(
      BlockLayout{1, 1, 1}, {1.0}, {0.0}, {0.0});
  const ExpectedPairA ma =
      expected_pair_A(with_mean, opt.n_mc, Rng(opt.seed).child(6).seed());

  r.measured = std::max(za.max_stderr_units, ma.max_stderr_units);
  r.tolerance = 5.0 * opt.mc_tolerance_scale;
  r.pass = r.measured <= r.tolerance && zero_mean_form_gap == 0.0 &&
           std::fabs(ma.exact(0, 0) + 4.0) < 1e-12;
  std::ostringstream d;
  d << "worst entry deviation " << r.measured
    << " stderr units; zero-mean form gap " << zero_mean_form_gap
    << "; exact r1 entry " << ma.exact(0, 0) << " (expected -4)";
  r.details = d.str();
  return r;
}

TheoremResult sigmoid_trajectory(const TheoremOptions&) {
  TheoremResult r;
  r.name = "sigmoid_pair_trajectory";
  const double x_r = 2.0, x_c = 3.0, lr = 0.1;
  double w_r = 0.0, w_c = 0.0;

  const SigmoidPairGrad g0 = sigmoid_pair_gradient(x_r, x_c, w_r, w_c);
  const bool start_ok = g0.dw_c == 0.0 && std::fabs(g0.dw_r + 2.0) < 1e-15;

  bool monotone = true;
  double max_wc = 0.0;
  double prev = 0.0;
  for (int step = 0; step < 100; ++step) {
    const SigmoidPairGrad g = sigmoid_pair_gradient(x_r, x_c, w_r, w_c);
    w_r -= lr * g.dw_r;
    w_c -= lr * g.dw_c;
    max_wc = std::max(max_wc, std::fabs(w_c));
    if (std::fabs(w_r) <= prev) monotone = false;
    prev = std::fabs(w_r);
  }
  // sigma(z) + sigma(-z) - 1 carries ~1 ulp of float residue, so the yoked
  // w_c trajectory is zero only to machine precision
  r.measured = max_wc;
  r.tolerance = 1e-12;
  r.pass = start_ok && monotone && max_wc <= r.tolerance;
  std::ostringstream d;
  d << "|w_r| after 100 steps " << std::fabs(w_r) << ", w_c stayed at "
    << max_wc << (monotone ? ", growth monotone" : ", growth NOT monotone");
  r.details = d.str();
  return r;
}

struct GradInstance {
  LinearModel model;
  FeatureBatch batch;
};

GradInstance random_instance(Rng& rng, std::size_t k) {
  const std::size_t n = 4 + rng.next_below(13);   // 4..16
  const std::size_t m = 2 + rng.next_below(9);    // 2..10
  const std::size_t d = 1 + rng.next_below(6);    // 1..6
  BlockLayout layout{1, m > 2 ? m - 2 : 0, m > 2 ? 1 : m - 1};

  GradInstance inst;
  inst.batch.x = Matrix(n, m);
  for (std::size_t i = 0; i < inst.batch.x.size(); ++i)
    inst.batch.x.data()[i] = rng.next_gaussian();
  inst.batch.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    inst.batch.labels[i] = static_cast<int>(rng.next_below(k));
  // guarantee one non-neutral positive pair so CL always has structure
  inst.batch.labels[0] = static_cast<int>(rng.next_below(2));
  inst.batch.labels[1] = inst.batch.labels[0];
  inst.batch.pair_ids.assign(n, 0);
  inst.model = init_model(
      m, d, k, InitDescriptor{InitKind::scaled_normal, 0.5, rng.next_u64()},
      layout);
  return inst;
}

TheoremResult gradient_finite_diff(const TheoremOptions& opt) {
  TheoremResult r;
  r.name = "gradient_finite_differences";
  Rng rng(Rng(opt.seed).child(7).seed());

  struct Variant {
    const char* name;
    LossConfig cfg;
  };
  std::vector<Variant> variants;
  {
    LossConfig ce;
    ce.lambda = 0.0;
    variants.push_back({"ce", ce});
    for (Similarity sim : {Similarity::cosine, Similarity::dot})
      for (NoPositivePolicy pol :
           {NoPositivePolicy::repulsion_only, NoPositivePolicy::skip_anchor}) {
        LossConfig cl;
        cl.lambda = 1.0;
        cl.tau = 0.7;
        cl.similarity = sim;
        cl.no_positive_policy = pol;
        variants.push_back({sim == Similarity::cosine ? "cl_cosine" : "cl_dot",
                            cl});
      }
    LossConfig combined;
    combined.lambda = 0.4;
    combined.tau = 0.7;
    variants.push_back({"combined", combined});
  }

  double worst = 0.0;
  std::string worst_variant;
  for (const Variant& v : variants)
    for (std::size_t trial = 0; trial < opt.n_gradcheck; ++trial) {
      const std::size_t k = 2 + rng.next_below(2);
      GradInstance inst = random_instance(rng, k);
      const double err = finite_diff_check(inst.model, inst.batch, v.cfg,
                                           1e-6, 200, rng.next_u64());
      if (err > worst) {
        worst = err;
        worst_variant = v.name;
      }
    }
  r.measured = worst;
  r.tolerance = 1e-5;
  r.pass = worst <= r.tolerance;
  r.details = "worst rel err (" + worst_variant + ") over " +
              std::to_string(variants.size()) + " loss variants x " +
              std::to_string(opt.n_gradcheck) + " instances";
  return r;
}

}  // namespace

std::vector<TheoremResult> verify_theorems(const TheoremOptions& options) {
  return {weight_concentration(options), ce_pair_cancellation(options),
          ce_pair_row_norm(options),     cl_pair_gradient(options),
          expected_a_monte_carlo(options), sigmoid_trajectory(options),
          gradient_finite_diff(options)};
}

std::string theorems_to_json(const std::vector<TheoremResult>& results) {
  nlohmann::json out = nlohmann::json::array();
  for (const TheoremResult& r : results)
    out.push_back({{"name", r.name},
                   {"pass", r.pass},
                   {"measured", r.measured},
                   {"tolerance", r.tolerance},
                   {"details", r.details}});
  return out.dump(2);
}

std::string theorems_to_table(const std::vector<TheoremResult>& results) {
  std::ostringstream os;
  os << "theorem                               result   measured      tolerance\n";
  os << "------------------------------------- -------- ------------- ---------\n";
  for (const TheoremResult& r : results) {
    std::string name = r.name;
    name.resize(37, ' ');
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-8s %-13.6g %-9.3g",
                  r.pass ? "PASS" : "FAIL", r.measured, r.tolerance);
    os << name << ' ' << buf << "  " << r.details << '\n';
  }
  return os.str();
}

}  // namespace paircfr
