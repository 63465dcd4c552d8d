// paircfr - synthetic CAD laboratory: dataset generation, PairCFR training,
// hyperparameter sweeps, theorem verification, and reporting.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "paircfr/config.hpp"
#include "paircfr/dataset_io.hpp"
#include "paircfr/eval.hpp"
#include "paircfr/serialize.hpp"
#include "paircfr/theorems.hpp"

namespace fs = std::filesystem;
using namespace paircfr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitExecution = 2;

struct CommonOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::int64_t seed_override = -1;  // -1: not set
  unsigned threads = 1;
  bool verbose = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "config file (TOML subset)");
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", opts.seed_override, "seed override");
  cmd->add_option("--threads", opts.threads, "worker threads (sweep only)");
  cmd->add_flag("--verbose", opts.verbose, "chatty progress output");
}

// precedence: --seed flag, then PAIRCFR_SEED, then the config file
std::optional<std::uint64_t> effective_seed(const CommonOptions& opts) {
  if (opts.seed_override >= 0)
    return static_cast<std::uint64_t>(opts.seed_override);
  if (const char* env = std::getenv("PAIRCFR_SEED"))
    return static_cast<std::uint64_t>(std::strtoull(env, nullptr, 10));
  return std::nullopt;
}

ExperimentConfig load_experiment(const CommonOptions& opts) {
  ConfigTree tree = opts.config_path.empty()
                        ? ConfigTree{}
                        : ConfigTree::parse_file(opts.config_path);
  ExperimentConfig cfg = experiment_from_config(tree);
  if (auto seed = effective_seed(opts)) {
    cfg.train.seed = *seed;
    cfg.seeds = {*seed};
  }
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << content;
  if (!content.empty() && content.back() != '\n') os << '\n';
}

void write_manifest(const fs::path& out, const std::string& command,
                    const std::vector<std::string>& artifacts) {
  nlohmann::json manifest{{"command", command}, {"artifacts", artifacts}};
  write_file(out / "manifest.json", manifest.dump(2));
}

fs::path prepare_out(const CommonOptions& opts, const ExperimentConfig* cfg) {
  fs::path out(opts.out_dir);
  fs::create_directories(out);
  if (cfg) write_file(out / "config.toml", experiment_to_toml(*cfg));
  return out;
}

int cmd_generate(const CommonOptions& opts) {
  ExperimentConfig cfg = load_experiment(opts);
  if (cfg.data.kind == DataSourceKind::text)
    throw std::invalid_argument("generate handles synthetic sources; use ingest");
  fs::path out = prepare_out(opts, &cfg);
  const std::uint64_t seed = cfg.seeds.front();
  PairedDataset dataset =
      cfg.data.kind == DataSourceKind::synthetic_paircad
          ? generate_paircad(cfg.data.spec, cfg.data.n_pairs,
                             cfg.data.cfes_per_original, cfg.data.edit_mode,
                             seed)
          : generate_ood(cfg.data.spec, cfg.data.n_pairs, Shift::none, seed);
  export_dataset(dataset, (out / "dataset.tsv").string(),
                 (out / "dataset.json").string(), &cfg.data.spec);
  write_manifest(out, "generate",
                 {"dataset.tsv", "dataset.json", "config.toml"});
  std::cout << "wrote " << dataset.size() << " samples ("
            << dataset.pair_index().size() << " groups) to " << out << '\n';
  return kExitOk;
}

int cmd_ingest(const CommonOptions& opts) {
  ExperimentConfig cfg = load_experiment(opts);
  if (cfg.data.kind != DataSourceKind::text)
    throw std::invalid_argument("ingest requires data.source = \"text\"");
  fs::path out = prepare_out(opts, &cfg);
  auto records = parse_cad_table(cfg.data.path, cfg.data.schema);
  PairedDataset dataset = build_text_dataset(records, cfg.data.featurizer);
  export_dataset(dataset, (out / "dataset.tsv").string(),
                 (out / "dataset.json").string());
  write_manifest(out, "ingest", {"dataset.tsv", "dataset.json", "config.toml"});
  std::cout << "ingested " << records.size() << " records into "
            << dataset.pair_index().size() << " groups\n";
  return kExitOk;
}

int cmd_train(const CommonOptions& opts) {
  ExperimentConfig cfg = load_experiment(opts);
  fs::path out = prepare_out(opts, &cfg);

  const std::uint64_t seed = cfg.seeds.front();
  PairedDataset dataset = [&] {
    switch (cfg.data.kind) {
      case DataSourceKind::synthetic_paircad:
        return generate_paircad(cfg.data.spec, cfg.data.n_pairs,
                                cfg.data.cfes_per_original, cfg.data.edit_mode,
                                seed);
      case DataSourceKind::synthetic_original:
        return generate_ood(cfg.data.spec, cfg.data.n_pairs, Shift::none, seed);
      case DataSourceKind::text:
        return build_text_dataset(parse_cad_table(cfg.data.path, cfg.data.schema),
                                  cfg.data.featurizer);
    }
    throw std::logic_error("unreachable");
  }();

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
  const double test_acc = evaluate(result.best_model, splits.test);

  save_model_file(result.best_model, (out / "model.tsv").string());
  write_file(out / "train_history.json", history_to_json(result.history));
  write_manifest(out, "train",
                 {"model.tsv", "train_history.json", "config.toml"});
  std::cout << "trained " << result.history.stopping_epoch << " epochs (best "
            << result.history.best_epoch << "), held-out accuracy " << test_acc
            << '\n';
  return kExitOk;
}

int cmd_sweep(const CommonOptions& opts) {
  ExperimentConfig cfg = load_experiment(opts);
  ConfigTree tree = opts.config_path.empty()
                        ? ConfigTree{}
                        : ConfigTree::parse_file(opts.config_path);
  SweepGrid grid = sweep_grid_from_config(tree);
  fs::path out = prepare_out(opts, &cfg);

  SweepReport report = sweep(cfg, grid, opts.threads);
  write_file(out / "sweep.csv", sweep_to_csv(report));
  write_file(out / "sweep.json", sweep_report_to_json(report));
  write_file(out / "sweep_plot.dat", sweep_to_plotdata(report));
  write_manifest(out, "sweep",
                 {"sweep.csv", "sweep.json", "sweep_plot.dat", "config.toml"});

  std::size_t failed = 0;
  for (const SweepCell& cell : report.cells)
    if (cell.failed) ++failed;
  std::cout << report.cells.size() << " cells (" << failed << " failed)\n";
  return failed == 0 ? kExitOk : kExitExecution;
}

int cmd_verify_theorems(const CommonOptions& opts, double mc_tol_scale,
                        std::size_t n_gradcheck) {
  if (!opts.config_path.empty()) {
    // validate the experiment configuration before running anything
    load_experiment(opts);
  }
  fs::path out = prepare_out(opts, nullptr);

  TheoremOptions topt;
  if (auto seed = effective_seed(opts)) topt.seed = *seed;
  topt.mc_tolerance_scale = mc_tol_scale;
  topt.n_gradcheck = n_gradcheck;

  const std::vector<TheoremResult> results = verify_theorems(topt);
  write_file(out / "theorems.json", theorems_to_json(results));
  std::cout << theorems_to_table(results);
  write_manifest(out, "verify-theorems", {"theorems.json"});

  for (const TheoremResult& r : results)
    if (!r.pass) {
      std::cerr << "theorem failed: " << r.name << '\n';
      return kExitExecution;
    }
  return kExitOk;
}

int cmd_gradcheck(const CommonOptions& opts, std::size_t trials) {
  TheoremOptions topt;
  if (auto seed = effective_seed(opts)) topt.seed = *seed;
  topt.n_gradcheck = trials;
  // only the finite-difference theorem, with a chatty line
  const std::vector<TheoremResult> all = verify_theorems(topt);
  for (const TheoremResult& r : all)
    if (r.name == "gradient_finite_differences") {
      std::cout << (r.pass ? "PASS " : "FAIL ") << r.details << " -> "
                << r.measured << " (tol " << r.tolerance << ")\n";
      return r.pass ? kExitOk : kExitExecution;
    }
  return kExitExecution;
}

int cmd_report(const std::string& in_dir, const std::string& out_path) {
  std::vector<fs::path> json_files;
  if (fs::is_directory(in_dir))
    for (const auto& entry : fs::directory_iterator(in_dir))
      if (entry.path().extension() == ".json" &&
          entry.path().filename() != "manifest.json")
        json_files.push_back(entry.path());
  std::sort(json_files.begin(), json_files.end());
  if (json_files.empty()) throw std::runtime_error("no reports found");

  std::ostringstream md;
  md << "# Run reports\n";
  for (const fs::path& p : json_files) {
    std::ifstream is(p);
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) continue;
    md << "\n## " << p.filename().string() << "\n\n";
    if (j.is_array() && !j.empty() && j.front().contains("tolerance")) {
      md << "| theorem | result | measured | tolerance |\n";
      md << "|---|---|---|---|\n";
      for (const auto& r : j)
        md << "| " << r.value("name", "?") << " | "
           << (r.value("pass", false) ? "PASS" : "FAIL") << " | "
           << r.value("measured", 0.0) << " | " << r.value("tolerance", 0.0)
           << " |\n";
    } else if (j.contains("aggregates")) {
      md << "| metric | mean | std |\n|---|---|---|\n";
      for (const auto& [name, agg] : j.at("aggregates").items())
        md << "| " << name << " | " << agg.value("mean", 0.0) << " | "
           << agg.value("std", 0.0) << " |\n";
    } else if (j.contains("cells")) {
      md << "| lambda | tau | batch | n_pairs | k | status |\n";
      md << "|---|---|---|---|---|---|\n";
      for (const auto& cell : j.at("cells"))
        md << "| " << cell.value("lambda", 0.0) << " | "
           << cell.value("tau", 0.0) << " | " << cell.value("batch_size", 0)
           << " | " << cell.value("n_pairs", 0) << " | " << cell.value("k", 0)
           << " | " << (cell.value("failed", false) ? "failed" : "ok")
           << " |\n";
      // long-format plot data regenerated from the stored aggregates
      std::ostringstream dat;
      dat << "# lambda tau batch_size n_pairs k metric mean std\n";
      for (const auto& cell : j.at("cells")) {
        if (cell.value("failed", false) || !cell.contains("report")) continue;
        for (const auto& [metric, agg] :
             cell.at("report").at("aggregates").items())
          dat << cell.value("lambda", 0.0) << ' ' << cell.value("tau", 0.0)
              << ' ' << cell.value("batch_size", 0) << ' '
              << cell.value("n_pairs", 0) << ' ' << cell.value("k", 0) << ' '
              << metric << ' ' << agg.value("mean", 0.0) << ' '
              << agg.value("std", 0.0) << '\n';
      }
      fs::path dat_path = fs::path(out_path).replace_extension("") ;
      dat_path += "_" + p.stem().string() + ".dat";
      write_file(dat_path, dat.str());
      md << "\nplot data: " << dat_path.filename().string() << "\n";
    } else if (j.contains("epochs")) {
      md << "| epoch | train_loss | valid_loss | valid_acc |\n";
      md << "|---|---|---|---|\n";
      std::size_t e = 1;
      for (const auto& row : j.at("epochs"))
        md << "| " << e++ << " | " << row.value("train_loss", 0.0) << " | "
           << row.value("valid_loss", 0.0) << " | "
           << row.value("valid_accuracy", 0.0) << " |\n";
    } else {
      md << "(unrecognized report shape)\n";
    }
  }
  write_file(out_path, md.str());
  std::cout << "wrote " << out_path << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PairCFR synthetic-CAD laboratory"};
  app.require_subcommand(1);

  CommonOptions generate_opts, ingest_opts, train_opts, sweep_opts,
      verify_opts, gradcheck_opts;

  CLI::App* generate = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(generate, generate_opts);
  CLI::App* ingest = app.add_subcommand("ingest", "featurize a CAD text table");
  add_common(ingest, ingest_opts);
  CLI::App* train_cmd = app.add_subcommand("train", "train one model");
  add_common(train_cmd, train_opts);
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "hyperparameter sweep");
  add_common(sweep_cmd, sweep_opts);

  CLI::App* verify = app.add_subcommand("verify-theorems", "run the theorem suite");
  add_common(verify, verify_opts);
  double mc_tol_scale = 1.0;
  std::size_t verify_gradcheck = 25;
  verify->add_option("--mc-tol-scale", mc_tol_scale,
                     "scale Monte-Carlo tolerances (tighten with < 1)");
  verify->add_option("--gradcheck-trials", verify_gradcheck,
                     "instances per gradient variant");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check");
  add_common(gradcheck, gradcheck_opts);
  std::size_t gradcheck_trials = 100;
  gradcheck->add_option("--trials", gradcheck_trials, "instances per variant");

  CLI::App* report = app.add_subcommand("report", "render stored JSON reports");
  std::string report_in = "out", report_out = "report.md";
  report->add_option("--in", report_in, "directory of stored reports");
  report->add_option("--md", report_out, "markdown output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(generate_opts);
    if (ingest->parsed()) return cmd_ingest(ingest_opts);
    if (train_cmd->parsed()) return cmd_train(train_opts);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_opts);
    if (verify->parsed())
      return cmd_verify_theorems(verify_opts, mc_tol_scale, verify_gradcheck);
    if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_opts, gradcheck_trials);
    if (report->parsed()) return cmd_report(report_in, report_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitExecution;
  }
  return kExitValidation;
}
