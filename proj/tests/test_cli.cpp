#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kBin = PAIRCFR_BIN;
const std::string kFixtures = FIXTURES_DIR;

struct RunResult {
  int exit_code;
  std::string output;
};

RunResult run(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "pcfr_cli_out.txt";
  const std::string cmd = kBin + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream is(log);
  std::string output((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
  return {WEXITSTATUS(status), output};
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_config(const fs::path& dir, const std::string& body) {
  const fs::path path = dir / "config.toml";
  std::ofstream os(path);
  os << body;
  return path.string();
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path);
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

const std::string kTextConfig =
    "[data]\n"
    "source = \"text\"\n"
    "path = \"" +
    kFixtures +
    "/imdb32.tsv\"\n"
    "[data.featurizer]\n"
    "dim = 1024\n"
    "[loss]\n"
    "lambda = 0.3\n"
    "tau = 0.5\n"
    "[train]\n"
    "batch_size = 8\n"
    "lr = 0.05\n"
    "max_epochs = 12\n"
    "seed = 3\n"
    "[model]\n"
    "embedding_dim = 16\n"
    "sigma_init = 0.05\n";

}  // namespace

TEST_CASE("generate writes a dataset with sidecar and manifest") {
  fs::path out = fresh_dir("pcfr_cli_gen");
  fs::path cfg_dir = fresh_dir("pcfr_cli_gen_cfg");
  const std::string cfg = write_config(cfg_dir,
                                       "[data]\n"
                                       "source = \"synthetic_paircad\"\n"
                                       "n_pairs = 20\n");
  RunResult r = run("generate --config " + cfg + " --out " + out.string() +
                    " --seed 5");
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(out / "dataset.tsv"));
  CHECK(fs::exists(out / "dataset.json"));
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "config.toml"));
}

TEST_CASE("identical seeds regenerate identical datasets") {
  fs::path out1 = fresh_dir("pcfr_cli_gen1");
  fs::path out2 = fresh_dir("pcfr_cli_gen2");
  fs::path cfg_dir = fresh_dir("pcfr_cli_gen_cfg2");
  const std::string cfg = write_config(cfg_dir,
                                       "[data]\n"
                                       "source = \"synthetic_paircad\"\n"
                                       "n_pairs = 15\n");
  CHECK(run("generate --config " + cfg + " --out " + out1.string() +
            " --seed 9")
            .exit_code == 0);
  CHECK(run("generate --config " + cfg + " --out " + out2.string() +
            " --seed 9")
            .exit_code == 0);
  CHECK(slurp(out1 / "dataset.tsv") == slurp(out2 / "dataset.tsv"));
}

TEST_CASE("ingest and train run the text fixture end to end") {
  fs::path ingest_out = fresh_dir("pcfr_cli_ingest");
  fs::path cfg_dir = fresh_dir("pcfr_cli_text_cfg");
  const std::string cfg = write_config(cfg_dir, kTextConfig);

  RunResult ing = run("ingest --config " + cfg + " --out " +
                      ingest_out.string());
  CHECK(ing.exit_code == 0);
  CHECK(ing.output.find("32 groups") != std::string::npos);

  fs::path train_out = fresh_dir("pcfr_cli_train");
  RunResult tr = run("train --config " + cfg + " --out " + train_out.string());
  CHECK(tr.exit_code == 0);
  CHECK(fs::exists(train_out / "model.tsv"));
  CHECK(fs::exists(train_out / "train_history.json"));
}

TEST_CASE("the config echo reproduces a run bit-exactly") {
  fs::path cfg_dir = fresh_dir("pcfr_cli_echo_cfg");
  const std::string cfg = write_config(cfg_dir, kTextConfig);
  fs::path out1 = fresh_dir("pcfr_cli_echo1");
  REQUIRE(run("train --config " + cfg + " --out " + out1.string()).exit_code ==
          0);
  fs::path out2 = fresh_dir("pcfr_cli_echo2");
  REQUIRE(run("train --config " + (out1 / "config.toml").string() + " --out " +
              out2.string())
              .exit_code == 0);
  CHECK(slurp(out1 / "model.tsv") == slurp(out2 / "model.tsv"));
  CHECK(slurp(out1 / "train_history.json") ==
        slurp(out2 / "train_history.json"));
}

TEST_CASE("sweep emits csv, json, and plot data") {
  fs::path cfg_dir = fresh_dir("pcfr_cli_sweep_cfg");
  const std::string cfg = write_config(cfg_dir,
                                       "[data]\n"
                                       "source = \"synthetic_paircad\"\n"
                                       "n_pairs = 24\n"
                                       "[train]\n"
                                       "batch_size = 8\n"
                                       "max_epochs = 4\n"
                                       "[eval]\n"
                                       "seeds = [1]\n"
                                       "ood = [\"edited_null\"]\n"
                                       "n_ood = 200\n"
                                       "[sweep]\n"
                                       "lambda = [0.0, 0.5]\n");
  fs::path out = fresh_dir("pcfr_cli_sweep");
  RunResult r = run("sweep --config " + cfg + " --out " + out.string() +
                    " --threads 2");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("2 cells") != std::string::npos);
  CHECK(fs::exists(out / "sweep.csv"));
  CHECK(fs::exists(out / "sweep.json"));
  CHECK(fs::exists(out / "sweep_plot.dat"));
  const std::string csv = slurp(out / "sweep.csv");
  CHECK(csv.find("lambda,tau,batch_size") == 0);
}

TEST_CASE("verify-theorems exits zero and writes the report") {
  fs::path out = fresh_dir("pcfr_cli_vt");
  RunResult r = run("verify-theorems --out " + out.string() +
                    " --gradcheck-trials 3");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("PASS") != std::string::npos);
  CHECK(r.output.find("FAIL") == std::string::npos);
  CHECK(fs::exists(out / "theorems.json"));
}

TEST_CASE("tightened Monte-Carlo tolerances make the gate fail") {
  fs::path out = fresh_dir("pcfr_cli_vt_tight");
  RunResult r = run("verify-theorems --out " + out.string() +
                    " --gradcheck-trials 3 --mc-tol-scale 1e-12");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("theorem failed") != std::string::npos);
}

TEST_CASE("invalid loss configuration fails validation before execution") {
  fs::path cfg_dir = fresh_dir("pcfr_cli_badcfg");
  const std::string cfg = write_config(cfg_dir,
                                       "[loss]\n"
                                       "tau = 0.0\n");
  fs::path out = fresh_dir("pcfr_cli_badcfg_out");
  RunResult r = run("verify-theorems --config " + cfg + " --out " +
                    out.string());
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("validation error") != std::string::npos);
}

TEST_CASE("unknown enum values in the config are validation errors") {
  fs::path cfg_dir = fresh_dir("pcfr_cli_badenum");
  const std::string cfg = write_config(cfg_dir,
                                       "[train]\n"
                                       "strategy = \"sorted\"\n");
  fs::path out = fresh_dir("pcfr_cli_badenum_out");
  RunResult r = run("train --config " + cfg + " --out " + out.string());
  CHECK(r.exit_code == 1);
}

TEST_CASE("gradcheck subcommand reports the worst error") {
  RunResult r = run("gradcheck --trials 3");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("PASS") != std::string::npos);
}

TEST_CASE("report renders stored run artifacts") {
  // produce a theorem report, then render it
  fs::path out = fresh_dir("pcfr_cli_report_src");
  REQUIRE(run("verify-theorems --out " + out.string() +
              " --gradcheck-trials 2")
              .exit_code == 0);
  fs::path md = fs::temp_directory_path() / "pcfr_report.md";
  RunResult r =
      run("report --in " + out.string() + " --md " + md.string());
  CHECK(r.exit_code == 0);
  const std::string rendered = slurp(md);
  CHECK(rendered.find("theorems.json") != std::string::npos);
  CHECK(rendered.find("| theorem |") != std::string::npos);
}

TEST_CASE("report on an empty directory is an error") {
  fs::path empty = fresh_dir("pcfr_cli_report_empty");
  RunResult r = run("report --in " + empty.string());
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("no reports found") != std::string::npos);
}

TEST_CASE("PAIRCFR_SEED overrides the config seed") {
  fs::path cfg_dir = fresh_dir("pcfr_cli_envseed_cfg");
  const std::string cfg = write_config(cfg_dir,
                                       "[data]\n"
                                       "source = \"synthetic_paircad\"\n"
                                       "n_pairs = 10\n"
                                       "[train]\n"
                                       "seed = 1\n");
  fs::path out_env = fresh_dir("pcfr_cli_envseed1");
  const std::string env_cmd = "PAIRCFR_SEED=77 " + kBin + " generate --config " +
                              cfg + " --out " + out_env.string() +
                              " > /dev/null 2>&1";
  REQUIRE(std::system(env_cmd.c_str()) == 0);

  fs::path out_flag = fresh_dir("pcfr_cli_envseed2");
  REQUIRE(run("generate --config " + cfg + " --out " + out_flag.string() +
              " --seed 77")
              .exit_code == 0);
  CHECK(slurp(out_env / "dataset.tsv") == slurp(out_flag / "dataset.tsv"));
}
