#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace paircfr {

struct TheoremResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;   // worst-case error observed
  double tolerance = 0.0;  // bound it was checked against
  std::string details;
};

struct TheoremOptions {
  std::uint64_t seed = 20240601;
  std::size_t n_pairs_ols = 100000;  // empirical OLS sample budget
  std::size_t n_mc = 100000;         // Monte-Carlo budget for E[A]
  std::size_t n_gradcheck = 25;      // random instances per gradient check
  // multiplies the Monte-Carlo tolerances; < 1 tightens them (a tightened
  // gate is expected to fail, which exercises the exit-code contract)
  double mc_tolerance_scale = 1.0;
};

// Runs the full theorem suite: weight concentration, CE pair-gradient
// cancellation, the pair-batch CL gradient identity, the Monte-Carlo E[A]
// check, the sigmoid trajectory, and finite-difference gradient validation.
std::vector<TheoremResult> verify_theorems(const TheoremOptions& options);

std::string theorems_to_json(const std::vector<TheoremResult>& results);
std::string theorems_to_table(const std::vector<TheoremResult>& results);

}  // namespace paircfr
