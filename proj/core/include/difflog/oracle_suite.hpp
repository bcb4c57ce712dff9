#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "difflog/provenance.hpp"

namespace difflog {

// Random formula over variables [0, max_vars) with nesting depth at most
// max_depth (a bare variable has depth 0).
BoolFormula random_formula(std::mt19937_64& rng, std::size_t max_vars, std::size_t max_depth);

// Probabilities in [0.01, 0.99] so that finite differences stay inside [0, 1].
std::vector<double> random_probabilities(std::mt19937_64& rng, std::size_t n);

struct OracleSuiteConfig {
  std::size_t formulas = 10000;
  std::size_t gradient_formulas = 1000;
  std::size_t max_vars = 12;
  std::size_t max_depth = 6;
  std::uint64_t seed = 0;
  double value_tolerance = 1e-9;
  double fd_step = 1e-5;
  double gradient_tolerance = 1e-4;
};

struct OracleSuiteReport {
  std::size_t formulas = 0;
  std::size_t value_failures = 0;
  double max_value_error = 0.0;
  std::size_t gradients = 0;
  std::size_t gradient_failures = 0;
  double max_gradient_error = 0.0;
  bool passed() const { return value_failures == 0 && gradient_failures == 0; }
};

// |a - b| / max(|a|, |b|, 1e-6); the floor keeps zero partials comparable.
double relative_error(double a, double b);

// WMC against brute-force enumeration, then wmc_grad against central finite
// differences of wmc.
OracleSuiteReport run_oracle_suite(const OracleSuiteConfig& config);

}  // namespace difflog
