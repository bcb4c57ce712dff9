#include "difflog/oracle_suite.hpp"

#include <algorithm>
#include <cmath>

#include "difflog/random.hpp"

namespace difflog {

namespace {

BoolFormula grow(std::mt19937_64& rng, std::size_t max_vars, std::size_t depth) {
  const std::size_t roll = uniform_index(rng, 100);
  if (depth == 0 || roll < 25) {
    if (roll == 0) return BoolFormula::truth();
    if (roll == 1) return BoolFormula::falsity();
    return BoolFormula::var(static_cast<std::uint32_t>(uniform_index(rng, max_vars)));
  }
  if (roll < 40) return BoolFormula::negate(grow(rng, max_vars, depth - 1));
  std::vector<BoolFormula> kids(2 + uniform_index(rng, 3));
  for (auto& k : kids) k = grow(rng, max_vars, depth - 1);
  return roll < 70 ? BoolFormula::conj(std::move(kids)) : BoolFormula::disj(std::move(kids));
}

}  // namespace

BoolFormula random_formula(std::mt19937_64& rng, std::size_t max_vars, std::size_t max_depth) {
  if (max_vars == 0) return BoolFormula::falsity();
  return grow(rng, max_vars, max_depth);
}

std::vector<double> random_probabilities(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> p(n);
  for (auto& x : p) x = 0.01 + 0.98 * uniform_unit(rng);
  return p;
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

OracleSuiteReport run_oracle_suite(const OracleSuiteConfig& config) {
  OracleSuiteReport report;
  std::mt19937_64 rng(config.seed);
  for (std::size_t i = 0; i < config.formulas; ++i) {
    const BoolFormula f = random_formula(rng, config.max_vars, config.max_depth);
    const auto probs = random_probabilities(rng, config.max_vars);
    const double err = std::abs(wmc(f, probs) - brute_force_wmc(f, probs));
    ++report.formulas;
    report.max_value_error = std::max(report.max_value_error, err);
    if (!(err <= config.value_tolerance)) ++report.value_failures;
  }
  for (std::size_t i = 0; i < config.gradient_formulas; ++i) {
    const BoolFormula f = random_formula(rng, config.max_vars, config.max_depth);
    auto probs = random_probabilities(rng, config.max_vars);
    const WmcGradient g = wmc_grad(f, probs);
    for (const auto& [v, d] : g.partials) {
      const double p = probs[v];
      probs[v] = p + config.fd_step;
      const double up = wmc(f, probs);
      probs[v] = p - config.fd_step;
      const double down = wmc(f, probs);
      probs[v] = p;
      const double err = relative_error(d, (up - down) / (2.0 * config.fd_step));
      ++report.gradients;
      report.max_gradient_error = std::max(report.max_gradient_error, err);
      if (!(err <= config.gradient_tolerance)) ++report.gradient_failures;
    }
  }
  return report;
}

}  // namespace difflog
