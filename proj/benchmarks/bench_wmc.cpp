#include <benchmark/benchmark.h>

#include <random>

#include "difflog/oracle_suite.hpp"
#include "difflog/provenance.hpp"

using namespace difflog;

namespace {

struct Case {
  BoolFormula formula;
  std::vector<double> probs;
};

std::vector<Case> cases(std::size_t vars) {
  std::mt19937_64 rng(vars);
  std::vector<Case> out;
  for (int i = 0; i < 64; ++i) {
    out.push_back({random_formula(rng, vars, 6), random_probabilities(rng, vars)});
  }
  return out;
}

void BM_Wmc(benchmark::State& state) {
  const auto cs = cases(static_cast<std::size_t>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& c = cs[i++ % cs.size()];
    benchmark::DoNotOptimize(wmc(c.formula, c.probs));
  }
}
BENCHMARK(BM_Wmc)->Arg(4)->Arg(8)->Arg(12)->Arg(16);

void BM_WmcGrad(benchmark::State& state) {
  const auto cs = cases(static_cast<std::size_t>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& c = cs[i++ % cs.size()];
    benchmark::DoNotOptimize(wmc_grad(c.formula, c.probs));
  }
}
BENCHMARK(BM_WmcGrad)->Arg(4)->Arg(8)->Arg(12)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
