#include <benchmark/benchmark.h>

#include "difflog/datagen.hpp"
#include "difflog/engine.hpp"

using namespace difflog;

namespace {

const Vocabulary& kin() { return Vocabulary::kinship(); }

std::vector<WeightedRule> oracle_rules() {
  std::vector<WeightedRule> rules;
  for (const auto& t : CompositionOracle::kinship().templates()) {
    rules.push_back({instantiate_template(t, kin().size()), t, 1.0});
  }
  return rules;
}

void BM_ForwardOracleRules(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const auto rules = oracle_rules();
  std::vector<Sample> samples;
  for (std::uint64_t i = 0; i < 16; ++i) {
    auto rng = stream_rng(k, i);
    samples.push_back(generate_sample(k, rng));
  }
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward(samples[i++ % samples.size()], rules, {}, kin(), {}));
  }
}
BENCHMARK(BM_ForwardOracleRules)->DenseRange(2, 10, 4);

}  // namespace

BENCHMARK_MAIN();
