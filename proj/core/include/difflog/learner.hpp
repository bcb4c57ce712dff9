#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "difflog/engine.hpp"
#include "difflog/logic.hpp"
#include "difflog/parser.hpp"
#include "difflog/program.hpp"
#include "difflog/random.hpp"

namespace difflog {

// Raised when training produces a non-finite loss or gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Learnable weights of the composite templates, indexed (r1, r2, r3) in
// lexicographic order. Every entry is nonnegative. The version counter
// changes whenever the weights do, so stale forward traces can be detected.
class RuleWeightStore {
 public:
  explicit RuleWeightStore(std::size_t relation_count);

  std::size_t relation_count() const { return relation_count_; }
  std::size_t size() const { return weights_.size(); }

  std::size_t index(const RuleTemplate& t) const;
  RuleTemplate template_at(std::size_t index) const;

  double weight(const RuleTemplate& t) const { return weights_[index(t)]; }
  void set(const RuleTemplate& t, double w);

  std::span<const double> weights() const { return weights_; }
  // Mutable view; callers must bump() after changing weights.
  std::span<double> mutable_weights() { return weights_; }

  std::uint64_t version() const { return version_; }
  void bump() { ++version_; }

 private:
  std::size_t relation_count_;
  std::vector<double> weights_;
  std::uint64_t version_ = 0;
};

// Every entry uniform in [0, init_max], then prior entries set to their
// prior weight. Non-composite priors are ignored here.
RuleWeightStore init_rule_weights(const RulePriors& priors, std::size_t relation_count,
                                  std::mt19937_64& rng, double init_max = 0.1);

// n distinct indices drawn without replacement with probability proportional
// to weight (exponential-key method). Zero weights are never drawn; when
// fewer than n weights are positive, all of them are returned. Result is in
// draw order.
std::vector<std::size_t> weighted_sample(std::span<const double> weights, std::size_t n,
                                         std::mt19937_64& rng);

struct SelectedRule {
  RuleTemplate rule;
  std::size_t index = 0;
  double weight = 0.0;
};

std::vector<SelectedRule> sample_rules(const RuleWeightStore& store, std::size_t n,
                                       std::mt19937_64& rng);

// n highest weights, ties broken by lexicographic (r1, r2, r3).
std::vector<SelectedRule> top_rules(const RuleWeightStore& store, std::size_t n);

inline constexpr double kProbClamp = 1e-7;

struct BceResult {
  double loss = 0.0;
  std::vector<double> grad;  // dloss/dŷ_r; zero where the clamp is active
};

BceResult bce_loss(std::span<const double> y_hat, RelationId y);

double total_loss(double bce, double semantic, double w1, double w2);
double batch_mean(std::span<const double> losses);

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerState for_size(std::size_t n, double lr);
};

// Adam with bias correction; params are clamped to [lower, upper] afterwards.
// Throws std::invalid_argument when the shapes disagree.
void adam_step(OptimizerState& state, std::span<double> params, std::span<const double> grads,
               double lower = 0.0, double upper = std::numeric_limits<double>::infinity());

struct TrainConfig {
  double w1 = 1.0;
  double w2 = 1.0;
  double result_ic_weight = 0.1;
  double rule_ic_weight = 0.01;
  std::size_t sample_n = 150;
  std::size_t top_n = 150;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  double rule_lr = 1e-2;
  double fact_lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double init_max = 0.1;
  std::size_t toggle_every = 10;
  bool learn_fact_confidence = false;
  std::size_t top_k = 3;
  std::size_t max_iterations = 16;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  // Throws std::invalid_argument when a field is out of range.
  void validate(std::size_t relation_count) const;
};

// What a forward pass needs besides the learnable weights.
struct ModelContext {
  const Vocabulary* vocab = nullptr;
  std::vector<Constraint> constraints;
  // Rules that take part in every pass but are never updated.
  std::vector<WeightedRule> fixed_rules;
};

// Context for a compiled program: its constraints (when with_constraints),
// its fixed rules, and every non-composite prior as a fixed weighted rule.
ModelContext make_model_context(const ProgramModel& model, const RulePriors& priors,
                                bool with_constraints);

struct TrainState {
  RuleWeightStore weights;
  // Per-relation fact confidence θ in [0, 1]; a fact's probability is its
  // given probability times the confidence of its relation.
  std::vector<double> fact_confidence;
  OptimizerState rule_optimizer;
  OptimizerState fact_optimizer;
  std::uint64_t batches = 0;

  static TrainState fresh(RuleWeightStore weights, const TrainConfig& config);
};

struct KAccuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split = "train";
  double loss = 0.0;
  double bce = 0.0;
  double semantic = 0.0;
  KAccuracy overall;
  std::map<int, KAccuracy> per_k;
};

struct StepMetrics {
  std::uint64_t batch = 0;
  double loss = 0.0;
  bool rule_step = true;
};

struct TrainCallbacks {
  std::function<void(const EpochMetrics&)> on_epoch;
  std::function<void(const StepMetrics&)> on_step;
};

// Mini-batch training. Each batch samples sample_n rules, runs forward and
// backward per sample (in parallel when threads > 1), reduces gradients in
// sample order and steps the active optimizer. With learnable fact
// confidence the two optimizers alternate every toggle_every batches;
// otherwise only the rule optimizer steps.
void train(std::span<const Sample> data, const TrainConfig& config, const ModelContext& model,
           TrainState& state, const TrainCallbacks& callbacks = {});

struct EvalReport {
  KAccuracy overall;
  std::map<int, KAccuracy> per_k;
};

// Accuracy of predict(ŷ) using the top_n positive-weight rules.
EvalReport evaluate(std::span<const Sample> data, const RuleWeightStore& weights,
                    std::span<const double> fact_confidence, const TrainConfig& config,
                    const ModelContext& model);

// The rules used at test time: top_n positive-weight composites as weighted
// rules followed by the fixed rules.
std::vector<WeightedRule> inference_rules(const RuleWeightStore& weights, std::size_t top_n,
                                          const ModelContext& model);

// Top-n lines `weight  head ← body`, descending weight.
std::string export_rules(const RuleWeightStore& weights, std::size_t n, const Vocabulary& vocab);

// Number of the top-n composites that appear in the reference set.
std::size_t count_matches(const RuleWeightStore& weights, std::size_t n,
                          const RulePriors& reference);

// Versioned JSON checkpoint with weights, fact confidences and both
// optimizer states. Loading checks the relation vocabulary.
std::string save_checkpoint(const TrainState& state, const Vocabulary& vocab);
TrainState load_checkpoint(std::string_view text, const Vocabulary& vocab);

std::string metrics_json(const EpochMetrics& m);

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace difflog
