#include "difflog/learner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <tuple>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace difflog {

RuleWeightStore::RuleWeightStore(std::size_t relation_count)
    : relation_count_(relation_count),
      weights_(relation_count * relation_count * relation_count, 0.0) {
  if (relation_count == 0) throw std::invalid_argument("empty relation vocabulary");
}

std::size_t RuleWeightStore::index(const RuleTemplate& t) const {
  if (t.kind() != TemplateKind::composite) {
    throw std::invalid_argument(
        fmt::format("only composite templates are learnable, got {}", to_string(t.kind())));
  }
  return template_slot(t, relation_count_);
}

RuleTemplate RuleWeightStore::template_at(std::size_t index) const {
  if (index >= weights_.size()) throw std::out_of_range("rule weight index");
  return template_at_slot(index, relation_count_);
}

void RuleWeightStore::set(const RuleTemplate& t, double w) {
  if (!(w >= 0.0) || !std::isfinite(w)) {
    throw std::invalid_argument(fmt::format("rule weight {} is not a finite nonnegative value", w));
  }
  weights_[index(t)] = w;
  ++version_;
}

RuleWeightStore init_rule_weights(const RulePriors& priors, std::size_t relation_count,
                                  std::mt19937_64& rng, double init_max) {
  RuleWeightStore store(relation_count);
  auto w = store.mutable_weights();
  for (double& x : w) x = init_max * uniform_unit(rng);
  for (const auto& [t, weight] : priors) {
    if (t.kind() == TemplateKind::composite) store.set(t, weight);
  }
  store.bump();
  return store;
}

std::vector<std::size_t> weighted_sample(std::span<const double> weights, std::size_t n,
                                         std::mt19937_64& rng) {
  // Key log(u) / w: the n largest keys are a weighted draw without
  // replacement. One uniform per entry keeps the stream position independent
  // of the weights.
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double u = uniform_unit(rng);
    if (weights[i] > 0.0) {
      // u == 0 would give -inf, which is still a valid (lowest) key.
      keyed.emplace_back(std::log(u) / weights[i], i);
    }
  }
  const std::size_t take = std::min(n, keyed.size());
  auto better = [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(take),
                    keyed.end(), better);
  std::vector<std::size_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(keyed[i].second);
  return out;
}

std::vector<SelectedRule> sample_rules(const RuleWeightStore& store, std::size_t n,
                                       std::mt19937_64& rng) {
  std::vector<SelectedRule> out;
  for (std::size_t i : weighted_sample(store.weights(), n, rng)) {
    out.push_back({store.template_at(i), i, store.weights()[i]});
  }
  return out;
}

std::vector<SelectedRule> top_rules(const RuleWeightStore& store, std::size_t n) {
  const auto w = store.weights();
  std::vector<std::size_t> order(w.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t take = std::min(n, order.size());
  // Index order is lexicographic (r1, r2, r3).
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) { return w[a] != w[b] ? w[a] > w[b] : a < b; });
  std::vector<SelectedRule> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back({store.template_at(order[i]), order[i], w[order[i]]});
  }
  return out;
}

BceResult bce_loss(std::span<const double> y_hat, RelationId y) {
  if (y.value >= y_hat.size()) throw std::invalid_argument("gold relation outside ŷ");
  BceResult out;
  out.grad.assign(y_hat.size(), 0.0);
  for (std::size_t r = 0; r < y_hat.size(); ++r) {
    const double p = std::clamp(y_hat[r], kProbClamp, 1.0 - kProbClamp);
    const bool interior = y_hat[r] > kProbClamp && y_hat[r] < 1.0 - kProbClamp;
    if (r == y.value) {
      out.loss -= std::log(p);
      if (interior) out.grad[r] = -1.0 / p;
    } else {
      out.loss -= std::log1p(-p);
      if (interior) out.grad[r] = 1.0 / (1.0 - p);
    }
  }
  return out;
}

double total_loss(double bce, double semantic, double w1, double w2) {
  return w1 * bce + w2 * semantic;
}

double batch_mean(std::span<const double> losses) {
  if (losses.empty()) return 0.0;
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

OptimizerState OptimizerState::for_size(std::size_t n, double lr) {
  OptimizerState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr;
  return s;
}

void adam_step(OptimizerState& state, std::span<double> params, std::span<const double> grads,
               double lower, double upper) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument(fmt::format(
        "adam_step shape mismatch: {} params, {} grads, {} first moments, {} second moments",
        params.size(), grads.size(), state.m.size(), state.v.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    params[i] = std::clamp(params[i], lower, upper);
  }
}

void TrainConfig::validate(std::size_t relation_count) const {
  const std::size_t space = relation_count * relation_count * relation_count;
  auto nonneg = [](double x, const char* name) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw std::invalid_argument(fmt::format("{} must be a finite value >= 0, got {}", name, x));
    }
  };
  nonneg(w1, "w1");
  nonneg(w2, "w2");
  nonneg(result_ic_weight, "result IC weight");
  nonneg(rule_ic_weight, "rule IC weight");
  nonneg(rule_lr, "rule learning rate");
  nonneg(fact_lr, "fact learning rate");
  nonneg(init_max, "initial weight range");
  nonneg(eps, "epsilon");
  if (sample_n > space || top_n > space) {
    throw std::invalid_argument(
        fmt::format("rule counts must not exceed the {} composite entries", space));
  }
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (toggle_every == 0) throw std::invalid_argument("toggle period must be positive");
  if (top_k == 0) throw std::invalid_argument("top-k must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
}

ModelContext make_model_context(const ProgramModel& model, const RulePriors& priors,
                                bool with_constraints) {
  ModelContext ctx;
  ctx.vocab = &model.vocabulary;
  if (with_constraints) ctx.constraints = model.constraints;
  for (const auto& r : model.fixed_rules) ctx.fixed_rules.push_back({r.rule, r.source, std::nullopt});
  for (const auto& [t, w] : priors) {
    if (t.kind() == TemplateKind::composite) continue;
    ctx.fixed_rules.push_back({instantiate_template(t, model.vocabulary.size()), t, w});
  }
  return ctx;
}

TrainState TrainState::fresh(RuleWeightStore weights, const TrainConfig& config) {
  const std::size_t n = weights.relation_count();
  TrainState s{std::move(weights), std::vector<double>(n, 1.0),
               OptimizerState::for_size(n * n * n, config.rule_lr),
               OptimizerState::for_size(n, config.fact_lr), 0};
  for (auto* opt : {&s.rule_optimizer, &s.fact_optimizer}) {
    opt->beta1 = config.beta1;
    opt->beta2 = config.beta2;
    opt->eps = config.eps;
  }
  return s;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  pool.clear();
  // Report the failure of the lowest index so errors are reproducible.
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

// The sample with fact probabilities scaled by the relation confidences,
// plus each distinct fact's unscaled probability in load order (the order of
// ForwardTrace::fact_vars).
struct ScaledSample {
  Sample sample;
  std::vector<std::pair<RelationId, double>> base;
};

ScaledSample scale_facts(const Sample& s, std::span<const double> confidence) {
  ScaledSample out{s, {}};
  std::map<std::tuple<std::uint32_t, std::string, std::string>, std::size_t> seen;
  for (auto& f : out.sample.facts) {
    if (f.relation.value >= confidence.size()) continue;
    const double base = f.prob;
    f.prob = base * confidence[f.relation.value];
    auto [it, inserted] = seen.try_emplace({f.relation.value, f.sub, f.obj}, out.base.size());
    if (inserted) {
      out.base.emplace_back(f.relation, base);
    } else {
      out.base[it->second].second = std::max(out.base[it->second].second, base);
    }
  }
  return out;
}

struct SampleOutcome {
  double loss = 0.0;
  double bce = 0.0;
  double semantic = 0.0;
  bool correct = false;
  std::vector<double> rule_grads;
  std::vector<double> fact_grads;  // per relation
};

void require_finite(double x, const std::string& what) {
  if (!std::isfinite(x)) throw NumericError(fmt::format("non-finite {} ({})", what, x));
}

void add_accuracy(std::map<int, KAccuracy>& per_k, KAccuracy& overall, int k, bool correct) {
  auto& cell = per_k[k];
  ++cell.total;
  ++overall.total;
  if (correct) {
    ++cell.correct;
    ++overall.correct;
  }
}

}  // namespace

void train(std::span<const Sample> data, const TrainConfig& config, const ModelContext& model,
           TrainState& state, const TrainCallbacks& callbacks) {
  if (!model.vocab) throw std::invalid_argument("model context has no vocabulary");
  const Vocabulary& vocab = *model.vocab;
  const std::size_t n_rel = vocab.size();
  config.validate(n_rel);
  if (data.empty()) throw std::invalid_argument("training set is empty");
  if (state.weights.relation_count() != n_rel || state.fact_confidence.size() != n_rel) {
    throw std::invalid_argument("training state does not match the vocabulary");
  }

  ForwardOptions fopts;
  fopts.top_k = config.top_k;
  fopts.max_iterations = config.max_iterations;
  fopts.result_ic_weight = config.result_ic_weight;
  fopts.rule_ic_weight = config.rule_ic_weight;

  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    auto rng = stream_rng(config.seed, epoch);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }

    EpochMetrics metrics;
    metrics.epoch = epoch;
    double loss_sum = 0.0;
    double bce_sum = 0.0;
    double semantic_sum = 0.0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t batch = std::min(config.batch_size, order.size() - start);
      const auto sampled = sample_rules(state.weights, config.sample_n, rng);
      std::vector<WeightedRule> rules;
      rules.reserve(sampled.size() + model.fixed_rules.size());
      for (const auto& s : sampled) {
        rules.push_back({instantiate_template(s.rule, n_rel), s.rule, s.weight});
      }
      rules.insert(rules.end(), model.fixed_rules.begin(), model.fixed_rules.end());
      fopts.parameter_version = state.weights.version();

      std::vector<SampleOutcome> outcomes(batch);
      const double scale = 1.0 / static_cast<double>(batch);
      parallel_for(batch, config.threads, [&](std::size_t b) {
        const Sample& sample = data[order[start + b]];
        const ScaledSample scaled = scale_facts(sample, state.fact_confidence);
        ForwardResult fwd = forward(scaled.sample, rules, model.constraints, vocab, fopts);
        const BceResult bce = bce_loss(fwd.y_hat, sample.answer);
        SampleOutcome& out = outcomes[b];
        out.bce = bce.loss;
        out.semantic = fwd.semantic_loss;
        out.loss = total_loss(bce.loss, fwd.semantic_loss, config.w1, config.w2);
        out.correct = predict(fwd.y_hat) == sample.answer;
        Upstream up;
        up.answer.resize(bce.grad.size());
        for (std::size_t r = 0; r < bce.grad.size(); ++r) {
          up.answer[r] = config.w1 * bce.grad[r] * scale;
        }
        up.semantic = config.w2 * scale;
        const VariableGradients g = backward(fwd.trace, up, state.weights.version());
        out.rule_grads = g.rules;
        out.fact_grads.assign(n_rel, 0.0);
        for (std::size_t f = 0; f < g.facts.size(); ++f) {
          const auto& [rel, base] = scaled.base[f];
          out.fact_grads[rel.value] += g.facts[f] * base;
        }
      });

      // Reduce in sample order so results do not depend on thread timing.
      std::vector<double> rule_grad(state.weights.size(), 0.0);
      std::vector<double> fact_grad(n_rel, 0.0);
      double batch_loss = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const SampleOutcome& o = outcomes[b];
        const std::size_t index = order[start + b];
        require_finite(o.loss, fmt::format("loss at epoch {}, sample {}", epoch, index));
        loss_sum += o.loss;
        bce_sum += o.bce;
        semantic_sum += o.semantic;
        batch_loss += o.loss;
        add_accuracy(metrics.per_k, metrics.overall, data[index].k, o.correct);
        for (std::size_t j = 0; j < sampled.size(); ++j) {
          rule_grad[sampled[j].index] += o.rule_grads[j];
        }
        for (std::size_t r = 0; r < n_rel; ++r) fact_grad[r] += o.fact_grads[r];
      }
      for (double g : rule_grad) require_finite(g, fmt::format("rule gradient at epoch {}", epoch));
      for (double g : fact_grad) require_finite(g, fmt::format("fact gradient at epoch {}", epoch));

      const bool rule_step = !config.learn_fact_confidence ||
                             (state.batches / config.toggle_every) % 2 == 0;
      if (rule_step) {
        adam_step(state.rule_optimizer, state.weights.mutable_weights(), rule_grad);
        state.weights.bump();
      } else {
        adam_step(state.fact_optimizer, state.fact_confidence, fact_grad, 0.0, 1.0);
      }
      ++state.batches;
      if (callbacks.on_step) {
        callbacks.on_step({state.batches, batch_loss / static_cast<double>(batch), rule_step});
      }
    }

    const double count = static_cast<double>(data.size());
    metrics.loss = loss_sum / count;
    metrics.bce = bce_sum / count;
    metrics.semantic = semantic_sum / count;
    if (callbacks.on_epoch) callbacks.on_epoch(metrics);
  }
}

std::vector<WeightedRule> inference_rules(const RuleWeightStore& weights, std::size_t top_n,
                                          const ModelContext& model) {
  std::vector<WeightedRule> rules;
  for (const auto& s : top_rules(weights, top_n)) {
    if (s.weight <= 0.0) break;
    rules.push_back({instantiate_template(s.rule, weights.relation_count()), s.rule, s.weight});
  }
  rules.insert(rules.end(), model.fixed_rules.begin(), model.fixed_rules.end());
  return rules;
}

EvalReport evaluate(std::span<const Sample> data, const RuleWeightStore& weights,
                    std::span<const double> fact_confidence, const TrainConfig& config,
                    const ModelContext& model) {
  if (!model.vocab) throw std::invalid_argument("model context has no vocabulary");
  const auto rules = inference_rules(weights, config.top_n, model);
  ForwardOptions fopts;
  fopts.top_k = config.top_k;
  fopts.max_iterations = config.max_iterations;
  std::vector<char> correct(data.size(), 0);
  parallel_for(data.size(), config.threads, [&](std::size_t i) {
    const ScaledSample scaled = scale_facts(data[i], fact_confidence);
    const ForwardResult fwd = forward(scaled.sample, rules, {}, *model.vocab, fopts);
    correct[i] = predict(fwd.y_hat) == data[i].answer;
  });
  EvalReport report;
  for (std::size_t i = 0; i < data.size(); ++i) {
    add_accuracy(report.per_k, report.overall, data[i].k, correct[i] != 0);
  }
  return report;
}

std::string export_rules(const RuleWeightStore& weights, std::size_t n, const Vocabulary& vocab) {
  std::string out;
  for (const auto& s : top_rules(weights, n)) {
    out += fmt::format("{:.3f}  {}\n", s.weight,
                       format_rule(instantiate_template(s.rule, weights.relation_count()), vocab));
  }
  return out;
}

std::size_t count_matches(const RuleWeightStore& weights, std::size_t n,
                          const RulePriors& reference) {
  std::size_t matches = 0;
  for (const auto& s : top_rules(weights, n)) matches += reference.count(s.rule);
  return matches;
}

namespace {

constexpr const char* kCheckpointFormat = "difflog-checkpoint";
constexpr int kCheckpointVersion = 1;

nlohmann::json optimizer_json(const OptimizerState& s) {
  return {{"step", s.step}, {"lr", s.lr},       {"beta1", s.beta1}, {"beta2", s.beta2},
          {"eps", s.eps},   {"m", s.m},         {"v", s.v}};
}

OptimizerState optimizer_from_json(const nlohmann::json& j, std::size_t size) {
  OptimizerState s;
  s.step = j.at("step").get<std::uint64_t>();
  s.lr = j.at("lr").get<double>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.eps = j.at("eps").get<double>();
  s.m = j.at("m").get<std::vector<double>>();
  s.v = j.at("v").get<std::vector<double>>();
  if (s.m.size() != size || s.v.size() != size) {
    throw std::invalid_argument("checkpoint optimizer moments have the wrong size");
  }
  return s;
}

}  // namespace

std::string save_checkpoint(const TrainState& state, const Vocabulary& vocab) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["relations"] = vocab.names();
  j["composite"] = std::vector<double>(state.weights.weights().begin(),
                                       state.weights.weights().end());
  j["fact_confidence"] = state.fact_confidence;
  j["batches"] = state.batches;
  j["rule_optimizer"] = optimizer_json(state.rule_optimizer);
  j["fact_optimizer"] = optimizer_json(state.fact_optimizer);
  return j.dump() + "\n";
}

TrainState load_checkpoint(std::string_view text, const Vocabulary& vocab) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw std::invalid_argument("not a checkpoint file");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw std::invalid_argument(
          fmt::format("unsupported checkpoint version {}", j.at("version").dump()));
    }
    if (j.at("relations").get<std::vector<std::string>>() != vocab.names()) {
      throw std::invalid_argument("checkpoint was trained on a different relation vocabulary");
    }
    const std::size_t n = vocab.size();
    RuleWeightStore weights(n);
    const auto w = j.at("composite").get<std::vector<double>>();
    if (w.size() != weights.size()) {
      throw std::invalid_argument("checkpoint weight array has the wrong size");
    }
    for (double x : w) {
      if (!(x >= 0.0) || !std::isfinite(x)) {
        throw std::invalid_argument("checkpoint contains a negative or non-finite weight");
      }
    }
    std::copy(w.begin(), w.end(), weights.mutable_weights().begin());
    weights.bump();
    auto confidence = j.at("fact_confidence").get<std::vector<double>>();
    if (confidence.size() != n) {
      throw std::invalid_argument("checkpoint fact confidences have the wrong size");
    }
    return TrainState{std::move(weights), std::move(confidence),
                      optimizer_from_json(j.at("rule_optimizer"), n * n * n),
                      optimizer_from_json(j.at("fact_optimizer"), n),
                      j.at("batches").get<std::uint64_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("malformed checkpoint: {}", e.what()));
  }
}

std::string metrics_json(const EpochMetrics& m) {
  nlohmann::json j;
  j["epoch"] = m.epoch;
  j["split"] = m.split;
  j["loss"] = m.loss;
  j["bce"] = m.bce;
  j["semantic"] = m.semantic;
  j["accuracy"] = m.overall.accuracy();
  j["correct"] = m.overall.correct;
  j["total"] = m.overall.total;
  nlohmann::json per_k = nlohmann::json::object();
  for (const auto& [k, acc] : m.per_k) {
    per_k[std::to_string(k)] = {
        {"accuracy", acc.accuracy()}, {"correct", acc.correct}, {"total", acc.total}};
  }
  j["per_k"] = std::move(per_k);
  return j.dump();
}

}  // namespace difflog
