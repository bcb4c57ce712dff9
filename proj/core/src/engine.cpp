#include "difflog/engine.hpp"

#include <algorithm>
#include <array>

#include <fmt/format.h>

namespace difflog {

namespace {

std::uint64_t pack(RelationId pred, EntityId e) {
  return (static_cast<std::uint64_t>(pred.value) << 32) | e.value;
}

}  // namespace

const Tag* FactStore::find(const AtomKey& key) const {
  auto it = atoms_.find(key);
  return it == atoms_.end() ? nullptr : &it->second;
}

bool FactStore::set(const AtomKey& key, Tag tag) {
  auto [it, inserted] = atoms_.try_emplace(key);
  if (inserted) {
    by_sub_[pack(key.pred, key.sub)].push_back(key.obj);
    by_obj_[pack(key.pred, key.obj)].push_back(key.sub);
    by_pred_[key.pred.value].push_back(key);
  } else if (it->second == tag) {
    return false;
  }
  it->second = std::move(tag);
  return true;
}

std::span<const EntityId> FactStore::objects(RelationId pred, EntityId sub) const {
  auto it = by_sub_.find(pack(pred, sub));
  if (it == by_sub_.end()) return {};
  return it->second;
}

std::span<const EntityId> FactStore::subjects(RelationId pred, EntityId obj) const {
  auto it = by_obj_.find(pack(pred, obj));
  if (it == by_obj_.end()) return {};
  return it->second;
}

std::span<const AtomKey> FactStore::with_pred(RelationId pred) const {
  auto it = by_pred_.find(pred.value);
  if (it == by_pred_.end()) return {};
  return it->second;
}

FactStore load_kb(const Sample& sample, std::size_t relation_count) {
  FactStore store(relation_count);
  std::map<AtomKey, std::size_t> seen;
  for (const auto& f : sample.facts) {
    if (f.relation.value >= relation_count) continue;  // n/a never enters the store
    if (!(f.prob >= 0.0 && f.prob <= 1.0)) {
      throw std::invalid_argument(fmt::format("fact probability {} outside [0, 1]", f.prob));
    }
    const AtomKey key{f.relation, store.entities_.intern(f.sub), store.entities_.intern(f.obj)};
    if (auto it = seen.find(key); it != seen.end()) {
      ProbFact& existing = store.facts_[it->second];
      store.warnings_.push_back(fmt::format("duplicate fact {}({}, {}); keeping probability {}",
                                            f.relation.value, f.sub, f.obj,
                                            std::max(existing.prob, f.prob)));
      if (f.prob > existing.prob) {
        existing.prob = f.prob;
        store.vars_.set(existing.var, f.prob);
      }
      continue;
    }
    const VarId var = store.vars_.add(VarOrigin::fact, f.prob);
    seen.emplace(key, store.facts_.size());
    store.facts_.push_back({key.pred, key.sub, key.obj, f.prob, var});
    store.set(key, Tag::variable(var.index));
  }
  return store;
}

namespace {

constexpr std::size_t kMaxRuleVariables = 8;

using Bindings = std::array<std::optional<EntityId>, kMaxRuleVariables>;

// Evaluates one round of rule firings against a fixed snapshot of the store.
class RoundEvaluator {
 public:
  RoundEvaluator(const FactStore& store, std::span<const BoundRule> rules, std::size_t k)
      : store_(store), rules_(rules), k_(k), probs_(store.variables().probabilities()) {}

  void fire_from(const AtomKey& delta, std::size_t rule_index, std::size_t pos) {
    const BoundRule& bound = rules_[rule_index];
    const AtomPattern& p = bound.rule.body[pos];
    Bindings b{};
    if (p.sub == p.obj && delta.sub != delta.obj) return;
    b[p.sub] = delta.sub;
    b[p.obj] = delta.obj;
    std::vector<const Tag*> tags(bound.rule.body.size(), nullptr);
    tags[pos] = store_.find(delta);
    join(bound, pos, 0, b, tags);
  }

  std::map<AtomKey, std::vector<Proof>>& contributions() { return contributions_; }

 private:
  const FactStore& store_;
  std::span<const BoundRule> rules_;
  std::size_t k_;
  std::span<const double> probs_;
  std::map<AtomKey, std::vector<Proof>> contributions_;

  void join(const BoundRule& bound, std::size_t fixed, std::size_t next, Bindings& b,
            std::vector<const Tag*>& tags) {
    const Rule& rule = bound.rule;
    if (next == fixed) {
      join(bound, fixed, next + 1, b, tags);
      return;
    }
    if (next == rule.body.size()) {
      emit(bound, b, tags);
      return;
    }
    const AtomPattern& p = rule.body[next];
    auto visit = [&](EntityId sub, EntityId obj) {
      if (p.sub == p.obj && sub != obj) return;
      const Tag* tag = store_.find({p.pred, sub, obj});
      if (!tag) return;
      const auto saved_sub = b[p.sub];
      const auto saved_obj = b[p.obj];
      b[p.sub] = sub;
      b[p.obj] = obj;
      tags[next] = tag;
      join(bound, fixed, next + 1, b, tags);
      b[p.sub] = saved_sub;
      b[p.obj] = saved_obj;
    };
    if (b[p.sub] && b[p.obj]) {
      visit(*b[p.sub], *b[p.obj]);
    } else if (b[p.sub]) {
      const EntityId sub = *b[p.sub];
      for (EntityId obj : store_.objects(p.pred, sub)) visit(sub, obj);
    } else if (b[p.obj]) {
      const EntityId obj = *b[p.obj];
      for (EntityId sub : store_.subjects(p.pred, obj)) visit(sub, obj);
    } else {
      for (const AtomKey& key : store_.with_pred(p.pred)) visit(key.sub, key.obj);
    }
  }

  void emit(const BoundRule& bound, const Bindings& b, const std::vector<const Tag*>& tags) {
    const Rule& rule = bound.rule;
    for (const auto& g : rule.guards) {
      if (b[g.lhs] == b[g.rhs]) return;
    }
    Tag acc = bound.weight_var ? Tag::variable(bound.weight_var->index) : Tag::one();
    for (const Tag* t : tags) {
      acc = tag_and(acc, *t, k_, probs_);
      if (acc.empty()) return;
    }
    const AtomKey head{rule.head.pred, *b[rule.head.sub], *b[rule.head.obj]};
    auto& slot = contributions_[head];
    slot.insert(slot.end(), acc.proofs().begin(), acc.proofs().end());
  }
};

}  // namespace

FixpointReport fixpoint(FactStore& store, std::span<const BoundRule> rules,
                        const FixpointOptions& options) {
  std::unordered_map<std::uint32_t, std::vector<std::pair<std::size_t, std::size_t>>> by_body;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const Rule& r = rules[i].rule;
    if (r.variable_count() > kMaxRuleVariables) {
      throw std::invalid_argument(fmt::format("rule uses {} variables; at most {} supported",
                                              r.variable_count(), kMaxRuleVariables));
    }
    if (r.head.pred.value >= store.relation_count()) {
      throw std::invalid_argument("rule head relation outside the vocabulary");
    }
    for (std::size_t pos = 0; pos < r.body.size(); ++pos) {
      by_body[r.body[pos].pred.value].emplace_back(i, pos);
    }
  }

  std::vector<AtomKey> delta;
  delta.reserve(store.size());
  for (const auto& [key, tag] : store.atoms()) delta.push_back(key);

  FixpointReport report;
  while (!delta.empty()) {
    if (report.iterations == options.max_iterations) {
      report.saturated = false;
      break;
    }
    ++report.iterations;
    RoundEvaluator round(store, rules, options.top_k);
    for (const AtomKey& d : delta) {
      auto it = by_body.find(d.pred.value);
      if (it == by_body.end()) continue;
      for (const auto& [rule_index, pos] : it->second) round.fire_from(d, rule_index, pos);
    }
    std::vector<AtomKey> next;
    const auto probs = store.variables().probabilities();
    for (auto& [head, proofs] : round.contributions()) {
      if (const Tag* old = store.find(head)) {
        proofs.insert(proofs.end(), old->proofs().begin(), old->proofs().end());
      }
      if (store.set(head, Tag::from_proofs(std::move(proofs), options.top_k, probs))) {
        next.push_back(head);
      }
    }
    delta = std::move(next);
  }
  return report;
}

RelationId predict(std::span<const double> y_hat) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < y_hat.size(); ++i) {
    if (y_hat[i] > y_hat[best]) best = i;
  }
  return RelationId{static_cast<std::uint32_t>(best)};
}

AnswerDistribution answer_distribution(const FactStore& store, std::string_view sub,
                                       std::string_view obj, ForwardTrace* trace) {
  const std::size_t n = store.relation_count();
  AnswerDistribution y(n, 0.0);
  if (trace) {
    trace->answer_formulas.assign(n, std::nullopt);
    trace->answer_tags.assign(n, std::nullopt);
  }
  const auto s = store.entities().find(sub);
  const auto o = store.entities().find(obj);
  if (!s || !o) return y;
  const auto probs = store.variables().probabilities();
  for (std::uint32_t r = 0; r < n; ++r) {
    const Tag* tag = store.find({RelationId{r}, *s, *o});
    if (!tag) continue;
    BoolFormula f = lower(*tag);
    y[r] = wmc(f, probs);
    if (trace) {
      trace->answer_formulas[r] = std::move(f);
      trace->answer_tags[r] = *tag;
    }
  }
  return y;
}

Violation constraint_violation(const FactStore& store, const Constraint& c,
                               std::span<const BoundRule> rules, const Vocabulary& vocab) {
  const auto probs = store.variables().probabilities();
  Violation out;
  if (const auto* rc = std::get_if<ResultConstraint>(&c.body)) {
    std::vector<BoolFormula> clauses;
    const AtomPattern& prem = rc->premise;
    for (const AtomKey& key : store.with_pred(prem.pred)) {
      if (prem.sub == prem.obj && key.sub != key.obj) continue;
      std::array<EntityId, 2> vars{};
      vars[prem.sub] = key.sub;
      vars[prem.obj] = key.obj;
      std::vector<BoolFormula> support;
      for (const auto& concl : rc->conclusions) {
        if (const Tag* t = store.find({concl.pred, vars[concl.sub], vars[concl.obj]})) {
          support.push_back(lower(*t));
        }
      }
      clauses.push_back(lower(*store.find(key)) &
                        BoolFormula::negate(BoolFormula::disj(std::move(support))));
    }
    out.formula = BoolFormula::disj(std::move(clauses));
  } else {
    const auto& rule_ic = std::get<RuleConstraint>(c.body);
    Tag violating;
    for (const auto& r : rules) {
      if (!r.source || !violates(rule_ic, *r.source, vocab)) continue;
      const Tag single = r.weight_var ? Tag::variable(r.weight_var->index) : Tag::one();
      violating = tag_or(violating, single, kUnboundedProofs, probs);
    }
    out.formula = lower(violating);
  }
  out.probability = wmc(out.formula, probs);
  return out;
}

ForwardResult forward(const Sample& sample, std::span<const WeightedRule> rules,
                      std::span<const Constraint> constraints, const Vocabulary& vocab,
                      const ForwardOptions& options) {
  FactStore store = load_kb(sample, vocab.size());
  ForwardResult result;
  ForwardTrace& trace = result.trace;
  trace.parameter_version = options.parameter_version;
  for (const auto& f : store.facts()) trace.fact_vars.push_back(f.var.index);

  std::vector<BoundRule> bound;
  bound.reserve(rules.size());
  for (const auto& r : rules) {
    std::optional<VarId> var;
    if (r.weight) {
      if (!(*r.weight >= 0.0)) {
        throw std::invalid_argument(fmt::format("rule weight {} is negative", *r.weight));
      }
      var = store.variables().add(VarOrigin::rule, std::min(*r.weight, 1.0));
      trace.rule_vars.emplace_back(var->index);
    } else {
      trace.rule_vars.emplace_back(std::nullopt);
    }
    bound.push_back({r.rule, var, r.source});
  }

  trace.fixpoint = fixpoint(store, bound, {options.top_k, options.max_iterations});
  result.y_hat = answer_distribution(store, sample.query_sub, sample.query_obj, &trace);

  for (std::size_t i = 0; i < constraints.size(); ++i) {
    Violation v = constraint_violation(store, constraints[i], bound, vocab);
    const double weight = constraints[i].kind() == ConstraintKind::result_ic
                              ? options.result_ic_weight
                              : options.rule_ic_weight;
    result.violations.push_back(v.probability);
    result.semantic_loss += weight * v.probability;
    trace.constraint_terms.push_back({i, weight, std::move(v.formula)});
  }
  const auto probs = store.variables().probabilities();
  trace.probabilities.assign(probs.begin(), probs.end());
  return result;
}

VariableGradients backward(const ForwardTrace& trace, const Upstream& upstream,
                           std::uint64_t current_version) {
  if (trace.parameter_version != current_version) {
    throw StaleTrace(fmt::format("trace recorded at parameter version {}, current is {}",
                                 trace.parameter_version, current_version));
  }
  if (upstream.answer.size() != trace.answer_formulas.size()) {
    throw std::invalid_argument("upstream gradient size does not match the relation count");
  }
  std::vector<double> grad(trace.probabilities.size(), 0.0);
  auto accumulate = [&](const BoolFormula& f, double scale) {
    if (scale == 0.0) return;
    for (const auto& [var, d] : wmc_grad(f, trace.probabilities).partials) {
      grad[var] += scale * d;
    }
  };
  for (std::size_t r = 0; r < trace.answer_formulas.size(); ++r) {
    if (trace.answer_formulas[r]) accumulate(*trace.answer_formulas[r], upstream.answer[r]);
  }
  for (const auto& term : trace.constraint_terms) {
    accumulate(term.formula, upstream.semantic * term.weight);
  }
  VariableGradients out;
  out.facts.reserve(trace.fact_vars.size());
  for (auto v : trace.fact_vars) out.facts.push_back(grad[v]);
  out.rules.reserve(trace.rule_vars.size());
  for (const auto& v : trace.rule_vars) out.rules.push_back(v ? grad[*v] : 0.0);
  return out;
}

}  // namespace difflog
