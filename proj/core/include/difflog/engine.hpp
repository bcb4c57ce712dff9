#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "difflog/logic.hpp"
#include "difflog/program.hpp"
#include "difflog/provenance.hpp"

namespace difflog {

struct AtomKey {
  RelationId pred;
  EntityId sub;
  EntityId obj;
  friend auto operator<=>(const AtomKey&, const AtomKey&) = default;
};

// Ground atoms with their provenance tags, the entity table of the sample,
// and the probabilities of every variable those tags mention.
class FactStore {
 public:
  explicit FactStore(std::size_t relation_count) : relation_count_(relation_count) {}

  std::size_t relation_count() const { return relation_count_; }
  EntityTable& entities() { return entities_; }
  const EntityTable& entities() const { return entities_; }
  VariableRegistry& variables() { return vars_; }
  const VariableRegistry& variables() const { return vars_; }

  const Tag* find(const AtomKey& key) const;
  // Returns true when the atom is new or its tag changed.
  bool set(const AtomKey& key, Tag tag);
  const std::map<AtomKey, Tag>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }

  // Join indices.
  std::span<const EntityId> objects(RelationId pred, EntityId sub) const;
  std::span<const EntityId> subjects(RelationId pred, EntityId obj) const;
  std::span<const AtomKey> with_pred(RelationId pred) const;

  // One entry per KB fact, in load order; var is the fact's variable.
  const std::vector<ProbFact>& facts() const { return facts_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  friend FactStore load_kb(const Sample& sample, std::size_t relation_count);

  std::size_t relation_count_;
  EntityTable entities_;
  VariableRegistry vars_;
  std::map<AtomKey, Tag> atoms_;
  std::unordered_map<std::uint64_t, std::vector<EntityId>> by_sub_;
  std::unordered_map<std::uint64_t, std::vector<EntityId>> by_obj_;
  std::unordered_map<std::uint32_t, std::vector<AtomKey>> by_pred_;
  std::vector<ProbFact> facts_;
  std::vector<std::string> warnings_;
};

// Each KB fact gets a fresh variable and the singleton tag {{v}}. Duplicate
// facts keep the larger probability and record a warning. Facts of the n/a
// class are dropped.
FactStore load_kb(const Sample& sample, std::size_t relation_count);

// A rule ready for deduction. weight_var is the rule's provenance variable;
// fixed rules have none and fire with weight 1.
struct BoundRule {
  Rule rule;
  std::optional<VarId> weight_var;
  std::optional<RuleTemplate> source;
};

struct FixpointOptions {
  std::size_t top_k = 3;
  std::size_t max_iterations = 16;
};

struct FixpointReport {
  std::size_t iterations = 0;
  bool saturated = true;
};

// Semi-naive bottom-up evaluation. Each round fires every rule instance that
// uses at least one atom whose tag changed in the previous round, reading
// tags from the previous round's state, so the result does not depend on
// rule or fact order.
FixpointReport fixpoint(FactStore& store, std::span<const BoundRule> rules,
                        const FixpointOptions& options);

using AnswerDistribution = std::vector<double>;

// argmax with ties broken towards the smallest relation id.
RelationId predict(std::span<const double> y_hat);

// A rule entering a forward pass: weight nullopt means fixed weight 1;
// otherwise the (unclamped) learnable weight, fed to WMC as min(weight, 1).
struct WeightedRule {
  Rule rule;
  std::optional<RuleTemplate> source;
  std::optional<double> weight;
};

struct ForwardOptions {
  std::size_t top_k = 3;
  std::size_t max_iterations = 16;
  double result_ic_weight = 0.1;
  double rule_ic_weight = 0.01;
  std::uint64_t parameter_version = 0;
};

struct Violation {
  double probability = 0.0;
  BoolFormula formula;
};

// Probability that c is violated. Result constraints ground over entity pairs
// in the store: OR over premise atoms of (premise AND NOT any conclusion).
// Rule constraints OR the variables of every violating rule of the
// constrained template kind, without truncation; a fixed violating rule makes
// the violation certain.
Violation constraint_violation(const FactStore& store, const Constraint& c,
                               std::span<const BoundRule> rules, const Vocabulary& vocab);

class StaleTrace : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct ForwardTrace {
  std::uint64_t parameter_version = 0;
  std::vector<double> probabilities;
  // Per relation; nullopt when r(s, o) was not derived.
  std::vector<std::optional<BoolFormula>> answer_formulas;
  std::vector<std::optional<Tag>> answer_tags;
  struct ConstraintTerm {
    std::size_t constraint = 0;
    double weight = 0.0;
    BoolFormula formula;
  };
  std::vector<ConstraintTerm> constraint_terms;
  // Variable index of each KB fact (load order) and each weighted rule.
  std::vector<std::uint32_t> fact_vars;
  std::vector<std::optional<std::uint32_t>> rule_vars;
  FixpointReport fixpoint;
};

struct ForwardResult {
  AnswerDistribution y_hat;
  double semantic_loss = 0.0;
  std::vector<double> violations;  // one per constraint
  ForwardTrace trace;
};

// ŷ_r = WMC of the tag of r(s, o); zero when the query entities are unknown
// or the atom is absent. Also records the formulas for backward.
AnswerDistribution answer_distribution(const FactStore& store, std::string_view sub,
                                       std::string_view obj, ForwardTrace* trace = nullptr);

// load_kb -> fixpoint -> answer_distribution, plus the weighted constraint
// violations l_sl = Σ w_c · P(violation_c).
ForwardResult forward(const Sample& sample, std::span<const WeightedRule> rules,
                      std::span<const Constraint> constraints, const Vocabulary& vocab,
                      const ForwardOptions& options);

struct Upstream {
  std::vector<double> answer;  // dL/dŷ_r
  double semantic = 0.0;       // dL/dl_sl
};

struct VariableGradients {
  std::vector<double> facts;  // per KB fact, load order
  std::vector<double> rules;  // per weighted rule; zero for fixed rules
};

// Chain rule through wmc_grad of every stored formula. Throws StaleTrace when
// current_version differs from the version recorded at forward time.
VariableGradients backward(const ForwardTrace& trace, const Upstream& upstream,
                           std::uint64_t current_version);

}  // namespace difflog
