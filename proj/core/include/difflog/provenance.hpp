#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "difflog/logic.hpp"

namespace difflog {

inline constexpr std::size_t kUnboundedProofs =
    std::numeric_limits<std::size_t>::max();

class UnboundVariable : public std::out_of_range {
 public:
  explicit UnboundVariable(std::uint32_t index);
  std::uint32_t index() const { return index_; }

 private:
  std::uint32_t index_;
};

class TooManyVariables : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Probabilities of the boolean provenance variables of one forward pass.
class VariableRegistry {
 public:
  VarId add(VarOrigin origin, double prob);
  void set(VarId v, double prob);
  double prob(VarId v) const { return probs_.at(v.index); }
  VarOrigin origin(std::uint32_t index) const { return origins_.at(index); }
  std::size_t size() const { return probs_.size(); }
  std::span<const double> probabilities() const { return probs_; }

 private:
  std::vector<double> probs_;
  std::vector<VarOrigin> origins_;
};

// A conjunction of positive variables, kept sorted and duplicate-free.
class Proof {
 public:
  Proof() = default;
  explicit Proof(std::vector<std::uint32_t> vars);

  const std::vector<std::uint32_t>& vars() const { return vars_; }
  bool empty() const { return vars_.empty(); }
  std::size_t size() const { return vars_.size(); }

  Proof merged(const Proof& other) const;
  bool subset_of(const Proof& other) const;
  double probability(std::span<const double> probs) const;

  friend auto operator<=>(const Proof&, const Proof&) = default;

 private:
  std::vector<std::uint32_t> vars_;
};

// Provenance of a derived atom: at most k proofs, none a superset of
// another, stored in lexicographic order. The empty tag is "false" and the
// tag holding the empty proof is "true".
class Tag {
 public:
  Tag() = default;

  static Tag one();
  static Tag variable(std::uint32_t index);
  // Dedup, absorption, then keep the k proofs of highest probability. Ties
  // prefer shorter proofs, then lexicographic order.
  static Tag from_proofs(std::vector<Proof> proofs, std::size_t k,
                         std::span<const double> probs);

  const std::vector<Proof>& proofs() const { return proofs_; }
  bool empty() const { return proofs_.empty(); }
  std::size_t size() const { return proofs_.size(); }

  friend bool operator==(const Tag&, const Tag&) = default;

 private:
  std::vector<Proof> proofs_;
};

Tag tag_or(const Tag& lhs, const Tag& rhs, std::size_t k,
           std::span<const double> probs);
Tag tag_and(const Tag& lhs, const Tag& rhs, std::size_t k,
            std::span<const double> probs);

// Immutable boolean expression over variable indices. Children are shared,
// so copies are cheap.
class BoolFormula {
 public:
  enum class Op : std::uint8_t { falsity, truth, variable, negation, conjunction, disjunction };

  BoolFormula();  // false

  static BoolFormula truth();
  static BoolFormula falsity();
  static BoolFormula var(std::uint32_t index);
  static BoolFormula negate(BoolFormula f);
  static BoolFormula conj(std::vector<BoolFormula> children);
  static BoolFormula disj(std::vector<BoolFormula> children);

  Op op() const;
  std::uint32_t variable() const;
  std::span<const BoolFormula> children() const;

  // Sorted, distinct variable indices.
  std::vector<std::uint32_t> variables() const;
  bool evaluate(const std::vector<bool>& assignment) const;

  friend BoolFormula operator&(BoolFormula a, BoolFormula b) {
    return conj({std::move(a), std::move(b)});
  }
  friend BoolFormula operator|(BoolFormula a, BoolFormula b) {
    return disj({std::move(a), std::move(b)});
  }
  friend BoolFormula operator!(BoolFormula a) { return negate(std::move(a)); }

 private:
  struct Node;
  explicit BoolFormula(std::shared_ptr<const Node> node);
  std::shared_ptr<const Node> node_;
};

// OR over proofs of AND over their variables.
BoolFormula lower(const Tag& tag);

// Exact probability of f under independent Bernoulli variables with
// P(v = 1) = probs[v]. Shannon expansion over a hash-consed DAG; the variable
// order is by descending occurrence count.
double wmc(const BoolFormula& f, std::span<const double> probs);

struct WmcGradient {
  double value = 0.0;
  // (variable index, dWMC/dp(v)) sorted by index; every variable of f appears.
  std::vector<std::pair<std::uint32_t, double>> partials;
};

WmcGradient wmc_grad(const BoolFormula& f, std::span<const double> probs);

inline constexpr std::size_t kBruteForceVariableCap = 20;

// Sum over all 2^n assignments of the formula's variables. Test oracle.
double brute_force_wmc(const BoolFormula& f, std::span<const double> probs);

}  // namespace difflog
