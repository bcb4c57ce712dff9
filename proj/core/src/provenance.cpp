#include "difflog/provenance.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <fmt/format.h>

namespace difflog {

UnboundVariable::UnboundVariable(std::uint32_t index)
    : std::out_of_range(fmt::format("variable {} has no probability", index)),
      index_(index) {}

VarId VariableRegistry::add(VarOrigin origin, double prob) {
  if (!(prob >= 0.0 && prob <= 1.0)) {
    throw std::invalid_argument(fmt::format("probability {} outside [0, 1]", prob));
  }
  probs_.push_back(prob);
  origins_.push_back(origin);
  return VarId{static_cast<std::uint32_t>(probs_.size() - 1), origin};
}

void VariableRegistry::set(VarId v, double prob) {
  if (!(prob >= 0.0 && prob <= 1.0)) {
    throw std::invalid_argument(fmt::format("probability {} outside [0, 1]", prob));
  }
  probs_.at(v.index) = prob;
}

// ---------------------------------------------------------------------------
// Proofs and tags

Proof::Proof(std::vector<std::uint32_t> vars) : vars_(std::move(vars)) {
  std::sort(vars_.begin(), vars_.end());
  vars_.erase(std::unique(vars_.begin(), vars_.end()), vars_.end());
}

Proof Proof::merged(const Proof& other) const {
  Proof out;
  out.vars_.reserve(vars_.size() + other.vars_.size());
  std::set_union(vars_.begin(), vars_.end(), other.vars_.begin(),
                 other.vars_.end(), std::back_inserter(out.vars_));
  return out;
}

bool Proof::subset_of(const Proof& other) const {
  return vars_.size() <= other.vars_.size() &&
         std::includes(other.vars_.begin(), other.vars_.end(), vars_.begin(),
                       vars_.end());
}

double Proof::probability(std::span<const double> probs) const {
  double p = 1.0;
  for (auto v : vars_) {
    if (v >= probs.size()) throw UnboundVariable(v);
    p *= probs[v];
  }
  return p;
}

Tag Tag::one() {
  Tag t;
  t.proofs_.emplace_back();
  return t;
}

Tag Tag::variable(std::uint32_t index) {
  Tag t;
  t.proofs_.push_back(Proof({index}));
  return t;
}

Tag Tag::from_proofs(std::vector<Proof> proofs, std::size_t k,
                     std::span<const double> probs) {
  auto shorter = [](const Proof& a, const Proof& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  };
  std::sort(proofs.begin(), proofs.end(), shorter);
  proofs.erase(std::unique(proofs.begin(), proofs.end()), proofs.end());

  std::vector<Proof> kept;
  kept.reserve(proofs.size());
  for (auto& p : proofs) {
    const bool absorbed = std::any_of(kept.begin(), kept.end(),
                                      [&](const Proof& q) { return q.subset_of(p); });
    if (!absorbed) kept.push_back(std::move(p));
  }

  if (kept.size() > k) {
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
      ranked.emplace_back(kept[i].probability(probs), i);
    }
    // kept is already ordered by (size, lex), so a stable sort on probability
    // alone gives the full tie-break.
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<Proof> top;
    top.reserve(k);
    for (std::size_t i = 0; i < k; ++i) top.push_back(std::move(kept[ranked[i].second]));
    kept = std::move(top);
  }
  std::sort(kept.begin(), kept.end());
  Tag t;
  t.proofs_ = std::move(kept);
  return t;
}

Tag tag_or(const Tag& lhs, const Tag& rhs, std::size_t k,
           std::span<const double> probs) {
  std::vector<Proof> all(lhs.proofs());
  all.insert(all.end(), rhs.proofs().begin(), rhs.proofs().end());
  return Tag::from_proofs(std::move(all), k, probs);
}

Tag tag_and(const Tag& lhs, const Tag& rhs, std::size_t k,
            std::span<const double> probs) {
  std::vector<Proof> all;
  all.reserve(lhs.size() * rhs.size());
  for (const auto& a : lhs.proofs()) {
    for (const auto& b : rhs.proofs()) all.push_back(a.merged(b));
  }
  return Tag::from_proofs(std::move(all), k, probs);
}

// ---------------------------------------------------------------------------
// BoolFormula

struct BoolFormula::Node {
  Op op;
  std::uint32_t var = 0;
  std::vector<BoolFormula> kids;
};

BoolFormula::BoolFormula() : BoolFormula(falsity()) {}
BoolFormula::BoolFormula(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

BoolFormula BoolFormula::truth() {
  static const auto node = std::make_shared<const Node>(Node{Op::truth, 0, {}});
  return BoolFormula(node);
}

BoolFormula BoolFormula::falsity() {
  static const auto node = std::make_shared<const Node>(Node{Op::falsity, 0, {}});
  return BoolFormula(node);
}

BoolFormula BoolFormula::var(std::uint32_t index) {
  return BoolFormula(std::make_shared<const Node>(Node{Op::variable, index, {}}));
}

BoolFormula BoolFormula::negate(BoolFormula f) {
  return BoolFormula(std::make_shared<const Node>(Node{Op::negation, 0, {std::move(f)}}));
}

BoolFormula BoolFormula::conj(std::vector<BoolFormula> children) {
  if (children.empty()) return truth();
  if (children.size() == 1) return std::move(children.front());
  return BoolFormula(
      std::make_shared<const Node>(Node{Op::conjunction, 0, std::move(children)}));
}

BoolFormula BoolFormula::disj(std::vector<BoolFormula> children) {
  if (children.empty()) return falsity();
  if (children.size() == 1) return std::move(children.front());
  return BoolFormula(
      std::make_shared<const Node>(Node{Op::disjunction, 0, std::move(children)}));
}

BoolFormula::Op BoolFormula::op() const { return node_->op; }
std::uint32_t BoolFormula::variable() const { return node_->var; }
std::span<const BoolFormula> BoolFormula::children() const { return node_->kids; }

std::vector<std::uint32_t> BoolFormula::variables() const {
  std::vector<std::uint32_t> out;
  std::vector<const Node*> stack{node_.get()};
  std::vector<const Node*> seen;
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (n->op == Op::variable) {
      out.push_back(n->var);
      continue;
    }
    for (const auto& kid : n->kids) {
      const Node* k = kid.node_.get();
      if (!k->kids.empty()) {
        if (std::find(seen.begin(), seen.end(), k) != seen.end()) continue;
        seen.push_back(k);
      }
      stack.push_back(k);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool BoolFormula::evaluate(const std::vector<bool>& assignment) const {
  switch (node_->op) {
    case Op::falsity:
      return false;
    case Op::truth:
      return true;
    case Op::variable:
      if (node_->var >= assignment.size()) throw UnboundVariable(node_->var);
      return assignment[node_->var];
    case Op::negation:
      return !node_->kids.front().evaluate(assignment);
    case Op::conjunction:
      return std::all_of(node_->kids.begin(), node_->kids.end(),
                         [&](const BoolFormula& k) { return k.evaluate(assignment); });
    case Op::disjunction:
      return std::any_of(node_->kids.begin(), node_->kids.end(),
                         [&](const BoolFormula& k) { return k.evaluate(assignment); });
  }
  return false;
}

BoolFormula lower(const Tag& tag) {
  std::vector<BoolFormula> terms;
  terms.reserve(tag.size());
  for (const auto& proof : tag.proofs()) {
    std::vector<BoolFormula> lits;
    lits.reserve(proof.size());
    for (auto v : proof.vars()) lits.push_back(BoolFormula::var(v));
    terms.push_back(BoolFormula::conj(std::move(lits)));
  }
  return BoolFormula::disj(std::move(terms));
}

// ---------------------------------------------------------------------------
// Shannon expansion

namespace {

using Op = BoolFormula::Op;
using NodeId = std::uint32_t;

constexpr NodeId kFalse = 0;
constexpr NodeId kTrue = 1;
constexpr std::uint32_t kNoRank = std::numeric_limits<std::uint32_t>::max();

struct KeyHash {
  std::size_t operator()(const std::vector<std::uint32_t>& key) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (auto x : key) {
      h ^= x + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
  }
};

// Hash-consed formula DAG plus the decision structure produced by expanding
// it. One instance per wmc call; nothing is shared across calls.
class ShannonExpander {
 public:
  ShannonExpander(const BoolFormula& f, std::span<const double> probs) : probs_(probs) {
    nodes_.push_back({Op::falsity, 0, {}, kNoRank});
    nodes_.push_back({Op::truth, 0, {}, kNoRank});
    root_ = intern(f);
    assign_ranks();
  }

  double value() { return expand(root_); }

  // Reverse-mode pass over the decision DAG built by value().
  std::unordered_map<std::uint32_t, double> gradient() {
    std::unordered_map<NodeId, double> adjoint;
    std::unordered_map<std::uint32_t, double> grad;
    adjoint[root_] = 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      const NodeId id = *it;
      const auto found = adjoint.find(id);
      if (found == adjoint.end() || found->second == 0.0) continue;
      const double a = found->second;
      const Decision& d = decisions_.at(id);
      const double p = probs_[d.var];
      grad[d.var] += a * (memo_.at(d.hi) - memo_.at(d.lo));
      if (d.hi > kTrue) adjoint[d.hi] += a * p;
      if (d.lo > kTrue) adjoint[d.lo] += a * (1.0 - p);
    }
    return grad;
  }

 private:
  struct ANode {
    Op op;
    std::uint32_t var;
    std::vector<NodeId> kids;
    std::uint32_t top;  // smallest variable rank in the support
  };
  struct Decision {
    std::uint32_t var;
    NodeId hi;
    NodeId lo;
  };

  std::span<const double> probs_;
  std::vector<ANode> nodes_;
  std::unordered_map<std::vector<std::uint32_t>, NodeId, KeyHash> unique_;
  std::unordered_map<const void*, NodeId> interned_;
  std::unordered_map<std::uint32_t, std::uint32_t> rank_;
  bool ranked_ = false;
  NodeId root_ = kFalse;

  std::unordered_map<std::uint64_t, NodeId> restrict_memo_;
  std::unordered_map<NodeId, double> memo_{{kFalse, 0.0}, {kTrue, 1.0}};
  std::unordered_map<NodeId, Decision> decisions_;
  std::vector<NodeId> order_;

  NodeId make(Op op, std::uint32_t var, std::vector<NodeId> kids) {
    std::vector<std::uint32_t> key;
    key.reserve(kids.size() + 2);
    key.push_back(static_cast<std::uint32_t>(op));
    key.push_back(var);
    key.insert(key.end(), kids.begin(), kids.end());
    auto [it, inserted] = unique_.try_emplace(std::move(key),
                                              static_cast<NodeId>(nodes_.size()));
    if (inserted) {
      std::uint32_t top = kNoRank;
      if (ranked_) {
        if (op == Op::variable) {
          top = rank_.at(var);
        } else {
          for (auto k : kids) top = std::min(top, nodes_[k].top);
        }
      }
      nodes_.push_back({op, var, std::move(kids), top});
    }
    return it->second;
  }

  NodeId make_var(std::uint32_t v) {
    if (v >= probs_.size()) throw UnboundVariable(v);
    const double p = probs_[v];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument(fmt::format("probability of variable {} is {}, "
                                              "outside [0, 1]",
                                              v, p));
    }
    return make(Op::variable, v, {});
  }

  NodeId make_not(NodeId x) {
    if (x == kFalse) return kTrue;
    if (x == kTrue) return kFalse;
    if (nodes_[x].op == Op::negation) return nodes_[x].kids.front();
    return make(Op::negation, 0, {x});
  }

  // Conjunction (or disjunction when `is_or`) with flattening, constant
  // folding, dedup and complementary-literal detection.
  NodeId make_nary(bool is_or, const std::vector<NodeId>& input) {
    const Op self = is_or ? Op::disjunction : Op::conjunction;
    const NodeId absorbing = is_or ? kTrue : kFalse;
    const NodeId identity = is_or ? kFalse : kTrue;
    std::vector<NodeId> kids;
    kids.reserve(input.size());
    for (NodeId k : input) {
      if (k == absorbing) return absorbing;
      if (k == identity) continue;
      if (nodes_[k].op == self) {
        kids.insert(kids.end(), nodes_[k].kids.begin(), nodes_[k].kids.end());
      } else {
        kids.push_back(k);
      }
    }
    std::sort(kids.begin(), kids.end());
    kids.erase(std::unique(kids.begin(), kids.end()), kids.end());
    for (NodeId k : kids) {
      if (nodes_[k].op == Op::negation &&
          std::binary_search(kids.begin(), kids.end(), nodes_[k].kids.front())) {
        return absorbing;
      }
    }
    if (kids.empty()) return identity;
    if (kids.size() == 1) return kids.front();
    return make(self, 0, std::move(kids));
  }

  NodeId intern(const BoolFormula& f) {
    // Shared subtrees are interned once.
    const void* key = nullptr;
    if (!f.children().empty()) {
      key = f.children().data();
      if (auto it = interned_.find(key); it != interned_.end()) return it->second;
    }
    NodeId id = kFalse;
    switch (f.op()) {
      case Op::falsity:
        id = kFalse;
        break;
      case Op::truth:
        id = kTrue;
        break;
      case Op::variable:
        id = make_var(f.variable());
        break;
      case Op::negation:
        id = make_not(intern(f.children().front()));
        break;
      case Op::conjunction:
      case Op::disjunction: {
        std::vector<NodeId> kids;
        kids.reserve(f.children().size());
        for (const auto& c : f.children()) kids.push_back(intern(c));
        id = make_nary(f.op() == Op::disjunction, kids);
        break;
      }
    }
    if (key) interned_.emplace(key, id);
    return id;
  }

  // Variables ordered by descending occurrence count in the interned DAG,
  // ties broken by index.
  void assign_ranks() {
    std::unordered_map<std::uint32_t, std::size_t> count;
    std::vector<bool> seen(nodes_.size(), false);
    std::vector<NodeId> stack{root_};
    seen[root_] = true;
    if (nodes_[root_].op == Op::variable) count[nodes_[root_].var]++;
    while (!stack.empty()) {
      const NodeId id = stack.back();
      stack.pop_back();
      for (NodeId k : nodes_[id].kids) {
        if (nodes_[k].op == Op::variable) count[nodes_[k].var]++;
        if (!seen[k]) {
          seen[k] = true;
          stack.push_back(k);
        }
      }
    }
    std::vector<std::pair<std::size_t, std::uint32_t>> order;
    for (const auto& [var, c] : count) order.emplace_back(c, var);
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::uint32_t r = 0; r < order.size(); ++r) rank_[order[r].second] = r;
    // Children always precede parents in nodes_.
    for (auto& n : nodes_) {
      if (n.op == Op::variable) {
        n.top = rank_.count(n.var) ? rank_.at(n.var) : kNoRank;
      } else {
        n.top = kNoRank;
        for (auto k : n.kids) n.top = std::min(n.top, nodes_[k].top);
      }
    }
    ranked_ = true;
  }

  NodeId restrict(NodeId id, std::uint32_t var, std::uint32_t rank, bool value) {
    const ANode& n = nodes_[id];
    if (n.top == kNoRank || n.top > rank) return id;
    if (n.op == Op::variable) {
      if (n.var != var) return id;
      return value ? kTrue : kFalse;
    }
    const std::uint64_t key =
        (static_cast<std::uint64_t>(id) << 33) | (static_cast<std::uint64_t>(rank) << 1) |
        static_cast<std::uint64_t>(value);
    if (auto it = restrict_memo_.find(key); it != restrict_memo_.end()) return it->second;
    NodeId out;
    if (n.op == Op::negation) {
      out = make_not(restrict(n.kids.front(), var, rank, value));
    } else {
      const bool is_or = n.op == Op::disjunction;
      std::vector<NodeId> kids = nodes_[id].kids;
      for (auto& k : kids) k = restrict(k, var, rank, value);
      out = make_nary(is_or, kids);
    }
    restrict_memo_.emplace(key, out);
    return out;
  }

  double expand(NodeId id) {
    if (auto it = memo_.find(id); it != memo_.end()) return it->second;
    const std::uint32_t rank = nodes_[id].top;
    const std::uint32_t var = find_var(id, rank);
    const NodeId hi = restrict(id, var, rank, true);
    const NodeId lo = restrict(id, var, rank, false);
    const double p = probs_[var];
    const double v = p * expand(hi) + (1.0 - p) * expand(lo);
    memo_.emplace(id, v);
    decisions_.emplace(id, Decision{var, hi, lo});
    order_.push_back(id);
    return v;
  }

  std::uint32_t find_var(NodeId id, std::uint32_t rank) const {
    for (;;) {
      const ANode& n = nodes_[id];
      if (n.op == Op::variable) return n.var;
      for (NodeId k : n.kids) {
        if (nodes_[k].top == rank) {
          id = k;
          break;
        }
      }
    }
  }
};

void check_bound(const std::vector<std::uint32_t>& vars, std::span<const double> probs) {
  for (auto v : vars) {
    if (v >= probs.size()) throw UnboundVariable(v);
    if (!(probs[v] >= 0.0 && probs[v] <= 1.0)) {
      throw std::invalid_argument(
          fmt::format("probability of variable {} is {}, outside [0, 1]", v, probs[v]));
    }
  }
}

}  // namespace

double wmc(const BoolFormula& f, std::span<const double> probs) {
  check_bound(f.variables(), probs);
  ShannonExpander expander(f, probs);
  return std::clamp(expander.value(), 0.0, 1.0);
}

WmcGradient wmc_grad(const BoolFormula& f, std::span<const double> probs) {
  const auto vars = f.variables();
  check_bound(vars, probs);
  ShannonExpander expander(f, probs);
  WmcGradient out;
  out.value = std::clamp(expander.value(), 0.0, 1.0);
  const auto grad = expander.gradient();
  out.partials.reserve(vars.size());
  for (auto v : vars) {
    const auto it = grad.find(v);
    out.partials.emplace_back(v, it == grad.end() ? 0.0 : it->second);
  }
  return out;
}

double brute_force_wmc(const BoolFormula& f, std::span<const double> probs) {
  const auto vars = f.variables();
  if (vars.size() > kBruteForceVariableCap) {
    throw TooManyVariables(fmt::format("brute-force WMC supports at most {} variables, "
                                       "formula has {}",
                                       kBruteForceVariableCap, vars.size()));
  }
  check_bound(vars, probs);
  std::vector<bool> assignment(vars.empty() ? 0 : vars.back() + 1, false);
  double total = 0.0;
  const std::uint64_t worlds = std::uint64_t{1} << vars.size();
  for (std::uint64_t mask = 0; mask < worlds; ++mask) {
    double weight = 1.0;
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const bool on = (mask >> i) & 1u;
      assignment[vars[i]] = on;
      weight *= on ? probs[vars[i]] : 1.0 - probs[vars[i]];
    }
    if (weight != 0.0 && f.evaluate(assignment)) total += weight;
  }
  return total;
}

}  // namespace difflog
