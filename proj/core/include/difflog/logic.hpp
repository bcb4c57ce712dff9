#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace difflog {

// Index into a relation vocabulary R. The id |R| is reserved for the "n/a"
// class produced by relation classifiers.
struct RelationId {
  std::uint32_t value = 0;
  friend auto operator<=>(RelationId, RelationId) = default;
};

struct EntityId {
  std::uint32_t value = 0;
  friend auto operator<=>(EntityId, EntityId) = default;
};

enum class VarOrigin : std::uint8_t { fact, rule };

// A boolean provenance variable. Indices are unique within one forward pass.
struct VarId {
  std::uint32_t index = 0;
  VarOrigin origin = VarOrigin::fact;
  friend bool operator==(VarId a, VarId b) { return a.index == b.index; }
  friend auto operator<=>(VarId a, VarId b) { return a.index <=> b.index; }
};

enum class Gender : std::uint8_t { male, female, neutral };

struct RelationMeta {
  Gender gender = Gender::neutral;
  // Generation of the object relative to the subject: mother = +1, son = -1.
  int generation = 0;
  friend bool operator==(const RelationMeta&, const RelationMeta&) = default;
};

class UnknownRelation : public std::invalid_argument {
 public:
  explicit UnknownRelation(std::string name);
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class NoMetaError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class MalformedTemplate : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Lowercases and maps '_' to '-', so MOTHER_IN_LAW and mother-in-law agree.
std::string canonical_relation_name(std::string_view name);

// A fixed, ordered set of relation names with optional gender/generation
// metadata per relation.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> names,
                      std::vector<std::optional<RelationMeta>> meta = {});

  // The 20 CLUTRR kinship relations in the Scallop constant order
  // (daughter = 0, sister = 1, ..., mother-in-law = 19) with full meta.
  static const Vocabulary& kinship();

  std::size_t size() const { return names_.size(); }
  RelationId not_applicable() const {
    return RelationId{static_cast<std::uint32_t>(names_.size())};
  }
  bool contains(RelationId r) const { return r.value < names_.size(); }

  // Name of r; "n/a" for the reserved class.
  const std::string& name(RelationId r) const;
  std::optional<RelationId> find(std::string_view name) const;
  RelationId at(std::string_view name) const;

  bool has_meta(RelationId r) const;
  const RelationMeta& meta(RelationId r) const;
  void set_meta(RelationId r, RelationMeta m);

  const std::vector<std::string>& names() const { return names_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.names_ == b.names_ && a.meta_ == b.meta_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::optional<RelationMeta>> meta_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

RelationMeta relation_meta(const Vocabulary& vocab, RelationId r);

// Bijective string <-> handle interning for entity names.
class EntityTable {
 public:
  EntityId intern(std::string_view name);
  std::optional<EntityId> find(std::string_view name) const;
  const std::string& name(EntityId e) const { return names_.at(e.value); }
  std::size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct ProbFact {
  RelationId pred;
  EntityId sub;
  EntityId obj;
  double prob = 1.0;
  VarId var;
};

enum class TemplateKind : std::uint8_t {
  composite,
  transitive,
  symmetric,
  inverse,
  implies
};

std::size_t template_arity(TemplateKind kind);
std::string_view to_string(TemplateKind kind);
std::optional<TemplateKind> parse_template_kind(std::string_view text);

class RuleTemplate {
 public:
  RuleTemplate(TemplateKind kind, std::span<const RelationId> args);

  static RuleTemplate composite(RelationId r1, RelationId r2, RelationId r3) {
    const std::array<RelationId, 3> args{r1, r2, r3};
    return RuleTemplate(TemplateKind::composite, args);
  }

  TemplateKind kind() const { return kind_; }
  std::span<const RelationId> args() const {
    return {args_.data(), template_arity(kind_)};
  }
  RelationId arg(std::size_t i) const {
    if (i >= template_arity(kind_)) throw std::out_of_range("template argument index");
    return args_[i];
  }

  friend auto operator<=>(const RuleTemplate&, const RuleTemplate&) = default;

 private:
  TemplateKind kind_;
  std::array<RelationId, 3> args_{};
};

// Logical variables inside a rule are small indices: a = 0, b = 1, c = 2.
inline constexpr std::uint8_t kVarA = 0;
inline constexpr std::uint8_t kVarB = 1;
inline constexpr std::uint8_t kVarC = 2;

struct AtomPattern {
  RelationId pred;
  std::uint8_t sub = kVarA;
  std::uint8_t obj = kVarB;
  friend bool operator==(const AtomPattern&, const AtomPattern&) = default;
};

struct Inequality {
  std::uint8_t lhs = kVarA;
  std::uint8_t rhs = kVarC;
  friend bool operator==(const Inequality&, const Inequality&) = default;
};

// A horn clause over binary relation atoms. weight_slot indexes the
// RuleWeightStore; nullopt means the constant weight 1.
struct Rule {
  AtomPattern head;
  std::vector<AtomPattern> body;
  std::vector<Inequality> guards;
  std::optional<std::size_t> weight_slot;

  std::size_t variable_count() const;
  friend bool operator==(const Rule&, const Rule&) = default;
};

// Dense slot layout for every template instantiation over |R| relations:
// composite [0, N^3), transitive, symmetric, inverse, implies after it.
std::size_t template_slot(const RuleTemplate& t, std::size_t relation_count);
RuleTemplate template_at_slot(std::size_t slot, std::size_t relation_count);
std::size_t template_slot_count(std::size_t relation_count);

Rule instantiate_template(const RuleTemplate& t, std::size_t relation_count);

// "niece(a,c) ← brother(a,b) ∧ daughter(b,c)"; guards are not printed.
std::string format_rule(const Rule& rule, const Vocabulary& vocab);
std::string format_template(const RuleTemplate& t, const Vocabulary& vocab);

enum class ConstraintKind : std::uint8_t { result_ic, rule_ic };

// forall a, b: premise(a, b) => conclusions[0] or conclusions[1] ...
// Patterns use kVarA / kVarB for the two quantified entities.
struct ResultConstraint {
  AtomPattern premise;
  std::vector<AtomPattern> conclusions;
  friend bool operator==(const ResultConstraint&,
                         const ResultConstraint&) = default;
};

enum class RuleCheck : std::uint8_t {
  // gender(args[p0]) == gender(args[p1])
  gender_match,
  // gen(args[p0]) + gen(args[p1]) == gen(args[p2])
  generation_sum,
};

struct RuleConstraint {
  RuleCheck check = RuleCheck::gender_match;
  TemplateKind over = TemplateKind::composite;
  std::array<std::uint8_t, 3> positions{1, 2, 0};
  friend bool operator==(const RuleConstraint&,
                         const RuleConstraint&) = default;
};

struct Constraint {
  std::variant<ResultConstraint, RuleConstraint> body;

  ConstraintKind kind() const {
    return std::holds_alternative<ResultConstraint>(body)
               ? ConstraintKind::result_ic
               : ConstraintKind::rule_ic;
  }
  friend bool operator==(const Constraint&, const Constraint&) = default;
};

// True when the instantiation t breaks the rule constraint. Templates of a
// different kind never violate it.
bool violates(const RuleConstraint& c, const RuleTemplate& t,
              const Vocabulary& vocab);

}  // namespace difflog

template <>
struct std::hash<difflog::RelationId> {
  std::size_t operator()(difflog::RelationId r) const noexcept {
    return std::hash<std::uint32_t>{}(r.value);
  }
};

template <>
struct std::hash<difflog::EntityId> {
  std::size_t operator()(difflog::EntityId e) const noexcept {
    return std::hash<std::uint32_t>{}(e.value);
  }
};
