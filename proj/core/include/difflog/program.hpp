#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "difflog/logic.hpp"

namespace difflog {

// Location of a construct in program/dataset text. Lines and columns are
// 1-based; begin/end are byte offsets with begin <= end.
struct SourceSpan {
  std::size_t line = 1;
  std::size_t column = 1;
  std::size_t begin = 0;
  std::size_t end = 0;
};

enum class TermKind : std::uint8_t { variable, constant, integer, string, sum };

// Lowercase identifiers are variables, uppercase identifiers are constants.
struct Term {
  TermKind kind = TermKind::variable;
  std::string text;
  std::int64_t integer = 0;
  std::vector<Term> operands;

  static Term variable(std::string name) {
    return {TermKind::variable, std::move(name), 0, {}};
  }
  static Term constant(std::string name) {
    return {TermKind::constant, std::move(name), 0, {}};
  }
  static Term number(std::int64_t v) { return {TermKind::integer, {}, v, {}}; }
  static Term string(std::string s) {
    return {TermKind::string, std::move(s), 0, {}};
  }
  static Term sum(Term lhs, Term rhs) {
    return {TermKind::sum, {}, 0, {std::move(lhs), std::move(rhs)}};
  }

  friend bool operator==(const Term&, const Term&) = default;
};

// Equality on the AST ignores source spans.
struct Atom {
  std::string predicate;
  std::vector<Term> args;
  SourceSpan span;
  friend bool operator==(const Atom& a, const Atom& b) {
    return a.predicate == b.predicate && a.args == b.args;
  }
};

struct NotEqual {
  Term lhs;
  Term rhs;
  friend bool operator==(const NotEqual&, const NotEqual&) = default;
};

using BodyLiteral = std::variant<Atom, NotEqual>;

struct TypeParam {
  std::string name;
  std::string type;
  friend bool operator==(const TypeParam&, const TypeParam&) = default;
};

struct TypeDecl {
  std::string name;
  std::vector<TypeParam> params;
  SourceSpan span;
  friend bool operator==(const TypeDecl& a, const TypeDecl& b) {
    return a.name == b.name && a.params == b.params;
  }
};

struct ConstEntry {
  std::string name;
  std::int64_t value = 0;
  friend bool operator==(const ConstEntry&, const ConstEntry&) = default;
};

struct ConstDecl {
  std::vector<ConstEntry> entries;
  SourceSpan span;
  friend bool operator==(const ConstDecl& a, const ConstDecl& b) {
    return a.entries == b.entries;
  }
};

// rel gender = {(DAUGHTER, FEMALE), ...}
struct TableDecl {
  std::string predicate;
  std::vector<std::vector<Term>> tuples;
  SourceSpan span;
  friend bool operator==(const TableDecl& a, const TableDecl& b) {
    return a.predicate == b.predicate && a.tuples == b.tuples;
  }
};

// rel head = body, body, ...
struct RuleDecl {
  Atom head;
  std::vector<BodyLiteral> body;
  SourceSpan span;
  friend bool operator==(const RuleDecl& a, const RuleDecl& b) {
    return a.head == b.head && a.body == b.body;
  }
};

// rel violation(!r) = r := forall(vars: p1 and p2 => c1 or c2)
struct ConstraintDecl {
  std::string marker = "violation";
  std::string result = "r";
  std::vector<std::string> quantified;
  std::vector<Atom> premises;
  std::vector<Atom> conclusions;
  ConstraintKind kind = ConstraintKind::result_ic;
  SourceSpan span;
  friend bool operator==(const ConstraintDecl& a, const ConstraintDecl& b) {
    return a.marker == b.marker && a.result == b.result &&
           a.quantified == b.quantified && a.premises == b.premises &&
           a.conclusions == b.conclusions && a.kind == b.kind;
  }
};

// Syntax tree of a logic program. Declarations are grouped by kind; the
// canonical printer emits them in this order.
struct Program {
  std::vector<TypeDecl> types;
  std::vector<ConstDecl> consts;
  std::vector<TableDecl> tables;
  std::vector<RuleDecl> rules;
  std::optional<RuleDecl> answer;
  std::vector<ConstraintDecl> constraints;

  bool empty() const {
    return types.empty() && consts.empty() && tables.empty() &&
           rules.empty() && !answer && constraints.empty();
  }
  friend bool operator==(const Program&, const Program&) = default;
};

// A rule fixed by the program (weight 1), remembering the template it was
// instantiated from when it came from a template fact.
struct ProgramRule {
  Rule rule;
  std::optional<RuleTemplate> source;
};

// The semantic view of a Program that the engine and learner consume.
struct ProgramModel {
  Vocabulary vocabulary;
  std::string fact_predicate = "kinship";
  std::string query_predicate = "query";
  // Template kinds that have a deduction schema, i.e. whose instantiations
  // participate in deduction (learnable or listed as facts).
  std::vector<TemplateKind> schemas;
  std::vector<ProgramRule> fixed_rules;
  std::vector<Constraint> constraints;

  bool has_schema(TemplateKind kind) const;
};

// One datapoint: a KB of relation facts between named entities, a query
// pair, and the gold relation.
struct SampleFact {
  RelationId relation;
  std::string sub;
  std::string obj;
  double prob = 1.0;
  friend bool operator==(const SampleFact&, const SampleFact&) = default;
};

struct Sample {
  std::vector<SampleFact> facts;
  std::string query_sub;
  std::string query_obj;
  RelationId answer;
  int k = 0;
  friend bool operator==(const Sample&, const Sample&) = default;
};

}  // namespace difflog
