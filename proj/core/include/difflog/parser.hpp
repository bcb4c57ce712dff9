#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "difflog/logic.hpp"
#include "difflog/program.hpp"

namespace difflog {

// Every diagnostic carries the span it refers to. what() is formatted as
// "line:column: message".
class ParseError : public std::runtime_error {
 public:
  ParseError(SourceSpan span, const std::string& message);
  const SourceSpan& span() const { return span_; }
  const std::string& message() const { return message_; }

 private:
  SourceSpan span_;
  std::string message_;
};

// Parses the program dialect: `type`, `const`, `rel` facts/rules, the
// answer rule, and `forall` violation constraints. `//` starts a comment.
Program parse_program(std::string_view text);

// Canonical text for a program; parse_program(print_program(p)) == p.
std::string print_program(const Program& program);

// Resolves constants and relation names, recognises template schemas and
// lowers constraints. Throws ParseError pointing at the offending construct.
ProgramModel compile_program(const Program& program);

inline ProgramModel load_program(std::string_view text) {
  return compile_program(parse_program(text));
}

// Line-delimited JSON records:
//   {"facts": [["brother","D","R"], ["daughter","R","K",0.8]],
//    "query": ["D","K"], "answer": "niece", "k": 2}
// The optional fourth fact element is the probability (default 1.0); k
// defaults to the number of facts. Blank lines are skipped.
std::vector<Sample> parse_dataset(std::string_view text,
                                  const Vocabulary& vocab);
std::string format_sample(const Sample& sample, const Vocabulary& vocab);

using RulePriors = std::map<RuleTemplate, double>;

// Accepted line forms (comments with `#` or `//`):
//   composite brother daughter niece 0.5
//   transitive relative 0.3            (any template kind)
//   compose brother daughter niece     (oracle entry, weight 1)
//   1.154  mother(a,c) ← sister(a,b) ∧ mother(b,c)   (exported rule)
RulePriors parse_rule_priors(std::string_view text, const Vocabulary& vocab);

// Knowledge-base text, one fact per line: `0.9::brother(D, R)` or
// `brother(D, R)` (probability 1).
std::vector<SampleFact> parse_kb(std::string_view text,
                                 const Vocabulary& vocab);

}  // namespace difflog
