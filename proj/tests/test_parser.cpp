#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "difflog/parser.hpp"

using namespace difflog;

namespace {

std::string read_data(const std::string& name) {
  std::ifstream in(std::string(DIFFLOG_DATA_DIR) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kFigureProgram = R"(// Relation declaration
type kinship(rela: String, subject: String, object: String)
type query(subject: String, object: String)
type composite(r1: String, r2: String, r3: String)
// Rules to derive the final answer
rel kinship(r3,a,c) = kinship(r1,a,b), kinship(r2,b,c), composite(r1,r2,r3), a != c
rel answer(r) = query(s, o), derive(r, s, o)
rel violation(!r) = r := forall(a, b: kinship(FATHER, a, b) =>
  kinship(SON, b, a) or kinship(DAUGHTER, b, a)) // Other constraints are omitted...
)";

std::size_t count_kind(const Program& p, ConstraintKind kind) {
  std::size_t n = 0;
  for (const auto& c : p.constraints) n += c.kind == kind;
  return n;
}

}  // namespace

TEST(ParseProgram, KinshipProgramShape) {
  const Program p = parse_program(read_data("kinship.dsr"));
  EXPECT_EQ(p.rules.size(), 1u);
  ASSERT_TRUE(p.answer.has_value());
  EXPECT_EQ(count_kind(p, ConstraintKind::result_ic), 6u);
  EXPECT_EQ(count_kind(p, ConstraintKind::rule_ic), 2u);

  const ProgramModel m = compile_program(p);
  EXPECT_EQ(m.vocabulary, Vocabulary::kinship());
  EXPECT_TRUE(m.has_schema(TemplateKind::composite));
  EXPECT_TRUE(m.fixed_rules.empty());
  EXPECT_EQ(m.constraints.size(), 8u);
}

TEST(ParseProgram, EmptyText) {
  EXPECT_TRUE(parse_program("").empty());
  EXPECT_TRUE(parse_program("// only a comment\n\n").empty());
}

TEST(ParseProgram, CompositeRuleWithGuard) {
  const Program p = parse_program(kFigureProgram);
  ASSERT_EQ(p.rules.size(), 1u);
  const RuleDecl& r = p.rules[0];
  EXPECT_EQ(r.head.predicate, "kinship");
  ASSERT_EQ(r.body.size(), 4u);
  const auto* guard = std::get_if<NotEqual>(&r.body[3]);
  ASSERT_NE(guard, nullptr);
  EXPECT_EQ(guard->lhs, Term::variable("a"));
  EXPECT_EQ(guard->rhs, Term::variable("c"));
  EXPECT_TRUE(p.answer.has_value());
  EXPECT_EQ(p.constraints.size(), 1u);
}

TEST(ParseProgram, FigureProgramCompiles) {
  const ProgramModel m = load_program(kFigureProgram);
  EXPECT_EQ(m.vocabulary.size(), 20u);
  EXPECT_TRUE(m.has_schema(TemplateKind::composite));
  ASSERT_EQ(m.constraints.size(), 1u);
  const auto& c = std::get<ResultConstraint>(m.constraints[0].body);
  EXPECT_EQ(c.premise.pred, Vocabulary::kinship().at("father"));
  EXPECT_EQ(c.conclusions.size(), 2u);
}

TEST(ParseProgram, RoundTrip) {
  for (const std::string text : {read_data("kinship.dsr"), std::string(kFigureProgram)}) {
    const Program p = parse_program(text);
    const std::string printed = print_program(p);
    EXPECT_EQ(parse_program(printed), p);
    EXPECT_EQ(print_program(parse_program(printed)), printed);
  }
}

TEST(ParseProgram, UndeclaredPredicateHasSpan) {
  const std::string text = "type edge(a: String, b: String)\nrel path(a, b) = edge(a, b)\n";
  try {
    parse_program(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.span().line, 2u);
    EXPECT_EQ(e.span().column, 5u);
    EXPECT_LE(e.span().begin, e.span().end);
    EXPECT_LE(e.span().end, text.size());
    EXPECT_NE(e.message().find("path"), std::string::npos);
    EXPECT_EQ(std::string(e.what()).rfind("2:5:", 0), 0u);
  }
}

TEST(ParseProgram, ArityMismatch) {
  const std::string text =
      "type edge(a: String, b: String)\ntype path(a: String, b: String)\n"
      "rel path(a, b) = edge(a, b, a)\n";
  try {
    parse_program(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.span().line, 3u);
    EXPECT_NE(e.message().find("argument"), std::string::npos);
  }
}

TEST(ParseProgram, LexicalError) {
  try {
    parse_program("type edge(a: String, b: String)\nrel edge(a, b) = edge(b, a) $\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.span().line, 2u);
    EXPECT_EQ(e.span().column, 29u);
  }
}

TEST(ParseProgram, UnknownConstant) {
  const std::string text =
      "type kinship(rela: usize, sub: String, obj: String)\n"
      "rel violation(!r) = r := forall(a, b: kinship(COUSIN, a, b) => kinship(SON, b, a))\n";
  EXPECT_THROW(load_program(text), ParseError);
}

TEST(ParseDataset, NieceRecord) {
  const auto& v = Vocabulary::kinship();
  const auto samples = parse_dataset(
      R"({"facts": [["brother","D","R"],["daughter","R","K"]], "query": ["D","K"], "answer": "niece", "k": 2})",
      v);
  ASSERT_EQ(samples.size(), 1u);
  const Sample& s = samples[0];
  ASSERT_EQ(s.facts.size(), 2u);
  EXPECT_EQ(s.facts[0], (SampleFact{v.at("brother"), "D", "R", 1.0}));
  EXPECT_EQ(s.facts[1], (SampleFact{v.at("daughter"), "R", "K", 1.0}));
  EXPECT_EQ(s.query_sub, "D");
  EXPECT_EQ(s.query_obj, "K");
  EXPECT_EQ(s.answer, v.at("niece"));
  EXPECT_EQ(s.k, 2);
}

TEST(ParseDataset, ProbabilityAndDefaultK) {
  const auto& v = Vocabulary::kinship();
  const auto s = parse_dataset(
      R"({"facts": [["brother","D","R",0.9],["daughter","R","K",0.8]], "query": ["D","K"], "answer": "niece"})",
      v);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s[0].facts[0].prob, 0.9);
  EXPECT_EQ(s[0].k, 2);
}

TEST(ParseDataset, ZeroFacts) {
  const auto s = parse_dataset(R"({"facts": [], "query": ["A","B"], "answer": "son", "k": 0})",
                               Vocabulary::kinship());
  ASSERT_EQ(s.size(), 1u);
  EXPECT_TRUE(s[0].facts.empty());
}

TEST(ParseDataset, UnknownAnswerNamesLine) {
  const std::string text =
      "{\"facts\": [], \"query\": [\"A\",\"B\"], \"answer\": \"son\"}\n\n"
      "{\"facts\": [], \"query\": [\"A\",\"B\"], \"answer\": \"cousin\"}\n";
  try {
    parse_dataset(text, Vocabulary::kinship());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.span().line, 3u);
    EXPECT_NE(e.message().find("line 3"), std::string::npos);
  }
}

TEST(ParseDataset, MalformedJson) {
  EXPECT_THROW(parse_dataset("{\"facts\": [", Vocabulary::kinship()), ParseError);
}

TEST(ParseDataset, FormatRoundTrip) {
  const auto& v = Vocabulary::kinship();
  Sample s;
  s.facts = {{v.at("son"), "A", "B", 1.0}, {v.at("wife"), "B", "C", 0.25}};
  s.query_sub = "A";
  s.query_obj = "C";
  s.answer = v.at("daughter-in-law");
  s.k = 2;
  const auto back = parse_dataset(format_sample(s, v), v);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], s);
}

TEST(ParsePriors, CompositeLine) {
  const auto& v = Vocabulary::kinship();
  const auto p = parse_rule_priors("composite brother daughter niece 0.5\n", v);
  ASSERT_EQ(p.size(), 1u);
  const auto key = RuleTemplate::composite(v.at("brother"), v.at("daughter"), v.at("niece"));
  EXPECT_DOUBLE_EQ(p.at(key), 0.5);
}

TEST(ParsePriors, EmptyFile) {
  EXPECT_TRUE(parse_rule_priors("", Vocabulary::kinship()).empty());
}

TEST(ParsePriors, NegativeWeight) {
  EXPECT_THROW(parse_rule_priors("composite mother father aunt -1", Vocabulary::kinship()),
               ParseError);
}

TEST(ParsePriors, UnknownRelationAndDuplicate) {
  const auto& v = Vocabulary::kinship();
  EXPECT_THROW(parse_rule_priors("composite mother cousin aunt 0.1", v), ParseError);
  EXPECT_THROW(parse_rule_priors("compose brother daughter niece\n"
                                 "composite brother daughter niece 0.5\n",
                                 v),
               ParseError);
}

TEST(ParsePriors, ExportedRuleAndCompose) {
  const auto& v = Vocabulary::kinship();
  const auto p = parse_rule_priors(
      "# comment\n1.154  mother(a,c) ← sister(a,b) ∧ mother(b,c)\ncompose father mother grandmother\n",
      v);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_DOUBLE_EQ(p.at(RuleTemplate::composite(v.at("sister"), v.at("mother"), v.at("mother"))),
                   1.154);
  EXPECT_DOUBLE_EQ(
      p.at(RuleTemplate::composite(v.at("father"), v.at("mother"), v.at("grandmother"))), 1.0);
}

TEST(ParseKb, ProbabilityPrefix) {
  const auto& v = Vocabulary::kinship();
  const auto kb = parse_kb("0.9::brother(D, R)\ndaughter(R, K)\n", v);
  ASSERT_EQ(kb.size(), 2u);
  EXPECT_EQ(kb[0], (SampleFact{v.at("brother"), "D", "R", 0.9}));
  EXPECT_EQ(kb[1], (SampleFact{v.at("daughter"), "R", "K", 1.0}));
  EXPECT_THROW(parse_kb("1.5::brother(D, R)", v), ParseError);
  EXPECT_THROW(parse_kb("brother(D)", v), ParseError);
}
