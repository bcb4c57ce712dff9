#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "difflog/datagen.hpp"
#include "difflog/engine.hpp"
#include "difflog/oracle_suite.hpp"
#include "difflog/parser.hpp"
#include "support/worlds.hpp"

using namespace difflog;

namespace {

const Vocabulary& kin() { return Vocabulary::kinship(); }
RelationId rel(std::string_view name) { return kin().at(name); }

SampleFact fact(std::string_view r, std::string s, std::string o, double p = 1.0) {
  return {rel(r), std::move(s), std::move(o), p};
}

WeightedRule composite(std::string_view r1, std::string_view r2, std::string_view r3,
                       std::optional<double> w = 1.0) {
  const auto t = RuleTemplate::composite(rel(r1), rel(r2), rel(r3));
  return {instantiate_template(t, kin().size()), t, w};
}

Sample niece_sample() {
  Sample s;
  s.facts = {fact("brother", "D", "R", 0.9), fact("daughter", "R", "K", 0.8)};
  s.query_sub = "D";
  s.query_obj = "K";
  s.answer = rel("niece");
  s.k = 2;
  return s;
}

ForwardOptions options(std::size_t k = 3) {
  ForwardOptions o;
  o.top_k = k;
  return o;
}

Constraint father_inverse() {
  ResultConstraint c;
  c.premise = {rel("father"), kVarA, kVarB};
  c.conclusions = {{rel("son"), kVarB, kVarA}, {rel("daughter"), kVarB, kVarA}};
  return {c};
}

const Tag& tag_at(const FactStore& store, std::string_view r, std::string_view s,
                  std::string_view o) {
  const auto* t = store.find({rel(r), *store.entities().find(s), *store.entities().find(o)});
  if (!t) throw std::runtime_error("atom not derived");
  return *t;
}

std::string fmt_fact(const ProbFact& f, const FactStore& store) {
  return std::to_string(f.pred.value) + "(" + store.entities().name(f.sub) + "," +
         store.entities().name(f.obj) + ")";
}

}  // namespace

TEST(LoadKb, TwoFacts) {
  Sample s = niece_sample();
  const FactStore store = load_kb(s, kin().size());
  EXPECT_EQ(store.variables().size(), 2u);
  EXPECT_EQ(store.size(), 2u);
  ASSERT_EQ(store.facts().size(), 2u);
  const auto v = store.facts()[0].var;
  EXPECT_EQ(tag_at(store, "brother", "D", "R"), Tag::variable(v.index));
  EXPECT_DOUBLE_EQ(store.variables().prob(v), 0.9);
}

TEST(LoadKb, Empty) {
  const FactStore store = load_kb(Sample{}, kin().size());
  EXPECT_EQ(store.size(), 0u);
  EXPECT_EQ(store.variables().size(), 0u);
}

TEST(LoadKb, DuplicateKeepsMaxAndWarns) {
  Sample s;
  s.facts = {fact("son", "A", "B", 0.4), fact("son", "A", "B", 0.7), fact("son", "A", "B", 0.5)};
  const FactStore store = load_kb(s, kin().size());
  ASSERT_EQ(store.facts().size(), 1u);
  EXPECT_DOUBLE_EQ(store.variables().prob(store.facts()[0].var), 0.7);
  EXPECT_EQ(store.warnings().size(), 2u);
}

TEST(LoadKb, NotApplicableDropped) {
  Sample s;
  s.facts = {{kin().not_applicable(), "A", "B", 1.0}, fact("son", "A", "B")};
  EXPECT_EQ(load_kb(s, kin().size()).size(), 1u);
}

TEST(LoadKb, RejectsBadProbability) {
  Sample s;
  s.facts = {fact("son", "A", "B", 1.5)};
  EXPECT_THROW(load_kb(s, kin().size()), std::invalid_argument);
}

TEST(Fixpoint, BrotherFatherIsFather) {
  Sample s;
  s.facts = {fact("brother", "A", "B"), fact("father", "B", "C")};
  FactStore store = load_kb(s, kin().size());
  const auto r = composite("brother", "father", "father");
  const VarId w = store.variables().add(VarOrigin::rule, 1.0);
  const std::vector<BoundRule> rules{{r.rule, w, r.source}};
  const auto report = fixpoint(store, rules, {});
  EXPECT_TRUE(report.saturated);
  EXPECT_DOUBLE_EQ(wmc(lower(tag_at(store, "father", "A", "C")), store.variables().probabilities()),
                   1.0);
}

TEST(Fixpoint, NieceProbability) {
  FactStore store = load_kb(niece_sample(), kin().size());
  const auto r = composite("brother", "daughter", "niece");
  const VarId w = store.variables().add(VarOrigin::rule, 1.0);
  const std::vector<BoundRule> rules{{r.rule, w, r.source}};
  fixpoint(store, rules, {});
  const Tag& t = tag_at(store, "niece", "D", "K");
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.proofs()[0].size(), 3u);
  EXPECT_EQ(wmc(lower(t), store.variables().probabilities()), 0.9 * 0.8);
}

TEST(Fixpoint, NoApplicableRules) {
  FactStore store = load_kb(niece_sample(), kin().size());
  const auto before = store.atoms();
  const auto r = composite("son", "son", "grandson");
  const std::vector<BoundRule> rules{{r.rule, std::nullopt, r.source}};
  const auto report = fixpoint(store, rules, {});
  EXPECT_EQ(report.iterations, 1u);
  EXPECT_TRUE(report.saturated);
  EXPECT_EQ(store.atoms(), before);
}

TEST(Fixpoint, GuardBlocksSelfLoops) {
  Sample s;
  s.facts = {fact("husband", "A", "B"), fact("wife", "B", "A")};
  FactStore store = load_kb(s, kin().size());
  const auto r = composite("husband", "wife", "sister");
  const std::vector<BoundRule> rules{{r.rule, std::nullopt, r.source}};
  fixpoint(store, rules, {});
  EXPECT_EQ(store.size(), 2u);
}

TEST(Fixpoint, IterationCapReported) {
  Sample s;
  for (int i = 0; i < 12; ++i) {
    s.facts.push_back(fact("son", "E" + std::to_string(i), "E" + std::to_string(i + 1)));
  }
  FactStore store = load_kb(s, kin().size());
  const auto r = composite("son", "son", "son");
  const std::vector<BoundRule> rules{{r.rule, std::nullopt, r.source}};
  FixpointOptions o;
  o.max_iterations = 2;
  const auto report = fixpoint(store, rules, o);
  EXPECT_FALSE(report.saturated);
  EXPECT_EQ(report.iterations, 2u);
}

TEST(Fixpoint, ChainsSaturateWithinK) {
  const auto& oracle = CompositionOracle::kinship();
  std::vector<WeightedRule> rules;
  for (const auto& t : oracle.templates()) {
    rules.push_back({instantiate_template(t, kin().size()), t, std::nullopt});
  }
  for (int k = 2; k <= 10; ++k) {
    for (std::uint64_t i = 0; i < 10; ++i) {
      auto rng = stream_rng(42 + k, i);
      const Sample s = generate_sample(k, rng);
      const auto res = forward(s, rules, {}, kin(), options());
      EXPECT_TRUE(res.trace.fixpoint.saturated);
      EXPECT_LE(res.trace.fixpoint.iterations, static_cast<std::size_t>(k)) << "k=" << k;
    }
  }
}

TEST(AnswerDistribution, NieceOnly) {
  const std::vector<WeightedRule> rules{composite("brother", "daughter", "niece")};
  const auto res = forward(niece_sample(), rules, {}, kin(), options());
  for (std::uint32_t r = 0; r < kin().size(); ++r) {
    EXPECT_EQ(res.y_hat[r], r == rel("niece").value ? 0.9 * 0.8 : 0.0);
  }
  EXPECT_EQ(predict(res.y_hat), rel("niece"));
}

TEST(AnswerDistribution, EmptyStoreAndUnknownEntities) {
  const FactStore empty = load_kb(Sample{}, kin().size());
  const auto y = answer_distribution(empty, "D", "K");
  EXPECT_EQ(y, AnswerDistribution(kin().size(), 0.0));
  const FactStore store = load_kb(niece_sample(), kin().size());
  EXPECT_EQ(answer_distribution(store, "X", "Y"), AnswerDistribution(kin().size(), 0.0));
}

TEST(AnswerDistribution, TwoDisjointProofs) {
  Sample s;
  s.facts = {fact("brother", "A", "B", 0.5), fact("daughter", "B", "C"),
             fact("sister", "A", "D", 0.5), fact("daughter", "D", "C")};
  s.query_sub = "A";
  s.query_obj = "C";
  const std::vector<WeightedRule> rules{composite("brother", "daughter", "niece", std::nullopt),
                                        composite("sister", "daughter", "niece", std::nullopt)};
  const auto res = forward(s, rules, {}, kin(), options());
  EXPECT_DOUBLE_EQ(res.y_hat[rel("niece").value], 0.75);
}

TEST(AnswerDistribution, DirectFact) {
  Sample s;
  s.facts = {fact("mother", "A", "B")};
  s.query_sub = "A";
  s.query_obj = "B";
  const auto res = forward(s, {}, {}, kin(), options());
  EXPECT_EQ(res.y_hat[rel("mother").value], 1.0);
}

TEST(Predict, TieBreaks) {
  std::vector<double> y(20, 0.0);
  EXPECT_EQ(predict(y), RelationId{0});
  y[3] = 0.6;
  y[7] = 0.6;
  EXPECT_EQ(predict(y), RelationId{3});
  y[14] = 0.72;
  EXPECT_EQ(predict(y), RelationId{14});
}

TEST(Constraints, FatherWithoutInverse) {
  Sample s;
  s.facts = {fact("father", "A", "B")};
  const FactStore store = load_kb(s, kin().size());
  EXPECT_EQ(constraint_violation(store, father_inverse(), {}, kin()).probability, 1.0);
}

TEST(Constraints, PartialInverse) {
  Sample s;
  s.facts = {fact("father", "A", "B"), fact("son", "B", "A", 0.7)};
  const FactStore store = load_kb(s, kin().size());
  EXPECT_NEAR(constraint_violation(store, father_inverse(), {}, kin()).probability, 0.3, 1e-15);
}

TEST(Constraints, SatisfiedAndVacuous) {
  Sample s;
  s.facts = {fact("father", "A", "B"), fact("daughter", "B", "A")};
  EXPECT_EQ(constraint_violation(load_kb(s, 20), father_inverse(), {}, kin()).probability, 0.0);
  EXPECT_EQ(constraint_violation(load_kb(Sample{}, 20), father_inverse(), {}, kin()).probability,
            0.0);
}

TEST(Constraints, RuleConstraintOverWeights) {
  const RuleConstraint gen{RuleCheck::generation_sum, TemplateKind::composite, {0, 1, 2}};
  FactStore store = load_kb(Sample{}, kin().size());
  const auto ok = composite("brother", "daughter", "niece");
  const auto bad1 = composite("brother", "daughter", "granddaughter");
  const auto bad2 = composite("son", "son", "son");
  const VarId w0 = store.variables().add(VarOrigin::rule, 0.9);
  const VarId w1 = store.variables().add(VarOrigin::rule, 0.3);
  const VarId w2 = store.variables().add(VarOrigin::rule, 0.2);
  std::vector<BoundRule> rules{{ok.rule, w0, ok.source}};
  EXPECT_EQ(constraint_violation(store, {gen}, rules, kin()).probability, 0.0);
  rules.push_back({bad1.rule, w1, bad1.source});
  EXPECT_NEAR(constraint_violation(store, {gen}, rules, kin()).probability, 0.3, 1e-15);
  rules.push_back({bad2.rule, w2, bad2.source});
  EXPECT_NEAR(constraint_violation(store, {gen}, rules, kin()).probability, 1 - 0.7 * 0.8, 1e-15);
  rules.push_back({bad2.rule, std::nullopt, bad2.source});
  EXPECT_EQ(constraint_violation(store, {gen}, rules, kin()).probability, 1.0);
}

TEST(Forward, SemanticLossWeights) {
  const auto model = load_program(R"(
type kinship(rela: usize, sub: String, obj: String)
const DAUGHTER = 0, SISTER = 1, SON = 2, AUNT = 3, FATHER = 4, HUSBAND = 5,
  GRANDDAUGHTER = 6, BROTHER = 7, NEPHEW = 8, MOTHER = 9, UNCLE = 10,
  GRANDFATHER = 11, WIFE = 12, GRANDMOTHER = 13, NIECE = 14, GRANDSON = 15,
  SON_IN_LAW = 16, FATHER_IN_LAW = 17, DAUGHTER_IN_LAW = 18, MOTHER_IN_LAW = 19
rel violation(!r) = r := forall(a, b: kinship(FATHER, a, b) =>
  kinship(SON, b, a) or kinship(DAUGHTER, b, a))
)");
  Sample s;
  s.facts = {fact("father", "A", "B"), fact("son", "B", "A", 0.7)};
  s.query_sub = "A";
  s.query_obj = "B";
  const auto res = forward(s, {}, model.constraints, kin(), options());
  ASSERT_EQ(res.violations.size(), 1u);
  EXPECT_NEAR(res.violations[0], 0.3, 1e-15);
  EXPECT_NEAR(res.semantic_loss, 0.1 * 0.3, 1e-15);
  EXPECT_GT(res.semantic_loss, 0.0);
}

TEST(Forward, RejectsNegativeWeights) {
  const std::vector<WeightedRule> rules{composite("brother", "daughter", "niece", -0.1)};
  EXPECT_THROW(forward(niece_sample(), rules, {}, kin(), options()), std::invalid_argument);
}

TEST(Forward, WeightsAboveOneAreClamped) {
  const std::vector<WeightedRule> rules{composite("brother", "daughter", "niece", 1.7)};
  const auto res = forward(niece_sample(), rules, {}, kin(), options());
  EXPECT_EQ(res.y_hat[rel("niece").value], 0.9 * 0.8);
}

TEST(Backward, ProductRule) {
  const std::vector<WeightedRule> rules{composite("brother", "daughter", "niece", std::nullopt)};
  const auto res = forward(niece_sample(), rules, {}, kin(), options());
  Upstream up;
  up.answer.assign(kin().size(), 0.0);
  up.answer[rel("niece").value] = 1.0;
  const auto g = backward(res.trace, up, 0);
  ASSERT_EQ(g.facts.size(), 2u);
  EXPECT_NEAR(g.facts[0], 0.8, 1e-15);
  EXPECT_NEAR(g.facts[1], 0.9, 1e-15);
  EXPECT_EQ(g.rules, std::vector<double>{0.0});
}

TEST(Backward, ZeroUpstream) {
  const std::vector<WeightedRule> rules{composite("brother", "daughter", "niece", 0.5)};
  const std::vector<Constraint> ics{father_inverse()};
  const auto res = forward(niece_sample(), rules, ics, kin(), options());
  Upstream up;
  up.answer.assign(kin().size(), 0.0);
  const auto g = backward(res.trace, up, 0);
  for (double x : g.facts) EXPECT_EQ(x, 0.0);
  for (double x : g.rules) EXPECT_EQ(x, 0.0);
}

TEST(Backward, StaleTrace) {
  auto o = options();
  o.parameter_version = 4;
  const auto res = forward(niece_sample(), {}, {}, kin(), o);
  Upstream up;
  up.answer.assign(kin().size(), 0.0);
  EXPECT_THROW(backward(res.trace, up, 5), StaleTrace);
  EXPECT_NO_THROW(backward(res.trace, up, 4));
}

TEST(Backward, SemanticGradientOfRuleConstraint) {
  const RuleConstraint gen{RuleCheck::generation_sum, TemplateKind::composite, {0, 1, 2}};
  const double w = 0.35;
  const double h = 1e-5;
  auto run = [&](double weight) {
    const std::vector<WeightedRule> rules{composite("brother", "daughter", "granddaughter", weight),
                                          composite("son", "son", "son", 0.4)};
    return forward(niece_sample(), rules, std::vector<Constraint>{{gen}}, kin(), options());
  };
  const auto res = run(w);
  Upstream up;
  up.answer.assign(kin().size(), 0.0);
  up.semantic = 1.0;
  const auto g = backward(res.trace, up, 0);
  const double fd = (run(w + h).semantic_loss - run(w - h).semantic_loss) / (2 * h);
  // d/dw of 0.01 * (1 - (1 - w)(1 - 0.4)) is 0.01 * 0.6.
  EXPECT_NEAR(g.rules[0], 0.01 * 0.6, 1e-12);
  EXPECT_NEAR(g.rules[0], fd, 1e-4 * std::abs(fd));
}

TEST(Backward, MatchesFiniteDifferences) {
  const Vocabulary vocab({"p", "q", "r", "s"});
  std::mt19937_64 rng(17);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    auto inst = worlds::random_instance(rng, vocab.size(), 4, 8, 4);
    Upstream up;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t r = 0; r < vocab.size(); ++r) up.answer.push_back(u(rng));
    up.semantic = u(rng);
    ResultConstraint ic;
    ic.premise = {RelationId{0}, kVarA, kVarB};
    ic.conclusions = {{RelationId{1}, kVarB, kVarA}};
    const std::vector<Constraint> cs{{ic}};
    auto objective = [&](const worlds::Instance& x) {
      const auto res = forward(x.sample, x.rules, cs, vocab, options(kUnboundedProofs));
      double total = up.semantic * res.semantic_loss;
      for (std::size_t r = 0; r < vocab.size(); ++r) total += up.answer[r] * res.y_hat[r];
      return total;
    };
    const auto res = forward(inst.sample, inst.rules, cs, vocab, options(kUnboundedProofs));
    const auto g = backward(res.trace, up, 0);
    const double h = 1e-5;
    for (std::size_t i = 0; i < inst.sample.facts.size(); ++i) {
      auto hi = inst, lo = inst;
      hi.sample.facts[i].prob += h;
      lo.sample.facts[i].prob -= h;
      const double fd = (objective(hi) - objective(lo)) / (2 * h);
      EXPECT_LE(relative_error(g.facts[i], fd), 1e-4);
      ++checked;
    }
    for (std::size_t i = 0; i < inst.rules.size(); ++i) {
      auto hi = inst, lo = inst;
      *hi.rules[i].weight += h;
      *lo.rules[i].weight -= h;
      const double fd = (objective(hi) - objective(lo)) / (2 * h);
      EXPECT_LE(relative_error(g.rules[i], fd), 1e-4);
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(Fixpoint, OrderIndependent) {
  const Vocabulary vocab({"p", "q", "r", "s"});
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = worlds::random_instance(rng, vocab.size(), 5, 10, 5);
    auto shuffled = inst;
    std::shuffle(shuffled.sample.facts.begin(), shuffled.sample.facts.end(), rng);
    std::shuffle(shuffled.rules.begin(), shuffled.rules.end(), rng);

    // Proofs rendered as sets of fact and rule identities, so variable
    // numbering does not matter.
    auto canonical = [&](const worlds::Instance& x) {
      FactStore store = load_kb(x.sample, vocab.size());
      std::map<std::uint32_t, std::string> names;
      for (const auto& f : store.facts()) {
        names[f.var.index] = fmt_fact(f, store);
      }
      std::vector<BoundRule> bound;
      for (const auto& r : x.rules) {
        const VarId v = store.variables().add(VarOrigin::rule, *r.weight);
        names[v.index] = format_template(*r.source, vocab);
        bound.push_back({r.rule, v, r.source});
      }
      fixpoint(store, bound, {});
      std::map<std::string, std::set<std::set<std::string>>> out;
      for (const auto& [key, tag] : store.atoms()) {
        auto& proofs = out[std::to_string(key.pred.value) + store.entities().name(key.sub) +
                           "," + store.entities().name(key.obj)];
        for (const auto& p : tag.proofs()) {
          std::set<std::string> named;
          for (auto v : p.vars()) named.insert(names.at(v));
          proofs.insert(named);
        }
      }
      return std::make_pair(out, answer_distribution(store, x.sample.query_sub, x.sample.query_obj));
    };
    EXPECT_EQ(canonical(inst), canonical(shuffled));
  }
}

TEST(Fixpoint, UnboundedMatchesPossibleWorlds) {
  const Vocabulary vocab({"p", "q", "r"});
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 60; ++trial) {
    const auto inst = worlds::random_instance(rng, vocab.size(), 4, 8, 4);
    auto o = options(kUnboundedProofs);
    o.max_iterations = 100;
    const auto res = forward(inst.sample, inst.rules, {}, vocab, o);
    ASSERT_TRUE(res.trace.fixpoint.saturated);
    const auto expected = worlds::brute_force(inst, vocab.size());
    for (std::size_t r = 0; r < vocab.size(); ++r) {
      EXPECT_NEAR(res.y_hat[r], expected[r], 1e-9);
    }
  }
}
