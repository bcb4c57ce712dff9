#pragma once

// Possible-worlds reference for the engine: enumerate every assignment of the
// fact and rule variables, run plain boolean Datalog in each world, and sum
// the weights of the worlds where the query atom is derivable.

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "difflog/engine.hpp"
#include "difflog/logic.hpp"
#include "difflog/program.hpp"

namespace worlds {

struct Instance {
  difflog::Sample sample;
  std::vector<difflog::WeightedRule> rules;
};

// Up to max_facts distinct facts over `entities` entities and `relations`
// relations, and up to max_rules distinct composite rules with weights in
// (0.05, 0.95). The query asks about two distinct entities.
inline Instance random_instance(std::mt19937_64& rng, std::size_t relations, std::size_t entities,
                                std::size_t max_facts, std::size_t max_rules) {
  std::uniform_int_distribution<std::size_t> rel(0, relations - 1);
  std::uniform_int_distribution<std::size_t> ent(0, entities - 1);
  std::uniform_real_distribution<double> prob(0.05, 0.95);
  auto name = [](std::size_t e) { return "E" + std::to_string(e); };
  auto rid = [](std::size_t r) { return difflog::RelationId{static_cast<std::uint32_t>(r)}; };

  Instance inst;
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  const std::size_t n_facts = std::uniform_int_distribution<std::size_t>(1, max_facts)(rng);
  for (std::size_t i = 0; i < n_facts; ++i) {
    const auto key = std::make_tuple(rel(rng), ent(rng), ent(rng));
    if (std::get<1>(key) == std::get<2>(key) || !seen.insert(key).second) continue;
    inst.sample.facts.push_back(
        {rid(std::get<0>(key)), name(std::get<1>(key)), name(std::get<2>(key)), prob(rng)});
  }
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> rule_seen;
  const std::size_t n_rules = std::uniform_int_distribution<std::size_t>(1, max_rules)(rng);
  for (std::size_t i = 0; i < n_rules; ++i) {
    const auto key = std::make_tuple(rel(rng), rel(rng), rel(rng));
    if (!rule_seen.insert(key).second) continue;
    const auto t = difflog::RuleTemplate::composite(rid(std::get<0>(key)), rid(std::get<1>(key)),
                                                    rid(std::get<2>(key)));
    inst.rules.push_back({difflog::instantiate_template(t, relations), t, prob(rng)});
  }
  const std::size_t s = ent(rng);
  std::size_t o = ent(rng);
  while (o == s) o = ent(rng);
  inst.sample.query_sub = name(s);
  inst.sample.query_obj = name(o);
  return inst;
}

// Naive evaluation of binary horn rules over a dense truth table
// holds[(pred * n + sub) * n + obj], until nothing new is derived.
inline void closure(std::vector<char>& holds, std::size_t n,
                    const std::vector<const difflog::Rule*>& rules) {
  auto at = [&](std::uint32_t p, std::size_t s, std::size_t o) -> char& {
    return holds[(p * n + s) * n + o];
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto* rule : rules) {
      const std::size_t vars = rule->variable_count();
      std::vector<std::size_t> b(vars, 0);
      // Enumerate every binding of the rule's logical variables.
      while (true) {
        bool ok = true;
        for (const auto& lit : rule->body) ok = ok && at(lit.pred.value, b[lit.sub], b[lit.obj]);
        for (const auto& g : rule->guards) ok = ok && b[g.lhs] != b[g.rhs];
        if (ok) {
          char& head = at(rule->head.pred.value, b[rule->head.sub], b[rule->head.obj]);
          if (!head) changed = true;
          head = 1;
        }
        std::size_t i = 0;
        while (i < vars && ++b[i] == n) b[i++] = 0;
        if (i == vars) break;
      }
    }
  }
}

// P(r(sub, obj) derivable) for every relation r < relations.
inline std::vector<double> brute_force(const Instance& inst, std::size_t relations) {
  const auto& facts = inst.sample.facts;
  std::map<std::string, std::size_t> ids;
  auto id = [&](const std::string& e) { return ids.emplace(e, ids.size()).first->second; };
  for (const auto& f : facts) {
    id(f.sub);
    id(f.obj);
  }
  const std::size_t s = id(inst.sample.query_sub);
  const std::size_t o = id(inst.sample.query_obj);
  const std::size_t entities = ids.size();

  const std::size_t n = facts.size() + inst.rules.size();
  std::vector<double> out(relations, 0.0);
  std::vector<char> holds;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double weight = 1.0;
    holds.assign(relations * entities * entities, 0);
    std::vector<const difflog::Rule*> rules;
    for (std::size_t i = 0; i < n; ++i) {
      const bool on = (mask >> i) & 1;
      const double p = i < facts.size() ? facts[i].prob : *inst.rules[i - facts.size()].weight;
      weight *= on ? p : 1.0 - p;
      if (!on) continue;
      if (i < facts.size()) {
        const auto& f = facts[i];
        holds[(f.relation.value * entities + ids.at(f.sub)) * entities + ids.at(f.obj)] = 1;
      } else {
        rules.push_back(&inst.rules[i - facts.size()].rule);
      }
    }
    closure(holds, entities, rules);
    for (std::size_t r = 0; r < relations; ++r) {
      if (holds[(r * entities + s) * entities + o]) out[r] += weight;
    }
  }
  return out;
}

}  // namespace worlds
