#include "difflog/logic.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

namespace difflog {

UnknownRelation::UnknownRelation(std::string name)
    : std::invalid_argument("unknown relation '" + name + "'"),
      name_(std::move(name)) {}

std::string canonical_relation_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char ch : name) {
    if (ch == '_') {
      out.push_back('-');
    } else {
      out.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> names,
                       std::vector<std::optional<RelationMeta>> meta)
    : names_(std::move(names)), meta_(std::move(meta)) {
  meta_.resize(names_.size());
  for (std::uint32_t i = 0; i < names_.size(); ++i) {
    names_[i] = canonical_relation_name(names_[i]);
    if (names_[i].empty() || names_[i] == "n/a") {
      throw std::invalid_argument("invalid relation name '" + names_[i] + "'");
    }
    if (!index_.emplace(names_[i], i).second) {
      throw std::invalid_argument("duplicate relation '" + names_[i] + "'");
    }
  }
}

const Vocabulary& Vocabulary::kinship() {
  static const Vocabulary vocab = [] {
    using G = Gender;
    struct Entry {
      const char* name;
      G gender;
      int generation;
    };
    static constexpr Entry kTable[] = {
        {"daughter", G::female, -1},       {"sister", G::female, 0},
        {"son", G::male, -1},              {"aunt", G::female, 1},
        {"father", G::male, 1},            {"husband", G::male, 0},
        {"granddaughter", G::female, -2},  {"brother", G::male, 0},
        {"nephew", G::male, -1},           {"mother", G::female, 1},
        {"uncle", G::male, 1},             {"grandfather", G::male, 2},
        {"wife", G::female, 0},            {"grandmother", G::female, 2},
        {"niece", G::female, -1},          {"grandson", G::male, -2},
        {"son-in-law", G::male, -1},       {"father-in-law", G::male, 1},
        {"daughter-in-law", G::female, -1}, {"mother-in-law", G::female, 1},
    };
    std::vector<std::string> names;
    std::vector<std::optional<RelationMeta>> meta;
    for (const auto& e : kTable) {
      names.emplace_back(e.name);
      meta.emplace_back(RelationMeta{e.gender, e.generation});
    }
    return Vocabulary(std::move(names), std::move(meta));
  }();
  return vocab;
}

const std::string& Vocabulary::name(RelationId r) const {
  static const std::string kNa = "n/a";
  if (r == not_applicable()) return kNa;
  if (!contains(r)) {
    throw std::out_of_range(fmt::format("relation id {} out of range", r.value));
  }
  return names_[r.value];
}

std::optional<RelationId> Vocabulary::find(std::string_view name) const {
  const std::string key = canonical_relation_name(name);
  if (key == "n/a") return not_applicable();
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return RelationId{it->second};
}

RelationId Vocabulary::at(std::string_view name) const {
  if (auto r = find(name)) return *r;
  throw UnknownRelation(std::string(name));
}

bool Vocabulary::has_meta(RelationId r) const {
  return contains(r) && meta_[r.value].has_value();
}

const RelationMeta& Vocabulary::meta(RelationId r) const {
  if (!has_meta(r)) {
    throw NoMetaError(fmt::format("no gender/generation entry for relation '{}'",
                                  contains(r) || r == not_applicable()
                                      ? name(r)
                                      : std::to_string(r.value)));
  }
  return *meta_[r.value];
}

void Vocabulary::set_meta(RelationId r, RelationMeta m) {
  if (!contains(r)) throw std::out_of_range("set_meta: relation out of range");
  meta_[r.value] = m;
}

RelationMeta relation_meta(const Vocabulary& vocab, RelationId r) {
  return vocab.meta(r);
}

EntityId EntityTable::intern(std::string_view name) {
  if (name.empty()) throw std::invalid_argument("empty entity name");
  auto [it, inserted] = index_.try_emplace(
      std::string(name), static_cast<std::uint32_t>(names_.size()));
  if (inserted) names_.emplace_back(name);
  return EntityId{it->second};
}

std::optional<EntityId> EntityTable::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return EntityId{it->second};
}

std::size_t template_arity(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::composite:
      return 3;
    case TemplateKind::inverse:
    case TemplateKind::implies:
      return 2;
    case TemplateKind::transitive:
    case TemplateKind::symmetric:
      return 1;
  }
  return 0;
}

std::string_view to_string(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::composite:
      return "composite";
    case TemplateKind::transitive:
      return "transitive";
    case TemplateKind::symmetric:
      return "symmetric";
    case TemplateKind::inverse:
      return "inverse";
    case TemplateKind::implies:
      return "implies";
  }
  return "?";
}

std::optional<TemplateKind> parse_template_kind(std::string_view text) {
  for (auto kind : {TemplateKind::composite, TemplateKind::transitive,
                    TemplateKind::symmetric, TemplateKind::inverse,
                    TemplateKind::implies}) {
    if (to_string(kind) == text) return kind;
  }
  if (text == "comp") return TemplateKind::composite;
  return std::nullopt;
}

RuleTemplate::RuleTemplate(TemplateKind kind, std::span<const RelationId> args)
    : kind_(kind) {
  if (args.size() != template_arity(kind)) {
    throw MalformedTemplate(fmt::format("{} expects {} relation(s), got {}",
                                        to_string(kind), template_arity(kind),
                                        args.size()));
  }
  std::copy(args.begin(), args.end(), args_.begin());
}

std::size_t Rule::variable_count() const {
  std::uint8_t top = 0;
  auto see = [&](std::uint8_t v) { top = std::max<std::uint8_t>(top, v + 1); };
  see(head.sub);
  see(head.obj);
  for (const auto& atom : body) {
    see(atom.sub);
    see(atom.obj);
  }
  return top;
}

namespace {

struct SlotLayout {
  std::size_t composite, transitive, symmetric, inverse, implies, total;
  explicit SlotLayout(std::size_t n) {
    composite = 0;
    transitive = n * n * n;
    symmetric = transitive + n;
    inverse = symmetric + n;
    implies = inverse + n * n;
    total = implies + n * n;
  }
};

}  // namespace

std::size_t template_slot_count(std::size_t relation_count) {
  return SlotLayout(relation_count).total;
}

std::size_t template_slot(const RuleTemplate& t, std::size_t n) {
  const SlotLayout layout(n);
  const auto a = t.args();
  for (auto r : a) {
    if (r.value >= n) throw MalformedTemplate("template relation out of range");
  }
  switch (t.kind()) {
    case TemplateKind::composite:
      return (a[0].value * n + a[1].value) * n + a[2].value;
    case TemplateKind::transitive:
      return layout.transitive + a[0].value;
    case TemplateKind::symmetric:
      return layout.symmetric + a[0].value;
    case TemplateKind::inverse:
      return layout.inverse + a[0].value * n + a[1].value;
    case TemplateKind::implies:
      return layout.implies + a[0].value * n + a[1].value;
  }
  return layout.total;
}

RuleTemplate template_at_slot(std::size_t slot, std::size_t n) {
  const SlotLayout layout(n);
  auto rel = [](std::size_t v) { return RelationId{static_cast<std::uint32_t>(v)}; };
  if (slot < layout.transitive) {
    return RuleTemplate::composite(rel(slot / (n * n)), rel(slot / n % n),
                                   rel(slot % n));
  }
  if (slot < layout.symmetric) {
    const std::array<RelationId, 1> a{rel(slot - layout.transitive)};
    return RuleTemplate(TemplateKind::transitive, a);
  }
  if (slot < layout.inverse) {
    const std::array<RelationId, 1> a{rel(slot - layout.symmetric)};
    return RuleTemplate(TemplateKind::symmetric, a);
  }
  if (slot < layout.implies) {
    const std::size_t off = slot - layout.inverse;
    const std::array<RelationId, 2> a{rel(off / n), rel(off % n)};
    return RuleTemplate(TemplateKind::inverse, a);
  }
  if (slot < layout.total) {
    const std::size_t off = slot - layout.implies;
    const std::array<RelationId, 2> a{rel(off / n), rel(off % n)};
    return RuleTemplate(TemplateKind::implies, a);
  }
  throw std::out_of_range(fmt::format("template slot {} out of range", slot));
}

Rule instantiate_template(const RuleTemplate& t, std::size_t relation_count) {
  const auto a = t.args();
  Rule rule;
  switch (t.kind()) {
    case TemplateKind::composite:
      rule.head = {a[2], kVarA, kVarC};
      rule.body = {{a[0], kVarA, kVarB}, {a[1], kVarB, kVarC}};
      rule.guards = {{kVarA, kVarC}};
      break;
    case TemplateKind::transitive:
      rule.head = {a[0], kVarA, kVarC};
      rule.body = {{a[0], kVarA, kVarB}, {a[0], kVarB, kVarC}};
      rule.guards = {{kVarA, kVarC}};
      break;
    case TemplateKind::symmetric:
      rule.head = {a[0], kVarB, kVarA};
      rule.body = {{a[0], kVarA, kVarB}};
      break;
    case TemplateKind::inverse:
      rule.head = {a[1], kVarB, kVarA};
      rule.body = {{a[0], kVarA, kVarB}};
      break;
    case TemplateKind::implies:
      rule.head = {a[1], kVarA, kVarB};
      rule.body = {{a[0], kVarA, kVarB}};
      break;
  }
  rule.weight_slot = template_slot(t, relation_count);
  return rule;
}

std::string format_rule(const Rule& rule, const Vocabulary& vocab) {
  auto var = [](std::uint8_t v) { return static_cast<char>('a' + v); };
  auto atom = [&](const AtomPattern& p) {
    return fmt::format("{}({},{})", vocab.name(p.pred), var(p.sub), var(p.obj));
  };
  std::string out = atom(rule.head) + " ←";
  for (std::size_t i = 0; i < rule.body.size(); ++i) {
    out += i == 0 ? " " : " ∧ ";
    out += atom(rule.body[i]);
  }
  return out;
}

std::string format_template(const RuleTemplate& t, const Vocabulary& vocab) {
  std::string out(to_string(t.kind()));
  out += '(';
  const auto args = t.args();
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) out += ", ";
    out += vocab.name(args[i]);
  }
  out += ')';
  return out;
}

bool violates(const RuleConstraint& c, const RuleTemplate& t,
              const Vocabulary& vocab) {
  if (t.kind() != c.over) return false;
  const auto args = t.args();
  auto meta = [&](std::uint8_t pos) { return vocab.meta(args[pos]); };
  switch (c.check) {
    case RuleCheck::gender_match:
      return meta(c.positions[0]).gender != meta(c.positions[1]).gender;
    case RuleCheck::generation_sum:
      return meta(c.positions[0]).generation + meta(c.positions[1]).generation !=
             meta(c.positions[2]).generation;
  }
  return false;
}

}  // namespace difflog
