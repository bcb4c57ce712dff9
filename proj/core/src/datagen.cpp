#include "difflog/datagen.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>

namespace difflog {

namespace {

// Kinship relations grouped by type; index 0 is the male form, 1 the female.
enum class Kin { child, parent, sibling, spouse, grandchild, grandparent, pibling, nibling,
                 child_in_law, parent_in_law };

struct KinForms {
  Kin kin;
  const char* male;
  const char* female;
};

constexpr KinForms kKinForms[] = {
    {Kin::child, "son", "daughter"},
    {Kin::parent, "father", "mother"},
    {Kin::sibling, "brother", "sister"},
    {Kin::spouse, "husband", "wife"},
    {Kin::grandchild, "grandson", "granddaughter"},
    {Kin::grandparent, "grandfather", "grandmother"},
    {Kin::pibling, "uncle", "aunt"},
    {Kin::nibling, "nephew", "niece"},
    {Kin::child_in_law, "son-in-law", "daughter-in-law"},
    {Kin::parent_in_law, "father-in-law", "mother-in-law"},
};

struct KinRule {
  Kin first;
  Kin second;
  Kin result;
};

// "b is a's <first>" and "c is b's <second>" give "c is a's <result>". The
// result takes the gender of c.
constexpr KinRule kKinRules[] = {
    {Kin::child, Kin::child, Kin::grandchild},
    {Kin::child, Kin::sibling, Kin::child},
    {Kin::child, Kin::spouse, Kin::child_in_law},
    {Kin::child, Kin::parent, Kin::spouse},
    {Kin::child, Kin::pibling, Kin::sibling},
    {Kin::parent, Kin::parent, Kin::grandparent},
    {Kin::parent, Kin::sibling, Kin::pibling},
    {Kin::parent, Kin::child, Kin::sibling},
    {Kin::parent, Kin::spouse, Kin::parent},
    {Kin::sibling, Kin::sibling, Kin::sibling},
    {Kin::sibling, Kin::parent, Kin::parent},
    {Kin::sibling, Kin::child, Kin::nibling},
    {Kin::sibling, Kin::grandparent, Kin::grandparent},
    {Kin::sibling, Kin::pibling, Kin::pibling},
    {Kin::spouse, Kin::child, Kin::child},
    {Kin::spouse, Kin::parent, Kin::parent_in_law},
    {Kin::spouse, Kin::grandchild, Kin::grandchild},
    {Kin::spouse, Kin::child_in_law, Kin::child_in_law},
    {Kin::grandchild, Kin::sibling, Kin::grandchild},
    {Kin::grandparent, Kin::spouse, Kin::grandparent},
    {Kin::pibling, Kin::parent, Kin::grandparent},
    {Kin::pibling, Kin::spouse, Kin::pibling},
    {Kin::nibling, Kin::sibling, Kin::nibling},
    {Kin::child_in_law, Kin::child, Kin::grandchild},
    {Kin::child_in_law, Kin::spouse, Kin::child},
    {Kin::parent_in_law, Kin::spouse, Kin::parent_in_law},
};

RelationId kin_relation(const Vocabulary& vocab, Kin kin, int female) {
  for (const auto& f : kKinForms) {
    if (f.kin == kin) return vocab.at(female ? f.female : f.male);
  }
  throw std::logic_error("unknown kin type");
}

std::map<std::pair<RelationId, RelationId>, RelationId> kinship_table(const Vocabulary& vocab) {
  std::map<std::pair<RelationId, RelationId>, RelationId> table;
  for (const auto& rule : kKinRules) {
    for (int g1 = 0; g1 < 2; ++g1) {
      for (int g2 = 0; g2 < 2; ++g2) {
        // Marriages in the schema are between a husband and a wife.
        if (rule.second == Kin::spouse && g1 == g2) continue;
        table.emplace(std::pair{kin_relation(vocab, rule.first, g1),
                                kin_relation(vocab, rule.second, g2)},
                      kin_relation(vocab, rule.result, g2));
      }
    }
  }
  return table;
}

}  // namespace

CompositionOracle::CompositionOracle(const Vocabulary& vocab,
                                     std::map<std::pair<RelationId, RelationId>, RelationId> table)
    : vocab_(&vocab), table_(std::move(table)) {
  for (const auto& [key, r3] : table_) {
    const auto [r1, r2] = key;
    if (!vocab.contains(r1) || !vocab.contains(r2) || !vocab.contains(r3)) {
      throw std::invalid_argument("composition entry outside the vocabulary");
    }
    const auto& m1 = relation_meta(vocab, r1);
    const auto& m2 = relation_meta(vocab, r2);
    const auto& m3 = relation_meta(vocab, r3);
    if (m2.gender != m3.gender) {
      throw std::invalid_argument(fmt::format("composition ({}, {}) -> {} breaks the gender rule",
                                              vocab.name(r1), vocab.name(r2), vocab.name(r3)));
    }
    if (m1.generation + m2.generation != m3.generation) {
      throw std::invalid_argument(
          fmt::format("composition ({}, {}) -> {} breaks the generation rule", vocab.name(r1),
                      vocab.name(r2), vocab.name(r3)));
    }
  }
}

const CompositionOracle& CompositionOracle::kinship() {
  static const CompositionOracle oracle(Vocabulary::kinship(),
                                        kinship_table(Vocabulary::kinship()));
  return oracle;
}

CompositionOracle CompositionOracle::from_priors(const RulePriors& priors,
                                                 const Vocabulary& vocab) {
  std::map<std::pair<RelationId, RelationId>, RelationId> table;
  for (const auto& [t, weight] : priors) {
    if (t.kind() != TemplateKind::composite) continue;
    auto [it, inserted] = table.emplace(std::pair{t.arg(0), t.arg(1)}, t.arg(2));
    if (!inserted && it->second != t.arg(2)) {
      throw std::invalid_argument(fmt::format("composition ({}, {}) has two results",
                                              vocab.name(t.arg(0)), vocab.name(t.arg(1))));
    }
  }
  return CompositionOracle(vocab, std::move(table));
}

std::optional<RelationId> CompositionOracle::compose(RelationId r1, RelationId r2) const {
  auto it = table_.find({r1, r2});
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

std::vector<RuleTemplate> CompositionOracle::templates() const {
  std::vector<RuleTemplate> out;
  out.reserve(table_.size());
  for (const auto& [key, r3] : table_) {
    out.push_back(RuleTemplate::composite(key.first, key.second, r3));
  }
  return out;
}

std::set<RelationId> CompositionOracle::closure(std::span<const RelationId> chain) const {
  const std::size_t n = chain.size();
  if (n == 0) return {};
  // cell[i][j] holds the relations between entity i and entity j + 1.
  std::vector<std::vector<std::set<RelationId>>> cell(n, std::vector<std::set<RelationId>>(n));
  for (std::size_t i = 0; i < n; ++i) cell[i][i] = {chain[i]};
  for (std::size_t len = 2; len <= n; ++len) {
    for (std::size_t i = 0; i + len <= n; ++i) {
      const std::size_t j = i + len - 1;
      for (std::size_t m = i; m < j; ++m) {
        for (RelationId x : cell[i][m]) {
          for (RelationId y : cell[m + 1][j]) {
            if (auto z = compose(x, y)) cell[i][j].insert(*z);
          }
        }
      }
    }
  }
  return cell[0][n - 1];
}

std::string CompositionOracle::to_priors_text() const {
  std::string out = "# kinship composition oracle, format version 1\n";
  out += fmt::format("# {} entries: r3(a,c) <- r1(a,b), r2(b,c)\n", table_.size());
  for (const auto& [key, r3] : table_) {
    out += fmt::format("compose {} {} {}\n", vocab_->name(key.first), vocab_->name(key.second),
                       vocab_->name(r3));
  }
  return out;
}

std::optional<RelationId> compose(RelationId r1, RelationId r2) {
  return CompositionOracle::kinship().compose(r1, r2);
}

const std::vector<std::string>& default_name_pool() {
  static const std::vector<std::string> pool{
      "Aaron", "Abigail", "Adam", "Adrian", "Aiden", "Alan", "Albert", "Alex", "Alice",
      "Allison", "Amanda", "Amber", "Amelia", "Amy", "Andrea", "Andrew", "Angela", "Anna",
      "Anthony", "Arthur", "Ashley", "Audrey", "Austin", "Ava", "Barbara", "Benjamin",
      "Beth", "Betty", "Beverly", "Bill", "Blake", "Bobby", "Bonnie", "Brandon", "Brenda",
      "Brian", "Brittany", "Bruce", "Bryan", "Caleb", "Cameron", "Carl", "Carlos", "Carol",
      "Caroline", "Catherine", "Charles", "Charlotte", "Chloe", "Christian", "Christina",
      "Christine", "Christopher", "Claire", "Clara", "Cody", "Connor", "Craig", "Crystal",
      "Cynthia", "Daniel", "Danielle", "David", "Dean", "Deborah", "Denise", "Dennis",
      "Diana", "Diane", "Donald", "Donna", "Doris", "Dorothy", "Douglas", "Dylan", "Edward",
      "Eleanor", "Elijah", "Elizabeth", "Ella", "Emily", "Emma", "Eric", "Ethan", "Eugene",
      "Evelyn", "Frances", "Frank", "Gabriel", "Gary", "George", "Gerald", "Gloria",
      "Grace", "Gregory", "Hannah", "Harold", "Harry", "Heather", "Helen", "Henry", "Holly",
      "Isaac", "Isabella", "Jack", "Jacob", "Jacqueline", "James", "Jane", "Janet",
      "Janice", "Jason", "Jean", "Jeffrey", "Jennifer", "Jeremy", "Jerry", "Jesse",
      "Jessica", "Joan", "Joe", "John", "Jonathan", "Jordan", "Joseph", "Joshua", "Joyce",
      "Juan", "Judith", "Julia", "Julie", "Justin", "Karen", "Katherine", "Kathleen",
      "Kayla", "Keith", "Kelly", "Kenneth", "Kevin", "Kimberly", "Kyle", "Larry", "Laura",
      "Lauren", "Lawrence", "Leah", "Linda", "Lisa", "Logan", "Louis", "Lucas", "Lucy",
      "Madison", "Margaret", "Maria", "Marie", "Marilyn", "Mark", "Martha", "Mary", "Mason",
      "Matthew", "Megan", "Melissa", "Michael", "Michelle", "Nancy", "Natalie", "Nathan",
      "Nicholas", "Nicole", "Noah", "Olivia", "Oscar", "Pamela", "Patricia", "Patrick",
      "Paul", "Peter", "Philip", "Rachel", "Ralph", "Randy", "Raymond", "Rebecca",
      "Richard", "Robert", "Roger", "Ronald", "Rose", "Russell", "Ruth", "Ryan", "Samantha",
      "Samuel", "Sandra", "Sara", "Scott", "Sean",
  };
  return pool;
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

}  // namespace

Sample generate_sample(int k, std::mt19937_64& rng, const CompositionOracle& oracle,
                       std::span<const std::string> names, const SampleOptions& options) {
  if (k < 2) throw std::invalid_argument(fmt::format("chain length {} is below 2", k));
  const std::size_t entity_count = static_cast<std::size_t>(k) + 1 + options.distractors;
  if (names.size() < entity_count) {
    throw std::invalid_argument(
        fmt::format("name pool of {} is too small for {} entities", names.size(), entity_count));
  }
  const Vocabulary& vocab = oracle.vocabulary();
  const std::size_t n = vocab.size();

  std::vector<RelationId> chain;
  std::optional<RelationId> answer;
  for (int attempt = 0; attempt < kMaxChainTries && !answer; ++attempt) {
    chain.assign(1, RelationId{static_cast<std::uint32_t>(uniform_index(rng, n))});
    RelationId fold = chain[0];
    bool dead_end = false;
    for (int i = 1; i < k; ++i) {
      std::vector<RelationId> options_next;
      for (std::uint32_t r = 0; r < n; ++r) {
        if (oracle.compose(fold, RelationId{r})) options_next.push_back(RelationId{r});
      }
      if (options_next.empty()) {
        dead_end = true;
        break;
      }
      const RelationId next = options_next[uniform_index(rng, options_next.size())];
      chain.push_back(next);
      fold = *oracle.compose(fold, next);
    }
    if (dead_end) continue;
    const auto derived = oracle.closure(chain);
    if (derived.size() == 1 && *derived.begin() == fold) answer = fold;
  }
  if (!answer) {
    throw GenerationError(
        fmt::format("no unambiguous chain of length {} after {} tries", k, kMaxChainTries));
  }

  // Distinct entity names: a partial Fisher-Yates over pool indices.
  std::vector<std::size_t> pool(names.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  for (std::size_t i = 0; i < entity_count; ++i) {
    std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  }
  auto entity = [&](std::size_t i) { return names[pool[i]]; };

  Sample s;
  for (int i = 0; i < k; ++i) {
    s.facts.push_back({chain[static_cast<std::size_t>(i)], entity(static_cast<std::size_t>(i)),
                       entity(static_cast<std::size_t>(i) + 1), 1.0});
  }
  for (std::size_t d = 0; d < options.distractors; ++d) {
    const std::size_t anchor = uniform_index(rng, static_cast<std::size_t>(k) + 1);
    const RelationId r{static_cast<std::uint32_t>(uniform_index(rng, n))};
    s.facts.push_back({r, entity(anchor), entity(static_cast<std::size_t>(k) + 1 + d), 1.0});
  }
  shuffle(s.facts, rng);
  s.query_sub = entity(0);
  s.query_obj = entity(static_cast<std::size_t>(k));
  s.answer = *answer;
  s.k = k;
  return s;
}

std::vector<std::pair<int, std::size_t>> parse_counts(std::string_view text) {
  std::vector<std::pair<int, std::size_t>> out;
  auto number = [&](std::string_view s) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v < 0) {
      throw std::invalid_argument(fmt::format("bad number '{}' in counts '{}'", s, text));
    }
    return v;
  };
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string_view item = text.substr(pos, comma - pos);
    pos = comma + 1;
    if (item.empty()) {
      if (comma == text.size()) break;
      throw std::invalid_argument(fmt::format("empty item in counts '{}'", text));
    }
    const std::size_t x = item.find('x');
    if (x == std::string_view::npos) {
      throw std::invalid_argument(fmt::format("counts item '{}' is not COUNTxK", item));
    }
    const auto count = static_cast<std::size_t>(number(item.substr(0, x)));
    const std::string_view ks = item.substr(x + 1);
    const std::size_t dots = ks.find("..");
    const long long lo = number(ks.substr(0, dots));
    const long long hi = dots == std::string_view::npos ? lo : number(ks.substr(dots + 2));
    if (lo < 2 || hi < lo) {
      throw std::invalid_argument(fmt::format("bad chain length range '{}'", ks));
    }
    for (long long k = lo; k <= hi; ++k) out.emplace_back(static_cast<int>(k), count);
  }
  return out;
}

std::vector<Sample> generate_samples(const GenSpec& spec, const CompositionOracle& oracle) {
  std::span<const std::string> names =
      spec.names.empty() ? std::span<const std::string>(default_name_pool()) : spec.names;
  std::vector<Sample> out;
  std::uint64_t index = 0;
  for (const auto& [k, count] : spec.counts) {
    for (std::size_t i = 0; i < count; ++i, ++index) {
      auto rng = stream_rng(spec.seed, index);
      out.push_back(generate_sample(k, rng, oracle, names, spec.options));
    }
  }
  return out;
}

std::string generate_dataset(const GenSpec& spec, const CompositionOracle& oracle) {
  std::string out;
  for (const auto& s : generate_samples(spec, oracle)) {
    out += format_sample(s, oracle.vocabulary());
    out += '\n';
  }
  return out;
}

}  // namespace difflog
