#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "difflog/logic.hpp"
#include "difflog/parser.hpp"
#include "difflog/program.hpp"
#include "difflog/random.hpp"

namespace difflog {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Partial map (r1, r2) -> r3 for the composite rule r3(a,c) <- r1(a,b), r2(b,c).
// Every entry is checked against the gender and generation rule constraints
// at construction.
class CompositionOracle {
 public:
  CompositionOracle(const Vocabulary& vocab,
                    std::map<std::pair<RelationId, RelationId>, RelationId> table);

  // The 92-entry kinship table over Vocabulary::kinship().
  static const CompositionOracle& kinship();
  // From `compose r1 r2 r3` priors (composite templates); weights ignored.
  static CompositionOracle from_priors(const RulePriors& priors, const Vocabulary& vocab);

  const Vocabulary& vocabulary() const { return *vocab_; }
  std::optional<RelationId> compose(RelationId r1, RelationId r2) const;
  std::size_t size() const { return table_.size(); }
  // Composite templates, sorted by (r1, r2, r3).
  std::vector<RuleTemplate> templates() const;

  // Every relation derivable between the chain's endpoints under any
  // bracketing of the composition.
  std::set<RelationId> closure(std::span<const RelationId> chain) const;

  // `compose r1 r2 r3` lines with a versioned header.
  std::string to_priors_text() const;

 private:
  const Vocabulary* vocab_;
  std::map<std::pair<RelationId, RelationId>, RelationId> table_;
};

std::optional<RelationId> compose(RelationId r1, RelationId r2);

// The fixed 200-name entity pool.
const std::vector<std::string>& default_name_pool();

inline constexpr int kMaxChainTries = 1000;

struct SampleOptions {
  // Extra edges from a chain entity to a fresh entity; they never lie on a
  // path between the query entities.
  std::size_t distractors = 0;
};

// One chain of length k whose left fold is defined at every step and whose
// closure is exactly the folded relation.
Sample generate_sample(int k, std::mt19937_64& rng,
                       const CompositionOracle& oracle = CompositionOracle::kinship(),
                       std::span<const std::string> names = default_name_pool(),
                       const SampleOptions& options = {});

struct GenSpec {
  // (k, count) in emission order.
  std::vector<std::pair<int, std::size_t>> counts;
  std::uint64_t seed = 0;
  std::vector<std::string> names;  // empty: default pool
  SampleOptions options;
};

// Parses "1000x2,1000x3" or "50x2..10".
std::vector<std::pair<int, std::size_t>> parse_counts(std::string_view text);

// Sample i uses an RNG stream seeded from (seed, i).
std::vector<Sample> generate_samples(const GenSpec& spec,
                                     const CompositionOracle& oracle = CompositionOracle::kinship());
std::string generate_dataset(const GenSpec& spec,
                             const CompositionOracle& oracle = CompositionOracle::kinship());

}  // namespace difflog
