#pragma once

// Analyses over evaluation records: P@1, the combinability interval,
// consistency partitions and mean response entropy.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "conpare/domain.hpp"
#include "conpare/probegen.hpp"
#include "conpare/scorer.hpp"

namespace conpare {

struct EvaluationRecord {
  std::string triple_key;
  PromptType prompt_type = PromptType::Simple;
  Strategy strategy = Strategy::NotApplicable;
  std::string predicted_token;
  bool correct = false;
  double gold_prob = 0.0;
  double top_prob = 0.0;
  std::optional<int> gold_rank;
  double entropy_bits = 0.0;

  friend bool operator==(const EvaluationRecord&,
                         const EvaluationRecord&) = default;
};

// Derives prediction and correctness from a score result. Throws
// kMalformedResponse if the result has no prediction or no gold probability.
EvaluationRecord make_record(const KnowledgeTriple& triple, PromptType type,
                             Strategy strategy, const ScoreResult& result);

// Checks top_prob >= gold_prob and correct => gold_prob == top_prob.
void validate(const EvaluationRecord& record);

using GroupKey = std::function<std::string(const EvaluationRecord&)>;

// Fraction correct per group. Groups listed in `expected` must have records;
// an empty input or empty expected group throws kEmptyGroup.
std::map<std::string, double> p_at_1(std::span<const EvaluationRecord> records,
                                     const GroupKey& group_by,
                                     std::span<const std::string> expected = {});

// Triples whose simple-prompt gold rank is <= k. Records without a rank
// (beyond the horizon) are not known. Throws kInvalidArgument for k outside
// [1, kGoldRankHorizon] or non-simple records.
std::set<std::string> known_subset(
    std::span<const EvaluationRecord> simple_records, int k = 10);

struct BoundsOutcome {
  bool lower_correct = false;
  bool upper_correct = false;
};

// Per triple: lower = correctness of the record with larger top_prob, upper =
// correctness of the record with larger gold_prob; ties pick compound.
// Throws kCoverageMismatch when the triple sets differ.
std::map<std::string, BoundsOutcome> combinability_bounds(
    std::span<const EvaluationRecord> compound_records,
    std::span<const EvaluationRecord> complex_records);

struct CombinabilityInterval {
  double lower = 0.0;
  double observed = 0.0;
  double upper = 0.0;
  std::size_t n_triples = 0;
  // Combined prompt correct although the upper-bound selection is wrong.
  std::size_t above_upper = 0;
  // Combined prompt wrong although the lower-bound selection is right.
  std::size_t below_lower = 0;
};

// Lower / observed / upper P@1 for one group, no clamping.
CombinabilityInterval combinability_interval(
    std::span<const EvaluationRecord> compound_records,
    std::span<const EvaluationRecord> complex_records,
    std::span<const EvaluationRecord> combined_records);

inline constexpr std::size_t kMaxPartitionSets = 8;

struct PartitionCell {
  std::uint32_t membership = 0;  // bit i <=> set_names[i]
  std::set<std::string> triples;
  std::size_t size = 0;
};

struct ConsistencyPartition {
  std::vector<std::string> set_names;
  // Non-empty cells ordered by size descending, then membership ascending.
  std::vector<PartitionCell> cells;
  std::map<std::string, std::size_t> totals;
};

using NamedSets = std::vector<std::pair<std::string, std::set<std::string>>>;

// Throws kTooManySets above kMaxPartitionSets, kInvalidArgument below 2 sets
// or on repeated names.
ConsistencyPartition consistency_partition(const NamedSets& correct_sets);

// Mean entropy per group over records of known triples. Groups listed in
// `expected` must be non-empty (kEmptyGroup), as must the filtered input.
std::map<std::string, double> mean_entropy(
    std::span<const EvaluationRecord> records,
    const std::set<std::string>& known, const GroupKey& group_by,
    std::span<const std::string> expected = {});

// "<prompt_type>/<strategy>"
std::string type_strategy_key(const EvaluationRecord& record);

// Record JSONL (one EvaluationRecord per line).
std::string record_to_json_line(const EvaluationRecord& record);
EvaluationRecord record_from_json_line(std::string_view line);

}  // namespace conpare
