#include "conpare/metrics.hpp"

#include <algorithm>
#include <bit>
#include <unordered_map>

#include "conpare/error.hpp"
#include "json_codec.hpp"

namespace conpare {

EvaluationRecord make_record(const KnowledgeTriple& triple, PromptType type,
                             Strategy strategy, const ScoreResult& result) {
  if (result.top.empty()) {
    throw Error(ErrorCode::kMalformedResponse,
                "result '" + result.id + "' has no predictions");
  }
  if (!result.gold_prob) {
    throw Error(ErrorCode::kMalformedResponse,
                "result '" + result.id + "' has no gold probability");
  }
  EvaluationRecord rec;
  rec.triple_key = triple_key(triple);
  rec.prompt_type = type;
  rec.strategy = strategy;
  rec.predicted_token = result.top_token();
  rec.correct = rec.predicted_token == triple.object;
  rec.top_prob = result.top_prob();
  // The gold token is the argmax when correct; pin the two probabilities
  // together so a rounding difference cannot break the record invariant.
  rec.gold_prob = rec.correct ? rec.top_prob : *result.gold_prob;
  rec.gold_rank = result.gold_rank;
  rec.entropy_bits = result.entropy_bits;
  validate(rec);
  return rec;
}

void validate(const EvaluationRecord& record) {
  if (record.gold_prob > record.top_prob + 1e-12) {
    throw Error(ErrorCode::kMalformedResponse,
                record.triple_key + ": gold_prob exceeds top_prob");
  }
  if (record.correct && record.gold_prob != record.top_prob) {
    throw Error(ErrorCode::kMalformedResponse,
                record.triple_key + ": correct record with gold_prob != top_prob");
  }
}

std::map<std::string, double> p_at_1(std::span<const EvaluationRecord> records,
                                     const GroupKey& group_by,
                                     std::span<const std::string> expected) {
  if (records.empty()) {
    throw Error(ErrorCode::kEmptyGroup, "P@1 over no records");
  }
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;
  for (const auto& r : records) {
    auto& [correct, total] = tally[group_by(r)];
    correct += r.correct ? 1 : 0;
    ++total;
  }
  for (const auto& g : expected) {
    if (!tally.contains(g)) {
      throw Error(ErrorCode::kEmptyGroup, "no records for group '" + g + "'");
    }
  }
  std::map<std::string, double> out;
  for (const auto& [g, counts] : tally) {
    out[g] = static_cast<double>(counts.first) /
             static_cast<double>(counts.second);
  }
  return out;
}

std::set<std::string> known_subset(
    std::span<const EvaluationRecord> simple_records, int k) {
  if (k < 1 || k > kGoldRankHorizon) {
    throw Error(ErrorCode::kInvalidArgument,
                "k must lie in [1, " + std::to_string(kGoldRankHorizon) + "]");
  }
  std::set<std::string> known;
  for (const auto& r : simple_records) {
    if (r.prompt_type != PromptType::Simple) {
      throw Error(ErrorCode::kInvalidArgument,
                  "known subset is defined on simple-prompt records, got " +
                      std::string(to_string(r.prompt_type)));
    }
    // Absent rank (kMissingRank) means beyond the horizon: not known.
    if (r.gold_rank && *r.gold_rank <= k) known.insert(r.triple_key);
  }
  return known;
}

namespace {

std::map<std::string, const EvaluationRecord*> index_by_triple(
    std::span<const EvaluationRecord> records, const char* what) {
  std::map<std::string, const EvaluationRecord*> out;
  for (const auto& r : records) {
    if (!out.emplace(r.triple_key, &r).second) {
      throw Error(ErrorCode::kCoverageMismatch,
                  std::string(what) + " records repeat triple " + r.triple_key);
    }
  }
  return out;
}

void require_same_keys(
    const std::map<std::string, const EvaluationRecord*>& a, const char* a_name,
    const std::map<std::string, const EvaluationRecord*>& b,
    const char* b_name) {
  for (const auto& [key, rec] : a) {
    if (!b.contains(key)) {
      throw Error(ErrorCode::kCoverageMismatch,
                  std::string(b_name) + " records missing triple " + key);
    }
  }
  for (const auto& [key, rec] : b) {
    if (!a.contains(key)) {
      throw Error(ErrorCode::kCoverageMismatch,
                  std::string(a_name) + " records missing triple " + key);
    }
  }
}

}  // namespace

std::map<std::string, BoundsOutcome> combinability_bounds(
    std::span<const EvaluationRecord> compound_records,
    std::span<const EvaluationRecord> complex_records) {
  const auto compound = index_by_triple(compound_records, "compound");
  const auto complex = index_by_triple(complex_records, "complex");
  require_same_keys(compound, "compound", complex, "complex");

  std::map<std::string, BoundsOutcome> out;
  for (const auto& [key, a] : compound) {
    const EvaluationRecord* b = complex.at(key);
    const EvaluationRecord* lower = b->top_prob > a->top_prob ? b : a;
    const EvaluationRecord* upper = b->gold_prob > a->gold_prob ? b : a;
    out[key] = BoundsOutcome{lower->correct, upper->correct};
  }
  return out;
}

CombinabilityInterval combinability_interval(
    std::span<const EvaluationRecord> compound_records,
    std::span<const EvaluationRecord> complex_records,
    std::span<const EvaluationRecord> combined_records) {
  const auto bounds = combinability_bounds(compound_records, complex_records);
  const auto combined = index_by_triple(combined_records, "combined");
  std::map<std::string, const EvaluationRecord*> bound_keys;
  for (const auto& [key, b] : bounds) bound_keys.emplace(key, nullptr);
  require_same_keys(bound_keys, "compound/complex", combined, "combined");

  CombinabilityInterval out;
  out.n_triples = bounds.size();
  if (out.n_triples == 0) {
    throw Error(ErrorCode::kEmptyGroup, "combinability over no triples");
  }
  std::size_t lower = 0;
  std::size_t upper = 0;
  std::size_t observed = 0;
  for (const auto& [key, b] : bounds) {
    const bool c = combined.at(key)->correct;
    lower += b.lower_correct;
    upper += b.upper_correct;
    observed += c;
    if (c && !b.upper_correct) ++out.above_upper;
    if (!c && b.lower_correct) ++out.below_lower;
  }
  const double n = static_cast<double>(out.n_triples);
  out.lower = static_cast<double>(lower) / n;
  out.upper = static_cast<double>(upper) / n;
  out.observed = static_cast<double>(observed) / n;
  return out;
}

ConsistencyPartition consistency_partition(const NamedSets& correct_sets) {
  if (correct_sets.size() > kMaxPartitionSets) {
    throw Error(ErrorCode::kTooManySets,
                std::to_string(correct_sets.size()) + " sets, at most " +
                    std::to_string(kMaxPartitionSets) + " supported");
  }
  if (correct_sets.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "a consistency partition needs at least two sets");
  }
  ConsistencyPartition out;
  std::unordered_map<std::string, std::uint32_t> membership;
  for (std::size_t i = 0; i < correct_sets.size(); ++i) {
    const auto& [name, keys] = correct_sets[i];
    if (std::find(out.set_names.begin(), out.set_names.end(), name) !=
        out.set_names.end()) {
      throw Error(ErrorCode::kInvalidArgument, "repeated set name '" + name + "'");
    }
    out.set_names.push_back(name);
    out.totals[name] = keys.size();
    for (const auto& key : keys) membership[key] |= 1u << i;
  }

  std::map<std::uint32_t, PartitionCell> by_mask;
  for (auto& [key, mask] : membership) {
    PartitionCell& cell = by_mask[mask];
    cell.membership = mask;
    cell.triples.insert(key);
  }
  for (auto& [mask, cell] : by_mask) {
    cell.size = cell.triples.size();
    out.cells.push_back(std::move(cell));
  }
  std::stable_sort(out.cells.begin(), out.cells.end(),
                   [](const PartitionCell& a, const PartitionCell& b) {
                     if (a.size != b.size) return a.size > b.size;
                     return a.membership < b.membership;
                   });
  return out;
}

std::map<std::string, double> mean_entropy(
    std::span<const EvaluationRecord> records,
    const std::set<std::string>& known, const GroupKey& group_by,
    std::span<const std::string> expected) {
  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (const auto& r : records) {
    if (!known.contains(r.triple_key)) continue;
    auto& [sum, n] = sums[group_by(r)];
    sum += r.entropy_bits;
    ++n;
  }
  if (sums.empty()) {
    throw Error(ErrorCode::kEmptyGroup, "no records of known triples");
  }
  for (const auto& g : expected) {
    if (!sums.contains(g)) {
      throw Error(ErrorCode::kEmptyGroup, "no known records for group '" + g + "'");
    }
  }
  std::map<std::string, double> out;
  for (const auto& [g, s] : sums) {
    out[g] = s.first / static_cast<double>(s.second);
  }
  return out;
}

std::string type_strategy_key(const EvaluationRecord& record) {
  return std::string(to_string(record.prompt_type)) + "/" +
         std::string(to_string(record.strategy));
}

std::string record_to_json_line(const EvaluationRecord& record) {
  return Json(record).dump();
}

EvaluationRecord record_from_json_line(std::string_view line) {
  const Json doc = parse_json(line, ErrorCode::kSchemaMismatch, "record");
  try {
    return doc.get<EvaluationRecord>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaMismatch, std::string("record: ") + e.what());
  }
}

}  // namespace conpare
