#pragma once

// LAMA-style triple corpora: loading, vocabulary filtering, probe statistics.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "conpare/domain.hpp"
#include "conpare/error.hpp"

namespace conpare {

struct FieldMap {
  std::string sub_field = "sub_label";
  std::string obj_field = "obj_label";
  std::string rel_field = "predicate_id";
};

// {"sub_field": ..., "obj_field": ..., "rel_field": ...}; missing keys keep
// their defaults.
FieldMap load_field_map(const std::filesystem::path& path);

struct LineError {
  std::size_t line = 0;  // 1-based
  ErrorCode code = ErrorCode::kSchemaMismatch;
  std::string message;
};

struct LoadResult {
  std::vector<KnowledgeTriple> triples;
  std::vector<LineError> errors;
};

// relation id -> grouping, read from LAMA relations.jsonl ("relation",
// "type" fields).
std::map<std::string, Grouping> load_relation_groupings(
    const std::filesystem::path& path);

// JSON lines; one triple per well-formed line. Malformed lines (bad JSON,
// missing fields, empty labels, TREx relation without grouping) land in
// `errors` with their line numbers. Throws kUnreadableFile.
LoadResult load_triples(const std::filesystem::path& path, Corpus corpus,
                        const FieldMap& fields = {},
                        const std::map<std::string, Grouping>& groupings = {});

// Throws kSchemaMismatch listing line numbers if the report is non-empty.
void require_clean(const LoadResult& result, const std::string& source);

using Vocabulary = std::unordered_set<std::string>;

// One token per line, UTF-8. Blank lines are ignored; no other normalization.
Vocabulary load_vocabulary(const std::filesystem::path& path);

struct FilterResult {
  std::vector<KnowledgeTriple> kept;
  std::vector<KnowledgeTriple> dropped;
};

// Keeps triples whose object is an exact member of every vocabulary.
FilterResult filter_by_vocab(std::span<const KnowledgeTriple> triples,
                             std::span<const Vocabulary> vocabularies);

struct StatsRow {
  std::string group;  // grouping ("1:1"), relation id, or "Total"
  std::size_t n_relations = 0;
  std::size_t n_facts = 0;
  double mean_domain_types = 0.0;
  double mean_range_types = 0.0;
};

struct CorpusStats {
  Corpus corpus = Corpus::TREx;
  // Sub-group rows followed by the "Total" row.
  std::vector<StatsRow> rows;

  const StatsRow& total() const { return rows.back(); }
};

// TREx rows per grouping, GoogleRE per relation, ConceptNet total only.
// Means are over relations. Throws kMissingConstraint.
CorpusStats compute_stats(Corpus corpus,
                          std::span<const KnowledgeTriple> triples,
                          const std::map<std::string, TypeConstraintSet>&
                              constraints);

// Corpus,Grouping,#Relations,#Facts,Dom,Rng
std::string stats_to_csv(const CorpusStats& stats);

// Pipeline interchange for filtered triples (JSON lines with every field).
void write_triples_jsonl(const std::filesystem::path& path,
                         std::span<const KnowledgeTriple> triples);
std::vector<KnowledgeTriple> read_triples_jsonl(
    const std::filesystem::path& path);

}  // namespace conpare
