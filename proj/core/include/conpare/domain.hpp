#pragma once

// Shared vocabulary: knowledge triples, prompt types, relation
// verbalizations and type constraints.

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace conpare {

inline constexpr std::string_view kMask = "[MASK]";

enum class Corpus { TREx, GoogleRE, ConceptNet };

// Relation cardinality class as published in the LAMA TREx metadata.
enum class Grouping { OneToOne, NToOne, NToM };

std::string_view to_string(Corpus corpus);
std::string_view to_string(Grouping grouping);
Corpus parse_corpus(std::string_view name);
// Accepts "1:1", "N:1", "N:M" and the LAMA metadata spellings "1-1", "N-1",
// "N-M".
Grouping parse_grouping(std::string_view name);

struct KnowledgeTriple {
  std::string subject;
  std::string relation_id;
  std::string object;
  Corpus corpus = Corpus::TREx;
  std::optional<Grouping> grouping;

  friend bool operator==(const KnowledgeTriple&,
                         const KnowledgeTriple&) = default;
};

// Trims subject and object and enforces the triple invariants: non-empty
// labels, grouping present iff the corpus is TREx.
KnowledgeTriple make_triple(std::string subject, std::string relation_id,
                            std::string object, Corpus corpus,
                            std::optional<Grouping> grouping = std::nullopt);

// "<relation_id>|<subject>|<object>"
std::string triple_key(const KnowledgeTriple& triple);

enum class PromptType {
  Simple,
  Compound,
  Complex,
  CompoundComplex,
  AppositiveDomain,
  AppositiveRange,
  AppositiveBoth,
};

inline constexpr std::array<PromptType, 7> kAllPromptTypes = {
    PromptType::Simple,           PromptType::Compound,
    PromptType::Complex,          PromptType::CompoundComplex,
    PromptType::AppositiveDomain, PromptType::AppositiveRange,
    PromptType::AppositiveBoth,
};

enum class SyntaxFamily { None, Clausal, Appositive };
enum class InfoContent { None, Domain, Range, Both };
enum class Slot { Domain, Range };

SyntaxFamily syntax_family(PromptType type);
InfoContent info_content(PromptType type);

// Inverse of (syntax_family, info_content). Throws kInvalidArgument for
// combinations that name no prompt type, e.g. (Clausal, None).
PromptType prompt_type_for(SyntaxFamily family, InfoContent info);

bool uses_domain(PromptType type);
bool uses_range(PromptType type);

std::string_view to_string(PromptType type);
std::string_view to_string(SyntaxFamily family);
std::string_view to_string(InfoContent info);
std::string_view to_string(Slot slot);
PromptType parse_prompt_type(std::string_view name);
SyntaxFamily parse_syntax_family(std::string_view name);

struct RelationSpec {
  std::string relation_id;
  std::string relation_text;
  std::vector<std::string> domain_types;
  std::vector<std::string> range_types;
  bool manual_fallback = false;

  const std::vector<std::string>& types(Slot slot) const {
    return slot == Slot::Domain ? domain_types : range_types;
  }

  friend bool operator==(const RelationSpec&, const RelationSpec&) = default;
};

// Throws kInvalidRelationSpec naming the violated invariant.
void validate(const RelationSpec& spec);

enum class ConstraintSource { WikidataLive, FileFixture, ConceptGraph, Manual };

std::string_view to_string(ConstraintSource source);
ConstraintSource parse_constraint_source(std::string_view name);

struct TypeConstraint {
  std::string label;
  std::string class_id;

  friend bool operator==(const TypeConstraint&,
                         const TypeConstraint&) = default;
};

using Timestamp = std::chrono::sys_seconds;

struct TypeConstraintSet {
  std::string property_id;
  std::vector<TypeConstraint> domain;
  std::vector<TypeConstraint> range;
  ConstraintSource source = ConstraintSource::Manual;
  Timestamp fetched_at{};

  const std::vector<TypeConstraint>& side(Slot slot) const {
    return slot == Slot::Domain ? domain : range;
  }

  friend bool operator==(const TypeConstraintSet&,
                         const TypeConstraintSet&) = default;
};

// Equality ignoring fetched_at.
bool same_constraints(const TypeConstraintSet& a, const TypeConstraintSet& b);

// Throws kInvalidArgument when class ids repeat within a side or a Manual set
// has an empty side.
void validate(const TypeConstraintSet& set);

std::vector<std::string> labels(const std::vector<TypeConstraint>& side);

// Label surface form: trimmed, whitespace collapsed, lowercased, leading
// article ("a", "an", "the") removed.
std::string normalize_type_label(std::string_view label);

std::string trim(std::string_view text);
std::string collapse_whitespace(std::string_view text);
std::string ascii_lower(std::string_view text);

// ISO-8601 UTC, second precision ("2023-05-01T12:00:00Z").
std::string format_timestamp(Timestamp ts);
Timestamp parse_timestamp(std::string_view text);

// FNV-1a 64; stable across platforms and runs.
std::uint64_t stable_hash(std::string_view data);
std::string stable_hash_hex(std::string_view data);

}  // namespace conpare
