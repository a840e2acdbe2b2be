#pragma once

// Domain/range type constraints per relation: Wikidata property constraints
// (live SPARQL), recorded fixture files, ConceptNet-style concept graphs and
// hand-authored fallbacks, with a JSON cache in front.

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "conpare/domain.hpp"
#include "conpare/error.hpp"

namespace conpare {

inline constexpr std::string_view kWikidataEndpoint =
    "https://query.wikidata.org/sparql";
inline constexpr std::string_view kSubjectTypeConstraint = "Q21503250";
inline constexpr std::string_view kValueTypeConstraint = "Q21510865";

// ---------------------------------------------------------------------------
// Concept graph

enum class EdgeLabel { RelatedTo, DefinedBy, Other };

struct ConceptGraphEdge {
  std::string source_concept;
  EdgeLabel edge_label = EdgeLabel::Other;
  std::string target_concept;
  // Original label text; kept for edges classified as Other.
  std::string raw_label;
};

EdgeLabel parse_edge_label(std::string_view label);

// TSV "source<TAB>edge_label<TAB>target". Self-loops and malformed lines are
// skipped with a warning.
std::vector<ConceptGraphEdge> load_concept_graph(
    const std::filesystem::path& path);

// Seed first, then the distinct direct RelatedTo/DefinedBy neighbours of the
// seed in edge order. A seed absent from every edge yields {seed} and a
// warning.
std::vector<std::string> derive_from_concept_graph(
    const std::string& seed_concept, std::span<const ConceptGraphEdge> edges);

// ---------------------------------------------------------------------------
// Wikidata

// The one query used for every property: P2302 constraint statements of
// kind Q21503250 (subject type) or Q21510865 (value type), their P2308 class
// values, and English labels of those classes.
std::string sparql_constraint_query(const std::string& property_id);

bool is_property_id(std::string_view id);

// Parses a W3C SPARQL JSON result produced by sparql_constraint_query.
// Classes without an English label are skipped with a warning; labels are
// normalized and deduplicated by class id. Throws kMalformedResponse on
// unexpected shapes, kEmptyConstraint when no class survives.
TypeConstraintSet parse_sparql_constraints(const std::string& property_id,
                                           std::string_view json_body,
                                           Timestamp fetched_at);

struct FetchOptions {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{60};
  std::string user_agent = "conpare-probe/0.1 (knowledge probing toolkit)";
};

// Throws kNetworkError when the endpoint cannot be reached (after retrying
// 429/5xx responses with exponential backoff), kEmptyConstraint when the
// property has no subject/value type constraints, kInvalidArgument for ids
// not of the form P<digits>.
TypeConstraintSet fetch_wikidata_constraints(const std::string& property_id,
                                             const std::string& endpoint_url,
                                             const FetchOptions& options = {});

// LAMA GoogleRE relations to Wikidata properties.
std::optional<std::string> googlere_to_wikidata(std::string_view relation);

// ---------------------------------------------------------------------------
// Providers and resolution

struct ManualDefault {
  std::string domain;
  std::string range;
};

using ManualDefaults = std::map<std::string, ManualDefault>;

class ConstraintProvider {
 public:
  virtual ~ConstraintProvider() = default;
  virtual ConstraintSource kind() const = 0;
  // May throw kNetworkError / kEmptyConstraint; both count as "no data" during
  // resolution. Implementations must be safe to call concurrently.
  virtual TypeConstraintSet fetch(const std::string& relation_id) const = 0;
};

class WikidataProvider final : public ConstraintProvider {
 public:
  explicit WikidataProvider(std::string endpoint_url,
                            FetchOptions options = {});
  ConstraintSource kind() const override {
    return ConstraintSource::WikidataLive;
  }
  // GoogleRE relation names are translated through googlere_to_wikidata.
  TypeConstraintSet fetch(const std::string& relation_id) const override;

 private:
  std::string endpoint_;
  FetchOptions options_;
};

// Recorded constraint sets, same document shape as the cache file.
class FixtureProvider final : public ConstraintProvider {
 public:
  explicit FixtureProvider(const std::filesystem::path& path);
  ConstraintSource kind() const override {
    return ConstraintSource::FileFixture;
  }
  TypeConstraintSet fetch(const std::string& relation_id) const override;

 private:
  std::map<std::string, TypeConstraintSet> sets_;
};

// Seeds are the relation's manual default labels; each side is expanded with
// derive_from_concept_graph.
class ConceptGraphProvider final : public ConstraintProvider {
 public:
  ConceptGraphProvider(std::vector<ConceptGraphEdge> edges,
                       ManualDefaults seeds);
  ConstraintSource kind() const override {
    return ConstraintSource::ConceptGraph;
  }
  TypeConstraintSet fetch(const std::string& relation_id) const override;

 private:
  std::vector<ConceptGraphEdge> edges_;
  ManualDefaults seeds_;
};

struct ResolvedConstraints {
  TypeConstraintSet set;
  bool manual_fallback = false;
};

// Each side comes from the first provider that yields a non-empty list for
// it; a side left empty by every provider is replaced by the manual default.
// Throws kNoFallbackAvailable when a side stays empty and the relation has no
// manual default. Provider network failures are skipped with a warning unless
// network_errors_fatal is set (forced refresh).
ResolvedConstraints resolve_constraints(
    const std::string& relation_id,
    std::span<const ConstraintProvider* const> providers,
    const ManualDefaults& manual_defaults, bool network_errors_fatal = false);

// Resolves relations concurrently with at most max_in_flight fetches at a
// time. Results are index-aligned with relation_ids; failures are returned as
// the error rather than thrown.
using ResolveOutcome = std::variant<ResolvedConstraints, Error>;
std::vector<ResolveOutcome> resolve_many(
    std::span<const std::string> relation_ids,
    std::span<const ConstraintProvider* const> providers,
    const ManualDefaults& manual_defaults, std::size_t max_in_flight = 4,
    bool network_errors_fatal = false);

bool has_manual_entries(const TypeConstraintSet& set);

RelationSpec to_relation_spec(const std::string& relation_id,
                              const std::string& relation_text,
                              const ResolvedConstraints& resolved);

// ---------------------------------------------------------------------------
// Cache

// One JSON document mapping property id to constraint set. No expiry. A
// corrupt file reads as empty (with a warning) and is rewritten by the next
// put.
class ConstraintCache {
 public:
  explicit ConstraintCache(std::filesystem::path file);

  std::optional<TypeConstraintSet> get(const std::string& property_id) const;
  void put(const TypeConstraintSet& set);
  std::map<std::string, TypeConstraintSet> entries() const;
  const std::filesystem::path& file() const { return file_; }

 private:
  std::map<std::string, TypeConstraintSet> load_locked() const;
  void store_locked(const std::map<std::string, TypeConstraintSet>& all) const;

  std::filesystem::path file_;
  mutable std::mutex mutex_;
};

std::string constraint_sets_to_json(
    const std::map<std::string, TypeConstraintSet>& sets);
std::map<std::string, TypeConstraintSet> constraint_sets_from_json(
    std::string_view text);

ManualDefaults load_manual_defaults(const std::filesystem::path& path);

}  // namespace conpare
