#pragma once

// Probe expansion and the two completion strategies that pick one
// supplementary type per (slot, syntax family).

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "conpare/domain.hpp"
#include "conpare/scorer.hpp"
#include "conpare/templater.hpp"

namespace conpare {

enum class Strategy { Quality, Confidence, NotApplicable };

std::string_view to_string(Strategy strategy);
Strategy parse_strategy(std::string_view name);

struct CompletionChoice {
  std::string triple_key;
  Strategy strategy = Strategy::Quality;
  Slot slot = Slot::Domain;
  SyntaxFamily syntax = SyntaxFamily::Clausal;
  std::string chosen_type;
  double score_used = 0.0;
  // Candidate order, one entry per candidate type.
  std::vector<std::pair<std::string, double>> all_scores;
  // The winning prompt and its score.
  PromptInstance prompt;
  ScoreResult result;
};

// Single-information prompt type for a slot within a syntax family.
PromptType single_info_type(Slot slot, SyntaxFamily syntax);

// Criterion value a strategy maximizes: gold_prob for Quality, top
// probability for Confidence.
double completion_criterion(Strategy strategy, const ScoreResult& result);

// Renders one prompt per candidate of the slot, scores them in one pass and
// keeps the strict maximum of the criterion (earliest candidate on ties).
// Throws kEmptyCandidates; scorer errors propagate.
CompletionChoice complete(Strategy strategy, const KnowledgeTriple& triple,
                          const RelationSpec& spec, Slot slot,
                          SyntaxFamily syntax, Scorer& scorer,
                          std::size_t top_k = kDefaultTopK,
                          const RenderOptions& options = {});

CompletionChoice quality_completion(const KnowledgeTriple& triple,
                                    const RelationSpec& spec, Slot slot,
                                    SyntaxFamily syntax, Scorer& scorer,
                                    std::size_t top_k = kDefaultTopK,
                                    const RenderOptions& options = {});

CompletionChoice confidence_completion(const KnowledgeTriple& triple,
                                       const RelationSpec& spec, Slot slot,
                                       SyntaxFamily syntax, Scorer& scorer,
                                       std::size_t top_k = kDefaultTopK,
                                       const RenderOptions& options = {});

// CompoundComplex or AppositiveBoth from previously chosen types. No scoring.
// Throws kSyntaxMismatch when the choices disagree on syntax family (or are
// not a domain/range pair), kInvalidArgument when they name other triples.
PromptInstance build_combined(const KnowledgeTriple& triple,
                              const RelationSpec& spec, SyntaxFamily syntax,
                              const CompletionChoice& domain_choice,
                              const CompletionChoice& range_choice,
                              const RenderOptions& options = {});

// ---------------------------------------------------------------------------
// Probe building

class ProbeSink {
 public:
  virtual ~ProbeSink() = default;
  virtual void write(const PromptInstance& prompt) = 0;
  virtual void close() {}
};

// Probe shard line: {"triple_key","prompt_type","text","domain_type"?,
// "range_type"?}
std::string probe_line(const PromptInstance& prompt);

inline constexpr std::size_t kDefaultShardLines = 1'000'000;

// probe-00000.jsonl, probe-00001.jsonl, ... in `dir`, each at most
// shard_lines lines. Throws kSinkFull when a write fails.
class ShardedJsonlSink final : public ProbeSink {
 public:
  ShardedJsonlSink(std::filesystem::path dir,
                   std::size_t shard_lines = kDefaultShardLines);
  void write(const PromptInstance& prompt) override;
  void close() override;
  const std::vector<std::filesystem::path>& shards() const { return shards_; }

 private:
  void open_next();

  std::filesystem::path dir_;
  std::size_t shard_lines_;
  std::size_t in_current_ = 0;
  std::ofstream out_;
  std::vector<std::filesystem::path> shards_;
};

struct ProbeManifest {
  std::size_t total = 0;
  std::map<std::string, std::size_t> per_relation;
  std::map<std::string, std::size_t> per_type;
  std::vector<std::string> shards;
};

// Streams the full family expansion of every triple into the sink. Families
// are rendered in parallel chunks but written in triple order. Throws
// kMissingConstraint for triples whose relation has no spec.
ProbeManifest build_probe(std::span<const KnowledgeTriple> triples,
                          const std::map<std::string, RelationSpec>& specs,
                          ProbeSink& sink, const RenderOptions& options = {});

std::string manifest_to_json(const ProbeManifest& manifest);

}  // namespace conpare
