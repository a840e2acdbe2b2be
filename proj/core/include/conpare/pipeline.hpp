#pragma once

// Stage orchestration behind the CLI: build-probe -> run-eval -> analyze ->
// plot. Each stage reads the previous stage's directory under the run's
// output directory and writes its own:
//
//   <out>/probe/     triples.jsonl relation_specs.json probe-*.jsonl
//                    manifest.json corpus_stats.csv
//   <out>/eval/      scores.jsonl (checkpoint) records.jsonl completions.jsonl
//   <out>/analysis/  p_at_1.csv bounds.json partition.json entropy_grid.json
//   <out>/plots/     bounds.svg entropy.svg partition_*.supervenn.json
//                    partition_*.cells.csv

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "conpare/constraints.hpp"
#include "conpare/corpus.hpp"
#include "conpare/domain.hpp"
#include "conpare/probegen.hpp"
#include "conpare/scorer.hpp"
#include "conpare/templater.hpp"

namespace conpare {

inline constexpr std::string_view kScorerEndpointEnv = "CONPARE_SCORER_ENDPOINT";
inline constexpr std::string_view kMockEndpoint = "mock";

struct RunConfig {
  std::filesystem::path corpus_path;
  Corpus corpus_kind = Corpus::TREx;
  std::optional<std::filesystem::path> field_map_path;
  std::optional<std::filesystem::path> relation_meta_path;
  std::filesystem::path relation_specs_path;
  std::vector<std::filesystem::path> vocab_paths;

  // "mock" or an http(s) base URL of a scorer service.
  std::string scorer_endpoint = std::string(kMockEndpoint);
  std::string model = "mock";
  std::optional<std::filesystem::path> mock_vocab_path;
  std::optional<std::filesystem::path> mock_table_path;
  std::size_t max_in_flight = 4;

  std::vector<Strategy> strategies = {Strategy::Quality, Strategy::Confidence};
  std::vector<SyntaxFamily> syntaxes = {SyntaxFamily::Clausal,
                                        SyntaxFamily::Appositive};
  std::size_t top_k = kDefaultTopK;
  std::size_t batch_size = kDefaultMaxBatch;
  std::size_t shard_lines = kDefaultShardLines;
  AppositiveRangeStyle appositive_range = AppositiveRangeStyle::PreNominal;

  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  // 0 keeps every vocabulary-filtered triple; otherwise a seeded sample.
  std::size_t sample = 0;
};

// Relative paths resolve against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config);
// Throws kInvalidArgument for missing input files or bad values.
void validate(const RunConfig& config);
// Applies CONPARE_SCORER_ENDPOINT when set.
void apply_environment(RunConfig& config);

// config_hash covers every setting except output_dir, with input files
// hashed by content; constraint_hash is the hash of the relation spec file.
struct Provenance {
  std::string config_hash;
  std::string constraint_hash;
  std::string model;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

Provenance provenance_for(const RunConfig& config);

std::map<std::string, RelationSpec> load_relation_specs(
    const std::filesystem::path& path);
void save_relation_specs(const std::filesystem::path& path,
                         const std::vector<RelationSpec>& specs);

// Relation list consumed by fetch-constraints:
// [{"relation_id", "relation_text", "manual_domain"?, "manual_range"?}]
struct RelationEntry {
  std::string relation_id;
  std::string relation_text;
  std::optional<ManualDefault> manual;
};

std::vector<RelationEntry> load_relation_list(const std::filesystem::path& path);

struct FetchConstraintsOptions {
  std::filesystem::path relations_path;
  std::filesystem::path cache_dir;
  std::string endpoint = std::string(kWikidataEndpoint);
  bool refresh = false;
  std::vector<ConstraintSource> sources = {ConstraintSource::WikidataLive,
                                           ConstraintSource::Manual};
  std::optional<std::filesystem::path> fixture_path;
  std::optional<std::filesystem::path> concept_graph_path;
  std::optional<std::filesystem::path> manual_path;
  // Defaults to <cache_dir>/relation_specs.json.
  std::optional<std::filesystem::path> specs_out;
  std::size_t max_in_flight = 4;
  FetchOptions fetch;
};

struct FetchConstraintsResult {
  std::vector<RelationSpec> specs;
  std::vector<std::string> from_cache;
  // relation id -> error text for relations that could not be resolved.
  std::map<std::string, std::string> failed;
  double mean_domain = 0.0;
  double mean_range = 0.0;
  std::filesystem::path cache_file;
  std::filesystem::path specs_file;
};

// Cached relations are served from the cache unless `refresh` is set; with
// `refresh` a network failure is an error for that relation instead of a
// fallback. The RelationSpec file is written only when every relation
// resolved.
FetchConstraintsResult run_fetch_constraints(
    const FetchConstraintsOptions& options);

// Seeded Fisher-Yates on raw mt19937_64 draws; identical on every platform.
std::vector<KnowledgeTriple> seeded_sample(std::vector<KnowledgeTriple> triples,
                                           std::size_t n, std::uint64_t seed);

struct ProbeStageResult {
  std::size_t loaded = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::size_t malformed_lines = 0;
  ProbeManifest manifest;
  CorpusStats stats;
};

ProbeStageResult run_build_probe(const RunConfig& config);

// Scorer for a config: MockScorer for "mock", HttpScorer otherwise.
std::unique_ptr<Scorer> make_scorer(const RunConfig& config);

struct EvalStageResult {
  std::size_t requests_total = 0;
  std::size_t requests_scored = 0;  // newly scored in this run
  std::size_t requests_resumed = 0;  // taken from the checkpoint
  std::size_t records = 0;
};

// Scores every needed prompt through `scorer`, appending each finished batch
// to eval/scores.jsonl. A rerun after an interruption loads that checkpoint
// and only scores what is missing.
EvalStageResult run_eval(const RunConfig& config, Scorer& scorer);

void run_analyze(const RunConfig& config);
void run_plot(const RunConfig& config);

// Request id for a (prompt text, gold) pair; stable across runs.
std::string request_id(const std::string& text, const std::string& gold);

// Static SVG renderers; input is the analysis JSON text.
std::string render_bounds_svg(const std::string& bounds_json);
std::string render_entropy_svg(const std::string& entropy_json);

}  // namespace conpare
