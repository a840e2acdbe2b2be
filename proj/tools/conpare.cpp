// conpare: command-line driver for constraint fetching, probe building,
// evaluation, analysis and plotting.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "conpare/error.hpp"
#include "conpare/pipeline.hpp"

namespace {

using namespace conpare;

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitData = 2;

std::vector<ConstraintSource> parse_sources(const std::string& list) {
  std::vector<ConstraintSource> out;
  std::stringstream in(list);
  for (std::string item; std::getline(in, item, ',');) {
    if (!trim(item).empty()) out.push_back(parse_constraint_source(trim(item)));
  }
  if (out.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "--sources lists no source");
  }
  return out;
}

struct StageArgs {
  std::string config;
  std::string out;
  std::string appositive_range;
};

void add_stage_options(CLI::App* cmd, StageArgs& args) {
  cmd->add_option("--config", args.config, "Run config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out, "Output directory (overrides config)");
  cmd->add_option("--appositive-range", args.appositive_range,
                  "Range appositive form: pre or post")
      ->check(CLI::IsMember({"pre", "post"}));
}

RunConfig stage_config(const StageArgs& args) {
  RunConfig config = load_run_config(args.config);
  if (!args.out.empty()) config.output_dir = args.out;
  if (!args.appositive_range.empty()) {
    config.appositive_range = parse_appositive_range_style(args.appositive_range);
  }
  apply_environment(config);
  return config;
}

void do_build_probe(const RunConfig& config) {
  const ProbeStageResult r = run_build_probe(config);
  std::cout << "build-probe: " << r.loaded << " triples loaded, "
            << r.dropped << " dropped by vocabulary, " << r.kept
            << " probed, " << r.manifest.total << " prompts in "
            << r.manifest.shards.size() << " shard(s)";
  if (r.malformed_lines > 0) {
    std::cout << ", " << r.malformed_lines << " malformed line(s) skipped";
  }
  std::cout << '\n';
}

void do_run_eval(const RunConfig& config) {
  auto scorer = make_scorer(config);
  const EvalStageResult r = run_eval(config, *scorer);
  std::cout << "run-eval: " << r.requests_total << " requests ("
            << r.requests_scored << " scored, " << r.requests_resumed
            << " from checkpoint), " << r.records << " records\n";
}

void do_analyze(const RunConfig& config) {
  run_analyze(config);
  std::cout << "analyze: wrote " << (config.output_dir / "analysis").string()
            << '\n';
}

void do_plot(const RunConfig& config) {
  run_plot(config);
  std::cout << "plot: wrote " << (config.output_dir / "plots").string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probe masked language models with type-constrained prompts"};
  app.require_subcommand(1);

  // fetch-constraints
  FetchConstraintsOptions fetch;
  std::string relations;
  std::string cache;
  std::string sources = "wikidata,manual";
  std::string fixture;
  std::string concept_graph;
  std::string manual;
  std::string specs_out;
  auto* fetch_cmd = app.add_subcommand(
      "fetch-constraints", "Resolve and cache domain/range types per relation");
  fetch_cmd->add_option("--relations", relations, "Relation list (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  fetch_cmd->add_option("--cache", cache, "Cache directory")->required();
  fetch_cmd->add_option("--endpoint", fetch.endpoint, "SPARQL endpoint URL");
  fetch_cmd->add_flag("--refresh", fetch.refresh,
                      "Ignore cached entries; a network failure is an error");
  fetch_cmd->add_option("--sources", sources,
                        "Comma-separated source order: wikidata, fixture, "
                        "concept_graph, manual");
  fetch_cmd->add_option("--fixture", fixture, "Recorded constraint sets")
      ->check(CLI::ExistingFile);
  fetch_cmd->add_option("--concept-graph", concept_graph,
                        "Concept graph edges (TSV)")
      ->check(CLI::ExistingFile);
  fetch_cmd->add_option("--manual", manual, "Manual defaults (JSON)")
      ->check(CLI::ExistingFile);
  fetch_cmd->add_option("--specs-out", specs_out,
                        "Relation spec output (default <cache>/relation_specs.json)");
  fetch_cmd->add_option("--max-in-flight", fetch.max_in_flight,
                        "Concurrent fetches")
      ->check(CLI::PositiveNumber);

  StageArgs build_args;
  StageArgs eval_args;
  StageArgs analyze_args;
  StageArgs plot_args;
  StageArgs pipeline_args;
  auto* build_cmd =
      app.add_subcommand("build-probe", "Render the prompt families");
  add_stage_options(build_cmd, build_args);
  auto* eval_cmd = app.add_subcommand(
      "run-eval", "Score prompts, run completions, write evaluation records");
  add_stage_options(eval_cmd, eval_args);
  auto* analyze_cmd = app.add_subcommand(
      "analyze", "P@1 table, bounds, partitions and entropy grid");
  add_stage_options(analyze_cmd, analyze_args);
  auto* plot_cmd = app.add_subcommand("plot", "SVG figures and set exports");
  add_stage_options(plot_cmd, plot_args);
  auto* pipeline_cmd =
      app.add_subcommand("pipeline", "build-probe, run-eval, analyze and plot");
  add_stage_options(pipeline_cmd, pipeline_args);

  // serve-mock
  std::string host = "127.0.0.1";
  int port = 8765;
  std::string mock_vocab;
  std::string mock_table;
  auto* serve_cmd = app.add_subcommand(
      "serve-mock", "Serve the scorer wire protocol from the mock scorer");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port");
  serve_cmd->add_option("--vocab", mock_vocab, "Vocabulary, one token per line")
      ->check(CLI::ExistingFile);
  serve_cmd->add_option("--table", mock_table, "Fixed distributions (JSON)")
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (fetch_cmd->parsed()) {
      fetch.relations_path = relations;
      fetch.cache_dir = cache;
      fetch.sources = parse_sources(sources);
      if (!fixture.empty()) fetch.fixture_path = fixture;
      if (!concept_graph.empty()) fetch.concept_graph_path = concept_graph;
      if (!manual.empty()) fetch.manual_path = manual;
      if (!specs_out.empty()) fetch.specs_out = specs_out;
      const FetchConstraintsResult r = run_fetch_constraints(fetch);
      std::printf("relations  resolved  cached  failed  Dom   Rng\n");
      std::printf("%9zu  %8zu  %6zu  %6zu  %4.1f  %4.1f\n",
                  r.specs.size() + r.failed.size(), r.specs.size(),
                  r.from_cache.size(), r.failed.size(), r.mean_domain,
                  r.mean_range);
      if (!r.failed.empty()) {
        std::cerr << "error: " << r.failed.size()
                  << " relation(s) could not be resolved:\n";
        for (const auto& [id, why] : r.failed) {
          std::cerr << "  " << id << ": " << why << '\n';
        }
        return kExitData;
      }
      std::cout << "cache: " << r.cache_file.string() << "\nspecs: "
                << r.specs_file.string() << '\n';
    } else if (build_cmd->parsed()) {
      do_build_probe(stage_config(build_args));
    } else if (eval_cmd->parsed()) {
      do_run_eval(stage_config(eval_args));
    } else if (analyze_cmd->parsed()) {
      do_analyze(stage_config(analyze_args));
    } else if (plot_cmd->parsed()) {
      do_plot(stage_config(plot_args));
    } else if (pipeline_cmd->parsed()) {
      const RunConfig config = stage_config(pipeline_args);
      do_build_probe(config);
      do_run_eval(config);
      do_analyze(config);
      do_plot(config);
    } else if (serve_cmd->parsed()) {
      std::vector<std::string> vocab = default_mock_vocabulary();
      if (!mock_vocab.empty()) {
        vocab.clear();
        std::ifstream in(mock_vocab);
        for (std::string line; std::getline(in, line);) {
          if (!trim(line).empty()) vocab.push_back(trim(line));
        }
      }
      MockScoreServer server(
          MockScorer(std::move(vocab),
                     mock_table.empty() ? MockTable{} : load_mock_table(mock_table)));
      std::cout << "serving on http://" << host << ':' << port << std::endl;
      server.listen(host, port);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitOk;
}
