#include "conpare/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "conpare/error.hpp"
#include "conpare/log.hpp"
#include "conpare/metrics.hpp"
#include "json_codec.hpp"

namespace conpare {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kUnreadableFile,
                "cannot read '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  out.close();
  if (!out) {
    throw Error(ErrorCode::kUnreadableFile,
                "cannot write '" + path.string() + "'");
  }
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!trim(line).empty()) out.push_back(std::move(line));
  }
  return out;
}

fs::path probe_dir(const RunConfig& c) { return c.output_dir / "probe"; }
fs::path eval_dir(const RunConfig& c) { return c.output_dir / "eval"; }
fs::path analysis_dir(const RunConfig& c) { return c.output_dir / "analysis"; }
fs::path plots_dir(const RunConfig& c) { return c.output_dir / "plots"; }

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

Json provenance_json(const Provenance& p) {
  return Json{{"config_hash", p.config_hash},
              {"constraint_hash", p.constraint_hash},
              {"model", p.model}};
}

Provenance provenance_from_json(const Json& j) {
  try {
    return Provenance{j.at("config_hash").get<std::string>(),
                      j.at("constraint_hash").get<std::string>(),
                      j.at("model").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaMismatch,
                std::string("provenance: ") + e.what());
  }
}

std::string provenance_line(const Provenance& p) {
  return Json{{"provenance", provenance_json(p)}}.dump();
}

// Reads a JSON-lines artifact whose first line is a provenance header.
Provenance read_provenance_header(const std::vector<std::string>& lines,
                                  const fs::path& path) {
  if (lines.empty()) {
    throw Error(ErrorCode::kStageMismatch,
                path.string() + " is empty; rerun the producing stage");
  }
  const Json head = parse_json(lines.front(), ErrorCode::kSchemaMismatch,
                               path.string());
  if (!head.is_object() || !head.contains("provenance")) {
    throw Error(ErrorCode::kSchemaMismatch,
                path.string() + " lacks a provenance header");
  }
  return provenance_from_json(head.at("provenance"));
}

void require_stage(const fs::path& file, const char* stage) {
  if (!fs::exists(file)) {
    throw Error(ErrorCode::kStageMismatch,
                "missing " + file.string() + "; run " + stage + " first");
  }
}

std::string content_hash(const fs::path& path) {
  return stable_hash_hex(read_file(path));
}

std::string provenance_comment(const Provenance& p) {
  return "# config=" + p.config_hash + " constraints=" + p.constraint_hash +
         " model=" + p.model + "\n";
}

std::string fmt4(double v) { return format_double(v, 4); }

}  // namespace

// ---------------------------------------------------------------------------
// Config

RunConfig load_run_config(const fs::path& path) {
  const Json doc =
      parse_json(read_file(path), ErrorCode::kInvalidArgument, path.string());
  if (!doc.is_object()) {
    throw Error(ErrorCode::kInvalidArgument,
                path.string() + ": config must be a JSON object");
  }
  const fs::path base = path.parent_path();
  RunConfig c;
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "corpus") {
        c.corpus_path = resolve(base, v.get<std::string>());
      } else if (key == "corpus_kind") {
        c.corpus_kind = parse_corpus(v.get<std::string>());
      } else if (key == "field_map") {
        c.field_map_path = resolve(base, v.get<std::string>());
      } else if (key == "relation_meta") {
        c.relation_meta_path = resolve(base, v.get<std::string>());
      } else if (key == "relation_specs") {
        c.relation_specs_path = resolve(base, v.get<std::string>());
      } else if (key == "vocab") {
        c.vocab_paths.clear();
        for (const auto& p : v) {
          c.vocab_paths.push_back(resolve(base, p.get<std::string>()));
        }
      } else if (key == "scorer_endpoint") {
        c.scorer_endpoint = v.get<std::string>();
      } else if (key == "model") {
        c.model = v.get<std::string>();
      } else if (key == "mock_vocab") {
        c.mock_vocab_path = resolve(base, v.get<std::string>());
      } else if (key == "mock_table") {
        c.mock_table_path = resolve(base, v.get<std::string>());
      } else if (key == "max_in_flight") {
        c.max_in_flight = v.get<std::size_t>();
      } else if (key == "strategies") {
        c.strategies.clear();
        for (const auto& s : v) {
          c.strategies.push_back(parse_strategy(s.get<std::string>()));
        }
      } else if (key == "syntaxes") {
        c.syntaxes.clear();
        for (const auto& s : v) {
          c.syntaxes.push_back(parse_syntax_family(s.get<std::string>()));
        }
      } else if (key == "top_k") {
        c.top_k = v.get<std::size_t>();
      } else if (key == "batch_size") {
        c.batch_size = v.get<std::size_t>();
      } else if (key == "shard_lines") {
        c.shard_lines = v.get<std::size_t>();
      } else if (key == "appositive_range") {
        c.appositive_range =
            parse_appositive_range_style(v.get<std::string>());
      } else if (key == "output_dir") {
        c.output_dir = resolve(base, v.get<std::string>());
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "sample") {
        c.sample = v.get<std::size_t>();
      } else {
        throw Error(ErrorCode::kInvalidArgument,
                    path.string() + ": unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument,
                path.string() + ": " + e.what());
  }
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  Json doc;
  doc["corpus"] = c.corpus_path.string();
  doc["corpus_kind"] = std::string(to_string(c.corpus_kind));
  if (c.field_map_path) doc["field_map"] = c.field_map_path->string();
  if (c.relation_meta_path) doc["relation_meta"] = c.relation_meta_path->string();
  doc["relation_specs"] = c.relation_specs_path.string();
  doc["vocab"] = Json::array();
  for (const auto& p : c.vocab_paths) doc["vocab"].push_back(p.string());
  doc["scorer_endpoint"] = c.scorer_endpoint;
  doc["model"] = c.model;
  if (c.mock_vocab_path) doc["mock_vocab"] = c.mock_vocab_path->string();
  if (c.mock_table_path) doc["mock_table"] = c.mock_table_path->string();
  doc["max_in_flight"] = c.max_in_flight;
  doc["strategies"] = Json::array();
  for (Strategy s : c.strategies) doc["strategies"].push_back(to_string(s));
  doc["syntaxes"] = Json::array();
  for (SyntaxFamily s : c.syntaxes) doc["syntaxes"].push_back(to_string(s));
  doc["top_k"] = c.top_k;
  doc["batch_size"] = c.batch_size;
  doc["shard_lines"] = c.shard_lines;
  doc["appositive_range"] =
      c.appositive_range == AppositiveRangeStyle::PreNominal ? "pre" : "post";
  doc["output_dir"] = c.output_dir.string();
  doc["seed"] = c.seed;
  doc["sample"] = c.sample;
  return doc.dump(2) + "\n";
}

void validate(const RunConfig& c) {
  const auto need_file = [](const fs::path& p, const char* what) {
    if (p.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string("config: ") + what + " is not set");
    }
    if (!fs::is_regular_file(p)) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string("config: ") + what + " '" + p.string() +
                      "' does not exist");
    }
  };
  need_file(c.corpus_path, "corpus");
  need_file(c.relation_specs_path, "relation_specs");
  if (c.field_map_path) need_file(*c.field_map_path, "field_map");
  if (c.relation_meta_path) need_file(*c.relation_meta_path, "relation_meta");
  if (c.mock_vocab_path) need_file(*c.mock_vocab_path, "mock_vocab");
  if (c.mock_table_path) need_file(*c.mock_table_path, "mock_table");
  if (c.vocab_paths.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "config: at least one vocabulary is required");
  }
  for (const auto& p : c.vocab_paths) need_file(p, "vocab");
  if (c.corpus_kind == Corpus::TREx && !c.relation_meta_path) {
    throw Error(ErrorCode::kInvalidArgument,
                "config: TREx needs relation_meta for the groupings");
  }
  if (c.strategies.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "config: no strategies");
  }
  for (Strategy s : c.strategies) {
    if (s == Strategy::NotApplicable) {
      throw Error(ErrorCode::kInvalidArgument,
                  "config: strategies are quality and/or confidence");
    }
  }
  if (c.syntaxes.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "config: no syntaxes");
  }
  for (SyntaxFamily s : c.syntaxes) {
    if (s == SyntaxFamily::None) {
      throw Error(ErrorCode::kInvalidArgument,
                  "config: syntaxes are clausal and/or appositive");
    }
  }
  if (c.top_k < 1 || c.top_k > static_cast<std::size_t>(kGoldRankHorizon)) {
    throw Error(ErrorCode::kInvalidArgument,
                "config: top_k must lie in [1, " +
                    std::to_string(kGoldRankHorizon) + "]");
  }
  if (c.batch_size < 1 || c.max_in_flight < 1 || c.shard_lines < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "config: batch_size, max_in_flight and shard_lines must be "
                "positive");
  }
  if (c.scorer_endpoint != kMockEndpoint &&
      !c.scorer_endpoint.starts_with("http://") &&
      !c.scorer_endpoint.starts_with("https://")) {
    throw Error(ErrorCode::kInvalidArgument,
                "config: scorer_endpoint must be \"mock\" or an http(s) URL");
  }
}

void apply_environment(RunConfig& config) {
  if (const char* env = std::getenv(std::string(kScorerEndpointEnv).c_str());
      env != nullptr && *env != '\0') {
    config.scorer_endpoint = env;
  }
}

Provenance provenance_for(const RunConfig& config) {
  Json doc = parse_json(run_config_to_json(config), ErrorCode::kInvalidArgument,
                        "config");
  doc.erase("output_dir");
  const auto file_hash = [](const Json& p) {
    const fs::path path(p.get<std::string>());
    return fs::is_regular_file(path) ? content_hash(path) : std::string("-");
  };
  for (const char* key : {"corpus", "field_map", "relation_meta",
                          "relation_specs", "mock_vocab", "mock_table"}) {
    if (doc.contains(key)) doc[key] = file_hash(doc[key]);
  }
  for (auto& v : doc["vocab"]) v = file_hash(v);

  Provenance p;
  p.config_hash = stable_hash_hex(doc.dump());
  p.constraint_hash = fs::is_regular_file(config.relation_specs_path)
                          ? content_hash(config.relation_specs_path)
                          : std::string("-");
  p.model = config.model;
  return p;
}

// ---------------------------------------------------------------------------
// Relation specs and lists

std::map<std::string, RelationSpec> load_relation_specs(const fs::path& path) {
  const Json doc = parse_json(read_file(path), ErrorCode::kInvalidRelationSpec,
                              path.string());
  std::map<std::string, RelationSpec> out;
  try {
    for (const auto& item : doc.at("relations")) {
      RelationSpec spec = item.get<RelationSpec>();
      validate(spec);
      const std::string id = spec.relation_id;
      if (!out.emplace(id, std::move(spec)).second) {
        throw Error(ErrorCode::kInvalidRelationSpec,
                    path.string() + ": relation " + id + " listed twice");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidRelationSpec,
                path.string() + ": " + e.what());
  }
  return out;
}

void save_relation_specs(const fs::path& path,
                         const std::vector<RelationSpec>& specs) {
  Json doc{{"relations", Json::array()}};
  for (const auto& s : specs) doc["relations"].push_back(s);
  write_file(path, doc.dump(2) + "\n");
}

std::vector<RelationEntry> load_relation_list(const fs::path& path) {
  const Json doc =
      parse_json(read_file(path), ErrorCode::kInvalidArgument, path.string());
  std::vector<RelationEntry> out;
  try {
    for (const auto& item : doc) {
      RelationEntry e;
      e.relation_id = item.at("relation_id").get<std::string>();
      e.relation_text = item.at("relation_text").get<std::string>();
      const bool has_d = item.contains("manual_domain");
      const bool has_r = item.contains("manual_range");
      if (has_d != has_r) {
        throw Error(ErrorCode::kInvalidArgument,
                    path.string() + ": " + e.relation_id +
                        " needs both manual_domain and manual_range");
      }
      if (has_d) {
        e.manual = ManualDefault{item.at("manual_domain").get<std::string>(),
                                 item.at("manual_range").get<std::string>()};
      }
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument,
                path.string() + ": " + e.what());
  }
  return out;
}

FetchConstraintsResult run_fetch_constraints(
    const FetchConstraintsOptions& options) {
  const auto entries = load_relation_list(options.relations_path);
  const bool use_manual =
      std::find(options.sources.begin(), options.sources.end(),
                ConstraintSource::Manual) != options.sources.end();

  ManualDefaults manual;
  if (options.manual_path) manual = load_manual_defaults(*options.manual_path);
  for (const auto& e : entries) {
    if (e.manual) manual[e.relation_id] = *e.manual;
  }

  std::vector<std::unique_ptr<ConstraintProvider>> owned;
  for (ConstraintSource s : options.sources) {
    switch (s) {
      case ConstraintSource::WikidataLive:
        owned.push_back(
            std::make_unique<WikidataProvider>(options.endpoint, options.fetch));
        break;
      case ConstraintSource::FileFixture:
        if (!options.fixture_path) {
          throw Error(ErrorCode::kInvalidArgument,
                      "fixture source selected without a fixture file");
        }
        owned.push_back(std::make_unique<FixtureProvider>(*options.fixture_path));
        break;
      case ConstraintSource::ConceptGraph:
        if (!options.concept_graph_path) {
          throw Error(ErrorCode::kInvalidArgument,
                      "concept_graph source selected without a graph file");
        }
        owned.push_back(std::make_unique<ConceptGraphProvider>(
            load_concept_graph(*options.concept_graph_path), manual));
        break;
      case ConstraintSource::Manual:
        break;
    }
  }
  std::vector<const ConstraintProvider*> providers;
  for (const auto& p : owned) providers.push_back(p.get());
  const ManualDefaults fallback = use_manual ? manual : ManualDefaults{};

  fs::create_directories(options.cache_dir);
  ConstraintCache cache(options.cache_dir / "constraints.json");

  FetchConstraintsResult result;
  result.cache_file = cache.file();
  result.specs_file =
      options.specs_out.value_or(options.cache_dir / "relation_specs.json");

  std::vector<std::optional<RelationSpec>> specs(entries.size());
  std::vector<std::string> to_fetch;
  std::vector<std::size_t> fetch_index;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (!options.refresh) {
      if (auto cached = cache.get(e.relation_id)) {
        ResolvedConstraints r{*cached, has_manual_entries(*cached)};
        try {
          specs[i] = to_relation_spec(e.relation_id, e.relation_text, r);
          result.from_cache.push_back(e.relation_id);
          continue;
        } catch (const Error& err) {
          warn(e.relation_id + ": cached entry unusable, refetching: " +
               err.what());
        }
      }
    }
    to_fetch.push_back(e.relation_id);
    fetch_index.push_back(i);
  }

  if (!result.from_cache.empty()) {
    notice(std::to_string(result.from_cache.size()) +
           " relation(s) served from " + cache.file().string() +
           " without contacting any source; use --refresh to refetch");
  }
  const auto outcomes = resolve_many(to_fetch, providers, fallback,
                                     options.max_in_flight, options.refresh);
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    const auto& e = entries[fetch_index[k]];
    if (const auto* err = std::get_if<Error>(&outcomes[k])) {
      result.failed[e.relation_id] = err->what();
      continue;
    }
    const auto& resolved = std::get<ResolvedConstraints>(outcomes[k]);
    try {
      specs[fetch_index[k]] =
          to_relation_spec(e.relation_id, e.relation_text, resolved);
      cache.put(resolved.set);
    } catch (const Error& err) {
      result.failed[e.relation_id] = err.what();
    }
  }

  double dom = 0.0;
  double rng = 0.0;
  for (auto& s : specs) {
    if (!s) continue;
    dom += static_cast<double>(s->domain_types.size());
    rng += static_cast<double>(s->range_types.size());
    result.specs.push_back(std::move(*s));
  }
  if (!result.specs.empty()) {
    result.mean_domain = dom / static_cast<double>(result.specs.size());
    result.mean_range = rng / static_cast<double>(result.specs.size());
  }
  if (result.failed.empty()) save_relation_specs(result.specs_file, result.specs);
  return result;
}

// ---------------------------------------------------------------------------
// build-probe

std::vector<KnowledgeTriple> seeded_sample(std::vector<KnowledgeTriple> triples,
                                           std::size_t n, std::uint64_t seed) {
  if (n == 0 || n >= triples.size()) return triples;
  std::vector<std::size_t> order(triples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates from the back; the last n slots are the sample.
  for (std::size_t i = order.size() - 1; i + n >= order.size() && i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<std::size_t> picked(order.end() - static_cast<std::ptrdiff_t>(n),
                                  order.end());
  std::sort(picked.begin(), picked.end());
  std::vector<KnowledgeTriple> out;
  out.reserve(n);
  for (std::size_t i : picked) out.push_back(std::move(triples[i]));
  return out;
}

ProbeStageResult run_build_probe(const RunConfig& config) {
  validate(config);
  const Provenance prov = provenance_for(config);

  const FieldMap fields =
      config.field_map_path ? load_field_map(*config.field_map_path) : FieldMap{};
  const auto groupings = config.relation_meta_path
                             ? load_relation_groupings(*config.relation_meta_path)
                             : std::map<std::string, Grouping>{};
  LoadResult loaded =
      load_triples(config.corpus_path, config.corpus_kind, fields, groupings);
  for (const auto& e : loaded.errors) {
    warn(config.corpus_path.string() + ":" + std::to_string(e.line) + ": " +
         e.message);
  }

  std::vector<Vocabulary> vocabs;
  for (const auto& p : config.vocab_paths) vocabs.push_back(load_vocabulary(p));
  FilterResult filtered = filter_by_vocab(loaded.triples, vocabs);

  const auto specs = load_relation_specs(config.relation_specs_path);
  std::map<std::string, TypeConstraintSet> sets;
  for (const auto& [id, spec] : specs) {
    TypeConstraintSet s;
    s.property_id = id;
    for (const auto& l : spec.domain_types) s.domain.push_back({l, l});
    for (const auto& l : spec.range_types) s.range.push_back({l, l});
    sets[id] = std::move(s);
  }

  ProbeStageResult result;
  result.loaded = loaded.triples.size();
  result.malformed_lines = loaded.errors.size();
  result.dropped = filtered.dropped.size();
  result.stats = compute_stats(config.corpus_kind, filtered.kept, sets);

  std::vector<KnowledgeTriple> triples =
      seeded_sample(std::move(filtered.kept), config.sample, config.seed);
  result.kept = triples.size();

  const fs::path dir = probe_dir(config);
  if (fs::exists(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (name.starts_with("probe-") && name.ends_with(".jsonl")) {
        fs::remove(entry.path());
      }
    }
  }
  fs::create_directories(dir);

  RenderOptions options;
  options.appositive_range = config.appositive_range;
  ShardedJsonlSink sink(dir, config.shard_lines);
  result.manifest = build_probe(triples, specs, sink, options);

  write_triples_jsonl(dir / "triples.jsonl", triples);
  write_file(dir / "relation_specs.json", read_file(config.relation_specs_path));
  write_file(dir / "corpus_stats.csv",
             provenance_comment(prov) + stats_to_csv(result.stats));

  Json manifest = parse_json(manifest_to_json(result.manifest),
                             ErrorCode::kSchemaMismatch, "manifest");
  manifest["triples"] = triples.size();
  manifest["provenance"] = provenance_json(prov);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

// ---------------------------------------------------------------------------
// run-eval

std::unique_ptr<Scorer> make_scorer(const RunConfig& config) {
  if (config.scorer_endpoint == kMockEndpoint) {
    std::vector<std::string> vocab = default_mock_vocabulary();
    if (config.mock_vocab_path) {
      vocab.clear();
      for (auto& line : read_lines(*config.mock_vocab_path)) {
        vocab.push_back(trim(line));
      }
    }
    MockTable table;
    if (config.mock_table_path) {
      table = load_mock_table(config.mock_table_path->string());
    }
    return std::make_unique<MockScorer>(std::move(vocab), std::move(table),
                                        config.batch_size);
  }
  HttpScorerOptions opts;
  opts.model = config.model;
  opts.max_batch = config.batch_size;
  opts.max_in_flight = config.max_in_flight;
  return std::make_unique<HttpScorer>(config.scorer_endpoint, opts);
}

std::string request_id(const std::string& text, const std::string& gold) {
  return stable_hash_hex(text + '\x1f' + gold);
}

namespace {

// Scores keyed by request id, backed by the eval checkpoint file.
class ScoreStore {
 public:
  ScoreStore(fs::path file, const Provenance& prov) : file_(std::move(file)) {
    std::vector<std::string> lines;
    if (fs::exists(file_)) lines = read_lines(file_);
    if (!lines.empty()) {
      const Provenance old = read_provenance_header(lines, file_);
      if (old.model != prov.model) {
        throw Error(ErrorCode::kStageMismatch,
                    file_.string() + " was scored with model '" + old.model +
                        "', config uses '" + prov.model +
                        "'; remove the eval directory to start over");
      }
      for (std::size_t i = 1; i < lines.size(); ++i) {
        try {
          ScoreResult r =
              parse_json(lines[i], ErrorCode::kSchemaMismatch, "checkpoint")
                  .get<ScoreResult>();
          if (!results_.contains(r.id)) order_.push_back(r.id);
          results_[r.id] = std::move(r);
        } catch (const std::exception&) {
          warn(file_.string() + ":" + std::to_string(i + 1) +
               ": skipping unreadable checkpoint line");
        }
      }
    }
    // Rewrite so a torn trailing line does not sit between appended batches.
    std::ostringstream clean;
    clean << provenance_line(prov) << '\n';
    for (const auto& id : order_) clean << Json(results_.at(id)).dump() << '\n';
    write_file(file_, clean.str());
    out_.open(file_, std::ios::binary | std::ios::app);
  }

  std::size_t size() const { return results_.size(); }
  bool contains(const std::string& id) const { return results_.contains(id); }

  const ScoreResult& at(const std::string& id) const {
    const auto it = results_.find(id);
    if (it == results_.end()) {
      throw Error(ErrorCode::kStageMismatch, "no score for request " + id);
    }
    return it->second;
  }

  void append(std::vector<ScoreResult> batch) {
    for (auto& r : batch) {
      out_ << Json(r).dump() << '\n';
      order_.push_back(r.id);
      results_[r.id] = std::move(r);
    }
    out_.flush();
    if (!out_) {
      throw Error(ErrorCode::kUnreadableFile,
                  "cannot append to '" + file_.string() + "'");
    }
  }

 private:
  fs::path file_;
  std::ofstream out_;
  std::unordered_map<std::string, ScoreResult> results_;
  std::vector<std::string> order_;
};

// Scores the requests the store lacks. Batches run concurrently but are
// appended to the checkpoint in request order, so the file is the same for
// any degree of concurrency. On failure, batches finished before the first
// failed one stay checkpointed.
std::size_t score_missing(const std::vector<ScoreRequest>& all, Scorer& scorer,
                          ScoreStore& store, std::size_t batch_size,
                          std::size_t max_in_flight) {
  std::vector<ScoreRequest> todo;
  for (const auto& r : all) {
    if (!store.contains(r.id)) todo.push_back(r);
  }
  if (todo.empty()) return 0;

  const std::size_t per = std::max<std::size_t>(
      1, std::min(batch_size, scorer.max_batch()));
  const std::size_t n_batches = (todo.size() + per - 1) / per;
  std::vector<std::optional<std::vector<ScoreResult>>> done(n_batches);
  std::size_t next_to_write = 0;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex mutex;
  std::exception_ptr error;
  std::size_t error_batch = n_batches;

  const auto worker = [&] {
    while (!failed) {
      const std::size_t b = next++;
      if (b >= n_batches) return;
      const std::size_t begin = b * per;
      const std::size_t end = std::min(todo.size(), begin + per);
      try {
        auto results = scorer.score_batch(
            std::span<const ScoreRequest>(todo).subspan(begin, end - begin));
        std::lock_guard lock(mutex);
        done[b] = std::move(results);
        while (next_to_write < n_batches && done[next_to_write] &&
               next_to_write < error_batch) {
          store.append(std::move(*done[next_to_write]));
          done[next_to_write].reset();
          ++next_to_write;
        }
      } catch (...) {
        std::lock_guard lock(mutex);
        if (b < error_batch) {
          error_batch = b;
          error = std::current_exception();
        }
        failed = true;
        return;
      }
    }
  };
  {
    std::vector<std::jthread> threads;
    const std::size_t n = std::min(max_in_flight, n_batches);
    for (std::size_t i = 0; i < n; ++i) threads.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  return todo.size();
}

// Serves completion requests from the store by (text, gold).
class StoreScorer final : public Scorer {
 public:
  explicit StoreScorer(const ScoreStore& store) : store_(store) {}
  std::size_t max_batch() const override { return 1u << 20; }
  std::vector<ScoreResult> score_batch(
      std::span<const ScoreRequest> requests) override {
    std::vector<ScoreResult> out;
    for (const auto& r : requests) {
      ScoreResult res = store_.at(request_id(r.text, r.gold_token.value_or("")));
      res.id = r.id;
      out.push_back(std::move(res));
    }
    return out;
  }

 private:
  const ScoreStore& store_;
};

struct Plan {
  std::vector<ScoreRequest> requests;
  std::set<std::string> seen;

  void add(const std::string& text, const std::string& gold, std::size_t k) {
    std::string id = request_id(text, gold);
    if (seen.insert(id).second) requests.push_back({id, text, gold, k});
  }
};

constexpr std::array<Slot, 2> kSlots = {Slot::Domain, Slot::Range};

}  // namespace

EvalStageResult run_eval(const RunConfig& config, Scorer& scorer) {
  const fs::path pdir = probe_dir(config);
  require_stage(pdir / "manifest.json", "build-probe");
  const auto triples = read_triples_jsonl(pdir / "triples.jsonl");
  const auto specs = load_relation_specs(pdir / "relation_specs.json");

  Provenance prov = provenance_for(config);
  const Json manifest = parse_json(read_file(pdir / "manifest.json"),
                                   ErrorCode::kSchemaMismatch, "manifest");
  if (manifest.contains("provenance")) {
    prov.constraint_hash =
        provenance_from_json(manifest["provenance"]).constraint_hash;
  }

  RenderOptions options;
  options.appositive_range = config.appositive_range;
  const std::size_t k = config.top_k;

  const fs::path edir = eval_dir(config);
  fs::create_directories(edir);
  ScoreStore store(edir / "scores.jsonl", prov);
  EvalStageResult result;

  // Phase A: simple prompts and every single-information candidate.
  Plan first;
  for (const auto& t : triples) {
    const RelationSpec& spec = specs.at(t.relation_id);
    first.add(render(t, spec, PromptType::Simple, {}, {}, options).text,
              t.object, k);
    for (SyntaxFamily syntax : config.syntaxes) {
      for (Slot slot : kSlots) {
        const PromptType type = single_info_type(slot, syntax);
        for (const auto& cand : spec.types(slot)) {
          std::optional<std::string> d;
          std::optional<std::string> r;
          (slot == Slot::Domain ? d : r) = cand;
          first.add(render(t, spec, type, d, r, options).text, t.object, k);
        }
      }
    }
  }
  std::size_t resumed = 0;
  for (const auto& r : first.requests) resumed += store.contains(r.id);
  result.requests_scored += score_missing(first.requests, scorer, store,
                                          config.batch_size,
                                          config.max_in_flight);

  // Completion choices, then phase B: the combined prompts they imply.
  StoreScorer cached(store);
  struct Choices {
    CompletionChoice domain;
    CompletionChoice range;
    PromptInstance combined;
  };
  // [triple][syntax][strategy]
  std::vector<std::vector<std::vector<Choices>>> choices(triples.size());
  Plan second;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const auto& t = triples[i];
    const RelationSpec& spec = specs.at(t.relation_id);
    for (SyntaxFamily syntax : config.syntaxes) {
      auto& row = choices[i].emplace_back();
      for (Strategy strategy : config.strategies) {
        Choices c{
            complete(strategy, t, spec, Slot::Domain, syntax, cached, k, options),
            complete(strategy, t, spec, Slot::Range, syntax, cached, k, options),
            {}};
        c.combined = build_combined(t, spec, syntax, c.domain, c.range, options);
        second.add(c.combined.text, t.object, k);
        row.push_back(std::move(c));
      }
    }
  }
  for (const auto& r : second.requests) {
    if (!first.seen.contains(r.id)) resumed += store.contains(r.id);
  }
  result.requests_scored += score_missing(second.requests, scorer, store,
                                          config.batch_size,
                                          config.max_in_flight);
  result.requests_resumed = resumed;
  result.requests_total = first.requests.size();
  for (const auto& r : second.requests) {
    if (!first.seen.contains(r.id)) ++result.requests_total;
  }

  std::ostringstream records;
  std::ostringstream completions;
  records << provenance_line(prov) << '\n';
  completions << provenance_line(prov) << '\n';
  const auto add_record = [&](const KnowledgeTriple& t, PromptType type,
                              Strategy s, const std::string& text) {
    const EvaluationRecord rec =
        make_record(t, type, s, store.at(request_id(text, t.object)));
    records << record_to_json_line(rec) << '\n';
    ++result.records;
  };
  const auto log_choice = [&](const CompletionChoice& c) {
    Json j{{"triple_key", c.triple_key},
           {"strategy", to_string(c.strategy)},
           {"syntax", to_string(c.syntax)},
           {"slot", to_string(c.slot)},
           {"chosen_type", c.chosen_type},
           {"score_used", c.score_used},
           {"all_scores", Json::array()}};
    for (const auto& [type, score] : c.all_scores) {
      j["all_scores"].push_back(Json::array({type, score}));
    }
    completions << j.dump() << '\n';
  };

  for (std::size_t i = 0; i < triples.size(); ++i) {
    const auto& t = triples[i];
    const RelationSpec& spec = specs.at(t.relation_id);
    add_record(t, PromptType::Simple, Strategy::NotApplicable,
               render(t, spec, PromptType::Simple, {}, {}, options).text);
    for (std::size_t s = 0; s < config.syntaxes.size(); ++s) {
      for (std::size_t g = 0; g < config.strategies.size(); ++g) {
        const Choices& c = choices[i][s][g];
        const Strategy strategy = config.strategies[g];
        log_choice(c.domain);
        log_choice(c.range);
        add_record(t, c.domain.prompt.prompt_type, strategy,
                   c.domain.prompt.text);
        add_record(t, c.range.prompt.prompt_type, strategy,
                   c.range.prompt.text);
        add_record(t, c.combined.prompt_type, strategy, c.combined.text);
      }
    }
  }
  write_file(edir / "records.jsonl", records.str());
  write_file(edir / "completions.jsonl", completions.str());
  write_file(edir / "triples.jsonl", read_file(pdir / "triples.jsonl"));
  return result;
}

// ---------------------------------------------------------------------------
// analyze

namespace {

struct EvalData {
  Provenance provenance;
  std::vector<EvaluationRecord> records;
  std::map<std::string, std::string> group_of;  // triple key -> group label
  std::vector<std::string> groups;              // display order
};

std::string group_label(const KnowledgeTriple& t) {
  switch (t.corpus) {
    case Corpus::TREx: return std::string(to_string(*t.grouping));
    case Corpus::GoogleRE: return t.relation_id;
    case Corpus::ConceptNet: return "Total";
  }
  return "Total";
}

EvalData load_eval(const RunConfig& config) {
  const fs::path edir = eval_dir(config);
  require_stage(edir / "records.jsonl", "run-eval");
  EvalData data;
  const auto lines = read_lines(edir / "records.jsonl");
  data.provenance = read_provenance_header(lines, edir / "records.jsonl");
  if (data.provenance.model != config.model) {
    throw Error(ErrorCode::kStageMismatch,
                "records were produced with model '" + data.provenance.model +
                    "', config uses '" + config.model + "'");
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    data.records.push_back(record_from_json_line(lines[i]));
  }
  std::set<std::string> seen;
  for (const auto& t : read_triples_jsonl(edir / "triples.jsonl")) {
    const std::string g = group_label(t);
    data.group_of[triple_key(t)] = g;
    if (seen.insert(g).second) data.groups.push_back(g);
  }
  if (config.corpus_kind == Corpus::TREx) {
    std::vector<std::string> ordered;
    for (const char* g : {"1:1", "N:1", "N:M"}) {
      if (seen.contains(g)) ordered.push_back(g);
    }
    data.groups = std::move(ordered);
  } else {
    std::sort(data.groups.begin(), data.groups.end());
  }
  if (config.corpus_kind == Corpus::ConceptNet) data.groups.clear();
  return data;
}

std::vector<EvaluationRecord> select(const std::vector<EvaluationRecord>& all,
                                     PromptType type, Strategy strategy) {
  std::vector<EvaluationRecord> out;
  for (const auto& r : all) {
    if (r.prompt_type == type && r.strategy == strategy) out.push_back(r);
  }
  return out;
}

Json interval_json(const CombinabilityInterval& c) {
  return Json{{"lower", c.lower},
              {"observed", c.observed},
              {"upper", c.upper},
              {"n_triples", c.n_triples},
              {"above_upper", c.above_upper},
              {"below_lower", c.below_lower}};
}

// (syntax, strategy) pairs present among single-information records.
std::vector<std::pair<SyntaxFamily, Strategy>> variants(
    const std::vector<EvaluationRecord>& records) {
  std::set<std::pair<SyntaxFamily, Strategy>> found;
  for (const auto& r : records) {
    if (r.strategy == Strategy::NotApplicable) continue;
    found.emplace(syntax_family(r.prompt_type), r.strategy);
  }
  return {found.begin(), found.end()};
}

std::vector<EvaluationRecord> require_records(
    const std::vector<EvaluationRecord>& all, PromptType type,
    Strategy strategy) {
  auto out = select(all, type, strategy);
  if (out.empty()) {
    throw Error(ErrorCode::kCoverageMismatch,
                "no " + std::string(to_string(type)) + "/" +
                    std::string(to_string(strategy)) + " records");
  }
  return out;
}

}  // namespace

void run_analyze(const RunConfig& config) {
  const EvalData data = load_eval(config);
  const fs::path adir = analysis_dir(config);
  fs::create_directories(adir);
  const Json prov = provenance_json(data.provenance);
  const GroupKey by_group = [&](const EvaluationRecord& r) {
    return data.group_of.at(r.triple_key);
  };
  const GroupKey total = [](const EvaluationRecord&) {
    return std::string("Total");
  };

  // P@1 table: one column per (prompt type, strategy) in canonical order.
  std::vector<std::pair<PromptType, Strategy>> columns;
  for (PromptType t : kAllPromptTypes) {
    for (Strategy s :
         {Strategy::NotApplicable, Strategy::Quality, Strategy::Confidence}) {
      if (!select(data.records, t, s).empty()) columns.emplace_back(t, s);
    }
  }
  std::map<std::string, std::size_t> per_group;
  for (const auto& [key, g] : data.group_of) ++per_group[g];
  std::ostringstream csv;
  csv << provenance_comment(data.provenance) << "group,n_triples";
  std::vector<std::map<std::string, double>> cells;
  for (const auto& [t, s] : columns) {
    csv << ',' << to_string(t) << '/' << to_string(s);
    const auto recs = select(data.records, t, s);
    auto scores = data.groups.empty()
                      ? std::map<std::string, double>{}
                      : p_at_1(recs, by_group, data.groups);
    scores["Total"] = p_at_1(recs, total).at("Total");
    cells.push_back(std::move(scores));
  }
  csv << '\n';
  std::vector<std::string> rows = data.groups;
  rows.push_back("Total");
  for (const auto& g : rows) {
    csv << g << ','
        << (g == "Total" ? data.group_of.size() : per_group[g]);
    for (const auto& col : cells) csv << ',' << fmt4(col.at(g));
    csv << '\n';
  }
  write_file(adir / "p_at_1.csv", csv.str());

  // Combinability bounds and consistency partitions per syntax and strategy.
  const auto simple = select(data.records, PromptType::Simple,
                             Strategy::NotApplicable);
  std::set<std::string> simple_correct;
  for (const auto& r : simple) {
    if (r.correct) simple_correct.insert(r.triple_key);
  }
  Json bounds{{"provenance", prov}, {"variants", Json::array()}};
  Json partitions{{"provenance", prov},
                  {"simple_total", simple_correct.size()},
                  {"variants", Json::array()}};
  for (const auto& [syntax, strategy] : variants(data.records)) {
    const PromptType dt = prompt_type_for(syntax, InfoContent::Domain);
    const PromptType rt = prompt_type_for(syntax, InfoContent::Range);
    const PromptType bt = prompt_type_for(syntax, InfoContent::Both);
    const auto dom = require_records(data.records, dt, strategy);
    const auto rng = require_records(data.records, rt, strategy);
    const auto both = require_records(data.records, bt, strategy);

    Json v{{"syntax", to_string(syntax)},
           {"strategy", to_string(strategy)},
           {"domain_type", to_string(dt)},
           {"range_type", to_string(rt)},
           {"combined_type", to_string(bt)},
           {"total", interval_json(combinability_interval(dom, rng, both))},
           {"by_group", Json::object()},
           {"triples", Json::array()}};
    for (const auto& g : data.groups) {
      const auto in_group = [&](const std::vector<EvaluationRecord>& rs) {
        std::vector<EvaluationRecord> out;
        for (const auto& r : rs) {
          if (data.group_of.at(r.triple_key) == g) out.push_back(r);
        }
        return out;
      };
      v["by_group"][g] = interval_json(
          combinability_interval(in_group(dom), in_group(rng), in_group(both)));
    }
    const auto outcomes = combinability_bounds(dom, rng);
    std::map<std::string, bool> combined_correct;
    for (const auto& r : both) combined_correct[r.triple_key] = r.correct;
    for (const auto& [key, b] : outcomes) {
      v["triples"].push_back(Json{{"triple_key", key},
                                  {"lower_correct", b.lower_correct},
                                  {"upper_correct", b.upper_correct},
                                  {"combined_correct", combined_correct.at(key)}});
    }
    bounds["variants"].push_back(std::move(v));

    NamedSets sets;
    sets.emplace_back("simple", simple_correct);
    for (const auto* rs : {&dom, &rng, &both}) {
      std::set<std::string> correct;
      for (const auto& r : *rs) {
        if (r.correct) correct.insert(r.triple_key);
      }
      sets.emplace_back(std::string(to_string(rs->front().prompt_type)),
                        std::move(correct));
    }
    const ConsistencyPartition part = consistency_partition(sets);
    Json p{{"syntax", to_string(syntax)},
           {"strategy", to_string(strategy)},
           {"sets", part.set_names},
           {"totals", Json::object()},
           {"cells", Json::array()}};
    for (const auto& name : part.set_names) p["totals"][name] = part.totals.at(name);
    for (const auto& cell : part.cells) {
      Json members = Json::array();
      for (std::size_t i = 0; i < part.set_names.size(); ++i) {
        if (cell.membership & (1u << i)) members.push_back(part.set_names[i]);
      }
      const double pct =
          simple_correct.empty()
              ? 0.0
              : 100.0 * static_cast<double>(cell.size) /
                    static_cast<double>(simple_correct.size());
      p["cells"].push_back(Json{{"members", std::move(members)},
                                {"membership", cell.membership},
                                {"size", cell.size},
                                {"percent_of_simple", pct},
                                {"triples", cell.triples}});
    }
    partitions["variants"].push_back(std::move(p));
  }
  write_file(adir / "bounds.json", bounds.dump(2) + "\n");
  write_file(adir / "partition.json", partitions.dump(2) + "\n");

  // Mean entropy on the known subset.
  const std::set<std::string> known = known_subset(simple, 10);
  Json grid{{"provenance", prov},
            {"k", 10},
            {"n_known", known.size()},
            {"cells", Json::array()}};
  const auto mean_or_null = [&](const std::vector<EvaluationRecord>& rs) {
    std::vector<EvaluationRecord> kept;
    for (const auto& r : rs) {
      if (known.contains(r.triple_key)) kept.push_back(r);
    }
    if (kept.empty()) return Json(nullptr);
    return Json(mean_entropy(kept, known, total).at("Total"));
  };
  for (const auto& [syntax, strategy] : variants(data.records)) {
    Json points = Json::array();
    points.push_back(Json{{"info", "none"},
                          {"prompt_type", "simple"},
                          {"mean_entropy", mean_or_null(simple)}});
    for (InfoContent info :
         {InfoContent::Domain, InfoContent::Range, InfoContent::Both}) {
      const PromptType t = prompt_type_for(syntax, info);
      points.push_back(Json{{"info", to_string(info)},
                            {"prompt_type", to_string(t)},
                            {"mean_entropy",
                             mean_or_null(select(data.records, t, strategy))}});
    }
    grid["cells"].push_back(Json{{"syntax", to_string(syntax)},
                                 {"strategy", to_string(strategy)},
                                 {"points", std::move(points)}});
  }
  write_file(adir / "entropy_grid.json", grid.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// plot

void run_plot(const RunConfig& config) {
  const fs::path adir = analysis_dir(config);
  require_stage(adir / "bounds.json", "analyze");
  const fs::path out = plots_dir(config);
  fs::create_directories(out);

  write_file(out / "bounds.svg", render_bounds_svg(read_file(adir / "bounds.json")));
  write_file(out / "entropy.svg",
             render_entropy_svg(read_file(adir / "entropy_grid.json")));

  const Json partitions = parse_json(read_file(adir / "partition.json"),
                                     ErrorCode::kSchemaMismatch, "partition.json");
  const Provenance prov = provenance_from_json(partitions.at("provenance"));
  for (const auto& v : partitions.at("variants")) {
    const std::string stem = "partition_" + v.at("syntax").get<std::string>() +
                             "_" + v.at("strategy").get<std::string>();
    const auto names = v.at("sets").get<std::vector<std::string>>();
    std::vector<std::set<std::string>> sets(names.size());
    std::ostringstream csv;
    csv << provenance_comment(prov);
    for (const auto& n : names) csv << n << ',';
    csv << "size\n";
    for (const auto& cell : v.at("cells")) {
      const auto mask = cell.at("membership").get<std::uint32_t>();
      for (std::size_t i = 0; i < names.size(); ++i) {
        csv << ((mask >> i) & 1u) << ',';
        if (mask & (1u << i)) {
          for (const auto& t : cell.at("triples")) {
            sets[i].insert(t.get<std::string>());
          }
        }
      }
      csv << cell.at("size").get<std::size_t>() << '\n';
    }
    Json sv{{"set_annotations", names}, {"sets", Json::array()}};
    for (const auto& s : sets) sv["sets"].push_back(s);
    sv["provenance"] = provenance_json(prov);
    write_file(out / (stem + ".supervenn.json"), sv.dump(2) + "\n");
    write_file(out / (stem + ".cells.csv"), csv.str());
  }
}

}  // namespace conpare
