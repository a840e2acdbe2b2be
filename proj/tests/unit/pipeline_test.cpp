#include "doctest.h"

#include <cstdlib>
#include <mutex>

#include "conpare/error.hpp"
#include "conpare/pipeline.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace conpare;
namespace fs = std::filesystem;

namespace {

RunConfig fixture_config(const fs::path& out) {
  RunConfig c = load_run_config(testing::fixture_dir() / "run.json");
  c.output_dir = out;
  return c;
}

// Mock scorer that records the ids it scored and can fail after a number of
// calls.
class RecordingScorer final : public Scorer {
 public:
  explicit RecordingScorer(std::size_t fail_after = SIZE_MAX)
      : inner_(read_vocab()), fail_after_(fail_after) {}

  std::size_t max_batch() const override { return 16; }
  std::vector<ScoreResult> score_batch(std::span<const ScoreRequest> r) override {
    {
      std::lock_guard lock(mutex_);
      if (calls_ >= fail_after_) {
        std::vector<std::string> ids;
        for (const auto& x : r) ids.push_back(x.id);
        throw BatchError(ErrorCode::kEndpointUnavailable, "scorer went away", ids);
      }
      ++calls_;
      for (const auto& x : r) ids_.insert(x.id);
    }
    return inner_.score_batch(r);
  }

  std::set<std::string> ids() const {
    std::lock_guard lock(mutex_);
    return ids_;
  }

 private:
  static std::vector<std::string> read_vocab() {
    std::vector<std::string> v;
    std::istringstream in(testing::read_text(testing::fixture_dir() / "mock_vocab.txt"));
    for (std::string l; std::getline(in, l);) {
      if (!trim(l).empty()) v.push_back(trim(l));
    }
    return v;
  }

  MockScorer inner_;
  std::size_t fail_after_;
  std::size_t calls_ = 0;
  std::set<std::string> ids_;
  mutable std::mutex mutex_;
};

std::set<std::string> checkpoint_ids(const fs::path& scores) {
  std::set<std::string> ids;
  std::istringstream in(testing::read_text(scores));
  for (std::string l; std::getline(in, l);) {
    const auto doc = nlohmann::json::parse(l);
    if (doc.contains("id")) ids.insert(doc["id"].get<std::string>());
  }
  return ids;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CONPARE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("run config loading") {
  const RunConfig c = load_run_config(testing::fixture_dir() / "run.json");
  CHECK(c.corpus_kind == Corpus::TREx);
  CHECK(c.corpus_path == testing::fixture_dir() / "trex.jsonl");
  CHECK(c.vocab_paths.size() == 2);
  CHECK(c.batch_size == 16);
  CHECK(c.seed == 7);
  CHECK(c.strategies.size() == 2);
  CHECK_NOTHROW(validate(c));

  testing::TempDir tmp;
  testing::write_text(tmp / "bad.json", R"({"corpus": "x.jsonl", "colour": "red"})");
  CHECK_THROWS_AS(load_run_config(tmp / "bad.json"), Error);

  RunConfig missing = c;
  missing.corpus_path = tmp / "nope.jsonl";
  CHECK_THROWS_AS(validate(missing), Error);

  RunConfig no_meta = c;
  no_meta.relation_meta_path.reset();
  CHECK_THROWS_AS(validate(no_meta), Error);

  // The config round-trips through its JSON form.
  testing::write_text(tmp / "again.json", run_config_to_json(c));
  const RunConfig again = load_run_config(tmp / "again.json");
  CHECK(provenance_for(again) == provenance_for(c));
}

TEST_CASE("provenance ignores the output directory") {
  RunConfig a = fixture_config("/tmp/a");
  RunConfig b = fixture_config("/tmp/b");
  CHECK(provenance_for(a) == provenance_for(b));
  b.seed = 8;
  CHECK(provenance_for(a).config_hash != provenance_for(b).config_hash);
  CHECK(provenance_for(a).constraint_hash == provenance_for(b).constraint_hash);
}

TEST_CASE("environment overrides the endpoint") {
  RunConfig c = fixture_config("/tmp/x");
  setenv(std::string(kScorerEndpointEnv).c_str(), "http://scorer:9000", 1);
  apply_environment(c);
  unsetenv(std::string(kScorerEndpointEnv).c_str());
  CHECK(c.scorer_endpoint == "http://scorer:9000");
}

TEST_CASE("seeded sample") {
  std::vector<KnowledgeTriple> ts;
  for (int i = 0; i < 50; ++i) {
    ts.push_back(make_triple("s" + std::to_string(i), "P1", "o", Corpus::TREx,
                             Grouping::NToOne));
  }
  const auto a = seeded_sample(ts, 10, 3);
  CHECK(a == seeded_sample(ts, 10, 3));
  CHECK(a.size() == 10);
  CHECK(a != seeded_sample(ts, 10, 4));
  CHECK(seeded_sample(ts, 100, 3) == ts);
}

TEST_CASE("build-probe on the fixture") {
  testing::TempDir tmp;
  const RunConfig c = fixture_config(tmp / "out");
  const ProbeStageResult r = run_build_probe(c);
  CHECK(r.loaded == 11);
  CHECK(r.dropped == 1);
  CHECK(r.kept == 10);
  CHECK(r.manifest.total == 136);
  CHECK(r.manifest.shards.size() == 2);
  CHECK(fs::exists(tmp / "out" / "probe" / "corpus_stats.csv"));
  const auto manifest = nlohmann::json::parse(
      testing::read_text(tmp / "out" / "probe" / "manifest.json"));
  CHECK(manifest.contains("provenance"));
  CHECK(manifest["triples"] == 10);
}

TEST_CASE("stages require their predecessors") {
  testing::TempDir tmp;
  const RunConfig c = fixture_config(tmp / "out");
  RecordingScorer scorer;
  try {
    run_eval(c, scorer);
    FAIL("expected StageMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kStageMismatch);
    CHECK(std::string(e.what()).find("build-probe") != std::string::npos);
  }
  CHECK_THROWS_AS(run_analyze(c), Error);
  CHECK_THROWS_AS(run_plot(c), Error);
}

TEST_CASE("interrupted eval resumes without rescoring") {
  testing::TempDir tmp;
  const RunConfig c = fixture_config(tmp / "out");
  run_build_probe(c);

  RecordingScorer flaky(3);
  CHECK_THROWS_AS(run_eval(c, flaky), BatchError);
  const fs::path scores = tmp / "out" / "eval" / "scores.jsonl";
  const auto saved = checkpoint_ids(scores);
  CHECK_FALSE(saved.empty());
  CHECK(saved == flaky.ids());

  RecordingScorer second;
  const EvalStageResult r = run_eval(c, second);
  CHECK(r.requests_resumed == saved.size());
  CHECK(r.requests_scored + r.requests_resumed == r.requests_total);
  for (const auto& id : second.ids()) CHECK_FALSE(saved.contains(id));
  CHECK(second.ids().size() == r.requests_scored);

  // Same outputs as an uninterrupted run.
  testing::TempDir clean;
  const RunConfig c2 = fixture_config(clean / "out");
  run_build_probe(c2);
  RecordingScorer fresh;
  const EvalStageResult r2 = run_eval(c2, fresh);
  CHECK(r2.requests_scored == r2.requests_total);
  CHECK(r2.records == r.records);
  CHECK(testing::read_text(tmp / "out" / "eval" / "records.jsonl") ==
        testing::read_text(clean / "out" / "eval" / "records.jsonl"));

  // A finished checkpoint scores nothing.
  RecordingScorer idle;
  const EvalStageResult r3 = run_eval(c2, idle);
  CHECK(r3.requests_scored == 0);
  CHECK(idle.ids().empty());
}

TEST_CASE("checkpoint from another model is refused") {
  testing::TempDir tmp;
  RunConfig c = fixture_config(tmp / "out");
  run_build_probe(c);
  RecordingScorer s;
  run_eval(c, s);
  c.model = "other-model";
  RecordingScorer again;
  try {
    run_eval(c, again);
    FAIL("expected StageMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kStageMismatch);
  }
}

TEST_CASE("analyze and plot outputs") {
  testing::TempDir tmp;
  const RunConfig c = fixture_config(tmp / "out");
  run_build_probe(c);
  RecordingScorer s;
  run_eval(c, s);
  run_analyze(c);
  run_plot(c);
  const fs::path a = tmp / "out" / "analysis";
  for (const char* f : {"p_at_1.csv", "bounds.json", "partition.json", "entropy_grid.json"}) {
    CHECK(fs::exists(a / f));
  }
  const std::string csv = testing::read_text(a / "p_at_1.csv");
  CHECK(csv.rfind("# config=", 0) == 0);
  CHECK(csv.find("\nTotal,10,") != std::string::npos);
  CHECK(csv.find("1:1,") != std::string::npos);

  const auto bounds = nlohmann::json::parse(testing::read_text(a / "bounds.json"));
  REQUIRE(bounds["variants"].size() == 4);
  for (const auto& v : bounds["variants"]) {
    CHECK(v["total"]["lower"].get<double>() <= v["total"]["upper"].get<double>());
  }
  const auto partition = nlohmann::json::parse(testing::read_text(a / "partition.json"));
  for (const auto& v : partition["variants"]) {
    std::size_t covered = 0;
    for (const auto& cell : v["cells"]) covered += cell["size"].get<std::size_t>();
    CHECK(covered <= 10);
  }

  const fs::path p = tmp / "out" / "plots";
  CHECK(testing::read_text(p / "bounds.svg").find("<svg") != std::string::npos);
  CHECK(testing::read_text(p / "entropy.svg").find("<!-- config=") != std::string::npos);
  CHECK(fs::exists(p / "partition_clausal_quality.supervenn.json"));
  CHECK(fs::exists(p / "partition_appositive_confidence.cells.csv"));
}

TEST_CASE("analyze names the missing prompt type") {
  testing::TempDir tmp;
  const RunConfig c = fixture_config(tmp / "out");
  run_build_probe(c);
  RecordingScorer s;
  run_eval(c, s);
  const fs::path records = tmp / "out" / "eval" / "records.jsonl";
  std::istringstream in(testing::read_text(records));
  std::string kept;
  for (std::string l; std::getline(in, l);) {
    if (l.find("\"prompt_type\":\"complex\"") == std::string::npos) kept += l + "\n";
  }
  testing::write_text(records, kept);
  try {
    run_analyze(c);
    FAIL("expected CoverageMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kCoverageMismatch);
    CHECK(std::string(e.what()).find("complex") != std::string::npos);
  }
}

TEST_CASE("relation spec file round trip") {
  testing::TempDir tmp;
  const std::vector<RelationSpec> specs{testing::capital_spec({"city"}, {"country", "state"})};
  save_relation_specs(tmp / "specs.json", specs);
  const auto back = load_relation_specs(tmp / "specs.json");
  REQUIRE(back.size() == 1);
  CHECK(back.at("P1376") == specs[0]);
}

TEST_CASE("fetch-constraints serves a warm cache without the network") {
  testing::TempDir tmp;
  fs::create_directories(tmp / "cache");
  fs::copy_file(testing::fixture_dir() / "constraints_fixture.json",
                tmp / "cache" / "constraints.json",
                fs::copy_options::overwrite_existing);
  FetchConstraintsOptions o;
  o.relations_path = testing::fixture_dir() / "relation_list.json";
  o.cache_dir = tmp / "cache";
  o.endpoint = "http://127.0.0.1:1/sparql";
  o.fetch.max_attempts = 1;
  o.fetch.initial_backoff = std::chrono::milliseconds(1);
  o.fetch.timeout = std::chrono::seconds(2);
  const auto r = run_fetch_constraints(o);
  CHECK(r.failed.empty());
  CHECK(r.from_cache.size() == 4);
  CHECK(r.specs.size() == 5);
  CHECK(fs::exists(r.specs_file));

  o.refresh = true;
  const auto refreshed = run_fetch_constraints(o);
  CHECK(refreshed.failed.size() == 5);
}

TEST_CASE("cli exit codes") {
  testing::TempDir tmp;
  const std::string cfg = (testing::fixture_dir() / "run.json").string();
  CHECK(run_cli("pipeline --config " + cfg + " --out " + (tmp / "out").string()) == 0);
  CHECK(run_cli("analyze --config " + cfg + " --out " + (tmp / "empty").string()) == 2);
  CHECK(run_cli("no-such-command") != 0);
  CHECK(run_cli("fetch-constraints --relations " +
                (testing::fixture_dir() / "relation_list.json").string() +
                " --cache " + (tmp / "c").string() +
                " --endpoint http://127.0.0.1:1/sparql --refresh") == 2);
}
