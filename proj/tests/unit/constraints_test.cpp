#include "doctest.h"

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include "conpare/constraints.hpp"
#include "conpare/error.hpp"
#include "conpare/log.hpp"
#include "httplib.h"
#include "support.hpp"

using namespace conpare;
using testing::read_text;
using testing::test_data_dir;

namespace {

// Local stand-in for the SPARQL endpoint. Answers from recorded results by
// property id found in the query; unknown properties get an empty result.
class SparqlServer {
 public:
  SparqlServer() {
    server_.Get("/sparql", [this](const httplib::Request& req,
                                  httplib::Response& res) {
      ++requests_;
      if (fail_remaining_ > 0) {
        --fail_remaining_;
        res.status = 503;
        return;
      }
      const std::string q = req.get_param_value("query");
      if (q.find("wd:P36 ") != std::string::npos) {
        res.set_content(read_text(test_data_dir() / "sparql_P36.json"),
                        "application/sparql-results+json");
      } else if (q.find("wd:P19 ") != std::string::npos) {
        res.status = 400;
      } else {
        res.set_content(read_text(test_data_dir() / "sparql_empty.json"),
                        "application/sparql-results+json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~SparqlServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/sparql";
  }
  void fail_next(int n) { fail_remaining_ = n; }
  int requests() const { return requests_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> fail_remaining_{0};
  std::atomic<int> requests_{0};
};

FetchOptions fast() {
  FetchOptions o;
  o.initial_backoff = std::chrono::milliseconds(1);
  o.timeout = std::chrono::seconds(5);
  return o;
}

struct Captured {
  std::vector<std::string> lines;
  std::mutex mutex;
  WarningHandler handler() {
    return [this](const std::string& m) {
      std::lock_guard lock(mutex);
      lines.push_back(m);
    };
  }
  bool any_contains(const std::string& needle) {
    std::lock_guard lock(mutex);
    for (const auto& l : lines) {
      if (l.find(needle) != std::string::npos) return true;
    }
    return false;
  }
};

// Provider answering from a fixed map; counts concurrent fetches.
class FakeProvider final : public ConstraintProvider {
 public:
  FakeProvider(ConstraintSource kind, std::map<std::string, TypeConstraintSet> sets,
               std::set<std::string> failing = {})
      : kind_(kind), sets_(std::move(sets)), failing_(std::move(failing)) {}
  ConstraintSource kind() const override { return kind_; }
  TypeConstraintSet fetch(const std::string& id) const override {
    const int now = ++in_flight_;
    int seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    --in_flight_;
    if (failing_.contains(id)) {
      throw Error(ErrorCode::kNetworkError, id + ": connection refused");
    }
    const auto it = sets_.find(id);
    if (it == sets_.end()) throw Error(ErrorCode::kEmptyConstraint, id);
    return it->second;
  }
  int max_in_flight() const { return max_in_flight_; }

 private:
  ConstraintSource kind_;
  std::map<std::string, TypeConstraintSet> sets_;
  std::set<std::string> failing_;
  mutable std::atomic<int> in_flight_{0};
  mutable std::atomic<int> max_in_flight_{0};
};

TypeConstraintSet set_of(const std::string& id, std::vector<std::string> d,
                         std::vector<std::string> r,
                         ConstraintSource src = ConstraintSource::WikidataLive) {
  TypeConstraintSet s;
  s.property_id = id;
  for (auto& l : d) s.domain.push_back({l, "Q" + l});
  for (auto& l : r) s.range.push_back({l, "Q" + l});
  s.source = src;
  s.fetched_at = parse_timestamp("2023-05-01T12:00:00Z");
  return s;
}

}  // namespace

TEST_CASE("constraint query names the type-constraint items") {
  const std::string q = sparql_constraint_query("P36");
  CHECK(q.find("wd:P36 ") != std::string::npos);
  CHECK(q.find("P2302") != std::string::npos);
  CHECK(q.find("P2308") != std::string::npos);
  CHECK(q.find("Q21503250") != std::string::npos);
  CHECK(q.find("Q21510865") != std::string::npos);
  CHECK(is_property_id("P36"));
  CHECK_FALSE(is_property_id("P"));
  CHECK_FALSE(is_property_id("Q5"));
  CHECK_FALSE(is_property_id("place_of_birth"));
}

TEST_CASE("SPARQL results parse into normalized, deduplicated labels") {
  Captured warnings;
  ScopedWarningHandler guard(warnings.handler());
  const auto set = parse_sparql_constraints(
      "P36", read_text(test_data_dir() / "sparql_P36.json"),
      parse_timestamp("2023-05-01T12:00:00Z"));
  CHECK(labels(set.domain) ==
        std::vector<std::string>{"area", "geographic region", "fictional planet"});
  CHECK(labels(set.range) == std::vector<std::string>{
                                 "political territorial entity",
                                 "fictional city", "capital city"});
  CHECK(set.domain[0].class_id == "Q1414991");
  CHECK(set.source == ConstraintSource::WikidataLive);
  CHECK(warnings.any_contains("Q99999999"));

  try {
    parse_sparql_constraints("P0", read_text(test_data_dir() / "sparql_empty.json"),
                             {});
    FAIL("expected EmptyConstraint");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptyConstraint);
  }
  try {
    parse_sparql_constraints("P0", R"({"head":{}})", {});
    FAIL("expected MalformedResponse");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMalformedResponse);
  }
}

TEST_CASE("fetching from a SPARQL endpoint") {
  ScopedWarningHandler quiet([](const std::string&) {});
  SparqlServer server;

  const auto a = fetch_wikidata_constraints("P36", server.url(), fast());
  CHECK(labels(a.domain).size() == 3);
  const auto b = fetch_wikidata_constraints("P36", server.url(), fast());
  CHECK(same_constraints(a, b));

  SUBCASE("nonexistent property") {
    CHECK_THROWS_WITH_AS(fetch_wikidata_constraints("P0", server.url(), fast()),
                         doctest::Contains("EmptyConstraint"), Error);
  }
  SUBCASE("retries 503 then succeeds") {
    server.fail_next(2);
    const int before = server.requests();
    CHECK_NOTHROW(fetch_wikidata_constraints("P36", server.url(), fast()));
    CHECK(server.requests() - before == 3);
  }
  SUBCASE("persistent 503 becomes NetworkError after max attempts") {
    server.fail_next(100);
    const int before = server.requests();
    CHECK_THROWS_WITH_AS(fetch_wikidata_constraints("P36", server.url(), fast()),
                         doctest::Contains("NetworkError"), Error);
    CHECK(server.requests() - before == fast().max_attempts);
  }
  SUBCASE("client errors are not retried") {
    const int before = server.requests();
    CHECK_THROWS_AS(fetch_wikidata_constraints("P19", server.url(), fast()),
                    Error);
    CHECK(server.requests() - before == 1);
  }
  SUBCASE("invalid property id") {
    CHECK_THROWS_WITH_AS(fetch_wikidata_constraints("capital", server.url(), fast()),
                         doctest::Contains("InvalidArgument"), Error);
  }
}

TEST_CASE("unreachable endpoint is a NetworkError") {
  CHECK_THROWS_WITH_AS(
      fetch_wikidata_constraints("P36", "http://127.0.0.1:9/sparql", fast()),
      doctest::Contains("NetworkError"), Error);
}

TEST_CASE("GoogleRE relations map to Wikidata properties") {
  CHECK(googlere_to_wikidata("place_of_birth") == "P19");
  CHECK(googlere_to_wikidata("/people/person/place_of_death") == "P20");
  CHECK(googlere_to_wikidata("date_of_birth") == "P569");
  CHECK_FALSE(googlere_to_wikidata("employer").has_value());
}

TEST_CASE("concept graph expansion") {
  const std::vector<ConceptGraphEdge> edges = {
      {"city", EdgeLabel::RelatedTo, "town", "RelatedTo"},
      {"city", EdgeLabel::DefinedBy, "settlement", "DefinedBy"},
      {"city", EdgeLabel::Other, "x", "Antonym"},
  };
  CHECK(derive_from_concept_graph("city", edges) ==
        std::vector<std::string>{"city", "town", "settlement"});

  Captured warnings;
  {
    ScopedWarningHandler guard(warnings.handler());
    CHECK(derive_from_concept_graph("city", {}) ==
          std::vector<std::string>{"city"});
  }
  CHECK(warnings.any_contains("city"));

  auto dup = edges;
  dup.push_back({"city", EdgeLabel::RelatedTo, "town", "RelatedTo"});
  CHECK(derive_from_concept_graph("city", dup) ==
        std::vector<std::string>{"city", "town", "settlement"});

  CHECK(parse_edge_label("/r/RelatedTo") == EdgeLabel::RelatedTo);
  CHECK(parse_edge_label("defined_by") == EdgeLabel::DefinedBy);
  CHECK(parse_edge_label("IsA") == EdgeLabel::Other);
}

TEST_CASE("concept graph file loading skips bad lines") {
  Captured warnings;
  ScopedWarningHandler guard(warnings.handler());
  const auto edges = load_concept_graph(test_data_dir() / "concept_graph.tsv");
  CHECK(edges.size() == 5);  // self-loop and malformed line skipped
  CHECK(warnings.lines.size() == 2);
  CHECK(derive_from_concept_graph("city", edges) ==
        std::vector<std::string>{"city", "town", "settlement"});
}

TEST_CASE("resolution order and fallbacks") {
  ScopedWarningHandler quiet([](const std::string&) {});
  FakeProvider live(ConstraintSource::WikidataLive,
                    {{"P36", set_of("P36", {"area", "region"}, {"city"})},
                     {"P17", set_of("P17", {"thing"}, {})}});
  FakeProvider graph(ConstraintSource::ConceptGraph,
                     {{"P17", set_of("P17", {"object"}, {"country", "nation"},
                                     ConstraintSource::ConceptGraph)}});
  const std::vector<const ConstraintProvider*> providers = {&live, &graph};
  const ManualDefaults manual = {{"P999", {"person", "the City"}},
                                 {"P17", {"item", "country"}}};

  SUBCASE("first source wins") {
    const auto r = resolve_constraints("P36", providers, manual);
    CHECK_FALSE(r.manual_fallback);
    CHECK(labels(r.set.domain) == std::vector<std::string>{"area", "region"});
    CHECK(r.set.source == ConstraintSource::WikidataLive);
  }
  SUBCASE("sides resolve independently") {
    const auto r = resolve_constraints("P17", providers, manual);
    CHECK(labels(r.set.domain) == std::vector<std::string>{"thing"});
    CHECK(labels(r.set.range) == std::vector<std::string>{"country", "nation"});
    CHECK_FALSE(r.manual_fallback);
  }
  SUBCASE("manual default fills missing sides") {
    const auto r = resolve_constraints("P999", providers, manual);
    CHECK(r.manual_fallback);
    CHECK(labels(r.set.domain) == std::vector<std::string>{"person"});
    CHECK(labels(r.set.range) == std::vector<std::string>{"city"});
    CHECK(r.set.domain[0].class_id == "manual:person");
    CHECK(has_manual_entries(r.set));
    const auto spec = to_relation_spec("P999", "is  located in", r);
    CHECK(spec.manual_fallback);
    CHECK(spec.relation_text == "is located in");
  }
  SUBCASE("nothing anywhere") {
    try {
      resolve_constraints("P5", providers, manual);
      FAIL("expected NoFallbackAvailable");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kNoFallbackAvailable);
    }
  }
}

TEST_CASE("network failures are skipped unless fatal") {
  Captured warnings;
  ScopedWarningHandler guard(warnings.handler());
  FakeProvider live(ConstraintSource::WikidataLive, {}, {"P36"});
  const std::vector<const ConstraintProvider*> providers = {&live};
  const ManualDefaults manual = {{"P36", {"city", "country"}}};

  const auto r = resolve_constraints("P36", providers, manual);
  CHECK(r.manual_fallback);
  CHECK(warnings.any_contains("P36"));
  CHECK_THROWS_WITH_AS(resolve_constraints("P36", providers, manual, true),
                       doctest::Contains("NetworkError"), Error);
}

TEST_CASE("resolve_many bounds concurrency and keeps order") {
  std::map<std::string, TypeConstraintSet> sets;
  std::vector<std::string> ids;
  for (int i = 1; i <= 24; ++i) {
    const std::string id = "P" + std::to_string(i);
    ids.push_back(id);
    if (i != 7) sets[id] = set_of(id, {"a" + id}, {"b" + id});
  }
  FakeProvider live(ConstraintSource::WikidataLive, sets);
  const std::vector<const ConstraintProvider*> providers = {&live};
  const auto out = resolve_many(ids, providers, {}, 3);
  REQUIRE(out.size() == ids.size());
  CHECK(live.max_in_flight() <= 3);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == "P7") {
      REQUIRE(std::holds_alternative<Error>(out[i]));
      CHECK(std::get<Error>(out[i]).code() == ErrorCode::kNoFallbackAvailable);
    } else {
      REQUIRE(std::holds_alternative<ResolvedConstraints>(out[i]));
      CHECK(std::get<ResolvedConstraints>(out[i]).set.property_id == ids[i]);
    }
  }
}

TEST_CASE("constraint cache") {
  testing::TempDir dir;
  const auto file = dir / "constraints.json";
  const auto s = set_of("P36", {"area"}, {"city"});

  {
    ConstraintCache cache(file);
    CHECK_FALSE(cache.get("P36").has_value());
    cache.put(s);
    CHECK(cache.get("P36") == s);
    CHECK_FALSE(cache.get("P17").has_value());
  }
  ConstraintCache reopened(file);
  CHECK(reopened.get("P36") == s);

  testing::write_text(file, "{ not json");
  Captured warnings;
  {
    ScopedWarningHandler guard(warnings.handler());
    ConstraintCache corrupt(file);
    CHECK_FALSE(corrupt.get("P36").has_value());
    corrupt.put(s);
  }
  CHECK_FALSE(warnings.lines.empty());
  CHECK(ConstraintCache(file).get("P36") == s);
}

TEST_CASE("cache is safe under concurrent puts") {
  testing::TempDir dir;
  ConstraintCache cache(dir / "c.json");
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < 4; ++t) {
      threads.emplace_back([&, t] {
        for (int i = 0; i < 10; ++i) {
          const std::string id = "P" + std::to_string(t * 100 + i);
          cache.put(set_of(id, {"d"}, {"r"}));
        }
      });
    }
  }
  CHECK(cache.entries().size() == 40);
}

TEST_CASE("fixture provider and manual defaults files") {
  const auto fixture = testing::fixture_dir() / "constraints_fixture.json";
  FixtureProvider provider(fixture);
  const auto s = provider.fetch("P1376");
  CHECK(labels(s.domain) == std::vector<std::string>{"city", "capital"});
  CHECK(s.source == ConstraintSource::FileFixture);
  CHECK_THROWS_WITH_AS(provider.fetch("P47"), doctest::Contains("EmptyConstraint"),
                       Error);

  testing::TempDir dir;
  testing::write_text(dir / "manual.json",
                      R"({"P47": {"domain": "country", "range": "country"}})");
  const auto manual = load_manual_defaults(dir / "manual.json");
  CHECK(manual.at("P47").domain == "country");
  testing::write_text(dir / "bad.json", R"({"P47": {"domain": "country"}})");
  CHECK_THROWS_AS(load_manual_defaults(dir / "bad.json"), Error);
}

TEST_CASE("relation spec deduplicates labels case-insensitively") {
  ResolvedConstraints r;
  r.set = set_of("P1", {"City", "city", "town"}, {"country"});
  r.set.domain[1].class_id = "Q2";
  const auto spec = to_relation_spec("P1", "is in", r);
  CHECK(spec.domain_types == std::vector<std::string>{"City", "town"});
}
