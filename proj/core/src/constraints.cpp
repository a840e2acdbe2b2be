#include "conpare/constraints.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "conpare/log.hpp"
#include "http.hpp"
#include "json_codec.hpp"

namespace conpare {
namespace {

Timestamp now_seconds() {
  return std::chrono::floor<std::chrono::seconds>(
      std::chrono::system_clock::now());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kUnreadableFile,
                "cannot open '" + path.string() + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Last path segment of an entity URI ("http://www.wikidata.org/entity/Q5").
std::string entity_id(const std::string& uri) {
  const auto slash = uri.rfind('/');
  return slash == std::string::npos ? uri : uri.substr(slash + 1);
}

std::string concept_id(const std::string& concept_label) {
  std::string id = "/c/en/";
  for (char c : concept_label) id.push_back(c == ' ' ? '_' : c);
  return id;
}

std::vector<TypeConstraint> concept_side(
    const std::string& seed, std::span<const ConceptGraphEdge> edges) {
  std::vector<TypeConstraint> out;
  std::set<std::string> seen;
  for (const auto& c : derive_from_concept_graph(seed, edges)) {
    std::string label = normalize_type_label(c);
    if (label.empty() || !seen.insert(label).second) continue;
    out.push_back({label, concept_id(label)});
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Concept graph

EdgeLabel parse_edge_label(std::string_view label) {
  std::string norm;
  for (char c : label) {
    if (c == '/' || c == '_' || c == ' ') continue;
    norm.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  // Accepts "RelatedTo", "related to", "/r/RelatedTo".
  if (norm == "relatedto" || norm == "rrelatedto") return EdgeLabel::RelatedTo;
  if (norm == "definedby" || norm == "rdefinedby") return EdgeLabel::DefinedBy;
  return EdgeLabel::Other;
}

std::vector<ConceptGraphEdge> load_concept_graph(
    const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<ConceptGraphEdge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos;
         start = tab + 1) {
      fields.push_back(line.substr(start, tab - start));
    }
    fields.push_back(line.substr(start));
    if (fields.size() != 3) {
      warn(path.string() + ":" + std::to_string(line_no) +
           ": expected 3 tab-separated fields, skipped");
      continue;
    }
    ConceptGraphEdge edge{trim(fields[0]), parse_edge_label(trim(fields[1])),
                          trim(fields[2]), trim(fields[1])};
    if (edge.source_concept.empty() || edge.target_concept.empty()) {
      warn(path.string() + ":" + std::to_string(line_no) +
           ": empty concept, skipped");
      continue;
    }
    if (edge.source_concept == edge.target_concept) {
      warn(path.string() + ":" + std::to_string(line_no) +
           ": self-loop on '" + edge.source_concept + "', skipped");
      continue;
    }
    edges.push_back(std::move(edge));
  }
  return edges;
}

std::vector<std::string> derive_from_concept_graph(
    const std::string& seed_concept, std::span<const ConceptGraphEdge> edges) {
  if (seed_concept.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty seed concept");
  }
  std::vector<std::string> out{seed_concept};
  std::set<std::string> seen{seed_concept};
  bool seed_known = false;
  for (const auto& e : edges) {
    if (e.source_concept == seed_concept || e.target_concept == seed_concept) {
      seed_known = true;
    }
    if (e.source_concept != seed_concept) continue;
    if (e.edge_label == EdgeLabel::Other) continue;
    if (seen.insert(e.target_concept).second) out.push_back(e.target_concept);
  }
  if (!seed_known) {
    warn(std::string(to_string(ErrorCode::kUnknownSeed)) + ": concept '" +
         seed_concept + "' appears in no edge; using the seed alone");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wikidata

bool is_property_id(std::string_view id) {
  if (id.size() < 2 || id[0] != 'P') return false;
  return std::all_of(id.begin() + 1, id.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) != 0;
  });
}

std::string sparql_constraint_query(const std::string& property_id) {
  return "SELECT ?constraint ?class ?classLabel WHERE {\n"
         "  VALUES ?constraint { wd:" +
         std::string(kSubjectTypeConstraint) + " wd:" +
         std::string(kValueTypeConstraint) +
         " }\n"
         "  wd:" +
         property_id +
         " p:P2302 ?statement .\n"
         "  ?statement ps:P2302 ?constraint ;\n"
         "             pq:P2308 ?class .\n"
         "  OPTIONAL { ?class rdfs:label ?classLabel . "
         "FILTER(LANG(?classLabel) = \"en\") }\n"
         "}\n";
}

TypeConstraintSet parse_sparql_constraints(const std::string& property_id,
                                           std::string_view json_body,
                                           Timestamp fetched_at) {
  const Json doc = parse_json(json_body, ErrorCode::kMalformedResponse,
                              "SPARQL result for " + property_id);
  if (!doc.contains("results") || !doc["results"].contains("bindings") ||
      !doc["results"]["bindings"].is_array()) {
    throw Error(ErrorCode::kMalformedResponse,
                "SPARQL result for " + property_id + " lacks results.bindings");
  }
  TypeConstraintSet set;
  set.property_id = property_id;
  set.source = ConstraintSource::WikidataLive;
  set.fetched_at = fetched_at;
  std::set<std::string> domain_ids;
  std::set<std::string> range_ids;
  try {
    for (const auto& b : doc["results"]["bindings"]) {
      const std::string kind =
          entity_id(b.at("constraint").at("value").get<std::string>());
      const std::string cls =
          entity_id(b.at("class").at("value").get<std::string>());
      const bool is_domain = kind == kSubjectTypeConstraint;
      if (!is_domain && kind != kValueTypeConstraint) continue;
      auto& ids = is_domain ? domain_ids : range_ids;
      auto& side = is_domain ? set.domain : set.range;
      if (ids.count(cls)) continue;
      if (!b.contains("classLabel")) {
        warn(property_id + ": class " + cls +
             " has no English label, skipped");
        continue;
      }
      std::string label =
          normalize_type_label(b["classLabel"].at("value").get<std::string>());
      if (label.empty()) continue;
      ids.insert(cls);
      side.push_back({std::move(label), cls});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedResponse,
                "SPARQL binding for " + property_id + ": " + e.what());
  }
  if (set.domain.empty() && set.range.empty()) {
    throw Error(ErrorCode::kEmptyConstraint,
                property_id + " has no subject/value type constraints");
  }
  return set;
}

TypeConstraintSet fetch_wikidata_constraints(const std::string& property_id,
                                             const std::string& endpoint_url,
                                             const FetchOptions& options) {
  if (!is_property_id(property_id)) {
    throw Error(ErrorCode::kInvalidArgument,
                "'" + property_id + "' is not a Wikidata property id");
  }
  const http::Params query{{"query", sparql_constraint_query(property_id)},
                           {"format", "json"}};
  const http::Params headers{{"Accept", "application/sparql-results+json"},
                             {"User-Agent", options.user_agent}};
  std::string last_error;
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          http::backoff_delay(options.initial_backoff, attempt - 1));
    }
    const http::Response resp =
        http::get(endpoint_url, query, headers, options.timeout);
    if (resp.status == 200) {
      return parse_sparql_constraints(property_id, resp.body, now_seconds());
    }
    if (resp.transport_failed()) {
      last_error = resp.error;
      continue;
    }
    last_error = "HTTP " + std::to_string(resp.status);
    const bool retryable = resp.status == 429 || resp.status >= 500;
    if (!retryable) break;
  }
  throw Error(ErrorCode::kNetworkError,
              endpoint_url + " (" + property_id + "): " + last_error);
}

std::optional<std::string> googlere_to_wikidata(std::string_view relation) {
  const auto slash = relation.rfind('/');
  const std::string_view name =
      slash == std::string_view::npos ? relation : relation.substr(slash + 1);
  if (name == "place_of_birth") return "P19";
  if (name == "place_of_death") return "P20";
  if (name == "date_of_birth") return "P569";
  return std::nullopt;
}

namespace {

std::string wikidata_id_for(const std::string& relation_id) {
  if (is_property_id(relation_id)) return relation_id;
  if (auto mapped = googlere_to_wikidata(relation_id)) return *mapped;
  return relation_id;
}

}  // namespace

WikidataProvider::WikidataProvider(std::string endpoint_url,
                                   FetchOptions options)
    : endpoint_(std::move(endpoint_url)), options_(std::move(options)) {}

TypeConstraintSet WikidataProvider::fetch(
    const std::string& relation_id) const {
  const std::string pid = wikidata_id_for(relation_id);
  if (!is_property_id(pid)) {
    throw Error(ErrorCode::kEmptyConstraint,
                relation_id + " has no Wikidata counterpart");
  }
  TypeConstraintSet set = fetch_wikidata_constraints(pid, endpoint_, options_);
  set.property_id = relation_id;
  return set;
}

FixtureProvider::FixtureProvider(const std::filesystem::path& path)
    : sets_(constraint_sets_from_json(read_file(path))) {}

TypeConstraintSet FixtureProvider::fetch(const std::string& relation_id) const {
  auto it = sets_.find(relation_id);
  if (it == sets_.end()) it = sets_.find(wikidata_id_for(relation_id));
  if (it == sets_.end()) {
    throw Error(ErrorCode::kEmptyConstraint,
                relation_id + " not present in the fixture");
  }
  TypeConstraintSet set = it->second;
  set.property_id = relation_id;
  set.source = ConstraintSource::FileFixture;
  return set;
}

ConceptGraphProvider::ConceptGraphProvider(std::vector<ConceptGraphEdge> edges,
                                           ManualDefaults seeds)
    : edges_(std::move(edges)), seeds_(std::move(seeds)) {}

TypeConstraintSet ConceptGraphProvider::fetch(
    const std::string& relation_id) const {
  const auto it = seeds_.find(relation_id);
  if (it == seeds_.end()) {
    throw Error(ErrorCode::kEmptyConstraint,
                relation_id + " has no seed concepts");
  }
  TypeConstraintSet set;
  set.property_id = relation_id;
  set.source = ConstraintSource::ConceptGraph;
  set.fetched_at = now_seconds();
  set.domain = concept_side(it->second.domain, edges_);
  set.range = concept_side(it->second.range, edges_);
  return set;
}

// ---------------------------------------------------------------------------
// Resolution

ResolvedConstraints resolve_constraints(
    const std::string& relation_id,
    std::span<const ConstraintProvider* const> providers,
    const ManualDefaults& manual_defaults, bool network_errors_fatal) {
  std::optional<ConstraintSource> domain_source;
  std::optional<ConstraintSource> range_source;
  ResolvedConstraints out;
  out.set.property_id = relation_id;

  for (const ConstraintProvider* provider : providers) {
    if (domain_source && range_source) break;
    TypeConstraintSet fetched;
    try {
      fetched = provider->fetch(relation_id);
    } catch (const Error& e) {
      switch (e.code()) {
        case ErrorCode::kNetworkError:
        case ErrorCode::kMalformedResponse:
          if (network_errors_fatal) throw;
          warn(relation_id + ": " + std::string(to_string(provider->kind())) +
               " source failed: " + e.what());
          continue;
        case ErrorCode::kEmptyConstraint:
          continue;
        default:
          throw;
      }
    }
    if (!domain_source && !fetched.domain.empty()) {
      out.set.domain = std::move(fetched.domain);
      domain_source = provider->kind();
      out.set.fetched_at = std::max(out.set.fetched_at, fetched.fetched_at);
    }
    if (!range_source && !fetched.range.empty()) {
      out.set.range = std::move(fetched.range);
      range_source = provider->kind();
      out.set.fetched_at = std::max(out.set.fetched_at, fetched.fetched_at);
    }
  }

  if (!domain_source || !range_source) {
    const auto it = manual_defaults.find(relation_id);
    if (it == manual_defaults.end()) {
      throw Error(ErrorCode::kNoFallbackAvailable,
                  relation_id + ": no source provided " +
                      (domain_source ? "range" : "domain") +
                      " types and no manual default exists");
    }
    const auto manual = [](const std::string& label) {
      const std::string norm = normalize_type_label(label);
      return std::vector<TypeConstraint>{{norm, "manual:" + norm}};
    };
    if (!domain_source) {
      out.set.domain = manual(it->second.domain);
      domain_source = ConstraintSource::Manual;
    }
    if (!range_source) {
      out.set.range = manual(it->second.range);
      range_source = ConstraintSource::Manual;
    }
    out.manual_fallback = true;
    if (out.set.fetched_at == Timestamp{}) out.set.fetched_at = now_seconds();
  }
  out.set.source = *domain_source;
  validate(out.set);
  return out;
}

std::vector<ResolveOutcome> resolve_many(
    std::span<const std::string> relation_ids,
    std::span<const ConstraintProvider* const> providers,
    const ManualDefaults& manual_defaults, std::size_t max_in_flight,
    bool network_errors_fatal) {
  std::vector<std::optional<ResolveOutcome>> slots(relation_ids.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < relation_ids.size();) {
      try {
        slots[i].emplace(
            resolve_constraints(relation_ids[i], providers, manual_defaults,
                                network_errors_fatal));
      } catch (const Error& e) {
        slots[i].emplace(e);
      }
    }
  };
  const std::size_t n_threads =
      std::max<std::size_t>(1, std::min(max_in_flight, relation_ids.size()));
  {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  }
  std::vector<ResolveOutcome> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

bool has_manual_entries(const TypeConstraintSet& set) {
  const auto manual = [](const TypeConstraint& c) {
    return c.class_id.starts_with("manual:");
  };
  return std::any_of(set.domain.begin(), set.domain.end(), manual) ||
         std::any_of(set.range.begin(), set.range.end(), manual);
}

RelationSpec to_relation_spec(const std::string& relation_id,
                              const std::string& relation_text,
                              const ResolvedConstraints& resolved) {
  const auto unique_labels = [](const std::vector<TypeConstraint>& side) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& c : side) {
      if (seen.insert(ascii_lower(c.label)).second) out.push_back(c.label);
    }
    return out;
  };
  RelationSpec spec{relation_id, collapse_whitespace(relation_text),
                    unique_labels(resolved.set.domain),
                    unique_labels(resolved.set.range),
                    resolved.manual_fallback};
  validate(spec);
  return spec;
}

// ---------------------------------------------------------------------------
// Cache and file formats

std::string constraint_sets_to_json(
    const std::map<std::string, TypeConstraintSet>& sets) {
  Json doc = Json::object();
  for (const auto& [pid, set] : sets) doc[pid] = set;
  return doc.dump(2) + "\n";
}

std::map<std::string, TypeConstraintSet> constraint_sets_from_json(
    std::string_view text) {
  const Json doc =
      parse_json(text, ErrorCode::kCorruptCache, "constraint document");
  if (!doc.is_object()) {
    throw Error(ErrorCode::kCorruptCache,
                "constraint document must be a JSON object");
  }
  std::map<std::string, TypeConstraintSet> out;
  try {
    for (const auto& [pid, value] : doc.items()) {
      TypeConstraintSet set = value.get<TypeConstraintSet>();
      validate(set);
      out.emplace(pid, std::move(set));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptCache, e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorruptCache, e.what());
  }
  return out;
}

ConstraintCache::ConstraintCache(std::filesystem::path file)
    : file_(std::move(file)) {}

std::map<std::string, TypeConstraintSet> ConstraintCache::load_locked() const {
  if (!std::filesystem::exists(file_)) return {};
  try {
    return constraint_sets_from_json(read_file(file_));
  } catch (const Error& e) {
    warn("constraint cache '" + file_.string() +
         "' is unreadable, treating as empty: " + e.what());
    return {};
  }
}

void ConstraintCache::store_locked(
    const std::map<std::string, TypeConstraintSet>& all) const {
  if (file_.has_parent_path()) {
    std::filesystem::create_directories(file_.parent_path());
  }
  const std::filesystem::path tmp = file_.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << constraint_sets_to_json(all);
    if (!out) {
      throw Error(ErrorCode::kUnreadableFile,
                  "cannot write cache '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, file_);
}

std::optional<TypeConstraintSet> ConstraintCache::get(
    const std::string& property_id) const {
  std::lock_guard lock(mutex_);
  auto all = load_locked();
  const auto it = all.find(property_id);
  if (it == all.end()) return std::nullopt;
  return it->second;
}

void ConstraintCache::put(const TypeConstraintSet& set) {
  validate(set);
  std::lock_guard lock(mutex_);
  auto all = load_locked();
  all[set.property_id] = set;
  store_locked(all);
}

std::map<std::string, TypeConstraintSet> ConstraintCache::entries() const {
  std::lock_guard lock(mutex_);
  return load_locked();
}

ManualDefaults load_manual_defaults(const std::filesystem::path& path) {
  const Json doc = parse_json(read_file(path), ErrorCode::kInvalidArgument,
                              path.string());
  ManualDefaults out;
  try {
    for (const auto& [rel, value] : doc.items()) {
      out[rel] = ManualDefault{value.at("domain").get<std::string>(),
                               value.at("range").get<std::string>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument,
                path.string() + ": manual defaults need {domain, range}: " +
                    e.what());
  }
  return out;
}

}  // namespace conpare
