#include "conpare/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json_codec.hpp"

namespace conpare {
namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kUnreadableFile,
                "cannot open '" + path.string() + "'");
  }
  return in;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

FieldMap load_field_map(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const Json doc =
      parse_json(ss.str(), ErrorCode::kInvalidArgument, path.string());
  FieldMap fields;
  fields.sub_field = doc.value("sub_field", fields.sub_field);
  fields.obj_field = doc.value("obj_field", fields.obj_field);
  fields.rel_field = doc.value("rel_field", fields.rel_field);
  return fields;
}

std::map<std::string, Grouping> load_relation_groupings(
    const std::filesystem::path& path) {
  auto in = open_input(path);
  std::map<std::string, Grouping> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (trim(line).empty()) continue;
    const Json doc = parse_json(line, ErrorCode::kSchemaMismatch,
                                path.string() + ":" + std::to_string(line_no));
    if (!doc.contains("relation") || !doc.contains("type")) {
      throw Error(ErrorCode::kSchemaMismatch,
                  path.string() + ":" + std::to_string(line_no) +
                      ": relation metadata needs 'relation' and 'type'");
    }
    out[doc["relation"].get<std::string>()] =
        parse_grouping(doc["type"].get<std::string>());
  }
  return out;
}

LoadResult load_triples(const std::filesystem::path& path, Corpus corpus,
                        const FieldMap& fields,
                        const std::map<std::string, Grouping>& groupings) {
  auto in = open_input(path);
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (trim(line).empty()) continue;
    const auto fail = [&](ErrorCode code, std::string message) {
      result.errors.push_back({line_no, code, std::move(message)});
    };
    Json doc;
    try {
      doc = Json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kSchemaMismatch, std::string("invalid JSON: ") + e.what());
      continue;
    }
    std::vector<std::string> missing;
    for (const auto* field : {&fields.sub_field, &fields.obj_field,
                              &fields.rel_field}) {
      if (!doc.is_object() || !doc.contains(*field) ||
          !doc[*field].is_string()) {
        missing.push_back(*field);
      }
    }
    if (!missing.empty()) {
      std::string msg = "missing field";
      for (const auto& m : missing) msg += " '" + m + "'";
      fail(ErrorCode::kSchemaMismatch, msg);
      continue;
    }
    const std::string rel = doc[fields.rel_field].get<std::string>();
    std::optional<Grouping> grouping;
    if (corpus == Corpus::TREx) {
      const auto it = groupings.find(rel);
      if (it == groupings.end()) {
        fail(ErrorCode::kSchemaMismatch,
             "no grouping metadata for TREx relation '" + rel + "'");
        continue;
      }
      grouping = it->second;
    }
    try {
      result.triples.push_back(make_triple(doc[fields.sub_field].get<std::string>(),
                                           rel,
                                           doc[fields.obj_field].get<std::string>(),
                                           corpus, grouping));
    } catch (const Error& e) {
      fail(e.code(), e.what());
    }
  }
  return result;
}

void require_clean(const LoadResult& result, const std::string& source) {
  if (result.errors.empty()) return;
  std::string msg = source + ": " + std::to_string(result.errors.size()) +
                    " malformed line(s):";
  std::size_t shown = 0;
  for (const auto& e : result.errors) {
    if (++shown > 20) {
      msg += " ...";
      break;
    }
    msg += " " + std::to_string(e.line) + " (" + e.message + ");";
  }
  throw Error(ErrorCode::kSchemaMismatch, msg);
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  auto in = open_input(path);
  Vocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    vocab.insert(line);
  }
  return vocab;
}

FilterResult filter_by_vocab(std::span<const KnowledgeTriple> triples,
                             std::span<const Vocabulary> vocabularies) {
  if (vocabularies.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "vocabulary filtering needs at least one vocabulary");
  }
  FilterResult out;
  for (const auto& t : triples) {
    bool everywhere = true;
    for (const auto& v : vocabularies) {
      if (!v.contains(t.object)) {
        everywhere = false;
        break;
      }
    }
    (everywhere ? out.kept : out.dropped).push_back(t);
  }
  return out;
}

CorpusStats compute_stats(
    Corpus corpus, std::span<const KnowledgeTriple> triples,
    const std::map<std::string, TypeConstraintSet>& constraints) {
  struct RelationInfo {
    std::string group;
    std::size_t facts = 0;
    std::size_t n_domain = 0;
    std::size_t n_range = 0;
  };
  std::map<std::string, RelationInfo> relations;
  for (const auto& t : triples) {
    auto [it, inserted] = relations.try_emplace(t.relation_id);
    RelationInfo& info = it->second;
    if (inserted) {
      const auto c = constraints.find(t.relation_id);
      if (c == constraints.end()) {
        throw Error(ErrorCode::kMissingConstraint,
                    "no constraints resolved for relation " + t.relation_id);
      }
      info.n_domain = c->second.domain.size();
      info.n_range = c->second.range.size();
      switch (corpus) {
        case Corpus::TREx:
          if (!t.grouping) {
            throw Error(ErrorCode::kInvalidTriple,
                        "TREx triple without grouping: " + triple_key(t));
          }
          info.group = std::string(to_string(*t.grouping));
          break;
        case Corpus::GoogleRE:
          info.group = t.relation_id;
          break;
        case Corpus::ConceptNet:
          break;
      }
    }
    ++info.facts;
  }

  const auto summarize = [](std::string name, auto&& members) {
    StatsRow row{std::move(name)};
    double dom = 0.0;
    double rng = 0.0;
    for (const RelationInfo* info : members) {
      ++row.n_relations;
      row.n_facts += info->facts;
      dom += static_cast<double>(info->n_domain);
      rng += static_cast<double>(info->n_range);
    }
    if (row.n_relations > 0) {
      row.mean_domain_types = dom / static_cast<double>(row.n_relations);
      row.mean_range_types = rng / static_cast<double>(row.n_relations);
    }
    return row;
  };

  CorpusStats stats{corpus, {}};
  std::vector<const RelationInfo*> all;
  for (const auto& [id, info] : relations) all.push_back(&info);

  if (corpus != Corpus::ConceptNet) {
    std::vector<std::string> groups;
    if (corpus == Corpus::TREx) {
      for (Grouping g : {Grouping::OneToOne, Grouping::NToOne, Grouping::NToM}) {
        groups.emplace_back(to_string(g));
      }
    } else {
      for (const auto& [id, info] : relations) groups.push_back(id);
    }
    for (const auto& g : groups) {
      std::vector<const RelationInfo*> members;
      for (const auto* info : all) {
        if (info->group == g) members.push_back(info);
      }
      if (!members.empty()) stats.rows.push_back(summarize(g, members));
    }
  }
  stats.rows.push_back(summarize("Total", all));
  return stats;
}

std::string stats_to_csv(const CorpusStats& stats) {
  std::ostringstream out;
  out << "Corpus,Grouping,#Relations,#Facts,Dom,Rng\n";
  for (const auto& row : stats.rows) {
    out << to_string(stats.corpus) << ',' << row.group << ','
        << row.n_relations << ',' << row.n_facts << ','
        << format_double(row.mean_domain_types, 1) << ','
        << format_double(row.mean_range_types, 1) << '\n';
  }
  return out.str();
}

void write_triples_jsonl(const std::filesystem::path& path,
                         std::span<const KnowledgeTriple> triples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& t : triples) out << Json(t).dump() << '\n';
  if (!out) {
    throw Error(ErrorCode::kUnreadableFile,
                "cannot write '" + path.string() + "'");
  }
}

std::vector<KnowledgeTriple> read_triples_jsonl(
    const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<KnowledgeTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const Json doc = parse_json(line, ErrorCode::kSchemaMismatch, where);
    try {
      out.push_back(doc.get<KnowledgeTriple>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kSchemaMismatch, where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace conpare
