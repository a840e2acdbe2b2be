#include "conpare/domain.hpp"

#include <cctype>
#include <cstdio>
#include <ctime>
#include <set>

#include "conpare/error.hpp"

namespace conpare {

std::string_view to_string(Corpus corpus) {
  switch (corpus) {
    case Corpus::TREx: return "TREx";
    case Corpus::GoogleRE: return "GoogleRE";
    case Corpus::ConceptNet: return "ConceptNet";
  }
  return "?";
}

std::string_view to_string(Grouping grouping) {
  switch (grouping) {
    case Grouping::OneToOne: return "1:1";
    case Grouping::NToOne: return "N:1";
    case Grouping::NToM: return "N:M";
  }
  return "?";
}

Corpus parse_corpus(std::string_view name) {
  const std::string lower = ascii_lower(name);
  if (lower == "trex") return Corpus::TREx;
  if (lower == "googlere" || lower == "google_re") return Corpus::GoogleRE;
  if (lower == "conceptnet") return Corpus::ConceptNet;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown corpus '" + std::string(name) + "'");
}

Grouping parse_grouping(std::string_view name) {
  if (name == "1:1" || name == "1-1") return Grouping::OneToOne;
  if (name == "N:1" || name == "N-1") return Grouping::NToOne;
  if (name == "N:M" || name == "N-M") return Grouping::NToM;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown grouping '" + std::string(name) + "'");
}

KnowledgeTriple make_triple(std::string subject, std::string relation_id,
                            std::string object, Corpus corpus,
                            std::optional<Grouping> grouping) {
  KnowledgeTriple t{trim(subject), trim(relation_id), trim(object), corpus,
                    grouping};
  if (t.subject.empty()) {
    throw Error(ErrorCode::kInvalidTriple, "empty subject");
  }
  if (t.object.empty()) {
    throw Error(ErrorCode::kInvalidTriple, "empty object");
  }
  if (t.relation_id.empty()) {
    throw Error(ErrorCode::kInvalidTriple, "empty relation id");
  }
  if ((corpus == Corpus::TREx) != grouping.has_value()) {
    throw Error(ErrorCode::kInvalidTriple,
                corpus == Corpus::TREx
                    ? "TREx triple without grouping (relation " +
                          t.relation_id + ")"
                    : "grouping is only defined for TREx triples");
  }
  return t;
}

std::string triple_key(const KnowledgeTriple& triple) {
  return triple.relation_id + "|" + triple.subject + "|" + triple.object;
}

SyntaxFamily syntax_family(PromptType type) {
  switch (type) {
    case PromptType::Simple:
      return SyntaxFamily::None;
    case PromptType::Compound:
    case PromptType::Complex:
    case PromptType::CompoundComplex:
      return SyntaxFamily::Clausal;
    case PromptType::AppositiveDomain:
    case PromptType::AppositiveRange:
    case PromptType::AppositiveBoth:
      return SyntaxFamily::Appositive;
  }
  return SyntaxFamily::None;
}

InfoContent info_content(PromptType type) {
  switch (type) {
    case PromptType::Simple:
      return InfoContent::None;
    case PromptType::Compound:
    case PromptType::AppositiveDomain:
      return InfoContent::Domain;
    case PromptType::Complex:
    case PromptType::AppositiveRange:
      return InfoContent::Range;
    case PromptType::CompoundComplex:
    case PromptType::AppositiveBoth:
      return InfoContent::Both;
  }
  return InfoContent::None;
}

PromptType prompt_type_for(SyntaxFamily family, InfoContent info) {
  for (PromptType t : kAllPromptTypes) {
    if (syntax_family(t) == family && info_content(t) == info) return t;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "no prompt type for (" + std::string(to_string(family)) + ", " +
                  std::string(to_string(info)) + ")");
}

bool uses_domain(PromptType type) {
  const InfoContent info = info_content(type);
  return info == InfoContent::Domain || info == InfoContent::Both;
}

bool uses_range(PromptType type) {
  const InfoContent info = info_content(type);
  return info == InfoContent::Range || info == InfoContent::Both;
}

std::string_view to_string(PromptType type) {
  switch (type) {
    case PromptType::Simple: return "simple";
    case PromptType::Compound: return "compound";
    case PromptType::Complex: return "complex";
    case PromptType::CompoundComplex: return "compound_complex";
    case PromptType::AppositiveDomain: return "appositive_domain";
    case PromptType::AppositiveRange: return "appositive_range";
    case PromptType::AppositiveBoth: return "appositive_both";
  }
  return "?";
}

std::string_view to_string(SyntaxFamily family) {
  switch (family) {
    case SyntaxFamily::None: return "none";
    case SyntaxFamily::Clausal: return "clausal";
    case SyntaxFamily::Appositive: return "appositive";
  }
  return "?";
}

std::string_view to_string(InfoContent info) {
  switch (info) {
    case InfoContent::None: return "none";
    case InfoContent::Domain: return "domain";
    case InfoContent::Range: return "range";
    case InfoContent::Both: return "both";
  }
  return "?";
}

std::string_view to_string(Slot slot) {
  return slot == Slot::Domain ? "domain" : "range";
}

PromptType parse_prompt_type(std::string_view name) {
  for (PromptType t : kAllPromptTypes) {
    if (to_string(t) == name) return t;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown prompt type '" + std::string(name) + "'");
}

SyntaxFamily parse_syntax_family(std::string_view name) {
  if (name == "clausal") return SyntaxFamily::Clausal;
  if (name == "appositive") return SyntaxFamily::Appositive;
  if (name == "none") return SyntaxFamily::None;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown syntax family '" + std::string(name) + "'");
}

namespace {

void check_unique_casefolded(const std::vector<std::string>& values,
                             const std::string& what,
                             const std::string& relation) {
  std::set<std::string> seen;
  for (const auto& v : values) {
    if (!seen.insert(ascii_lower(v)).second) {
      throw Error(ErrorCode::kInvalidRelationSpec,
                  relation + ": duplicate " + what + " type '" + v + "'");
    }
  }
}

}  // namespace

void validate(const RelationSpec& spec) {
  const std::string& id = spec.relation_id;
  if (id.empty()) {
    throw Error(ErrorCode::kInvalidRelationSpec, "empty relation id");
  }
  if (trim(spec.relation_text).empty()) {
    throw Error(ErrorCode::kInvalidRelationSpec, id + ": empty relation text");
  }
  if (spec.relation_text.find(kMask) != std::string::npos) {
    throw Error(ErrorCode::kInvalidRelationSpec,
                id + ": relation text contains the mask placeholder");
  }
  if (spec.domain_types.empty() || spec.range_types.empty()) {
    throw Error(ErrorCode::kInvalidRelationSpec,
                id + ": domain and range types must be non-empty");
  }
  for (const auto* side : {&spec.domain_types, &spec.range_types}) {
    for (const auto& label : *side) {
      if (trim(label).empty()) {
        throw Error(ErrorCode::kInvalidRelationSpec, id + ": empty type label");
      }
    }
  }
  check_unique_casefolded(spec.domain_types, "domain", id);
  check_unique_casefolded(spec.range_types, "range", id);
}

std::string_view to_string(ConstraintSource source) {
  switch (source) {
    case ConstraintSource::WikidataLive: return "wikidata";
    case ConstraintSource::FileFixture: return "fixture";
    case ConstraintSource::ConceptGraph: return "concept_graph";
    case ConstraintSource::Manual: return "manual";
  }
  return "?";
}

ConstraintSource parse_constraint_source(std::string_view name) {
  if (name == "wikidata") return ConstraintSource::WikidataLive;
  if (name == "fixture") return ConstraintSource::FileFixture;
  if (name == "concept_graph" || name == "concept") {
    return ConstraintSource::ConceptGraph;
  }
  if (name == "manual") return ConstraintSource::Manual;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown constraint source '" + std::string(name) + "'");
}

bool same_constraints(const TypeConstraintSet& a, const TypeConstraintSet& b) {
  return a.property_id == b.property_id && a.domain == b.domain &&
         a.range == b.range && a.source == b.source;
}

void validate(const TypeConstraintSet& set) {
  for (const auto* side : {&set.domain, &set.range}) {
    std::set<std::string> ids;
    for (const auto& c : *side) {
      if (!ids.insert(c.class_id).second) {
        throw Error(ErrorCode::kInvalidArgument,
                    set.property_id + ": duplicate class id " + c.class_id);
      }
    }
  }
  if (set.source == ConstraintSource::Manual &&
      (set.domain.empty() || set.range.empty())) {
    throw Error(ErrorCode::kInvalidArgument,
                set.property_id + ": manual constraint set with an empty side");
  }
}

std::vector<std::string> labels(const std::vector<TypeConstraint>& side) {
  std::vector<std::string> out;
  out.reserve(side.size());
  for (const auto& c : side) out.push_back(c.label);
  return out;
}

std::string trim(std::string_view text) {
  const auto is_space = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
  };
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && is_space(text[b])) ++b;
  while (e > b && is_space(text[e - 1])) --e;
  return std::string(text.substr(b, e - b));
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_space = false;
  for (char c : trim(text)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space) out.push_back(' ');
    in_space = false;
    out.push_back(c);
  }
  return out;
}

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string normalize_type_label(std::string_view label) {
  std::string out = ascii_lower(collapse_whitespace(label));
  for (std::string_view article : {"a ", "an ", "the "}) {
    if (out.size() > article.size() && out.starts_with(article)) {
      out.erase(0, article.size());
      break;
    }
  }
  return out;
}

std::string format_timestamp(Timestamp ts) {
  const std::time_t t = ts.time_since_epoch().count();
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Timestamp parse_timestamp(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  const std::string str(text);
  if (std::sscanf(str.c_str(), "%d-%d-%dT%d:%d:%dZ", &y, &mo, &d, &h, &mi,
                  &s) != 6) {
    throw Error(ErrorCode::kInvalidArgument, "bad timestamp '" + str + "'");
  }
  using namespace std::chrono;
  const sys_days day = year{y} / month{static_cast<unsigned>(mo)} /
                       std::chrono::day{static_cast<unsigned>(d)};
  return Timestamp{day.time_since_epoch() + hours{h} + minutes{mi} +
                   seconds{s}};
}

std::uint64_t stable_hash(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string stable_hash_hex(std::string_view data) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(stable_hash(data)));
  return buf;
}

}  // namespace conpare
