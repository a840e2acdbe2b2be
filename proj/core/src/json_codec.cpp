#include "json_codec.hpp"

#include <cmath>
#include <cstdio>

namespace conpare {

Json parse_json(std::string_view text, ErrorCode code,
                const std::string& context) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(code, context + ": " + e.what());
  }
}

void to_json(Json& j, const TypeConstraint& c) {
  j = Json{{"label", c.label}, {"class_id", c.class_id}};
}

void from_json(const Json& j, TypeConstraint& c) {
  c.label = j.at("label").get<std::string>();
  c.class_id = j.at("class_id").get<std::string>();
}

void to_json(Json& j, const TypeConstraintSet& s) {
  j = Json{{"property_id", s.property_id},
           {"domain", s.domain},
           {"range", s.range},
           {"source", std::string(to_string(s.source))},
           {"fetched_at", format_timestamp(s.fetched_at)}};
}

void from_json(const Json& j, TypeConstraintSet& s) {
  s.property_id = j.at("property_id").get<std::string>();
  s.domain = j.at("domain").get<std::vector<TypeConstraint>>();
  s.range = j.at("range").get<std::vector<TypeConstraint>>();
  s.source = parse_constraint_source(j.at("source").get<std::string>());
  s.fetched_at = parse_timestamp(j.at("fetched_at").get<std::string>());
}

void to_json(Json& j, const RelationSpec& s) {
  j = Json{{"relation_id", s.relation_id},
           {"relation_text", s.relation_text},
           {"domain_types", s.domain_types},
           {"range_types", s.range_types},
           {"manual_fallback", s.manual_fallback}};
}

void from_json(const Json& j, RelationSpec& s) {
  s.relation_id = j.at("relation_id").get<std::string>();
  s.relation_text = j.at("relation_text").get<std::string>();
  s.domain_types = j.at("domain_types").get<std::vector<std::string>>();
  s.range_types = j.at("range_types").get<std::vector<std::string>>();
  s.manual_fallback = j.at("manual_fallback").get<bool>();
}

void to_json(Json& j, const KnowledgeTriple& t) {
  j = Json{{"subject", t.subject},
           {"relation_id", t.relation_id},
           {"object", t.object},
           {"corpus", std::string(to_string(t.corpus))}};
  if (t.grouping) j["grouping"] = std::string(to_string(*t.grouping));
}

void from_json(const Json& j, KnowledgeTriple& t) {
  std::optional<Grouping> grouping;
  if (j.contains("grouping")) {
    grouping = parse_grouping(j.at("grouping").get<std::string>());
  }
  t = make_triple(j.at("subject").get<std::string>(),
                  j.at("relation_id").get<std::string>(),
                  j.at("object").get<std::string>(),
                  parse_corpus(j.at("corpus").get<std::string>()), grouping);
}

void to_json(Json& j, const PromptInstance& p) {
  j = Json{{"triple_key", p.triple_key},
           {"prompt_type", std::string(to_string(p.prompt_type))},
           {"text", p.text}};
  if (p.domain_type_used) j["domain_type"] = *p.domain_type_used;
  if (p.range_type_used) j["range_type"] = *p.range_type_used;
}

void to_json(Json& j, const ScoreRequest& r) {
  j = Json{{"id", r.id}, {"text", r.text}};
  if (r.gold_token) j["gold_token"] = *r.gold_token;
  j["top_k"] = r.top_k;
}

void from_json(const Json& j, ScoreRequest& r) {
  r.id = j.at("id").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.gold_token.reset();
  if (j.contains("gold_token") && !j.at("gold_token").is_null()) {
    r.gold_token = j.at("gold_token").get<std::string>();
  }
  r.top_k = j.value("top_k", kDefaultTopK);
}

void to_json(Json& j, const ScoreResult& r) {
  Json top = Json::array();
  for (const auto& tp : r.top) top.push_back(Json::array({tp.token, tp.prob}));
  j = Json{{"id", r.id}, {"top", std::move(top)},
           {"entropy_bits", r.entropy_bits}};
  if (r.gold_prob) j["gold_prob"] = *r.gold_prob;
  if (r.gold_rank) j["gold_rank"] = *r.gold_rank;
}

void from_json(const Json& j, ScoreResult& r) {
  r.id = j.at("id").get<std::string>();
  r.top.clear();
  for (const auto& pair : j.at("top")) {
    if (!pair.is_array() || pair.size() != 2) {
      throw Error(ErrorCode::kMalformedResponse,
                  "top entries must be [token, prob] pairs");
    }
    r.top.push_back({pair[0].get<std::string>(), pair[1].get<double>()});
  }
  r.entropy_bits = j.at("entropy_bits").get<double>();
  r.gold_prob.reset();
  r.gold_rank.reset();
  if (j.contains("gold_prob") && !j.at("gold_prob").is_null()) {
    r.gold_prob = j.at("gold_prob").get<double>();
  }
  if (j.contains("gold_rank") && !j.at("gold_rank").is_null()) {
    r.gold_rank = j.at("gold_rank").get<int>();
  }
}

void to_json(Json& j, const EvaluationRecord& r) {
  j = Json{{"triple_key", r.triple_key},
           {"prompt_type", std::string(to_string(r.prompt_type))},
           {"strategy", std::string(to_string(r.strategy))},
           {"predicted_token", r.predicted_token},
           {"correct", r.correct},
           {"gold_prob", r.gold_prob},
           {"top_prob", r.top_prob}};
  if (r.gold_rank) j["gold_rank"] = *r.gold_rank;
  j["entropy_bits"] = r.entropy_bits;
}

void from_json(const Json& j, EvaluationRecord& r) {
  r.triple_key = j.at("triple_key").get<std::string>();
  r.prompt_type = parse_prompt_type(j.at("prompt_type").get<std::string>());
  r.strategy = parse_strategy(j.at("strategy").get<std::string>());
  r.predicted_token = j.at("predicted_token").get<std::string>();
  r.correct = j.at("correct").get<bool>();
  r.gold_prob = j.at("gold_prob").get<double>();
  r.top_prob = j.at("top_prob").get<double>();
  r.gold_rank.reset();
  if (j.contains("gold_rank") && !j.at("gold_rank").is_null()) {
    r.gold_rank = j.at("gold_rank").get<int>();
  }
  r.entropy_bits = j.at("entropy_bits").get<double>();
}

std::string format_double(double value, int digits) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

}  // namespace conpare
