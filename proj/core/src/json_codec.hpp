#pragma once

// nlohmann/json conversions for the interchange types. Internal to the core
// library and its tests; public headers stay JSON-library free.

#include <string>

#include "conpare/constraints.hpp"
#include "conpare/domain.hpp"
#include "conpare/metrics.hpp"
#include "conpare/scorer.hpp"
#include "conpare/templater.hpp"
#include "json.hpp"

namespace conpare {

using Json = nlohmann::ordered_json;

// Wraps nlohmann parse/type errors into a conpare::Error with `code`.
Json parse_json(std::string_view text, ErrorCode code,
                const std::string& context);

void to_json(Json& j, const TypeConstraint& c);
void from_json(const Json& j, TypeConstraint& c);
void to_json(Json& j, const TypeConstraintSet& s);
void from_json(const Json& j, TypeConstraintSet& s);
void to_json(Json& j, const RelationSpec& s);
void from_json(const Json& j, RelationSpec& s);
void to_json(Json& j, const KnowledgeTriple& t);
void from_json(const Json& j, KnowledgeTriple& t);
void to_json(Json& j, const PromptInstance& p);
void to_json(Json& j, const ScoreRequest& r);
void from_json(const Json& j, ScoreRequest& r);
void to_json(Json& j, const ScoreResult& r);
void from_json(const Json& j, ScoreResult& r);
void to_json(Json& j, const EvaluationRecord& r);
void from_json(const Json& j, EvaluationRecord& r);

// Fixed-precision number formatting so artifacts are byte-stable.
std::string format_double(double value, int digits = 6);

}  // namespace conpare
