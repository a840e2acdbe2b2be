#pragma once

// Meta-template rendering. Every prompt keeps subject, relation text and the
// masked object in the main clause; supplementary type information is added
// either as clauses (compound: "is a d and", complex: ", which is a r") or
// as appositives ("The d S", "the r [MASK]").

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "conpare/domain.hpp"

namespace conpare {

// Placement of the range appositive. PreNominal: "S R the r [MASK]."
// PostNominal: "S R [MASK], a r."
enum class AppositiveRangeStyle { PreNominal, PostNominal };

AppositiveRangeStyle parse_appositive_range_style(std::string_view name);

struct RenderOptions {
  AppositiveRangeStyle appositive_range = AppositiveRangeStyle::PreNominal;
};

struct PromptInstance {
  std::string triple_key;
  PromptType prompt_type = PromptType::Simple;
  std::string text;
  std::optional<std::string> domain_type_used;
  std::optional<std::string> range_type_used;

  friend bool operator==(const PromptInstance&,
                         const PromptInstance&) = default;
};

// "an" for labels whose first letter is a vowel, "a" otherwise. Words opening
// with a consonant sound despite the vowel letter ("European", "university",
// "one") take "a".
std::string article_for(std::string_view type_label);

PromptInstance render(const KnowledgeTriple& triple, const RelationSpec& spec,
                      PromptType type,
                      const std::optional<std::string>& domain_type,
                      const std::optional<std::string>& range_type,
                      const RenderOptions& options = {});

// 1 + 2|D| + 2|R| + 2|D||R|
std::size_t family_size(std::size_t n_domain, std::size_t n_range);

// Visits the full expansion in a fixed order: simple; compound and
// appositive-domain per domain type; complex and appositive-range per range
// type; compound-complex and appositive-both per (domain, range) pair.
void for_each_in_family(const KnowledgeTriple& triple, const RelationSpec& spec,
                        const std::vector<std::string>& domain_types,
                        const std::vector<std::string>& range_types,
                        const std::function<void(PromptInstance&&)>& visit,
                        const RenderOptions& options = {});

std::vector<PromptInstance> render_family(
    const KnowledgeTriple& triple, const RelationSpec& spec,
    const std::vector<std::string>& domain_types,
    const std::vector<std::string>& range_types,
    const RenderOptions& options = {});

std::size_t count_mask(std::string_view text);

}  // namespace conpare
