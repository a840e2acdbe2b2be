#include "conpare/templater.hpp"

#include <cctype>

#include "conpare/error.hpp"

namespace conpare {

AppositiveRangeStyle parse_appositive_range_style(std::string_view name) {
  if (name == "pre") return AppositiveRangeStyle::PreNominal;
  if (name == "post") return AppositiveRangeStyle::PostNominal;
  throw Error(ErrorCode::kInvalidArgument,
              "appositive range style must be 'pre' or 'post', got '" +
                  std::string(name) + "'");
}

std::string article_for(std::string_view type_label) {
  std::string word;
  for (char c : type_label) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!word.empty()) {
      break;
    }
  }
  if (word.empty()) return "a";
  // Vowel letters read with a leading consonant sound.
  for (std::string_view prefix :
       {"eu", "ewe", "uni", "use", "usu", "ura", "ure", "uri", "uti", "one",
        "once"}) {
    if (word.starts_with(prefix)) return "a";
  }
  switch (word.front()) {
    case 'a':
    case 'e':
    case 'i':
    case 'o':
    case 'u':
      return "an";
    default:
      return "a";
  }
}

std::size_t count_mask(std::string_view text) {
  std::size_t n = 0;
  for (auto pos = text.find(kMask); pos != std::string_view::npos;
       pos = text.find(kMask, pos + kMask.size())) {
    ++n;
  }
  return n;
}

namespace {

std::string checked_component(std::string_view value, const char* what) {
  std::string out = collapse_whitespace(value);
  if (out.empty()) {
    throw Error(ErrorCode::kInvalidArgument, std::string("empty ") + what);
  }
  if (out.find(kMask) != std::string::npos) {
    throw Error(ErrorCode::kSurfaceCollision,
                std::string(what) + " '" + out +
                    "' contains the mask placeholder");
  }
  return out;
}

std::optional<std::string> checked_type(PromptType type, bool required,
                                        const std::optional<std::string>& value,
                                        const char* slot) {
  if (required && !value) {
    throw Error(ErrorCode::kMissingTypeArgument,
                std::string(to_string(type)) + " prompt needs a " + slot +
                    " type");
  }
  if (!required && value) {
    throw Error(ErrorCode::kUnexpectedTypeArgument,
                std::string(to_string(type)) + " prompt takes no " + slot +
                    " type");
  }
  if (!value) return std::nullopt;
  return checked_component(*value, slot);
}

}  // namespace

PromptInstance render(const KnowledgeTriple& triple, const RelationSpec& spec,
                      PromptType type,
                      const std::optional<std::string>& domain_type,
                      const std::optional<std::string>& range_type,
                      const RenderOptions& options) {
  const std::string subject = checked_component(triple.subject, "subject");
  const std::string relation =
      checked_component(spec.relation_text, "relation text");
  const auto dom = checked_type(type, uses_domain(type), domain_type, "domain");
  const auto rng = checked_type(type, uses_range(type), range_type, "range");
  const std::string mask(kMask);

  std::string text;
  switch (type) {
    case PromptType::Simple:
      text = subject + " " + relation + " " + mask + ".";
      break;
    case PromptType::Compound:
      text = subject + " is " + article_for(*dom) + " " + *dom + " and " +
             relation + " " + mask + ".";
      break;
    case PromptType::Complex:
      text = subject + " " + relation + " " + mask + ", which is " +
             article_for(*rng) + " " + *rng + ".";
      break;
    case PromptType::CompoundComplex:
      text = subject + " is " + article_for(*dom) + " " + *dom + " and " +
             relation + " " + mask + ", which is " + article_for(*rng) + " " +
             *rng + ".";
      break;
    case PromptType::AppositiveDomain:
      text = "The " + *dom + " " + subject + " " + relation +
             " " + mask + ".";
      break;
    case PromptType::AppositiveRange:
    case PromptType::AppositiveBoth: {
      std::string head = subject;
      if (type == PromptType::AppositiveBoth) {
        head = "The " + *dom + " " + subject;
      }
      if (options.appositive_range == AppositiveRangeStyle::PreNominal) {
        text = head + " " + relation + " the " + *rng + " " + mask + ".";
      } else {
        text = head + " " + relation + " " + mask + ", " + article_for(*rng) +
               " " + *rng + ".";
      }
      break;
    }
  }

  return PromptInstance{triple_key(triple), type, std::move(text), dom, rng};
}

std::size_t family_size(std::size_t n_domain, std::size_t n_range) {
  return 1 + 2 * n_domain + 2 * n_range + 2 * n_domain * n_range;
}

void for_each_in_family(const KnowledgeTriple& triple, const RelationSpec& spec,
                        const std::vector<std::string>& domain_types,
                        const std::vector<std::string>& range_types,
                        const std::function<void(PromptInstance&&)>& visit,
                        const RenderOptions& options) {
  if (domain_types.empty() || range_types.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                spec.relation_id + ": prompt family needs at least one domain "
                                   "and one range type");
  }
  visit(render(triple, spec, PromptType::Simple, std::nullopt, std::nullopt,
               options));
  for (const auto& d : domain_types) {
    visit(render(triple, spec, PromptType::Compound, d, std::nullopt, options));
    visit(render(triple, spec, PromptType::AppositiveDomain, d, std::nullopt,
                 options));
  }
  for (const auto& r : range_types) {
    visit(render(triple, spec, PromptType::Complex, std::nullopt, r, options));
    visit(render(triple, spec, PromptType::AppositiveRange, std::nullopt, r,
                 options));
  }
  for (const auto& d : domain_types) {
    for (const auto& r : range_types) {
      visit(render(triple, spec, PromptType::CompoundComplex, d, r, options));
      visit(render(triple, spec, PromptType::AppositiveBoth, d, r, options));
    }
  }
}

std::vector<PromptInstance> render_family(
    const KnowledgeTriple& triple, const RelationSpec& spec,
    const std::vector<std::string>& domain_types,
    const std::vector<std::string>& range_types,
    const RenderOptions& options) {
  std::vector<PromptInstance> out;
  out.reserve(family_size(domain_types.size(), range_types.size()));
  for_each_in_family(
      triple, spec, domain_types, range_types,
      [&out](PromptInstance&& p) { out.push_back(std::move(p)); }, options);
  return out;
}

}  // namespace conpare
