#include "conpare/probegen.hpp"

#include <algorithm>
#include <cstdio>
#include <thread>

#include "conpare/error.hpp"
#include "json_codec.hpp"

namespace conpare {

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::Quality: return "quality";
    case Strategy::Confidence: return "confidence";
    case Strategy::NotApplicable: return "none";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "quality") return Strategy::Quality;
  if (name == "confidence") return Strategy::Confidence;
  if (name == "none") return Strategy::NotApplicable;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown strategy '" + std::string(name) + "'");
}

PromptType single_info_type(Slot slot, SyntaxFamily syntax) {
  if (syntax == SyntaxFamily::None) {
    throw Error(ErrorCode::kInvalidArgument,
                "completion needs a clausal or appositive syntax family");
  }
  return prompt_type_for(syntax, slot == Slot::Domain ? InfoContent::Domain
                                                      : InfoContent::Range);
}

double completion_criterion(Strategy strategy, const ScoreResult& result) {
  switch (strategy) {
    case Strategy::Quality:
      if (!result.gold_prob) {
        throw Error(ErrorCode::kMalformedResponse,
                    "result '" + result.id + "' lacks gold_prob");
      }
      return *result.gold_prob;
    case Strategy::Confidence:
      return result.top_prob();
    case Strategy::NotApplicable:
      break;
  }
  throw Error(ErrorCode::kInvalidArgument, "completion needs a strategy");
}

CompletionChoice complete(Strategy strategy, const KnowledgeTriple& triple,
                          const RelationSpec& spec, Slot slot,
                          SyntaxFamily syntax, Scorer& scorer,
                          std::size_t top_k, const RenderOptions& options) {
  const auto& candidates = spec.types(slot);
  if (candidates.empty()) {
    throw Error(ErrorCode::kEmptyCandidates,
                spec.relation_id + " has no " + std::string(to_string(slot)) +
                    " candidates");
  }
  const PromptType type = single_info_type(slot, syntax);

  std::vector<PromptInstance> prompts;
  std::vector<ScoreRequest> requests;
  prompts.reserve(candidates.size());
  requests.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    std::optional<std::string> d;
    std::optional<std::string> r;
    (slot == Slot::Domain ? d : r) = candidates[i];
    prompts.push_back(render(triple, spec, type, d, r, options));
    requests.push_back({std::to_string(i), prompts.back().text, triple.object,
                        top_k});
  }
  std::vector<ScoreResult> results = score_all(scorer, requests);

  CompletionChoice choice;
  choice.triple_key = triple_key(triple);
  choice.strategy = strategy;
  choice.slot = slot;
  choice.syntax = syntax;
  std::size_t best = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const double score = completion_criterion(strategy, results[i]);
    choice.all_scores.emplace_back(candidates[i], score);
    if (i == 0 || score > choice.score_used) {
      best = i;
      choice.score_used = score;
    }
  }
  choice.chosen_type = candidates[best];
  choice.prompt = std::move(prompts[best]);
  choice.result = std::move(results[best]);
  return choice;
}

CompletionChoice quality_completion(const KnowledgeTriple& triple,
                                    const RelationSpec& spec, Slot slot,
                                    SyntaxFamily syntax, Scorer& scorer,
                                    std::size_t top_k,
                                    const RenderOptions& options) {
  return complete(Strategy::Quality, triple, spec, slot, syntax, scorer, top_k,
                  options);
}

CompletionChoice confidence_completion(const KnowledgeTriple& triple,
                                       const RelationSpec& spec, Slot slot,
                                       SyntaxFamily syntax, Scorer& scorer,
                                       std::size_t top_k,
                                       const RenderOptions& options) {
  return complete(Strategy::Confidence, triple, spec, slot, syntax, scorer,
                  top_k, options);
}

PromptInstance build_combined(const KnowledgeTriple& triple,
                              const RelationSpec& spec, SyntaxFamily syntax,
                              const CompletionChoice& domain_choice,
                              const CompletionChoice& range_choice,
                              const RenderOptions& options) {
  const std::string key = triple_key(triple);
  if (domain_choice.triple_key != key || range_choice.triple_key != key) {
    throw Error(ErrorCode::kInvalidArgument,
                "completion choices do not belong to " + key);
  }
  if (domain_choice.syntax != syntax || range_choice.syntax != syntax) {
    throw Error(ErrorCode::kSyntaxMismatch,
                "combined " + std::string(to_string(syntax)) +
                    " prompt from " +
                    std::string(to_string(domain_choice.syntax)) + " and " +
                    std::string(to_string(range_choice.syntax)) + " choices");
  }
  if (domain_choice.slot != Slot::Domain || range_choice.slot != Slot::Range) {
    throw Error(ErrorCode::kSyntaxMismatch,
                "combined prompt needs one domain and one range choice");
  }
  return render(triple, spec, prompt_type_for(syntax, InfoContent::Both),
                domain_choice.chosen_type, range_choice.chosen_type, options);
}

// ---------------------------------------------------------------------------
// Probe

std::string probe_line(const PromptInstance& prompt) {
  return Json(prompt).dump();
}

ShardedJsonlSink::ShardedJsonlSink(std::filesystem::path dir,
                                   std::size_t shard_lines)
    : dir_(std::move(dir)), shard_lines_(std::max<std::size_t>(1, shard_lines)) {
  std::filesystem::create_directories(dir_);
}

void ShardedJsonlSink::open_next() {
  if (out_.is_open()) out_.close();
  char name[32];
  std::snprintf(name, sizeof name, "probe-%05zu.jsonl", shards_.size());
  shards_.push_back(dir_ / name);
  out_.open(shards_.back(), std::ios::binary | std::ios::trunc);
  if (!out_) {
    throw Error(ErrorCode::kSinkFull,
                "cannot open shard '" + shards_.back().string() + "'");
  }
  in_current_ = 0;
}

void ShardedJsonlSink::write(const PromptInstance& prompt) {
  if (!out_.is_open() || in_current_ >= shard_lines_) open_next();
  out_ << probe_line(prompt) << '\n';
  if (!out_) {
    throw Error(ErrorCode::kSinkFull,
                "write to '" + shards_.back().string() + "' failed");
  }
  ++in_current_;
}

void ShardedJsonlSink::close() {
  if (!out_.is_open()) return;
  out_.flush();
  const bool ok = static_cast<bool>(out_);
  out_.close();
  if (!ok) {
    throw Error(ErrorCode::kSinkFull,
                "flush of '" + shards_.back().string() + "' failed");
  }
}

ProbeManifest build_probe(std::span<const KnowledgeTriple> triples,
                          const std::map<std::string, RelationSpec>& specs,
                          ProbeSink& sink, const RenderOptions& options) {
  for (const auto& t : triples) {
    if (!specs.contains(t.relation_id)) {
      throw Error(ErrorCode::kMissingConstraint,
                  "no relation spec for " + t.relation_id);
    }
  }

  constexpr std::size_t kChunk = 256;
  const std::size_t n_workers =
      std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  ProbeManifest manifest;

  for (std::size_t wave = 0; wave < triples.size();
       wave += kChunk * n_workers) {
    const std::size_t wave_end =
        std::min(triples.size(), wave + kChunk * n_workers);
    const std::size_t n_chunks = (wave_end - wave + kChunk - 1) / kChunk;
    std::vector<std::vector<PromptInstance>> rendered(n_chunks);
    // Prompts per triple, parallel to the triples of each chunk.
    std::vector<std::vector<std::size_t>> family_sizes(n_chunks);
    std::vector<std::exception_ptr> errors(n_chunks);
    {
      std::vector<std::jthread> threads;
      for (std::size_t c = 0; c < n_chunks; ++c) {
        threads.emplace_back([&, c] {
          try {
            const std::size_t begin = wave + c * kChunk;
            const std::size_t end = std::min(wave_end, begin + kChunk);
            for (std::size_t i = begin; i < end; ++i) {
              const RelationSpec& spec = specs.at(triples[i].relation_id);
              const std::size_t before = rendered[c].size();
              for_each_in_family(
                  triples[i], spec, spec.domain_types, spec.range_types,
                  [&](PromptInstance&& p) {
                    rendered[c].push_back(std::move(p));
                  },
                  options);
              family_sizes[c].push_back(rendered[c].size() - before);
            }
          } catch (...) {
            errors[c] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (std::size_t c = 0; c < n_chunks; ++c) {
      for (const auto& p : rendered[c]) {
        sink.write(p);
        ++manifest.total;
        ++manifest.per_type[std::string(to_string(p.prompt_type))];
      }
      for (std::size_t k = 0; k < family_sizes[c].size(); ++k) {
        manifest.per_relation[triples[wave + c * kChunk + k].relation_id] +=
            family_sizes[c][k];
      }
    }
  }
  sink.close();
  if (auto* sharded = dynamic_cast<ShardedJsonlSink*>(&sink)) {
    for (const auto& s : sharded->shards()) {
      manifest.shards.push_back(s.filename().string());
    }
  }
  return manifest;
}

std::string manifest_to_json(const ProbeManifest& manifest) {
  Json doc{{"total", manifest.total},
           {"per_relation", Json::object()},
           {"per_type", Json::object()},
           {"shards", manifest.shards}};
  for (const auto& [rel, n] : manifest.per_relation) doc["per_relation"][rel] = n;
  for (PromptType t : kAllPromptTypes) {
    const auto it = manifest.per_type.find(std::string(to_string(t)));
    doc["per_type"][std::string(to_string(t))] =
        it == manifest.per_type.end() ? 0 : it->second;
  }
  return doc.dump(2) + "\n";
}

}  // namespace conpare
