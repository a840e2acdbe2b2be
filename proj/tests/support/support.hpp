#pragma once

// Shared test helpers: scratch directories, fixture paths, seeded random
// generators and brute-force oracles.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "conpare/domain.hpp"
#include "conpare/metrics.hpp"
#include "conpare/probegen.hpp"
#include "conpare/scorer.hpp"
#include "conpare/templater.hpp"

namespace testing {

namespace fs = std::filesystem;

inline fs::path fixture_dir() { return fs::path(CONPARE_FIXTURE_DIR); }
inline fs::path test_data_dir() { return fs::path(CONPARE_TEST_DATA_DIR); }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("conpare-test-" + std::to_string(rd()) + "-" +
             std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Every regular file under `root`, relative path -> bytes.
inline std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      out[fs::relative(e.path(), root).generic_string()] = read_text(e.path());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generators

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::size_t uniform(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  bool coin(double p = 0.5) { return unit() < p; }

  // Lowercase word, optionally multi-word, never starting with a space.
  std::string word(std::size_t min_len = 3, std::size_t max_len = 9) {
    std::string w;
    const std::size_t n = uniform(min_len, max_len);
    for (std::size_t i = 0; i < n; ++i) {
      w.push_back(static_cast<char>('a' + uniform(0, 25)));
    }
    return w;
  }

  // n distinct type labels.
  std::vector<std::string> labels(std::size_t n) {
    std::set<std::string> seen;
    std::vector<std::string> out;
    while (out.size() < n) {
      std::string l = coin(0.2) ? word() + " " + word() : word();
      if (seen.insert(l).second) out.push_back(std::move(l));
    }
    return out;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline conpare::KnowledgeTriple paris() {
  return conpare::make_triple("Paris", "P1376", "France", conpare::Corpus::TREx,
                              conpare::Grouping::OneToOne);
}

inline conpare::RelationSpec capital_spec(std::vector<std::string> d = {"city"},
                                          std::vector<std::string> r = {"country"}) {
  return conpare::RelationSpec{"P1376", "is the capital of", std::move(d),
                               std::move(r), false};
}

// A completion problem: every candidate prompt has a fixed distribution in
// the mock table. Probabilities are drawn on a coarse grid so exact ties
// between candidates occur regularly.
struct CompletionInstance {
  conpare::KnowledgeTriple triple;
  conpare::RelationSpec spec;
  conpare::Slot slot = conpare::Slot::Domain;
  conpare::SyntaxFamily syntax = conpare::SyntaxFamily::Clausal;
  conpare::MockTable table;
  std::vector<std::string> vocabulary;
};

inline conpare::Distribution grid_distribution(Gen& gen,
                                               const std::vector<std::string>& vocab) {
  constexpr int kGrid = 6;
  std::vector<int> weights(vocab.size(), 0);
  int total = 0;
  while (total == 0) {
    for (auto& w : weights) {
      w = gen.coin(0.6) ? static_cast<int>(gen.uniform(1, kGrid)) : 0;
      total += w;
    }
  }
  conpare::Distribution dist;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (weights[i] > 0) {
      dist.push_back({vocab[i], static_cast<double>(weights[i]) / total});
    }
  }
  return dist;
}

inline CompletionInstance random_completion_instance(Gen& gen) {
  using namespace conpare;
  CompletionInstance inst;
  inst.vocabulary = {"France", "Italy", "Spain", "Germany", "Paris", "Rome"};
  inst.triple = make_triple(gen.word(4, 8), "P" + std::to_string(gen.uniform(1, 999)),
                            inst.vocabulary[gen.uniform(0, 3)], Corpus::TREx,
                            Grouping::NToOne);
  const std::size_t n_d = gen.uniform(1, 20);
  const std::size_t n_r = gen.uniform(1, 20);
  auto all = gen.labels(n_d + n_r);
  inst.spec = RelationSpec{inst.triple.relation_id, "is related to",
                           {all.begin(), all.begin() + static_cast<long>(n_d)},
                           {all.begin() + static_cast<long>(n_d), all.end()},
                           false};
  inst.slot = gen.coin() ? Slot::Domain : Slot::Range;
  inst.syntax = gen.coin() ? SyntaxFamily::Clausal : SyntaxFamily::Appositive;
  const PromptType type = single_info_type(inst.slot, inst.syntax);
  // A few candidates share one distribution to force exact ties.
  std::optional<Distribution> shared;
  for (const auto& cand : inst.spec.types(inst.slot)) {
    std::optional<std::string> d;
    std::optional<std::string> r;
    (inst.slot == Slot::Domain ? d : r) = cand;
    const std::string text = render(inst.triple, inst.spec, type, d, r).text;
    Distribution dist;
    if (shared && gen.coin(0.3)) {
      dist = *shared;
    } else {
      dist = grid_distribution(gen, inst.vocabulary);
      if (!shared) shared = dist;
    }
    inst.table[text] = dist;
  }
  return inst;
}

// Brute-force argmax over the table: first candidate wins ties.
inline std::string oracle_choice(const CompletionInstance& inst,
                                 conpare::Strategy strategy) {
  using namespace conpare;
  const PromptType type = single_info_type(inst.slot, inst.syntax);
  std::string best;
  double best_score = -1.0;
  for (const auto& cand : inst.spec.types(inst.slot)) {
    std::optional<std::string> d;
    std::optional<std::string> r;
    (inst.slot == Slot::Domain ? d : r) = cand;
    const Distribution& dist =
        inst.table.at(render(inst.triple, inst.spec, type, d, r).text);
    double score = 0.0;
    for (const auto& tp : dist) {
      if (strategy == Strategy::Quality) {
        if (tp.token == inst.triple.object) score = tp.prob;
      } else {
        score = std::max(score, tp.prob);
      }
    }
    if (score > best_score) {
      best_score = score;
      best = cand;
    }
  }
  return best;
}

// Gold probability of the candidate's prompt, read from the table.
inline double table_gold_prob(const CompletionInstance& inst,
                              const std::string& candidate) {
  using namespace conpare;
  std::optional<std::string> d;
  std::optional<std::string> r;
  (inst.slot == Slot::Domain ? d : r) = candidate;
  const auto& dist = inst.table.at(
      render(inst.triple, inst.spec, single_info_type(inst.slot, inst.syntax), d, r)
          .text);
  for (const auto& tp : dist) {
    if (tp.token == inst.triple.object) return tp.prob;
  }
  return 0.0;
}

// Random sets over keys "k0".."k<universe-1>".
inline conpare::NamedSets random_sets(Gen& gen, std::size_t n_sets,
                                      std::size_t universe) {
  conpare::NamedSets out;
  for (std::size_t i = 0; i < n_sets; ++i) {
    std::set<std::string> keys;
    const double density = gen.unit();
    for (std::size_t k = 0; k < universe; ++k) {
      if (gen.coin(density)) keys.insert("k" + std::to_string(k));
    }
    out.emplace_back("set" + std::to_string(i), std::move(keys));
  }
  return out;
}

// Brute-force partition: for every non-empty mask, the keys whose membership
// vector equals the mask.
inline std::map<std::uint32_t, std::set<std::string>> oracle_partition(
    const conpare::NamedSets& sets) {
  std::set<std::string> universe;
  for (const auto& [name, keys] : sets) universe.insert(keys.begin(), keys.end());
  std::map<std::uint32_t, std::set<std::string>> out;
  const std::uint32_t n_masks = 1u << sets.size();
  for (std::uint32_t mask = 1; mask < n_masks; ++mask) {
    std::set<std::string> cell;
    for (const auto& key : universe) {
      std::uint32_t m = 0;
      for (std::size_t i = 0; i < sets.size(); ++i) {
        if (sets[i].second.contains(key)) m |= 1u << i;
      }
      if (m == mask) cell.insert(key);
    }
    if (!cell.empty()) out[mask] = std::move(cell);
  }
  return out;
}

// Matched compound/complex record lists over the same triples, with the
// correct flag consistent with top/gold probabilities.
inline std::pair<std::vector<conpare::EvaluationRecord>,
                 std::vector<conpare::EvaluationRecord>>
random_record_pair(Gen& gen, std::size_t n) {
  using namespace conpare;
  const auto make = [&](const std::string& key, PromptType type) {
    EvaluationRecord r;
    r.triple_key = key;
    r.prompt_type = type;
    r.strategy = Strategy::Quality;
    r.top_prob = 0.05 + 0.95 * gen.unit();
    r.correct = gen.coin(0.4);
    r.gold_prob = r.correct ? r.top_prob : r.top_prob * gen.unit() * 0.999;
    r.predicted_token = r.correct ? "gold" : "other";
    r.gold_rank = r.correct ? 1 : static_cast<int>(gen.uniform(2, 150));
    if (*r.gold_rank > kGoldRankHorizon) r.gold_rank.reset();
    r.entropy_bits = 4.0 * gen.unit();
    return r;
  };
  std::vector<EvaluationRecord> a;
  std::vector<EvaluationRecord> b;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string key = "P1|s" + std::to_string(i) + "|o";
    a.push_back(make(key, PromptType::Compound));
    b.push_back(make(key, PromptType::Complex));
  }
  return {a, b};
}

}  // namespace testing
