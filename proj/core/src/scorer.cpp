#include "conpare/scorer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "conpare/error.hpp"
#include "conpare/templater.hpp"
#include "http.hpp"
#include "json_codec.hpp"

namespace conpare {

const std::string& ScoreResult::top_token() const {
  static const std::string kEmpty;
  return top.empty() ? kEmpty : top.front().token;
}

void validate(const ScoreRequest& request) {
  const std::size_t masks = count_mask(request.text);
  if (masks != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "request '" + request.id + "' has " + std::to_string(masks) +
                    " masks, expected exactly one");
  }
  if (request.top_k < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "request '" + request.id + "' has top_k < 1");
  }
}

void validate(const ScoreResult& result, const ScoreRequest& request) {
  const auto bad = [&](const std::string& why) {
    throw Error(ErrorCode::kMalformedResponse,
                "result '" + result.id + "': " + why);
  };
  if (result.id != request.id) bad("id does not match request '" + request.id + "'");
  if (result.top.size() > request.top_k) bad("more entries than top_k");
  double sum = 0.0;
  for (std::size_t i = 0; i < result.top.size(); ++i) {
    const TokenProb& tp = result.top[i];
    if (!(tp.prob > 0.0 && tp.prob <= 1.0)) bad("probability outside (0,1]");
    sum += tp.prob;
    if (i > 0) {
      const TokenProb& prev = result.top[i - 1];
      if (prev.prob < tp.prob ||
          (prev.prob == tp.prob && !(prev.token < tp.token))) {
        bad("top entries not sorted by probability then token");
      }
    }
  }
  if (sum > 1.0 + 1e-6) bad("top probabilities sum above 1");
  if (!std::isfinite(result.entropy_bits) || result.entropy_bits < 0.0) {
    bad("entropy must be finite and non-negative");
  }
  if (result.gold_prob.has_value() != request.gold_token.has_value()) {
    bad("gold_prob must be present iff a gold token was sent");
  }
  if (result.gold_prob && !(*result.gold_prob >= 0.0 && *result.gold_prob <= 1.0)) {
    bad("gold_prob outside [0,1]");
  }
  if (result.gold_rank && *result.gold_rank < 1) bad("gold_rank below 1");
}

double entropy_bits(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h < 0.0 ? 0.0 : h;
}

void sort_distribution(std::vector<TokenProb>& dist) {
  std::sort(dist.begin(), dist.end(), [](const TokenProb& a, const TokenProb& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    return a.token < b.token;
  });
}

ScoreResult result_from_distribution(const ScoreRequest& request,
                                     std::vector<TokenProb> dist) {
  sort_distribution(dist);
  std::vector<double> probs;
  probs.reserve(dist.size());
  for (const auto& tp : dist) probs.push_back(tp.prob);

  ScoreResult result;
  result.id = request.id;
  result.entropy_bits = entropy_bits(probs);
  if (request.gold_token) {
    result.gold_prob = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      if (dist[i].token != *request.gold_token) continue;
      result.gold_prob = dist[i].prob;
      if (dist[i].prob > 0.0 && static_cast<int>(i) < kGoldRankHorizon) {
        result.gold_rank = static_cast<int>(i) + 1;
      }
      break;
    }
  }
  for (auto& tp : dist) {
    if (result.top.size() >= request.top_k || tp.prob <= 0.0) break;
    result.top.push_back(std::move(tp));
  }
  return result;
}

std::vector<ScoreResult> score_all(Scorer& scorer,
                                   std::span<const ScoreRequest> requests) {
  std::vector<ScoreResult> out;
  out.reserve(requests.size());
  const std::size_t step = std::max<std::size_t>(1, scorer.max_batch());
  for (std::size_t i = 0; i < requests.size(); i += step) {
    auto part = scorer.score_batch(
        requests.subspan(i, std::min(step, requests.size() - i)));
    for (auto& r : part) out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mock

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<std::string> default_mock_vocabulary() {
  return {"France",  "Italy",   "Germany", "Spain",    "England", "Japan",
          "China",   "India",   "Canada",  "Brazil",   "Paris",   "Rome",
          "Berlin",  "Madrid",  "London",  "Tokyo",    "English", "French",
          "Italian", "German",  "Spanish", "Japanese", "actor",   "singer",
          "writer",  "painter", "city",    "country",  "river",   "Europe",
          "Asia",    "Africa",  "red",     "small",    "water",   "music",
          "the",     "a",       "and",     "."};
}

ScoreResult mock_score(const std::string& text,
                       const std::optional<std::string>& gold_token,
                       std::size_t top_k, const MockTable* table,
                       std::span<const std::string> vocabulary) {
  const ScoreRequest request{"", text, gold_token, top_k};
  if (table) {
    const auto it = table->find(text);
    if (it != table->end()) return result_from_distribution(request, it->second);
  }
  const std::uint64_t seed = stable_hash(text);
  std::vector<TokenProb> dist;
  dist.reserve(vocabulary.size());
  double total = 0.0;
  for (const auto& token : vocabulary) {
    const std::uint64_t bits = splitmix64(seed ^ stable_hash(token));
    const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
    const double w = std::exp(8.0 * u);
    dist.push_back({token, w});
    total += w;
  }
  for (auto& tp : dist) tp.prob /= total;
  return result_from_distribution(request, std::move(dist));
}

MockScorer::MockScorer(std::vector<std::string> vocabulary, MockTable table,
                       std::size_t max_batch)
    : vocabulary_(std::move(vocabulary)),
      table_(std::move(table)),
      max_batch_(max_batch) {
  std::set<std::string> unique(vocabulary_.begin(), vocabulary_.end());
  if (unique.size() != vocabulary_.size() || vocabulary_.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "mock vocabulary must be non-empty and duplicate-free");
  }
}

MockScorer::MockScorer(MockScorer&& other) noexcept
    : vocabulary_(std::move(other.vocabulary_)),
      table_(std::move(other.table_)),
      max_batch_(other.max_batch_),
      calls_(other.calls_.load()) {}

std::vector<ScoreResult> MockScorer::score_batch(
    std::span<const ScoreRequest> requests) {
  if (requests.size() > max_batch_) {
    throw Error(ErrorCode::kOversizedBatch,
                std::to_string(requests.size()) + " requests exceed the batch "
                "limit of " + std::to_string(max_batch_));
  }
  for (const auto& r : requests) validate(r);
  ++calls_;
  std::vector<ScoreResult> out;
  out.reserve(requests.size());
  for (const auto& r : requests) {
    ScoreResult result =
        mock_score(r.text, r.gold_token, r.top_k, &table_, vocabulary_);
    result.id = r.id;
    out.push_back(std::move(result));
  }
  return out;
}

MockTable load_mock_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kUnreadableFile, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const Json doc = parse_json(ss.str(), ErrorCode::kInvalidArgument, path);
  MockTable table;
  try {
    for (const auto& [text, entries] : doc.items()) {
      Distribution dist;
      double sum = 0.0;
      for (const auto& pair : entries) {
        dist.push_back({pair.at(0).get<std::string>(), pair.at(1).get<double>()});
        sum += dist.back().prob;
      }
      if (sum > 1.0 + 1e-6) {
        throw Error(ErrorCode::kInvalidArgument,
                    path + ": distribution for '" + text + "' sums above 1");
      }
      table.emplace(text, std::move(dist));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path + ": " + e.what());
  }
  return table;
}

// ---------------------------------------------------------------------------
// Wire codec

std::string encode_score_request(const std::string& model,
                                 std::span<const ScoreRequest> requests) {
  Json body{{"model", model}, {"requests", Json::array()}};
  for (const auto& r : requests) body["requests"].push_back(r);
  return body.dump();
}

std::vector<ScoreRequest> decode_score_request(std::string_view body,
                                               std::string* model) {
  const Json doc = parse_json(body, ErrorCode::kInvalidArgument, "score request");
  try {
    if (model) *model = doc.value("model", std::string());
    return doc.at("requests").get<std::vector<ScoreRequest>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("score request: ") + e.what());
  }
}

std::string encode_score_response(std::span<const ScoreResult> results) {
  Json body{{"results", Json::array()}};
  for (const auto& r : results) body["results"].push_back(r);
  return body.dump();
}

std::vector<ScoreResult> decode_score_response(std::string_view body) {
  const Json doc =
      parse_json(body, ErrorCode::kMalformedResponse, "score response");
  try {
    // Per-request error flags (e.g. a gold token that is not one vocabulary
    // id) reject the batch with the flagged ids.
    std::vector<std::string> flagged;
    std::string message;
    for (const auto& r : doc.at("results")) {
      if (r.contains("error") && !r["error"].is_null()) {
        flagged.push_back(r.at("id").get<std::string>());
        if (message.empty()) message = r["error"].dump();
      }
    }
    if (!flagged.empty()) {
      throw BatchError(ErrorCode::kRequestRejected,
                       "scorer flagged " + std::to_string(flagged.size()) +
                           " request(s): " + message,
                       std::move(flagged));
    }
    return doc.at("results").get<std::vector<ScoreResult>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedResponse,
                std::string("score response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// HTTP client

HttpScorer::HttpScorer(std::string base_url, HttpScorerOptions options)
    : base_url_(std::move(base_url)), options_(std::move(options)) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

namespace {

std::vector<std::string> ids_of(std::span<const ScoreRequest> requests) {
  std::vector<std::string> ids;
  ids.reserve(requests.size());
  for (const auto& r : requests) ids.push_back(r.id);
  return ids;
}

}  // namespace

std::vector<ScoreResult> HttpScorer::score_batch(
    std::span<const ScoreRequest> requests) {
  if (requests.size() > options_.max_batch) {
    throw BatchError(ErrorCode::kOversizedBatch,
                     std::to_string(requests.size()) +
                         " requests exceed the batch limit of " +
                         std::to_string(options_.max_batch),
                     ids_of(requests));
  }
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    validate(requests[i]);
    if (!index.emplace(requests[i].id, i).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate request id '" + requests[i].id + "'");
    }
  }
  if (requests.empty()) return {};

  const std::string body = encode_score_request(options_.model, requests);
  std::string last_error;
  for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          http::backoff_delay(options_.initial_backoff, attempt - 1));
    }
    const http::Response resp = http::post(base_url_ + "/v1/score", body,
                                           "application/json", {},
                                           options_.timeout);
    if (resp.transport_failed()) {
      last_error = resp.error;
      continue;
    }
    if (resp.status == 503) {
      last_error = "HTTP 503";
      continue;
    }
    if (resp.status == 400) {
      std::vector<std::string> failed;
      std::string message = "request rejected";
      try {
        const Json doc = Json::parse(resp.body);
        message = doc.value("error", message);
        failed = doc.value("failed_ids", std::vector<std::string>{});
      } catch (const nlohmann::json::exception&) {
        failed = ids_of(requests);
      }
      throw BatchError(ErrorCode::kRequestRejected, message, std::move(failed));
    }
    if (resp.status != 200) {
      throw BatchError(ErrorCode::kEndpointUnavailable,
                       base_url_ + ": HTTP " + std::to_string(resp.status),
                       ids_of(requests));
    }
    std::vector<ScoreResult> decoded;
    try {
      decoded = decode_score_response(resp.body);
    } catch (const BatchError&) {
      throw;
    } catch (const Error& e) {
      throw BatchError(ErrorCode::kMalformedResponse, e.what(), ids_of(requests));
    }
    if (decoded.size() != requests.size()) {
      throw BatchError(ErrorCode::kMalformedResponse,
                       "expected " + std::to_string(requests.size()) +
                           " results, got " + std::to_string(decoded.size()),
                       ids_of(requests));
    }
    std::vector<std::optional<ScoreResult>> aligned(requests.size());
    for (auto& r : decoded) {
      const auto it = index.find(r.id);
      if (it == index.end() || aligned[it->second]) {
        throw BatchError(ErrorCode::kMalformedResponse,
                         "unexpected or repeated result id '" + r.id + "'",
                         ids_of(requests));
      }
      try {
        validate(r, requests[it->second]);
      } catch (const Error& e) {
        throw BatchError(ErrorCode::kMalformedResponse, e.what(), {r.id});
      }
      aligned[it->second] = std::move(r);
    }
    std::vector<ScoreResult> out;
    out.reserve(aligned.size());
    for (auto& r : aligned) out.push_back(std::move(*r));
    return out;
  }
  throw BatchError(ErrorCode::kEndpointUnavailable,
                   base_url_ + " unavailable after " +
                       std::to_string(options_.max_attempts) +
                       " attempts: " + last_error,
                   ids_of(requests));
}

std::vector<ScoreResult> HttpScorer::score_many(
    std::span<const ScoreRequest> requests) {
  const std::size_t step = std::max<std::size_t>(1, options_.max_batch);
  const std::size_t n_chunks = (requests.size() + step - 1) / step;
  std::vector<std::vector<ScoreResult>> parts(n_chunks);
  std::vector<std::optional<BatchError>> errors(n_chunks);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t c; (c = next.fetch_add(1)) < n_chunks;) {
      const auto chunk = requests.subspan(
          c * step, std::min(step, requests.size() - c * step));
      try {
        parts[c] = score_batch(chunk);
      } catch (const BatchError& e) {
        errors[c].emplace(e);
      } catch (const Error& e) {
        errors[c].emplace(e.code(), e.what(), ids_of(chunk));
      }
    }
  };
  {
    std::vector<std::jthread> threads;
    const std::size_t n_threads = std::max<std::size_t>(
        1, std::min(options_.max_in_flight, n_chunks));
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  }
  std::vector<std::string> failed;
  std::optional<BatchError> first;
  for (auto& e : errors) {
    if (!e) continue;
    if (!first) first = e;
    failed.insert(failed.end(), e->failed_ids().begin(), e->failed_ids().end());
  }
  if (first) throw BatchError(first->code(), first->what(), std::move(failed));

  std::vector<ScoreResult> out;
  out.reserve(requests.size());
  for (auto& part : parts) {
    for (auto& r : part) out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::string> HttpScorer::fetch_vocab() {
  const http::Response resp =
      http::get(base_url_ + "/v1/vocab", {}, {}, options_.timeout);
  if (resp.transport_failed() || resp.status != 200) {
    throw Error(ErrorCode::kEndpointUnavailable,
                base_url_ + "/v1/vocab: " +
                    (resp.transport_failed() ? resp.error
                                             : "HTTP " + std::to_string(resp.status)));
  }
  const Json doc =
      parse_json(resp.body, ErrorCode::kMalformedResponse, "vocab response");
  try {
    return doc.at("tokens").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedResponse,
                std::string("vocab response: ") + e.what());
  }
}

}  // namespace conpare
