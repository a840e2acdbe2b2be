#pragma once

// Masked-LM scoring contract, the HTTP wire client and a deterministic mock.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "conpare/domain.hpp"

namespace conpare {

inline constexpr std::size_t kDefaultTopK = 10;
inline constexpr std::size_t kDefaultMaxBatch = 64;
// Ranks beyond this are not reported by scorers.
inline constexpr int kGoldRankHorizon = 100;

struct ScoreRequest {
  std::string id;
  std::string text;
  std::optional<std::string> gold_token;
  std::size_t top_k = kDefaultTopK;

  friend bool operator==(const ScoreRequest&, const ScoreRequest&) = default;
};

struct TokenProb {
  std::string token;
  double prob = 0.0;

  friend bool operator==(const TokenProb&, const TokenProb&) = default;
};

struct ScoreResult {
  std::string id;
  std::vector<TokenProb> top;
  double entropy_bits = 0.0;
  std::optional<double> gold_prob;
  std::optional<int> gold_rank;

  double top_prob() const { return top.empty() ? 0.0 : top.front().prob; }
  const std::string& top_token() const;

  friend bool operator==(const ScoreResult&, const ScoreResult&) = default;
};

// Throws kInvalidArgument unless the text holds exactly one mask and
// top_k >= 1.
void validate(const ScoreRequest& request);

// Checks ordering (prob descending, ties by token), probability ranges,
// sum(top) <= 1 + 1e-6, entropy >= 0 and gold fields against the request.
// Throws kMalformedResponse.
void validate(const ScoreResult& result, const ScoreRequest& request);

// Shannon entropy in bits; zero entries are skipped.
double entropy_bits(std::span<const double> probs);

// Sorts by probability descending, ties by token ascending.
void sort_distribution(std::vector<TokenProb>& dist);

// Builds a result from a full distribution over the vocabulary.
ScoreResult result_from_distribution(const ScoreRequest& request,
                                     std::vector<TokenProb> dist);

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::size_t max_batch() const { return kDefaultMaxBatch; }
  // One result per request, in request order; all or nothing.
  virtual std::vector<ScoreResult> score_batch(
      std::span<const ScoreRequest> requests) = 0;
};

// Splits into max_batch() chunks and concatenates, preserving order.
std::vector<ScoreResult> score_all(Scorer& scorer,
                                   std::span<const ScoreRequest> requests);

using Distribution = std::vector<TokenProb>;
using MockTable = std::map<std::string, Distribution>;

// Table entries are returned exactly. Other texts get a pseudo-distribution
// over `vocabulary` seeded by stable_hash(text), so replays are bit-identical.
ScoreResult mock_score(const std::string& text,
                       const std::optional<std::string>& gold_token,
                       std::size_t top_k, const MockTable* table,
                       std::span<const std::string> vocabulary);

std::vector<std::string> default_mock_vocabulary();

class MockScorer final : public Scorer {
 public:
  explicit MockScorer(std::vector<std::string> vocabulary =
                          default_mock_vocabulary(),
                      MockTable table = {},
                      std::size_t max_batch = kDefaultMaxBatch);
  MockScorer(MockScorer&& other) noexcept;

  std::size_t max_batch() const override { return max_batch_; }
  std::vector<ScoreResult> score_batch(
      std::span<const ScoreRequest> requests) override;

  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  std::size_t calls() const { return calls_; }

 private:
  std::vector<std::string> vocabulary_;
  MockTable table_;
  std::size_t max_batch_;
  std::atomic<std::size_t> calls_{0};
};

// Mock table file: {"<prompt text>": [["token", prob], ...], ...}
MockTable load_mock_table(const std::string& path);

struct HttpScorerOptions {
  std::string model;
  std::size_t max_batch = kDefaultMaxBatch;
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{300};
  // Concurrent batches in flight for score_many.
  std::size_t max_in_flight = 4;
};

// JSON over HTTP:
//   POST /v1/score {"model", "requests":[{"id","text","gold_token"?,"top_k"}]}
//   GET  /v1/vocab -> {"tokens":[...]}
// 503 and connection failures are retried with exponential backoff; 400 maps
// to a BatchError(kRequestRejected) carrying the failed ids.
class HttpScorer final : public Scorer {
 public:
  HttpScorer(std::string base_url, HttpScorerOptions options);

  std::size_t max_batch() const override { return options_.max_batch; }
  std::vector<ScoreResult> score_batch(
      std::span<const ScoreRequest> requests) override;

  // Dispatches batches concurrently (up to max_in_flight) and merges by id.
  std::vector<ScoreResult> score_many(std::span<const ScoreRequest> requests);

  std::vector<std::string> fetch_vocab();

 private:
  std::string base_url_;
  HttpScorerOptions options_;
};

// Wire encoding shared by client and the in-process mock server.
std::string encode_score_request(const std::string& model,
                                 std::span<const ScoreRequest> requests);
std::vector<ScoreRequest> decode_score_request(std::string_view body,
                                               std::string* model);
std::string encode_score_response(std::span<const ScoreResult> results);
// Results carrying an "error" field raise BatchError(kRequestRejected) with
// their ids.
std::vector<ScoreResult> decode_score_response(std::string_view body);

// Serves the wire protocol from a MockScorer. Used by tests and by
// `conpare serve-mock` to exercise HttpScorer without a model.
class MockScoreServer {
 public:
  explicit MockScoreServer(MockScorer scorer);
  ~MockScoreServer();
  MockScoreServer(const MockScoreServer&) = delete;
  MockScoreServer& operator=(const MockScoreServer&) = delete;

  // Binds to host:port (port 0 picks a free port) and serves on a background
  // thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

  // Next n score calls answer 503.
  void fail_next(int n);
  std::size_t score_calls() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace conpare
