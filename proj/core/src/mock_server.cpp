#include <mutex>
#include <thread>

#include "conpare/error.hpp"
#include "conpare/scorer.hpp"
#include "httplib.h"
#include "json_codec.hpp"

namespace conpare {

struct MockScoreServer::Impl {
  explicit Impl(MockScorer s) : scorer(std::move(s)) {}

  MockScorer scorer;
  httplib::Server server;
  std::thread thread;
  std::mutex mutex;
  int fail_remaining = 0;
  std::size_t score_calls = 0;

  void install_routes() {
    server.Post("/v1/score", [this](const httplib::Request& req,
                                    httplib::Response& res) {
      std::lock_guard lock(mutex);
      ++score_calls;
      if (fail_remaining > 0) {
        --fail_remaining;
        res.status = 503;
        res.set_content(R"({"error":"temporarily unavailable"})",
                        "application/json");
        return;
      }
      std::vector<ScoreRequest> requests;
      try {
        requests = decode_score_request(req.body, nullptr);
      } catch (const Error& e) {
        res.status = 400;
        res.set_content(Json{{"error", e.what()}, {"failed_ids", Json::array()}}
                            .dump(),
                        "application/json");
        return;
      }
      std::vector<std::string> failed;
      std::string first_error;
      for (const auto& r : requests) {
        try {
          validate(r);
        } catch (const Error& e) {
          if (first_error.empty()) first_error = e.what();
          failed.push_back(r.id);
        }
      }
      if (requests.size() > scorer.max_batch()) {
        first_error = "batch exceeds " + std::to_string(scorer.max_batch());
        for (const auto& r : requests) failed.push_back(r.id);
      }
      if (!failed.empty()) {
        res.status = 400;
        res.set_content(Json{{"error", first_error}, {"failed_ids", failed}}.dump(),
                        "application/json");
        return;
      }
      const auto results = scorer.score_batch(requests);
      res.set_content(encode_score_response(results), "application/json");
    });
    server.Get("/v1/vocab", [this](const httplib::Request&,
                                   httplib::Response& res) {
      res.set_content(Json{{"tokens", scorer.vocabulary()}}.dump(),
                      "application/json");
    });
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("ok", "text/plain");
    });
  }
};

MockScoreServer::MockScoreServer(MockScorer scorer)
    : impl_(std::make_unique<Impl>(std::move(scorer))) {
  impl_->install_routes();
}

MockScoreServer::~MockScoreServer() { stop(); }

int MockScoreServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void MockScoreServer::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot listen on " + host + ":" + std::to_string(port));
  }
}

void MockScoreServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void MockScoreServer::fail_next(int n) {
  std::lock_guard lock(impl_->mutex);
  impl_->fail_remaining = n;
}

std::size_t MockScoreServer::score_calls() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->score_calls;
}

}  // namespace conpare
