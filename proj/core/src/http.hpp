#pragma once

// Thin blocking HTTP helpers over cpp-httplib, kept in one translation unit.

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace conpare::http {

struct Response {
  int status = -1;  // -1: transport failure, see `error`
  std::string body;
  std::string error;

  bool transport_failed() const { return status < 0; }
};

using Params = std::vector<std::pair<std::string, std::string>>;

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // "/..." (defaults to "/")
};

Url split_url(const std::string& url);

Response get(const std::string& url, const Params& query,
             const Params& headers, std::chrono::seconds timeout);

Response post(const std::string& url, const std::string& body,
              const std::string& content_type, const Params& headers,
              std::chrono::seconds timeout);

// Exponential backoff delay for attempt n (0-based): initial * 2^n.
std::chrono::milliseconds backoff_delay(std::chrono::milliseconds initial,
                                        int attempt);

}  // namespace conpare::http
