#include "http.hpp"

#include "httplib.h"

namespace conpare::http {

Url split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

namespace {

httplib::Client make_client(const std::string& origin,
                            std::chrono::seconds timeout) {
  httplib::Client client(origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  client.set_follow_location(true);
  return client;
}

httplib::Headers to_headers(const Params& headers) {
  httplib::Headers out;
  for (const auto& [k, v] : headers) out.emplace(k, v);
  return out;
}

Response convert(const httplib::Result& result) {
  Response out;
  if (!result) {
    out.error = httplib::to_string(result.error());
    return out;
  }
  out.status = result->status;
  out.body = result->body;
  return out;
}

}  // namespace

Response get(const std::string& url, const Params& query,
             const Params& headers, std::chrono::seconds timeout) {
  const Url parts = split_url(url);
  auto client = make_client(parts.origin, timeout);
  httplib::Params params;
  for (const auto& [k, v] : query) params.emplace(k, v);
  return convert(client.Get(parts.path, params, to_headers(headers)));
}

Response post(const std::string& url, const std::string& body,
              const std::string& content_type, const Params& headers,
              std::chrono::seconds timeout) {
  const Url parts = split_url(url);
  auto client = make_client(parts.origin, timeout);
  return convert(
      client.Post(parts.path, to_headers(headers), body, content_type));
}

std::chrono::milliseconds backoff_delay(std::chrono::milliseconds initial,
                                        int attempt) {
  return initial * (1LL << std::min(attempt, 16));
}

}  // namespace conpare::http
