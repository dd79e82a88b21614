#pragma once

// Planner backend that calls a chat-completions style HTTP endpoint with a
// JSON-schema response format. Only plain http:// endpoints are supported.

#include <chrono>
#include <memory>
#include <string>
#include <utility>

#include "httplib.h"
#include "salient/error.hpp"
#include "salient/io_util.hpp"
#include "salient/planskeleton.hpp"

namespace salient {

struct HttpBackendConfig {
  std::string endpoint;  // e.g. http://localhost:8080/v1/chat/completions
  std::string model;
  double timeout_s = 60.0;
  std::string api_key;  // optional bearer token
};

// Config file: one key=value per line; '#' starts a comment.
inline HttpBackendConfig parse_http_backend_config(std::string_view text) {
  HttpBackendConfig cfg;
  std::size_t line_no = 0, pos = 0;
  bool have_endpoint = false, have_model = false;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "endpoint") {
      cfg.endpoint = value;
      have_endpoint = true;
    } else if (key == "model") {
      cfg.model = value;
      have_model = true;
    } else if (key == "timeout") {
      try {
        cfg.timeout_s = std::stod(value);
      } catch (const std::exception&) {
        throw ParseError("timeout must be a number", line_no);
      }
      if (!(cfg.timeout_s > 0)) throw ParseError("timeout must be positive", line_no);
    } else if (key == "api_key") {
      cfg.api_key = value;
    } else {
      throw ParseError("unknown key '" + key + "'", line_no);
    }
  }
  if (!have_endpoint || !have_model) throw ValidationError("backend config needs endpoint and model");
  return cfg;
}

class HttpPlannerBackend : public SemanticPlannerBackend {
 public:
  explicit HttpPlannerBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    const std::string scheme = "http://";
    if (cfg_.endpoint.rfind(scheme, 0) != 0) {
      throw ValidationError("endpoint must start with http://");
    }
    const auto slash = cfg_.endpoint.find('/', scheme.size());
    host_ = cfg_.endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : cfg_.endpoint.substr(slash);
  }

  // Request body sent to the endpoint; exposed for inspection.
  Json request_body(const PlannerRequest& req) const {
    Json frames = Json::array();
    for (auto f : req.frame_indices) frames.push_back(f);
    Json body;
    body["model"] = cfg_.model;
    body["messages"] = Json::array({Json{{"role", "user"}, {"content", req.prompt}}});
    body["response_format"] = Json{
        {"type", "json_schema"},
        {"json_schema", Json{{"name", "ActionPlan"}, {"strict", true}, {"schema", req.schema}}}};
    body["metadata"] = Json{{"frame_indices", std::move(frames)}};
    return body;
  }

  std::string generate(const PlannerRequest& req) override {
    httplib::Client cli(host_);
    const auto us = std::chrono::microseconds(static_cast<std::int64_t>(cfg_.timeout_s * 1e6));
    cli.set_connection_timeout(us);
    cli.set_read_timeout(us);
    cli.set_write_timeout(us);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    auto res = cli.Post(path_, headers, request_body(req).dump(), "application/json");
    if (!res) {
      throw IoError("planner request to " + cfg_.endpoint + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw IoError("planner endpoint returned HTTP " + std::to_string(res->status));
    }
    const Json reply = parse_json(res->body, "planner reply");
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError("planner reply lacks choices[0].message.content");
    }
  }

 private:
  HttpBackendConfig cfg_;
  std::string host_;
  std::string path_;
};

}  // namespace salient
