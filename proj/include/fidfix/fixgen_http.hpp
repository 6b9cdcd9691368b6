#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "fidfix/common.hpp"
#include "fidfix/cwe_kb.hpp"

namespace fidfix {

inline constexpr const char* kFixGenTokenEnv = "FIDFIX_FIXGEN_TOKEN";

// Live fix-generation client. POSTs {"model": ..., "prompt": ...} to the
// configured endpoint and expects {"text": ...} back. The bearer credential
// comes from the environment, never from configuration files.
class HttpFixGenerator : public FixGenerator {
 public:
  HttpFixGenerator(std::string endpoint, std::string model_name)
      : model_name_(std::move(model_name)) {
    // Split "http://host:port/path" into base and path.
    std::size_t scheme = endpoint.find("://");
    std::size_t path_at = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_at == std::string::npos) {
      base_ = endpoint;
      path_ = "/";
    } else {
      base_ = endpoint.substr(0, path_at);
      path_ = endpoint.substr(path_at);
    }
  }

  FixResult generate(const FixContext& ctx) override {
    httplib::Client client(base_);
    client.set_read_timeout(60, 0);
    httplib::Headers headers;
    if (const char* token = std::getenv(kFixGenTokenEnv)) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    nlohmann::json body;
    body["model"] = model_name_;
    body["prompt"] = ctx.prompt;
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) return {false, "", "endpoint unreachable: " + base_};
    if (res->status != 200) {
      return {false, "", "endpoint returned status " + std::to_string(res->status)};
    }
    try {
      nlohmann::json parsed = nlohmann::json::parse(res->body);
      return {true, parsed.at("text").get<std::string>(), ""};
    } catch (const nlohmann::json::exception& e) {
      return {false, "", std::string("malformed response: ") + e.what()};
    }
  }

 private:
  std::string base_;
  std::string path_;
  std::string model_name_;
};

}  // namespace fidfix
