#include <chrono>
#include <cstdlib>
#include <thread>

#include "multiver/provider.hpp"

#ifdef MULTIVER_HAVE_TLS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"
#endif

namespace multiver {

#ifdef MULTIVER_HAVE_TLS

namespace {

class HttpProvider final : public CompletionProvider {
 public:
  explicit HttpProvider(HttpProviderOptions options)
      : options_(std::move(options)) {
    if (options_.api_key.empty()) {
      const char* env = std::getenv(kApiKeyEnvVar);
      if (env) options_.api_key = env;
    }
    if (options_.api_key.empty())
      throw Error(ErrorCode::INVALID_CONFIG,
                  std::string("live provider requires an API key: set ") +
                      kApiKeyEnvVar);
  }

  ProviderResponse complete(const ProviderRequest& request) override {
    nlohmann::json body = {
        {"model", request.model_id},
        {"max_tokens", request.max_output_tokens},
        {"messages",
         nlohmann::json::array(
             {{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.temperature},
    };
    if (request.thinking_budget_tokens > 0) {
      body["thinking"] = {{"type", "enabled"},
                          {"budget_tokens", request.thinking_budget_tokens}};
      // The messages API requires max_tokens to exceed the thinking budget.
      if (request.max_output_tokens <= request.thinking_budget_tokens)
        body["max_tokens"] = request.thinking_budget_tokens + 4096;
    }
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
      if (attempt > 0)
        std::this_thread::sleep_for(std::chrono::seconds(1 << attempt));
      auto started = std::chrono::steady_clock::now();
      httplib::Client client(options_.base_url);
      client.set_connection_timeout(options_.timeout_seconds, 0);
      client.set_read_timeout(options_.timeout_seconds, 0);
      client.set_write_timeout(options_.timeout_seconds, 0);
      httplib::Headers headers = {
          {"x-api-key", options_.api_key},
          {"anthropic-version", "2023-06-01"},
      };
      auto res = client.Post("/v1/messages", headers, payload,
                             "application/json");
      auto elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - started)
                            .count();
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;  // retryable
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
        continue;  // retryable
      }
      if (res->status != 200)
        throw ProviderFailure(
            "HTTP " + std::to_string(res->status) + ": " + res->body, 0.0,
            elapsed_ms);
      try {
        nlohmann::json doc = nlohmann::json::parse(res->body);
        ProviderResponse out;
        for (const auto& block : doc.value("content", nlohmann::json::array()))
          if (block.value("type", "") == "text")
            out.text += block.value("text", "");
        out.input_tokens = doc["usage"].value("input_tokens", 0);
        out.output_tokens = doc["usage"].value("output_tokens", 0);
        out.cost_usd =
            out.input_tokens * options_.usd_per_mtok_input / 1e6 +
            out.output_tokens * options_.usd_per_mtok_output / 1e6;
        out.latency_ms = elapsed_ms;
        return out;
      } catch (const nlohmann::json::exception& e) {
        throw ProviderFailure(std::string("unparseable provider response: ") +
                                  e.what(),
                              0.0, elapsed_ms);
      }
    }
    throw ProviderFailure("provider unreachable after retries: " + last_error);
  }

  std::string name() const override { return "live"; }

 private:
  HttpProviderOptions options_;
};

}  // namespace

std::unique_ptr<CompletionProvider> make_live_provider(
    const HttpProviderOptions& options) {
  return std::make_unique<HttpProvider>(options);
}

#else  // !MULTIVER_HAVE_TLS

std::unique_ptr<CompletionProvider> make_live_provider(
    const HttpProviderOptions&) {
  throw Error(ErrorCode::INVALID_CONFIG,
              "live provider unavailable: built without TLS support");
}

#endif

}  // namespace multiver
