#pragma once

// Completion-provider contract for tier-3 adjudication. MockProvider serves
// deterministic canned verdicts for offline runs and tests; the live
// provider speaks the messages API over HTTPS. Both honor the invariant
// that extended thinking pins temperature to 1.0.

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "multiver/core.hpp"
#include "multiver/errors.hpp"

namespace multiver {

inline constexpr const char* kDefaultModelId = "claude-opus-4-5-20251101";
inline constexpr const char* kApiKeyEnvVar = "MULTIVER_API_KEY";
inline constexpr double kMockCostPerCall = 0.13;
inline constexpr std::int64_t kMockLatencyMs = 30000;
inline constexpr int kProviderTimeoutSeconds = 120;
inline constexpr int kDefaultThinkingBudget = 10000;

struct ProviderRequest {
  std::string model_id = kDefaultModelId;
  std::string prompt;
  double temperature = 0.0;
  int thinking_budget_tokens = 0;
  int max_output_tokens = 4096;
};

// The only sanctioned way to build a request: a thinking budget forces
// temperature 1.0 regardless of the value passed in.
ProviderRequest make_request(std::string prompt, double temperature,
                             int thinking_budget_tokens,
                             std::string model_id = kDefaultModelId,
                             int max_output_tokens = 4096);

struct ProviderResponse {
  std::string text;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  double cost_usd = 0.0;
  std::int64_t latency_ms = 0;
};

// Failure that still carries whatever cost/latency the attempt incurred.
class ProviderFailure : public Error {
 public:
  ProviderFailure(const std::string& what, double cost_usd = 0.0,
                  std::int64_t latency_ms = 0)
      : Error(ErrorCode::PROVIDER_FAILURE, what),
        cost_usd_(cost_usd),
        latency_ms_(latency_ms) {}
  double cost_usd() const { return cost_usd_; }
  std::int64_t latency_ms() const { return latency_ms_; }

 private:
  double cost_usd_;
  std::int64_t latency_ms_;
};

class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  // Must be safe for concurrent callers.
  virtual ProviderResponse complete(const ProviderRequest& request) = 0;
  virtual std::string name() const = 0;
};

// Deterministic offline provider. Responses are selected by rules matched
// against the prompt's "Sample:" line and agent preamble (and optionally the
// request temperature); unmatched prompts fall back to a heuristic: FAIL 0.8
// when the prompt carries pattern findings, PASS 0.7 otherwise. Every call
// costs exactly $0.13 and reports 30,000 ms latency.
class MockProvider final : public CompletionProvider {
 public:
  struct Rule {
    std::string sample_id;              // empty matches any sample
    std::optional<AgentKind> agent;     // absent matches any agent
    std::optional<double> temperature;  // absent matches any temperature
    Verdict verdict = Verdict::PASS;
    double confidence = 0.7;
    nlohmann::json findings = nlohmann::json::array();
    std::string reasoning;
    std::string raw_text;  // when set, returned verbatim (malformed tests)
    bool fail_call = false;  // simulate a provider failure instead
  };

  MockProvider() = default;
  // Appends rules from a fixture file: {"rules": [...]} with the Rule
  // fields in snake_case.
  void load_rules(const std::string& path);

  void add_rule(Rule rule);
  ProviderResponse complete(const ProviderRequest& request) override;
  std::string name() const override { return "mock"; }

  std::vector<ProviderRequest> recorded() const;
  size_t call_count() const;

 private:
  mutable std::mutex mu_;
  std::vector<Rule> rules_;
  std::vector<ProviderRequest> log_;
};

// Prompt metadata the mock keys on; exposed for tests.
std::string prompt_sample_id(const std::string& prompt);
std::optional<AgentKind> prompt_agent(const std::string& prompt);
bool prompt_has_pattern_findings(const std::string& prompt);

struct HttpProviderOptions {
  std::string base_url = "https://api.anthropic.com";
  std::string api_key;  // empty: read MULTIVER_API_KEY
  int timeout_seconds = kProviderTimeoutSeconds;
  int max_retries = 1;  // one retry with exponential backoff
  // Price table used for cost accounting (USD per million tokens).
  double usd_per_mtok_input = 15.0;
  double usd_per_mtok_output = 75.0;
};

// Throws Error{INVALID_CONFIG} when no API key is available, or
// PROVIDER_FAILURE at call time. When the binary is built without TLS
// support this factory throws INVALID_CONFIG.
std::unique_ptr<CompletionProvider> make_live_provider(
    const HttpProviderOptions& options = {});

}  // namespace multiver
