#include "multiver/provider.hpp"

#include <fstream>
#include <sstream>

namespace multiver {

ProviderRequest make_request(std::string prompt, double temperature,
                             int thinking_budget_tokens, std::string model_id,
                             int max_output_tokens) {
  ProviderRequest req;
  req.model_id = std::move(model_id);
  req.prompt = std::move(prompt);
  req.thinking_budget_tokens = thinking_budget_tokens;
  req.temperature = thinking_budget_tokens > 0 ? 1.0 : temperature;
  req.max_output_tokens = max_output_tokens;
  return req;
}

std::string prompt_sample_id(const std::string& prompt) {
  const std::string marker = "Sample: ";
  size_t at = prompt.find("\n" + marker);
  size_t start;
  if (at != std::string::npos) {
    start = at + 1 + marker.size();
  } else if (prompt.rfind(marker, 0) == 0) {
    start = marker.size();
  } else {
    return "";
  }
  size_t end = prompt.find('\n', start);
  return prompt.substr(start, end == std::string::npos ? std::string::npos
                                                       : end - start);
}

std::optional<AgentKind> prompt_agent(const std::string& prompt) {
  const std::string marker = "You are the ";
  size_t at = prompt.find(marker);
  if (at != std::string::npos) {
    size_t start = at + marker.size();
    size_t end = prompt.find(' ', start);
    if (end != std::string::npos)
      return agent_from_string(prompt.substr(start, end - start));
  }
  return std::nullopt;
}

bool prompt_has_pattern_findings(const std::string& prompt) {
  const std::string header = "PATTERN FINDINGS:\n";
  size_t at = prompt.find(header);
  if (at == std::string::npos) return false;
  return prompt.compare(at + header.size(), 6, "(none)") != 0;
}

void MockProvider::add_rule(Rule rule) {
  std::lock_guard<std::mutex> lock(mu_);
  rules_.push_back(std::move(rule));
}

void MockProvider::load_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IO_FAILURE, "cannot open mock rules file: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MALFORMED_RECORD, path + ": " + e.what());
  }
  for (const auto& jr : doc.value("rules", nlohmann::json::array())) {
    Rule rule;
    rule.sample_id = jr.value("sample_id", "");
    if (jr.contains("agent")) {
      auto agent = agent_from_string(jr["agent"].get<std::string>());
      if (!agent)
        throw Error(ErrorCode::MALFORMED_RECORD,
                    path + ": unknown agent in rule for '" + rule.sample_id + "'");
      rule.agent = *agent;
    }
    if (jr.contains("temperature"))
      rule.temperature = jr["temperature"].get<double>();
    if (jr.contains("verdict")) {
      auto verdict = verdict_from_string(jr["verdict"].get<std::string>());
      if (!verdict)
        throw Error(ErrorCode::MALFORMED_RECORD,
                    path + ": unknown verdict in rule for '" + rule.sample_id + "'");
      rule.verdict = *verdict;
    }
    rule.confidence = jr.value("confidence", 0.7);
    if (jr.contains("findings")) rule.findings = jr["findings"];
    rule.reasoning = jr.value("reasoning", "");
    rule.raw_text = jr.value("raw_text", "");
    rule.fail_call = jr.value("fail_call", false);
    add_rule(std::move(rule));
  }
}

namespace {

std::string render_mock_text(Verdict verdict, double confidence,
                             const nlohmann::json& findings,
                             const std::string& reasoning) {
  nlohmann::json obj = {{"verdict", to_string(verdict)},
                        {"confidence", confidence},
                        {"findings", findings},
                        {"reasoning", reasoning}};
  return "Reviewed.\n```json\n" + obj.dump() + "\n```\n";
}

}  // namespace

ProviderResponse MockProvider::complete(const ProviderRequest& request) {
  const std::string sample_id = prompt_sample_id(request.prompt);
  const std::optional<AgentKind> agent = prompt_agent(request.prompt);
  const Rule* best = nullptr;
  int best_score = -1;
  {
    std::lock_guard<std::mutex> lock(mu_);
    log_.push_back(request);
    for (const Rule& rule : rules_) {
      int score = 0;
      if (!rule.sample_id.empty()) {
        if (rule.sample_id != sample_id) continue;
        score += 1;
      }
      if (rule.agent) {
        if (!agent || *rule.agent != *agent) continue;
        score += 1;
      }
      if (rule.temperature) {
        if (std::abs(*rule.temperature - request.temperature) > 1e-9) continue;
        score += 1;
      }
      if (score > best_score) {
        best_score = score;
        best = &rule;
      }
    }
  }
  if (best && best->fail_call)
    throw ProviderFailure("mock: simulated provider failure for sample '" +
                          sample_id + "'");
  std::string text;
  if (best) {
    text = best->raw_text.empty()
               ? render_mock_text(best->verdict, best->confidence,
                                  best->findings, best->reasoning)
               : best->raw_text;
  } else if (prompt_has_pattern_findings(request.prompt)) {
    text = render_mock_text(Verdict::FAIL, 0.8, nlohmann::json::array(),
                            "pattern findings corroborated");
  } else {
    text = render_mock_text(Verdict::PASS, 0.7, nlohmann::json::array(),
                            "no defect evident");
  }
  ProviderResponse resp;
  resp.text = std::move(text);
  resp.input_tokens = static_cast<std::int64_t>(request.prompt.size() / 4);
  resp.output_tokens = static_cast<std::int64_t>(resp.text.size() / 4);
  resp.cost_usd = kMockCostPerCall;
  resp.latency_ms = kMockLatencyMs;
  return resp;
}

std::vector<ProviderRequest> MockProvider::recorded() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_;
}

size_t MockProvider::call_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_.size();
}

}  // namespace multiver
