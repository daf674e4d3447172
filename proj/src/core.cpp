#include "multiver/core.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

namespace multiver {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MALFORMED_RECORD: return "MALFORMED_RECORD";
    case ErrorCode::DUPLICATE_ID: return "DUPLICATE_ID";
    case ErrorCode::IO_FAILURE: return "IO_FAILURE";
    case ErrorCode::EMPTY_TEXT: return "EMPTY_TEXT";
    case ErrorCode::PROVIDER_FAILURE: return "PROVIDER_FAILURE";
    case ErrorCode::MISSING_AGENT: return "MISSING_AGENT";
    case ErrorCode::BAD_WEIGHTS: return "BAD_WEIGHTS";
    case ErrorCode::WRONG_ARITY: return "WRONG_ARITY";
    case ErrorCode::MISSING_LABEL: return "MISSING_LABEL";
    case ErrorCode::EMPTY_INPUT: return "EMPTY_INPUT";
    case ErrorCode::INVALID_SIGNATURE: return "INVALID_SIGNATURE";
    case ErrorCode::INVALID_CONFIG: return "INVALID_CONFIG";
  }
  return "UNKNOWN";
}

double severity_value(Verdict v) {
  switch (v) {
    case Verdict::PASS: return 0.0;
    case Verdict::WARNING: return 0.5;
    case Verdict::FAIL: return 1.0;
  }
  return 0.0;
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::PASS: return "PASS";
    case Verdict::WARNING: return "WARNING";
    case Verdict::FAIL: return "FAIL";
  }
  return "PASS";
}

std::optional<Verdict> verdict_from_string(const std::string& s) {
  std::string u = lower(s);
  if (u == "pass") return Verdict::PASS;
  if (u == "warning" || u == "warn") return Verdict::WARNING;
  if (u == "fail") return Verdict::FAIL;
  return std::nullopt;
}

const char* to_string(AgentKind k) {
  switch (k) {
    case AgentKind::SECURITY: return "security";
    case AgentKind::CORRECTNESS: return "correctness";
    case AgentKind::PERFORMANCE: return "performance";
    case AgentKind::STYLE: return "style";
  }
  return "security";
}

std::optional<AgentKind> agent_from_string(const std::string& s) {
  std::string u = lower(s);
  if (u == "security") return AgentKind::SECURITY;
  if (u == "correctness") return AgentKind::CORRECTNESS;
  if (u == "performance") return AgentKind::PERFORMANCE;
  if (u == "style") return AgentKind::STYLE;
  return std::nullopt;
}

const char* to_string(InvocationPolicy p) {
  switch (p) {
    case InvocationPolicy::ALWAYS: return "always";
    case InvocationPolicy::ON_PATTERN_SILENCE_OR_COMPLEXITY:
      return "on_pattern_silence_or_complexity";
    case InvocationPolicy::NEVER: return "never";
  }
  return "always";
}

std::array<AgentConfig, 4> default_agent_configs() {
  return {{
      {AgentKind::SECURITY, 0.45, 0.53, InvocationPolicy::ALWAYS, true},
      {AgentKind::CORRECTNESS, 0.35, 0.995,
       InvocationPolicy::ON_PATTERN_SILENCE_OR_COMPLEXITY, false},
      {AgentKind::PERFORMANCE, 0.15, 0.286, InvocationPolicy::ALWAYS, false},
      {AgentKind::STYLE, 0.05, 1.00, InvocationPolicy::NEVER, false},
  }};
}

const AgentConfig& config_for(const std::array<AgentConfig, 4>& configs,
                              AgentKind kind) {
  for (const auto& c : configs) {
    if (c.kind == kind) return c;
  }
  throw Error(ErrorCode::MISSING_AGENT,
              std::string("no config for agent ") + to_string(kind));
}

const char* to_string(FindingCategory c) {
  switch (c) {
    case FindingCategory::INJECTION: return "injection";
    case FindingCategory::XSS: return "xss";
    case FindingCategory::PATH_TRAVERSAL: return "path_traversal";
    case FindingCategory::AUTH: return "auth";
    case FindingCategory::CRYPTO: return "crypto";
    case FindingCategory::DESERIALIZATION: return "deserialization";
    case FindingCategory::EXCEPTION_HANDLING: return "exception_handling";
    case FindingCategory::INPUT_VALIDATION: return "input_validation";
    case FindingCategory::PERFORMANCE: return "performance";
    case FindingCategory::STYLE: return "style";
    case FindingCategory::OTHER: return "other";
  }
  return "other";
}

std::optional<FindingCategory> category_from_string(const std::string& s) {
  std::string u = lower(s);
  for (FindingCategory c : kAllCategories) {
    if (u == to_string(c)) return c;
  }
  return std::nullopt;
}

bool is_injection_type(FindingCategory c) {
  // PATH_TRAVERSAL counts as injection-type: the signature set maps it to
  // the same source->sink shape the extractor understands.
  return c == FindingCategory::INJECTION ||
         c == FindingCategory::PATH_TRAVERSAL;
}

const char* to_string(Tier t) {
  switch (t) {
    case Tier::PATTERN: return "pattern";
    case Tier::RAG: return "rag";
    case Tier::LLM: return "llm";
  }
  return "pattern";
}

static std::optional<Tier> tier_from_string(const std::string& s) {
  std::string u = lower(s);
  if (u == "pattern") return Tier::PATTERN;
  if (u == "rag") return Tier::RAG;
  if (u == "llm") return Tier::LLM;
  return std::nullopt;
}

std::string normalize_cwe(const std::string& raw) {
  std::string digits;
  for (char c : raw) {
    if (std::isdigit(static_cast<unsigned char>(c))) digits.push_back(c);
  }
  if (digits.empty()) return raw;
  while (digits.size() > 1 && digits.front() == '0') digits.erase(digits.begin());
  char buf[16];
  if (digits.size() >= 3) {
    std::snprintf(buf, sizeof(buf), "CWE-%s", digits.c_str());
  } else {
    std::snprintf(buf, sizeof(buf), "CWE-%03d", std::stoi(digits));
  }
  return buf;
}

FindingCategory category_for_cwe(const std::string& cwe) {
  std::string n = normalize_cwe(cwe);
  if (n == "CWE-078" || n == "CWE-089" || n == "CWE-094" || n == "CWE-077")
    return FindingCategory::INJECTION;
  if (n == "CWE-079" || n == "CWE-080") return FindingCategory::XSS;
  if (n == "CWE-022") return FindingCategory::PATH_TRAVERSAL;
  if (n == "CWE-287" || n == "CWE-306" || n == "CWE-798")
    return FindingCategory::AUTH;
  if (n == "CWE-327" || n == "CWE-330") return FindingCategory::CRYPTO;
  if (n == "CWE-502") return FindingCategory::DESERIALIZATION;
  if (n == "CWE-703") return FindingCategory::EXCEPTION_HANDLING;
  if (n == "CWE-020" || n == "CWE-117") return FindingCategory::INPUT_VALIDATION;
  return FindingCategory::OTHER;
}

const char* to_string(SampleLabel l) {
  return l == SampleLabel::VULNERABLE ? "vulnerable" : "fixed";
}

std::optional<SampleLabel> label_from_string(const std::string& s) {
  std::string u = lower(s);
  if (u == "vulnerable") return SampleLabel::VULNERABLE;
  if (u == "fixed") return SampleLabel::FIXED;
  return std::nullopt;
}

const char* to_string(VoteMode m) {
  return m == VoteMode::UNION ? "union" : "weighted";
}

std::optional<VoteMode> vote_mode_from_string(const std::string& s) {
  std::string u = lower(s);
  if (u == "union") return VoteMode::UNION;
  if (u == "weighted") return VoteMode::WEIGHTED;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const Finding& f) {
  j = json{{"id", f.id},
           {"category", to_string(f.category)},
           {"message", f.message},
           {"start_line", f.start_line},
           {"end_line", f.end_line},
           {"tier", to_string(f.tier)}};
  if (!f.cwe.empty()) j["cwe"] = f.cwe;
}

void from_json(const json& j, Finding& f) {
  f.id = j.value("id", "");
  f.cwe = j.contains("cwe") ? normalize_cwe(j.at("cwe").get<std::string>()) : "";
  f.category = category_from_string(j.value("category", "other"))
                   .value_or(FindingCategory::OTHER);
  f.message = j.value("message", "");
  f.start_line = j.value("start_line", 1);
  f.end_line = j.value("end_line", f.start_line);
  f.tier = tier_from_string(j.value("tier", "pattern")).value_or(Tier::PATTERN);
}

void to_json(json& j, const AgentVerdict& v) {
  j = json{{"agent", to_string(v.agent)},
           {"verdict", to_string(v.verdict)},
           {"confidence", v.confidence},
           {"findings", v.findings},
           {"reasoning", v.reasoning},
           {"tier_reached", to_string(v.tier_reached)},
           {"cost_usd", v.cost_usd},
           {"latency_ms", v.latency_ms}};
}

void from_json(const json& j, AgentVerdict& v) {
  v.agent = agent_from_string(j.value("agent", "security"))
                .value_or(AgentKind::SECURITY);
  v.verdict =
      verdict_from_string(j.value("verdict", "PASS")).value_or(Verdict::PASS);
  v.confidence = j.value("confidence", 0.0);
  v.findings = j.value("findings", std::vector<Finding>{});
  v.reasoning = j.value("reasoning", "");
  v.tier_reached = tier_from_string(j.value("tier_reached", "pattern"))
                       .value_or(Tier::PATTERN);
  v.cost_usd = j.value("cost_usd", 0.0);
  v.latency_ms = j.value("latency_ms", std::int64_t{0});
}

void to_json(json& j, const CodeSample& s) {
  j = json{{"id", s.id}, {"code", s.source}};
  if (!s.origin.empty()) j["origin"] = s.origin;
  if (s.label) j["label"] = to_string(*s.label);
  if (!s.cwe.empty()) j["cwe"] = s.cwe;
}

void from_json(const json& j, CodeSample& s) {
  s.id = j.at("id").get<std::string>();
  s.source = j.contains("code") ? j.at("code").get<std::string>()
                                : j.value("source", "");
  s.origin = j.value("origin", "");
  s.label.reset();
  if (j.contains("label")) {
    s.label = label_from_string(j.at("label").get<std::string>());
  }
  s.cwe = j.contains("cwe") ? normalize_cwe(j.at("cwe").get<std::string>()) : "";
}

void to_json(json& j, const AgentConfig& c) {
  j = json{{"kind", to_string(c.kind)},
           {"weight", c.weight},
           {"pattern_recall", c.pattern_recall},
           {"invocation_policy", to_string(c.invocation_policy)},
           {"self_consistency", c.self_consistency}};
}

void from_json(const json& j, AgentConfig& c) {
  c.kind = agent_from_string(j.at("kind").get<std::string>())
               .value_or(AgentKind::SECURITY);
  c.weight = j.value("weight", 0.0);
  c.pattern_recall = j.value("pattern_recall", 0.0);
  std::string p = j.value("invocation_policy", "always");
  if (p == "never") {
    c.invocation_policy = InvocationPolicy::NEVER;
  } else if (p == "on_pattern_silence_or_complexity") {
    c.invocation_policy = InvocationPolicy::ON_PATTERN_SILENCE_OR_COMPLEXITY;
  } else {
    c.invocation_policy = InvocationPolicy::ALWAYS;
  }
  c.self_consistency = j.value("self_consistency", false);
}

void to_json(json& j, const EnsembleDecision& d) {
  j = json{{"flagged", d.flagged},
           {"mode", to_string(d.mode)},
           {"overall_verdict", to_string(d.overall_verdict)}};
  if (d.score) j["score"] = *d.score;
  json triggers = json::array();
  for (AgentKind k : d.triggering_agents) triggers.push_back(to_string(k));
  j["triggering_agents"] = triggers;
  json agents = json::object();
  for (const auto& [kind, verdict] : d.per_agent) {
    agents[to_string(kind)] = verdict;
  }
  j["per_agent"] = agents;
}

void from_json(const json& j, EnsembleDecision& d) {
  d.flagged = j.value("flagged", false);
  d.mode = vote_mode_from_string(j.value("mode", "union"))
               .value_or(VoteMode::UNION);
  d.score.reset();
  if (j.contains("score")) d.score = j.at("score").get<double>();
  d.overall_verdict = verdict_from_string(j.value("overall_verdict", "PASS"))
                          .value_or(Verdict::PASS);
  d.triggering_agents.clear();
  for (const auto& t : j.value("triggering_agents", json::array())) {
    if (auto k = agent_from_string(t.get<std::string>())) {
      d.triggering_agents.push_back(*k);
    }
  }
  d.per_agent.clear();
  if (j.contains("per_agent")) {
    for (const auto& [key, value] : j.at("per_agent").items()) {
      if (auto k = agent_from_string(key)) {
        d.per_agent[*k] = value.get<AgentVerdict>();
      }
    }
  }
}

}  // namespace multiver
