#include "multiver/engine.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <set>
#include <sstream>

namespace multiver {

namespace {

std::string money(double usd) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "$%.4f", usd);
  return buf;
}

std::string frac(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

AgentVerdict disabled_verdict(AgentKind kind) {
  AgentVerdict v;
  v.agent = kind;
  v.verdict = Verdict::PASS;
  v.confidence = 1.0;
  v.reasoning = "agent disabled";
  v.tier_reached = Tier::PATTERN;
  return v;
}

}  // namespace

void EngineConfig::validate() const {
  if (enabled_agents.empty())
    throw Error(ErrorCode::INVALID_CONFIG, "no agents enabled");
  if (!enabled_agents.count(AgentKind::SECURITY))
    throw Error(ErrorCode::INVALID_CONFIG,
                "the security agent cannot be disabled");
  if (mode == VoteMode::WEIGHTED) thresholds.validate();
}

Engine::Engine(EngineConfig config, const SignatureSet* signatures,
               const KnowledgeStore* store, CompletionProvider* provider)
    : config_(std::move(config)),
      signatures_(signatures),
      store_(store),
      provider_(provider),
      semaphore_(std::clamp(config_.provider_inflight_limit, 1, 256)) {
  config_.validate();
  if (!signatures_)
    throw Error(ErrorCode::INVALID_CONFIG, "engine requires a signature set");
}

AnalysisReport Engine::analyze(const CodeSample& sample) const {
  AnalysisReport report;
  report.sample_id = sample.id;

  const pysrc::ParsedSource parsed = pysrc::parse(sample.source);

  AgentRunDeps deps;
  deps.signatures = signatures_;
  deps.store = store_;
  deps.provider = provider_;
  deps.rag_enabled = config_.rag_enabled;
  deps.retrieval_k = config_.retrieval_k;
  deps.complexity_threshold = config_.complexity_threshold;
  deps.model_id = config_.model_id;
  deps.self_consistency = config_.self_consistency;
  deps.semaphore = &semaphore_;
  deps.parsed = &parsed;

  std::map<AgentKind, std::future<AgentRunResult>> futures;
  for (AgentKind kind : kAllAgents) {
    if (!config_.enabled_agents.count(kind)) continue;
    const AgentConfig& agent_config = config_for(config_.agents, kind);
    futures.emplace(kind,
                    std::async(std::launch::async, run_agent, std::cref(sample),
                               std::cref(agent_config), std::cref(deps)));
  }

  std::map<AgentKind, AgentVerdict> verdicts;
  std::set<std::string> seen_retrieval;
  for (AgentKind kind : kAllAgents) {
    auto it = futures.find(kind);
    if (it == futures.end()) {
      verdicts[kind] = disabled_verdict(kind);
      continue;
    }
    AgentRunResult result = it->second.get();
    verdicts[kind] = result.verdict;
    if (!report.flow_context && result.context)
      report.flow_context = std::move(result.context);
    for (auto& id : result.retrieval_ids)
      if (seen_retrieval.insert(id).second)
        report.retrieval_ids.push_back(std::move(id));
    for (const auto& d : result.diagnostics)
      report.diagnostics.push_back(std::string(to_string(kind)) + ": " + d);
    if (result.provider_failed) report.provider_failures.push_back(kind);
  }

  report.decision = config_.mode == VoteMode::UNION
                        ? union_vote(verdicts)
                        : weighted_vote(verdicts, config_.agents,
                                        config_.thresholds);
  for (const auto& [kind, verdict] : verdicts) {
    report.total_cost_usd += verdict.cost_usd;
    report.total_latency_ms += verdict.latency_ms;
  }
  return report;
}

void to_json(json& j, const AnalysisReport& r) {
  j = json{{"sample_id", r.sample_id},
           {"decision", r.decision},
           {"retrieval_ids", r.retrieval_ids},
           {"total_cost_usd", r.total_cost_usd},
           {"total_latency_ms", r.total_latency_ms},
           {"diagnostics", r.diagnostics}};
  if (r.flow_context) j["flow_context"] = *r.flow_context;
  if (!r.provider_failures.empty()) {
    auto arr = json::array();
    for (AgentKind k : r.provider_failures) arr.push_back(to_string(k));
    j["provider_failures"] = arr;
  }
}

std::string render_report_text(const AnalysisReport& r, bool color) {
  const char* kRed = color ? "\x1b[31m" : "";
  const char* kYellow = color ? "\x1b[33m" : "";
  const char* kGreen = color ? "\x1b[32m" : "";
  const char* kBold = color ? "\x1b[1m" : "";
  const char* kReset = color ? "\x1b[0m" : "";
  auto verdict_color = [&](Verdict v) {
    switch (v) {
      case Verdict::FAIL: return kRed;
      case Verdict::WARNING: return kYellow;
      case Verdict::PASS: return kGreen;
    }
    return kReset;
  };

  std::ostringstream os;
  os << kBold << r.sample_id << kReset << ": "
     << (r.decision.flagged ? kRed : kGreen)
     << (r.decision.flagged ? "FLAGGED" : "clean") << kReset << " ("
     << to_string(r.decision.overall_verdict) << ", mode "
     << to_string(r.decision.mode);
  if (r.decision.score) os << ", score " << frac(*r.decision.score);
  os << ")\n";
  if (!r.decision.triggering_agents.empty()) {
    os << "  triggered by:";
    for (AgentKind k : r.decision.triggering_agents)
      os << " " << to_string(k);
    os << "\n";
  }
  for (AgentKind kind : kAllAgents) {
    auto it = r.decision.per_agent.find(kind);
    if (it == r.decision.per_agent.end()) continue;
    const AgentVerdict& v = it->second;
    char line[160];
    std::snprintf(line, sizeof(line),
                  "  %-12s %s%-7s%s conf %.2f  tier %-7s %s  %lld ms\n",
                  to_string(kind), verdict_color(v.verdict),
                  to_string(v.verdict), kReset, v.confidence,
                  to_string(v.tier_reached), money(v.cost_usd).c_str(),
                  static_cast<long long>(v.latency_ms));
    os << line;
    for (const auto& f : v.findings) {
      os << "    - L" << f.start_line;
      if (f.end_line != f.start_line) os << "-" << f.end_line;
      if (!f.cwe.empty()) os << " " << f.cwe;
      os << " [" << f.id << "] " << f.message << "\n";
    }
  }
  if (r.flow_context) {
    os << "  data flow:\n";
    std::istringstream in(render_context(*r.flow_context));
    std::string line;
    while (std::getline(in, line)) os << "    " << line << "\n";
  }
  os << "  total: " << money(r.total_cost_usd) << ", " << r.total_latency_ms
     << " ms\n";
  if (!r.diagnostics.empty()) {
    os << "  diagnostics:\n";
    for (const auto& d : r.diagnostics) os << "    - " << d << "\n";
  }
  return os.str();
}

}  // namespace multiver
