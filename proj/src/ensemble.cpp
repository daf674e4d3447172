#include "multiver/ensemble.hpp"

#include <cmath>
#include <cstdio>

namespace multiver {

namespace {

const AgentVerdict& require_agent(
    const std::map<AgentKind, AgentVerdict>& verdicts, AgentKind kind) {
  auto it = verdicts.find(kind);
  if (it == verdicts.end())
    throw Error(ErrorCode::MISSING_AGENT,
                std::string("no verdict for agent '") + to_string(kind) + "'");
  return it->second;
}

bool raises(const AgentVerdict& v) { return v.verdict != Verdict::PASS; }

}  // namespace

void WeightedThresholds::validate() const {
  if (!(0.0 < warn_at && warn_at < fail_at && fail_at <= 1.0)) {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "thresholds must satisfy 0 < warn_at < fail_at <= 1 "
                  "(got warn_at=%g, fail_at=%g)",
                  warn_at, fail_at);
    throw Error(ErrorCode::INVALID_CONFIG, buf);
  }
}

EnsembleDecision union_vote(
    const std::map<AgentKind, AgentVerdict>& verdicts) {
  for (AgentKind kind : kAllAgents) require_agent(verdicts, kind);
  const AgentVerdict& sec = verdicts.at(AgentKind::SECURITY);
  const AgentVerdict& cor = verdicts.at(AgentKind::CORRECTNESS);

  EnsembleDecision d;
  d.mode = VoteMode::UNION;
  d.per_agent = verdicts;
  d.flagged = raises(sec) || raises(cor);
  if (d.flagged) {
    d.overall_verdict = std::max(sec.verdict, cor.verdict);
    if (raises(sec)) d.triggering_agents.push_back(AgentKind::SECURITY);
    if (raises(cor)) d.triggering_agents.push_back(AgentKind::CORRECTNESS);
  }
  return d;
}

double weighted_score(const std::map<AgentKind, AgentVerdict>& verdicts,
                      const std::array<AgentConfig, 4>& configs) {
  double weight_sum = 0.0;
  for (const auto& c : configs) weight_sum += c.weight;
  if (std::fabs(weight_sum - 1.0) > 1e-9) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "agent weights sum to %.12g, not 1.0",
                  weight_sum);
    throw Error(ErrorCode::BAD_WEIGHTS, buf);
  }
  double score = 0.0;
  for (AgentKind kind : kAllAgents) {
    const AgentVerdict& v = require_agent(verdicts, kind);
    score += config_for(configs, kind).weight * severity_value(v.verdict) *
             v.confidence;
  }
  return score;
}

EnsembleDecision weighted_vote(
    const std::map<AgentKind, AgentVerdict>& verdicts,
    const std::array<AgentConfig, 4>& configs,
    const WeightedThresholds& thresholds) {
  thresholds.validate();
  const double score = weighted_score(verdicts, configs);

  EnsembleDecision d;
  d.mode = VoteMode::WEIGHTED;
  d.per_agent = verdicts;
  d.score = score;
  if (score >= thresholds.fail_at)
    d.overall_verdict = Verdict::FAIL;
  else if (score >= thresholds.warn_at)
    d.overall_verdict = Verdict::WARNING;
  else
    d.overall_verdict = Verdict::PASS;
  d.flagged = d.overall_verdict != Verdict::PASS;
  if (d.flagged)
    for (AgentKind kind : kAllAgents)
      if (raises(verdicts.at(kind))) d.triggering_agents.push_back(kind);
  return d;
}

}  // namespace multiver
