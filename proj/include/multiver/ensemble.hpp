#pragma once

#include <array>
#include <map>

#include "multiver/core.hpp"

namespace multiver {

struct WeightedThresholds {
  double warn_at = 0.25;
  double fail_at = 0.5;

  // INVALID_CONFIG unless 0 < warn_at < fail_at <= 1.
  void validate() const;
};

// Recall-first union: flagged iff security or correctness returned
// WARNING/FAIL; performance and style never affect the outcome.
EnsembleDecision union_vote(
    const std::map<AgentKind, AgentVerdict>& verdicts);

// Sum of weight * severity * confidence over the four agents, in agent
// order. Severity: PASS 0, WARNING 0.5, FAIL 1.
double weighted_score(const std::map<AgentKind, AgentVerdict>& verdicts,
                      const std::array<AgentConfig, 4>& configs);

// Thresholded weighted score; boundaries compare with >= (flag on tie).
EnsembleDecision weighted_vote(
    const std::map<AgentKind, AgentVerdict>& verdicts,
    const std::array<AgentConfig, 4>& configs,
    const WeightedThresholds& thresholds = {});

}  // namespace multiver
