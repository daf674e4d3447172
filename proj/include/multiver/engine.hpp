#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "multiver/analysis.hpp"
#include "multiver/ensemble.hpp"

namespace multiver {

inline constexpr int kDefaultInflightLimit = 8;

struct EngineConfig {
  VoteMode mode = VoteMode::UNION;
  bool rag_enabled = true;
  std::set<AgentKind> enabled_agents = {AgentKind::SECURITY,
                                        AgentKind::CORRECTNESS,
                                        AgentKind::PERFORMANCE,
                                        AgentKind::STYLE};
  WeightedThresholds thresholds;
  int retrieval_k = static_cast<int>(kDefaultRetrievalK);
  int complexity_threshold = kComplexityThreshold;
  std::string model_id = kDefaultModelId;
  SelfConsistencyConfig self_consistency;
  std::array<AgentConfig, 4> agents = default_agent_configs();
  int provider_inflight_limit = kDefaultInflightLimit;

  // INVALID_CONFIG unless enabled_agents is nonempty and contains SECURITY.
  void validate() const;
};

// One analyzed sample: the ensemble decision plus everything needed for
// auditing — data-flow context, retrieval provenance, and exact
// cost/latency roll-ups (totals are sums of the per-agent figures).
struct AnalysisReport {
  std::string sample_id;
  EnsembleDecision decision;
  std::optional<FlowContext> flow_context;
  std::vector<std::string> retrieval_ids;
  double total_cost_usd = 0.0;
  std::int64_t total_latency_ms = 0;
  std::vector<std::string> diagnostics;       // "<agent>: <message>"
  std::vector<AgentKind> provider_failures;   // agents that lost every call
};

void to_json(json& j, const AnalysisReport& r);

// Plain-text rendering; ANSI color only when `color` is set.
std::string render_report_text(const AnalysisReport& r, bool color = false);

// Runs the enabled agents (concurrently) on one sample and votes.
// Disabled agents contribute a synthesized PASS at full confidence so
// voting always sees all four. The provider in-flight cap is shared
// across every analyze() call on the same engine.
class Engine {
 public:
  Engine(EngineConfig config, const SignatureSet* signatures,
         const KnowledgeStore* store, CompletionProvider* provider);

  AnalysisReport analyze(const CodeSample& sample) const;

  const EngineConfig& config() const { return config_; }

 private:
  EngineConfig config_;
  const SignatureSet* signatures_;
  const KnowledgeStore* store_;
  CompletionProvider* provider_;
  mutable ProviderSemaphore semaphore_;
};

}  // namespace multiver
