#pragma once

#include <array>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "multiver/context.hpp"
#include "multiver/core.hpp"
#include "multiver/knowledge.hpp"
#include "multiver/patterns.hpp"
#include "multiver/provider.hpp"
#include "multiver/pysource.hpp"

namespace multiver {

struct SelfConsistencyConfig {
  int samples = 3;
  int primary_thinking_budget = kDefaultThinkingBudget;
  std::array<double, 2> diversity_temperatures = {0.7, 0.9};
};

// Tier-3 invocation policy: ALWAYS / NEVER are literal; the conditional
// policy fires when patterns found nothing or cyclomatic complexity
// exceeds the threshold.
bool should_invoke_llm(const AgentConfig& config,
                       const std::vector<Finding>& pattern_findings,
                       const ComplexityScore& complexity,
                       int complexity_threshold = kComplexityThreshold);

// Deterministic prompt assembly. Blocks, in order: role preamble,
// "Sample: <id>", line-numbered code, PATTERN FINDINGS, SIMILAR EXAMPLES,
// SPECIFICATIONS, DATA FLOW (iff context), output-format instruction.
std::string build_prompt(const CodeSample& sample,
                         const std::vector<Finding>& pattern_findings,
                         const RetrievalBundle& retrieval,
                         const std::optional<FlowContext>& context,
                         AgentKind agent);

// Extracts the last fenced JSON object (fallback: last balanced object
// literal) from the response. Unparseable responses degrade to
// WARNING/0.3 with the raw text as reasoning and a MALFORMED_VERDICT
// diagnostic; out-of-range confidences are clamped with a diagnostic.
AgentVerdict parse_verdict(const ProviderResponse& response, AgentKind agent,
                           std::vector<std::string>* diagnostics = nullptr);

// Majority-else-most-severe over any nonempty batch: a strict majority
// level wins with confidence = mean of the agreeing verdicts and findings
// = union by (cwe, span) of the agreeing verdicts; otherwise the most
// severe level present wins and every input counts as agreeing.
// Cost and latency sum over all inputs either way.
AgentVerdict combine_verdicts(const std::vector<AgentVerdict>& verdicts);

// The 3-sample self-consistency contract; WRONG_ARITY unless exactly 3.
AgentVerdict self_consistent_verdict(const std::vector<AgentVerdict>& verdicts);

// Global in-flight cap shared across agents/samples (default limit 8).
using ProviderSemaphore = std::counting_semaphore<256>;

struct AgentRunDeps {
  const SignatureSet* signatures = nullptr;      // required
  const KnowledgeStore* store = nullptr;         // null: no retrieval
  CompletionProvider* provider = nullptr;        // null: pattern tier only
  bool rag_enabled = true;
  int retrieval_k = static_cast<int>(kDefaultRetrievalK);
  int complexity_threshold = kComplexityThreshold;
  std::string model_id = kDefaultModelId;
  SelfConsistencyConfig self_consistency;
  ProviderSemaphore* semaphore = nullptr;        // optional
  const pysrc::ParsedSource* parsed = nullptr;   // reuse an earlier parse
};

struct AgentRunResult {
  AgentVerdict verdict;
  std::optional<FlowContext> context;     // extracted for injection findings
  std::vector<std::string> retrieval_ids; // ids of retrieved examples
  std::vector<std::string> diagnostics;
  // True when the LLM was wanted but every call failed and the pattern
  // verdict stood in; evaluation treats such samples as unusable.
  bool provider_failed = false;
};

// The full three-tier pipeline for one agent on one sample. Patterns run
// first; retrieval and the LLM only when the policy demands it. Provider
// failures never raise: all-calls-failed falls back to the pattern
// verdict with a PROVIDER_FAILURE diagnostic, partial self-consistency
// batches combine the successes.
AgentRunResult run_agent(const CodeSample& sample, const AgentConfig& config,
                         const AgentRunDeps& deps);

}  // namespace multiver
