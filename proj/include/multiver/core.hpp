#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "multiver/errors.hpp"
#include "json.hpp"

namespace multiver {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Verdict

enum class Verdict : int { PASS = 0, WARNING = 1, FAIL = 2 };

// Severity used by weighted voting: PASS=0, WARNING=0.5, FAIL=1.
double severity_value(Verdict v);

const char* to_string(Verdict v);
std::optional<Verdict> verdict_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Agents

enum class AgentKind : int { SECURITY = 0, CORRECTNESS = 1, PERFORMANCE = 2, STYLE = 3 };

inline constexpr std::array<AgentKind, 4> kAllAgents = {
    AgentKind::SECURITY, AgentKind::CORRECTNESS, AgentKind::PERFORMANCE,
    AgentKind::STYLE};

const char* to_string(AgentKind k);
std::optional<AgentKind> agent_from_string(const std::string& s);

enum class InvocationPolicy { ALWAYS, ON_PATTERN_SILENCE_OR_COMPLEXITY, NEVER };

const char* to_string(InvocationPolicy p);

struct AgentConfig {
  AgentKind kind = AgentKind::SECURITY;
  double weight = 0.0;
  // Measured recall of the agent's pattern tier; config metadata only,
  // not a reproducible property of the shipped signature set.
  double pattern_recall = 0.0;
  InvocationPolicy invocation_policy = InvocationPolicy::ALWAYS;
  bool self_consistency = false;
};

// Default four-agent configuration. Weights (0.45, 0.35, 0.15, 0.05) sum to
// exactly 1.0; only the security agent uses self-consistency sampling.
std::array<AgentConfig, 4> default_agent_configs();

const AgentConfig& config_for(const std::array<AgentConfig, 4>& configs,
                              AgentKind kind);

// ---------------------------------------------------------------------------
// Findings

enum class FindingCategory {
  INJECTION,
  XSS,
  PATH_TRAVERSAL,
  AUTH,
  CRYPTO,
  DESERIALIZATION,
  EXCEPTION_HANDLING,
  INPUT_VALIDATION,
  PERFORMANCE,
  STYLE,
  OTHER,
};

inline constexpr std::array<FindingCategory, 11> kAllCategories = {
    FindingCategory::INJECTION,          FindingCategory::XSS,
    FindingCategory::PATH_TRAVERSAL,     FindingCategory::AUTH,
    FindingCategory::CRYPTO,             FindingCategory::DESERIALIZATION,
    FindingCategory::EXCEPTION_HANDLING, FindingCategory::INPUT_VALIDATION,
    FindingCategory::PERFORMANCE,        FindingCategory::STYLE,
    FindingCategory::OTHER,
};

const char* to_string(FindingCategory c);
std::optional<FindingCategory> category_from_string(const std::string& s);

// Categories that gate data-flow context extraction.
bool is_injection_type(FindingCategory c);

enum class Tier { PATTERN, RAG, LLM };

const char* to_string(Tier t);

struct Finding {
  std::string id;
  std::string cwe;  // normalized "CWE-NNN", empty when not applicable
  FindingCategory category = FindingCategory::OTHER;
  std::string message;
  int start_line = 1;  // 1-based, inclusive
  int end_line = 1;
  Tier tier = Tier::PATTERN;
};

// Normalizes "89", "cwe-89", "CWE-089" to zero-padded "CWE-089".
// Returns the input unchanged when no number can be extracted.
std::string normalize_cwe(const std::string& raw);

// Default category for a CWE id (e.g. CWE-089 -> INJECTION).
FindingCategory category_for_cwe(const std::string& cwe);

// ---------------------------------------------------------------------------
// Verdicts and samples

struct AgentVerdict {
  AgentKind agent = AgentKind::SECURITY;
  Verdict verdict = Verdict::PASS;
  double confidence = 0.0;
  std::vector<Finding> findings;
  std::string reasoning;  // empty for pattern-only verdicts
  Tier tier_reached = Tier::PATTERN;
  double cost_usd = 0.0;
  std::int64_t latency_ms = 0;
};

enum class SampleLabel { VULNERABLE, FIXED };

const char* to_string(SampleLabel l);
std::optional<SampleLabel> label_from_string(const std::string& s);

struct CodeSample {
  std::string id;
  std::string source;
  std::string origin;                // file path when analyzing from disk
  std::optional<SampleLabel> label;  // evaluation corpora only
  std::string cwe;                   // ground-truth CWE when known
};

// ---------------------------------------------------------------------------
// Ensemble decision

enum class VoteMode { UNION, WEIGHTED };

const char* to_string(VoteMode m);
std::optional<VoteMode> vote_mode_from_string(const std::string& s);

struct EnsembleDecision {
  bool flagged = false;
  VoteMode mode = VoteMode::UNION;
  std::optional<double> score;  // present iff mode == WEIGHTED
  Verdict overall_verdict = Verdict::PASS;
  std::vector<AgentKind> triggering_agents;
  std::map<AgentKind, AgentVerdict> per_agent;
};

// Pattern-tier verdict confidences (the signature tier assigns no model
// confidence, so these constants stand in: deterministic signatures are
// high precision, heuristics less so).
inline constexpr double kPatternFailConfidence = 0.9;
inline constexpr double kPatternWarnConfidence = 0.6;
inline constexpr double kPatternPassConfidence = 1.0;

// ---------------------------------------------------------------------------
// JSON (snake_case canonical form used by reports and fixtures)

void to_json(json& j, const Finding& f);
void from_json(const json& j, Finding& f);
void to_json(json& j, const AgentVerdict& v);
void from_json(const json& j, AgentVerdict& v);
void to_json(json& j, const CodeSample& s);
void from_json(const json& j, CodeSample& s);
void to_json(json& j, const AgentConfig& c);
void from_json(const json& j, AgentConfig& c);
void to_json(json& j, const EnsembleDecision& d);
void from_json(const json& j, EnsembleDecision& d);

}  // namespace multiver
