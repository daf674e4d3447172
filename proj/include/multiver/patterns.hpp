#pragma once

// Deterministic tier-1 checks: compiled vulnerability signatures (regex and
// structural query matchers), per-agent heuristic checks, and cyclomatic
// complexity. Zero external calls; designed to run in well under 50ms per
// file. Signature validation errors surface at load time, never mid-scan.

#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "json.hpp"

#include "multiver/core.hpp"
#include "multiver/pysource.hpp"

namespace multiver {

enum class MatcherKind { TEXTUAL_RULE, SYNTAX_QUERY };

std::string to_string(MatcherKind k);
MatcherKind matcher_kind_from_string(const std::string& s);

struct PatternSignature {
  std::string id;
  AgentKind agent = AgentKind::SECURITY;
  std::string cwe;  // normalized "CWE-NNN"
  MatcherKind matcher = MatcherKind::TEXTUAL_RULE;
  // TEXTUAL_RULE: an ECMAScript regex applied per source line.
  // SYNTAX_QUERY: space-separated key=value terms:
  //   kind=call callee=<re> [arg=any|dynamic|nonliteral] [lacks=<re>] [nocase]
  //   kind=assign target=<re> value=string_literal [nocase]
  std::string rule;
  Verdict produces = Verdict::FAIL;  // WARNING or FAIL on match
  std::string description;
};

struct CompiledSignature {
  PatternSignature spec;
  FindingCategory category = FindingCategory::OTHER;
  // TEXTUAL_RULE
  std::optional<std::regex> textual;
  // SYNTAX_QUERY
  enum class QueryKind { CALL, ASSIGN } query = QueryKind::CALL;
  enum class ArgConstraint { ANY, DYNAMIC_STRING, NONLITERAL } arg = ArgConstraint::ANY;
  std::optional<std::regex> callee;
  std::optional<std::regex> lacks;
  std::optional<std::regex> target;
  bool value_string_literal = false;
};

struct SignatureSet {
  std::vector<CompiledSignature> signatures;
  size_t size() const { return signatures.size(); }
};

// Both throw Error{INVALID_SIGNATURE} with the offending id (and, for the
// loader, the file position).
SignatureSet compile_signatures(const std::vector<PatternSignature>& sigs);
SignatureSet load_signatures(const std::string& path);

std::vector<PatternSignature> default_signatures();

void to_json(nlohmann::json& j, const PatternSignature& s);
void from_json(const nlohmann::json& j, PatternSignature& s);

struct ComplexityScore {
  int cyclomatic = 0;
  int loc = 0;  // nonblank lines
};

// Branch-counting over the token stream: 1 + occurrences of
// if/elif/while/for/and/or/except; 0 for input with no code tokens.
// Unlexable input scores {0, physical line count} and appends a diagnostic.
ComplexityScore compute_complexity(const pysrc::ParsedSource& parsed,
                                   std::vector<std::string>* diagnostics);

constexpr int kComplexityThreshold = 10;  // LLM escalation: cyclomatic > 10

struct StyleLimits {
  int max_function_lines = 80;
};

// Signature scan for one agent's signatures. Structural queries skip
// unlexable input with a diagnostic; textual rules still run.
std::vector<Finding> scan_signatures(const CodeSample& sample,
                                     const SignatureSet& set, AgentKind agent,
                                     const pysrc::ParsedSource& parsed,
                                     std::vector<std::string>* diagnostics);

std::vector<Finding> correctness_checks(const pysrc::ParsedSource& parsed);
std::vector<Finding> performance_checks(const pysrc::ParsedSource& parsed);
std::vector<Finding> style_checks(const pysrc::ParsedSource& parsed,
                                  const StyleLimits& limits = {});

struct PatternResult {
  std::vector<Finding> findings;
  Verdict verdict = Verdict::PASS;
  double confidence = kPatternPassConfidence;
};

// Full tier-1 pass for an agent: signatures plus that agent's heuristics,
// findings sorted by (line, id), verdict FAIL if any FAIL-producing
// signature hit, WARNING if anything else hit, PASS otherwise.
PatternResult pattern_pass(const CodeSample& sample, const SignatureSet& set,
                           AgentKind agent, const pysrc::ParsedSource& parsed,
                           std::vector<std::string>* diagnostics);

}  // namespace multiver
