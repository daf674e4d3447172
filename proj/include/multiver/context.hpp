#pragma once

// Data-flow context extraction for injection-class findings: input sources
// (function parameters, request fields, file reads), sensitive sinks
// (execute/eval/open/system call classes), source→sink paths tracked through
// at most two levels of user-function calls, and validation calls seen along
// the way. Validation calls are recorded but never suppress a path; the
// downstream adjudicator weighs them.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "multiver/core.hpp"
#include "multiver/pysource.hpp"

namespace multiver {

enum class SourceKind { FUNCTION_PARAMETER, REQUEST_FIELD, FILE_READ };
enum class SinkKind { EXECUTE, EVAL, OPEN, SYSTEM };
enum class ValidationKind { TYPE_CHECK, SANITIZE, ESCAPE };

std::string to_string(SourceKind k);
std::string to_string(SinkKind k);
std::string to_string(ValidationKind k);

struct SourceRef {
  SourceKind kind = SourceKind::FUNCTION_PARAMETER;
  std::string name;  // parameter name, field expression, or reader callee
  int line = 0;
};

struct SinkRef {
  SinkKind kind = SinkKind::EXECUTE;
  std::string callee;
  int line = 0;
};

struct FlowStep {
  std::string function;  // "<module>" at module level
  int line = 0;
};

struct FlowPath {
  SourceRef source;
  SinkRef sink;
  std::vector<FlowStep> steps;  // source's function first, sink's last
  int call_depth = 0;           // user-function call edges crossed (max 2)
};

struct ValidationRef {
  ValidationKind kind = ValidationKind::TYPE_CHECK;
  std::string check;
  int line = 0;
};

struct FlowContext {
  std::vector<SourceRef> sources;
  std::vector<SinkRef> sinks;
  std::vector<FlowPath> paths;
  std::vector<ValidationRef> validations;
};

// Call-name classifiers shared with the pattern checks.
std::optional<SinkKind> classify_sink(const std::string& callee);
std::optional<ValidationKind> classify_validation(const std::string& callee);

constexpr int kMaxFlowCallDepth = 2;

// Runs only when some finding is injection-class (injection or path
// traversal); otherwise empty. Unlexable input yields empty with a
// diagnostic appended.
std::optional<FlowContext> extract_context(const CodeSample& sample,
                                           const std::vector<Finding>& findings,
                                           const pysrc::ParsedSource& parsed,
                                           std::vector<std::string>* diagnostics);

std::string render_context(const FlowContext& ctx);

void to_json(nlohmann::json& j, const SourceRef& v);
void to_json(nlohmann::json& j, const SinkRef& v);
void to_json(nlohmann::json& j, const FlowPath& v);
void to_json(nlohmann::json& j, const ValidationRef& v);
void to_json(nlohmann::json& j, const FlowContext& v);

}  // namespace multiver
