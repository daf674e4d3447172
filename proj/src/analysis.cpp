#include "multiver/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <set>
#include <sstream>
#include <tuple>

namespace multiver {

namespace {

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string fmt_sim(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void append_block_lines(std::ostringstream& os, const std::string& text,
                        const char* prefix) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) os << prefix << line << "\n";
}

const char* agent_focus(AgentKind agent) {
  switch (agent) {
    case AgentKind::SECURITY:
      return "Focus on exploitable flaws: injection, path traversal, weak "
             "cryptography, unsafe deserialization, hardcoded credentials.";
    case AgentKind::CORRECTNESS:
      return "Focus on logic defects: swallowed exceptions, unvalidated "
             "inputs reaching sensitive calls, unchecked return values.";
    case AgentKind::PERFORMANCE:
      return "Focus on wasteful patterns: redundant nested loops, linear "
             "membership tests inside loops, string concatenation in loops.";
    case AgentKind::STYLE:
      return "Focus on naming conventions, missing docstrings, and "
             "oversized functions.";
  }
  return "";
}

// --- response parsing helpers ---------------------------------------------

// All complete fenced blocks, last first; prefer one that parses to an
// object carrying a "verdict" key, else the last parseable object.
std::optional<json> fenced_object(const std::string& text) {
  std::vector<size_t> fences;
  for (size_t pos = text.find("```"); pos != std::string::npos;
       pos = text.find("```", pos + 3))
    fences.push_back(pos);
  std::vector<std::string> contents;
  for (size_t i = 0; i + 1 < fences.size(); i += 2) {
    size_t body = text.find('\n', fences[i]);
    if (body == std::string::npos || body >= fences[i + 1]) continue;
    contents.push_back(text.substr(body + 1, fences[i + 1] - body - 1));
  }
  std::optional<json> fallback;
  for (auto it = contents.rbegin(); it != contents.rend(); ++it) {
    try {
      json j = json::parse(*it);
      if (!j.is_object()) continue;
      if (j.contains("verdict")) return j;
      if (!fallback) fallback = std::move(j);
    } catch (const json::exception&) {
    }
  }
  return fallback;
}

// Last balanced {...} in the raw text (string-literal aware), with the
// same verdict-key preference so nested finding objects don't shadow the
// verdict object that contains them.
std::optional<json> balanced_object(const std::string& text) {
  std::optional<json> fallback;
  for (size_t i = text.size(); i-- > 0;) {
    if (text[i] != '{') continue;
    int depth = 0;
    bool in_str = false, esc = false;
    for (size_t j = i; j < text.size(); ++j) {
      char c = text[j];
      if (in_str) {
        if (esc)
          esc = false;
        else if (c == '\\')
          esc = true;
        else if (c == '"')
          in_str = false;
      } else if (c == '"') {
        in_str = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          try {
            json doc = json::parse(text.substr(i, j - i + 1));
            if (doc.is_object()) {
              if (doc.contains("verdict")) return doc;
              if (!fallback) fallback = std::move(doc);
            }
          } catch (const json::exception&) {
          }
          break;
        }
      }
    }
  }
  return fallback;
}

}  // namespace

bool should_invoke_llm(const AgentConfig& config,
                       const std::vector<Finding>& pattern_findings,
                       const ComplexityScore& complexity,
                       int complexity_threshold) {
  switch (config.invocation_policy) {
    case InvocationPolicy::ALWAYS:
      return true;
    case InvocationPolicy::NEVER:
      return false;
    case InvocationPolicy::ON_PATTERN_SILENCE_OR_COMPLEXITY:
      return pattern_findings.empty() ||
             complexity.cyclomatic > complexity_threshold;
  }
  return false;
}

std::string build_prompt(const CodeSample& sample,
                         const std::vector<Finding>& pattern_findings,
                         const RetrievalBundle& retrieval,
                         const std::optional<FlowContext>& context,
                         AgentKind agent) {
  std::ostringstream os;
  os << "You are the " << to_string(agent)
     << " code-review agent in a multi-agent vulnerability detector. "
     << agent_focus(agent) << "\n\n";

  os << "Sample: " << sample.id << "\n";
  os << "CODE:\n";
  {
    std::istringstream in(sample.source);
    std::string line;
    int n = 0;
    char buf[16];
    while (std::getline(in, line)) {
      std::snprintf(buf, sizeof(buf), "%4d", ++n);
      os << buf << " | " << line << "\n";
    }
    if (n == 0) os << "   1 | \n";
  }

  os << "\nPATTERN FINDINGS:\n";
  if (pattern_findings.empty()) {
    os << "(none)\n";
  } else {
    for (const auto& f : pattern_findings) {
      os << "- lines " << f.start_line << "-" << f.end_line;
      if (!f.cwe.empty()) os << " " << f.cwe;
      os << " [" << f.id << "] " << f.message << "\n";
    }
  }

  os << "\nSIMILAR EXAMPLES:\n";
  if (retrieval.examples.empty()) {
    os << "(none)\n";
  } else {
    int n = 0;
    for (const auto& ex : retrieval.examples) {
      os << "[" << ++n << "] id=" << ex.record.id
         << " label=" << to_string(ex.record.label)
         << " cwe=" << ex.record.cwe
         << " similarity=" << fmt_sim(ex.similarity) << "\n";
      if (!ex.record.description.empty())
        os << "    description: " << ex.record.description << "\n";
      if (!ex.record.fix.empty()) os << "    fix: " << ex.record.fix << "\n";
      os << "    code:\n";
      append_block_lines(os, ex.record.code, "    | ");
    }
  }

  os << "\nSPECIFICATIONS:\n";
  if (retrieval.specs.empty()) {
    os << "(none)\n";
  } else {
    int n = 0;
    for (const auto& sp : retrieval.specs) {
      os << "[" << ++n << "] id=" << sp.id << " cwe=" << sp.cwe << "\n";
      os << "    cause: " << sp.cause << "\n";
      os << "    fix: " << sp.fix_guidance << "\n";
    }
  }

  if (context) {
    os << "\nDATA FLOW:\n";
    std::string rendered = render_context(*context);
    while (!rendered.empty() && rendered.back() == '\n') rendered.pop_back();
    os << rendered << "\n";
  }

  os << "\nOUTPUT FORMAT:\n"
     << "Respond with exactly one fenced json code block containing an "
        "object with keys: \"verdict\" (one of \"PASS\", \"WARNING\", "
        "\"FAIL\"), \"confidence\" (number in [0,1]), \"findings\" (array "
        "of objects with keys \"cwe\", \"message\", \"start_line\", "
        "\"end_line\"), and \"reasoning\" (string).\n";
  return os.str();
}

AgentVerdict parse_verdict(const ProviderResponse& response, AgentKind agent,
                           std::vector<std::string>* diagnostics) {
  AgentVerdict v;
  v.agent = agent;
  v.tier_reached = Tier::LLM;
  v.cost_usd = response.cost_usd;
  v.latency_ms = response.latency_ms;

  auto malformed = [&](const std::string& why) {
    v.verdict = Verdict::WARNING;
    v.confidence = 0.3;
    v.findings.clear();
    v.reasoning = response.text;
    if (diagnostics)
      diagnostics->push_back("MALFORMED_VERDICT: " + why);
    return v;
  };

  std::optional<json> doc = fenced_object(response.text);
  if (!doc) doc = balanced_object(response.text);
  if (!doc) return malformed("no structured object in response");

  if (!doc->contains("verdict") || !(*doc)["verdict"].is_string())
    return malformed("structured object lacks a verdict field");
  const std::string raw = (*doc)["verdict"].get<std::string>();
  auto verdict = verdict_from_string(raw);
  if (!verdict) return malformed("unknown verdict '" + raw + "'");
  v.verdict = *verdict;

  double conf = 0.5;
  if (doc->contains("confidence") && (*doc)["confidence"].is_number()) {
    conf = (*doc)["confidence"].get<double>();
  } else if (diagnostics) {
    diagnostics->push_back("verdict missing confidence; defaulted to 0.5");
  }
  if (conf < 0.0 || conf > 1.0) {
    double clamped = std::clamp(conf, 0.0, 1.0);
    if (diagnostics)
      diagnostics->push_back("confidence " + fmt_num(conf) + " clamped to " +
                             fmt_num(clamped));
    conf = clamped;
  }
  v.confidence = conf;

  if (doc->contains("findings") && (*doc)["findings"].is_array()) {
    int n = 0;
    for (const auto& fj : (*doc)["findings"]) {
      if (!fj.is_object()) {
        if (diagnostics)
          diagnostics->push_back("non-object entry in findings skipped");
        continue;
      }
      try {
        Finding f;
        f.tier = Tier::LLM;
        if (fj.contains("cwe") && fj["cwe"].is_string())
          f.cwe = normalize_cwe(fj["cwe"].get<std::string>());
        if (fj.contains("category") && fj["category"].is_string()) {
          f.category =
              category_from_string(fj["category"].get<std::string>())
                  .value_or(category_for_cwe(f.cwe));
        } else {
          f.category = category_for_cwe(f.cwe);
        }
        f.message = fj.value("message", "");
        f.start_line = fj.value("start_line", 1);
        f.end_line = fj.value("end_line", f.start_line);
        if (f.start_line < 1) f.start_line = 1;
        if (f.end_line < f.start_line) f.end_line = f.start_line;
        f.id = std::string("llm-") + to_string(agent) + "-" +
               std::to_string(++n);
        v.findings.push_back(std::move(f));
      } catch (const json::exception& e) {
        if (diagnostics)
          diagnostics->push_back(std::string("finding entry skipped: ") +
                                 e.what());
      }
    }
  }
  v.reasoning = doc->value("reasoning", "");
  return v;
}

AgentVerdict combine_verdicts(const std::vector<AgentVerdict>& verdicts) {
  if (verdicts.empty())
    throw Error(ErrorCode::EMPTY_INPUT,
                "combine_verdicts requires at least one verdict");

  std::array<int, 3> counts{};
  for (const auto& v : verdicts) counts[static_cast<int>(v.verdict)]++;

  int best_level = -1, best_count = 0;
  bool tie = false;
  for (int level = 0; level < 3; ++level) {
    if (counts[level] > best_count) {
      best_count = counts[level];
      best_level = level;
      tie = false;
    } else if (counts[level] == best_count && counts[level] > 0) {
      tie = true;
    }
  }
  const bool majority = best_count >= 2 && !tie;
  Verdict chosen = Verdict::PASS;
  if (majority) {
    chosen = static_cast<Verdict>(best_level);
  } else {
    for (int level = 2; level >= 0; --level)
      if (counts[level] > 0) {
        chosen = static_cast<Verdict>(level);
        break;
      }
  }

  // With a majority only the agreeing samples shape confidence/findings;
  // when every level differs all samples count (recall-first).
  std::vector<const AgentVerdict*> agreeing;
  for (const auto& v : verdicts)
    if (!majority || v.verdict == chosen) agreeing.push_back(&v);

  AgentVerdict out;
  out.agent = verdicts.front().agent;
  out.verdict = chosen;
  double conf_sum = 0.0;
  for (const auto* p : agreeing) conf_sum += p->confidence;
  out.confidence = conf_sum / static_cast<double>(agreeing.size());

  std::set<std::tuple<std::string, int, int>> seen;
  for (const auto* p : agreeing)
    for (const auto& f : p->findings)
      if (seen.insert({f.cwe, f.start_line, f.end_line}).second)
        out.findings.push_back(f);

  for (const auto* p : agreeing) {
    if (p->reasoning.empty()) continue;
    if (!out.reasoning.empty()) out.reasoning += "\n---\n";
    out.reasoning += p->reasoning;
  }

  out.tier_reached = Tier::PATTERN;
  for (const auto& v : verdicts) {
    out.cost_usd += v.cost_usd;
    out.latency_ms += v.latency_ms;
    if (static_cast<int>(v.tier_reached) > static_cast<int>(out.tier_reached))
      out.tier_reached = v.tier_reached;
  }
  return out;
}

AgentVerdict self_consistent_verdict(
    const std::vector<AgentVerdict>& verdicts) {
  if (verdicts.size() != 3)
    throw Error(ErrorCode::WRONG_ARITY,
                "self-consistency requires exactly 3 verdicts, got " +
                    std::to_string(verdicts.size()));
  return combine_verdicts(verdicts);
}

namespace {

struct SemaphoreSlot {
  ProviderSemaphore* sem;
  explicit SemaphoreSlot(ProviderSemaphore* s) : sem(s) {
    if (sem) sem->acquire();
  }
  ~SemaphoreSlot() {
    if (sem) sem->release();
  }
};

struct CallOutcome {
  std::optional<ProviderResponse> response;
  double fail_cost = 0.0;
  std::int64_t fail_latency = 0;
  std::string error;
};

CallOutcome issue_call(CompletionProvider* provider,
                       const ProviderRequest& request,
                       ProviderSemaphore* semaphore) {
  CallOutcome out;
  try {
    SemaphoreSlot slot(semaphore);
    out.response = provider->complete(request);
  } catch (const ProviderFailure& f) {
    out.fail_cost = f.cost_usd();
    out.fail_latency = f.latency_ms();
    out.error = f.what();
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

AgentRunResult run_agent(const CodeSample& sample, const AgentConfig& config,
                         const AgentRunDeps& deps) {
  if (!deps.signatures)
    throw Error(ErrorCode::INVALID_CONFIG, "run_agent requires signatures");

  AgentRunResult out;
  auto& diags = out.diagnostics;

  std::optional<pysrc::ParsedSource> local_parse;
  const pysrc::ParsedSource* parsed = deps.parsed;
  if (!parsed) {
    local_parse = pysrc::parse(sample.source);
    parsed = &*local_parse;
  }

  PatternResult pattern =
      pattern_pass(sample, *deps.signatures, config.kind, *parsed, &diags);
  ComplexityScore complexity = compute_complexity(*parsed, &diags);

  AgentVerdict pattern_verdict;
  pattern_verdict.agent = config.kind;
  pattern_verdict.verdict = pattern.verdict;
  pattern_verdict.confidence = pattern.confidence;
  pattern_verdict.findings = pattern.findings;
  pattern_verdict.tier_reached = Tier::PATTERN;

  const bool invoke = should_invoke_llm(config, pattern.findings, complexity,
                                        deps.complexity_threshold);
  if (!invoke || !deps.provider) {
    if (invoke && !deps.provider)
      diags.push_back("no provider configured; stopped at pattern tier");
    out.verdict = pattern_verdict;
    return out;
  }

  // Tier 2 only runs once Tier 3 is committed.
  RetrievalBundle retrieval;
  bool retrieved = false;
  if (deps.rag_enabled && deps.store && deps.store->example_count() > 0) {
    try {
      retrieval = deps.store->retrieve(
          sample.source, static_cast<size_t>(deps.retrieval_k), sample.id);
      retrieved = true;
      for (const auto& ex : retrieval.examples)
        out.retrieval_ids.push_back(ex.record.id);
    } catch (const Error& e) {
      diags.push_back(std::string("retrieval skipped: ") + e.what());
    }
  }

  out.context = extract_context(sample, pattern.findings, *parsed, &diags);

  const std::string prompt = build_prompt(sample, pattern.findings, retrieval,
                                          out.context, config.kind);

  std::vector<ProviderRequest> requests;
  requests.push_back(make_request(
      prompt, 1.0, deps.self_consistency.primary_thinking_budget,
      deps.model_id));
  if (config.self_consistency)
    for (double t : deps.self_consistency.diversity_temperatures)
      requests.push_back(make_request(prompt, t, 0, deps.model_id));

  std::vector<CallOutcome> outcomes(requests.size());
  if (requests.size() == 1) {
    outcomes[0] = issue_call(deps.provider, requests[0], deps.semaphore);
  } else {
    std::vector<std::future<CallOutcome>> futures;
    futures.reserve(requests.size());
    for (const auto& r : requests)
      futures.push_back(std::async(std::launch::async, issue_call,
                                   deps.provider, std::cref(r),
                                   deps.semaphore));
    for (size_t i = 0; i < futures.size(); ++i) outcomes[i] = futures[i].get();
  }

  std::vector<AgentVerdict> votes;
  double failed_cost = 0.0;
  std::int64_t failed_latency = 0;
  for (size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].response) {
      votes.push_back(parse_verdict(*outcomes[i].response, config.kind,
                                    &diags));
    } else {
      failed_cost += outcomes[i].fail_cost;
      failed_latency += outcomes[i].fail_latency;
      diags.push_back("PROVIDER_FAILURE: call " + std::to_string(i + 1) +
                      " of " + std::to_string(outcomes.size()) + ": " +
                      outcomes[i].error);
    }
  }

  AgentVerdict final_verdict;
  if (votes.empty()) {
    final_verdict = pattern_verdict;
    final_verdict.tier_reached = retrieved ? Tier::RAG : Tier::PATTERN;
    final_verdict.cost_usd = failed_cost;
    final_verdict.latency_ms = failed_latency;
    diags.push_back(
        "PROVIDER_FAILURE: all provider calls failed; pattern verdict kept");
    out.provider_failed = true;
    out.verdict = final_verdict;
    return out;
  }
  if (config.self_consistency && votes.size() == 3) {
    final_verdict = self_consistent_verdict(votes);
  } else {
    final_verdict = combine_verdicts(votes);
  }
  final_verdict.agent = config.kind;
  final_verdict.tier_reached = Tier::LLM;
  final_verdict.cost_usd += failed_cost;
  final_verdict.latency_ms += failed_latency;

  // Pattern findings always survive into the final verdict; LLM findings
  // join them unless they duplicate a (cwe, span) already reported.
  const int max_line = std::max(1, parsed->total_lines);
  std::vector<Finding> merged = pattern.findings;
  std::set<std::tuple<std::string, int, int>> seen;
  for (const auto& f : merged) seen.insert({f.cwe, f.start_line, f.end_line});
  for (Finding f : final_verdict.findings) {
    if (f.start_line > max_line || f.end_line > max_line) {
      diags.push_back("finding " + f.id + " span clamped to " +
                      std::to_string(max_line) + " lines");
      f.start_line = std::min(f.start_line, max_line);
      f.end_line = std::min(std::max(f.end_line, f.start_line), max_line);
    }
    if (seen.insert({f.cwe, f.start_line, f.end_line}).second)
      merged.push_back(std::move(f));
  }
  final_verdict.findings = std::move(merged);

  out.verdict = final_verdict;
  return out;
}

}  // namespace multiver
