#include "multiver/patterns.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "multiver/context.hpp"
#include "multiver/errors.hpp"

namespace multiver {

namespace {

using pysrc::ParsedSource;

std::string sig_error(const std::string& id, const std::string& why) {
  return "signature '" + id + "': " + why;
}

std::regex compile_regex(const std::string& id, const std::string& pattern,
                         bool nocase) {
  auto flags = std::regex::ECMAScript;
  if (nocase) flags |= std::regex::icase;
  try {
    return std::regex(pattern, flags);
  } catch (const std::regex_error& e) {
    throw Error(ErrorCode::INVALID_SIGNATURE,
                sig_error(id, "bad regex '" + pattern + "': " + e.what()));
  }
}

CompiledSignature compile_one(const PatternSignature& sig) {
  if (sig.id.empty())
    throw Error(ErrorCode::INVALID_SIGNATURE, "signature with empty id");
  if (sig.produces == Verdict::PASS)
    throw Error(ErrorCode::INVALID_SIGNATURE,
                sig_error(sig.id, "produces must be WARNING or FAIL"));
  CompiledSignature cs;
  cs.spec = sig;
  cs.spec.cwe = sig.cwe.empty() ? "" : normalize_cwe(sig.cwe);
  if (!cs.spec.cwe.empty()) {
    cs.category = category_for_cwe(cs.spec.cwe);
  } else if (sig.agent == AgentKind::PERFORMANCE) {
    cs.category = FindingCategory::PERFORMANCE;
  } else if (sig.agent == AgentKind::STYLE) {
    cs.category = FindingCategory::STYLE;
  }
  if (sig.matcher == MatcherKind::TEXTUAL_RULE) {
    if (sig.rule.empty())
      throw Error(ErrorCode::INVALID_SIGNATURE, sig_error(sig.id, "empty rule"));
    cs.textual = compile_regex(sig.id, sig.rule, false);
    return cs;
  }
  // SYNTAX_QUERY term list.
  std::map<std::string, std::string> terms;
  bool nocase = false;
  std::istringstream is(sig.rule);
  std::string tok;
  while (is >> tok) {
    if (tok == "nocase") {
      nocase = true;
      continue;
    }
    size_t eq = tok.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Error(ErrorCode::INVALID_SIGNATURE,
                  sig_error(sig.id, "malformed term '" + tok + "'"));
    if (!terms.emplace(tok.substr(0, eq), tok.substr(eq + 1)).second)
      throw Error(ErrorCode::INVALID_SIGNATURE,
                  sig_error(sig.id, "duplicate term '" + tok.substr(0, eq) + "'"));
  }
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = terms.find(key);
    if (it == terms.end()) return std::nullopt;
    std::string v = it->second;
    terms.erase(it);
    return v;
  };
  auto kind = take("kind");
  if (!kind)
    throw Error(ErrorCode::INVALID_SIGNATURE, sig_error(sig.id, "missing kind="));
  if (*kind == "call") {
    cs.query = CompiledSignature::QueryKind::CALL;
    auto callee = take("callee");
    if (!callee)
      throw Error(ErrorCode::INVALID_SIGNATURE,
                  sig_error(sig.id, "kind=call requires callee="));
    cs.callee = compile_regex(sig.id, *callee, nocase);
    if (auto arg = take("arg")) {
      if (*arg == "any") cs.arg = CompiledSignature::ArgConstraint::ANY;
      else if (*arg == "dynamic") cs.arg = CompiledSignature::ArgConstraint::DYNAMIC_STRING;
      else if (*arg == "nonliteral") cs.arg = CompiledSignature::ArgConstraint::NONLITERAL;
      else
        throw Error(ErrorCode::INVALID_SIGNATURE,
                    sig_error(sig.id, "arg= must be any|dynamic|nonliteral"));
    }
    if (auto lacks = take("lacks")) cs.lacks = compile_regex(sig.id, *lacks, nocase);
  } else if (*kind == "assign") {
    cs.query = CompiledSignature::QueryKind::ASSIGN;
    auto target = take("target");
    if (!target)
      throw Error(ErrorCode::INVALID_SIGNATURE,
                  sig_error(sig.id, "kind=assign requires target="));
    cs.target = compile_regex(sig.id, *target, nocase);
    if (auto value = take("value")) {
      if (*value != "string_literal")
        throw Error(ErrorCode::INVALID_SIGNATURE,
                    sig_error(sig.id, "value= supports only string_literal"));
      cs.value_string_literal = true;
    }
  } else {
    throw Error(ErrorCode::INVALID_SIGNATURE,
                sig_error(sig.id, "kind= must be call or assign"));
  }
  if (!terms.empty())
    throw Error(ErrorCode::INVALID_SIGNATURE,
                sig_error(sig.id, "unknown term '" + terms.begin()->first + "='"));
  return cs;
}

bool arg_constraint_met(const CompiledSignature& cs, const pysrc::CallSite& call) {
  switch (cs.arg) {
    case CompiledSignature::ArgConstraint::ANY:
      return true;
    case CompiledSignature::ArgConstraint::DYNAMIC_STRING:
      return std::any_of(call.args.begin(), call.args.end(),
                         [](const pysrc::ArgExpr& a) {
                           return pysrc::is_dynamic_string_expr(a.tokens);
                         });
    case CompiledSignature::ArgConstraint::NONLITERAL:
      return std::any_of(call.args.begin(), call.args.end(),
                         [](const pysrc::ArgExpr& a) {
                           return !a.tokens.empty() &&
                                  !pysrc::is_pure_literal_expr(a.tokens);
                         });
  }
  return false;
}

Finding make_finding(const std::string& id_prefix, int line, int end_line,
                     const std::string& cwe, FindingCategory category,
                     const std::string& message) {
  Finding f;
  f.id = id_prefix + ":L" + std::to_string(line);
  f.cwe = cwe;
  f.category = category;
  f.message = message;
  f.start_line = line;
  f.end_line = std::max(line, end_line);
  f.tier = Tier::PATTERN;
  return f;
}

void sort_dedupe(std::vector<Finding>& fs) {
  std::sort(fs.begin(), fs.end(), [](const Finding& a, const Finding& b) {
    return std::tie(a.start_line, a.id, a.message) <
           std::tie(b.start_line, b.id, b.message);
  });
  fs.erase(std::unique(fs.begin(), fs.end(),
                       [](const Finding& a, const Finding& b) {
                         return a.id == b.id && a.start_line == b.start_line &&
                                a.end_line == b.end_line && a.message == b.message;
                       }),
           fs.end());
}

}  // namespace

std::string to_string(MatcherKind k) {
  return k == MatcherKind::TEXTUAL_RULE ? "textual_rule" : "syntax_query";
}

MatcherKind matcher_kind_from_string(const std::string& s) {
  if (s == "textual_rule") return MatcherKind::TEXTUAL_RULE;
  if (s == "syntax_query") return MatcherKind::SYNTAX_QUERY;
  throw Error(ErrorCode::INVALID_SIGNATURE, "unknown matcher kind '" + s + "'");
}

SignatureSet compile_signatures(const std::vector<PatternSignature>& sigs) {
  SignatureSet set;
  std::set<std::string> seen;
  for (const PatternSignature& sig : sigs) {
    if (!seen.insert(sig.id).second)
      throw Error(ErrorCode::INVALID_SIGNATURE,
                  sig_error(sig.id, "duplicate signature id"));
    set.signatures.push_back(compile_one(sig));
  }
  return set;
}

SignatureSet load_signatures(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IO_FAILURE, "cannot open signature file: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::INVALID_SIGNATURE, path + ": " + e.what());
  }
  const nlohmann::json* arr = &doc;
  if (doc.is_object() && doc.contains("signatures")) arr = &doc["signatures"];
  if (!arr->is_array())
    throw Error(ErrorCode::INVALID_SIGNATURE,
                path + ": expected an array of signatures");
  std::vector<PatternSignature> sigs;
  for (size_t i = 0; i < arr->size(); ++i) {
    try {
      sigs.push_back((*arr)[i].get<PatternSignature>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::INVALID_SIGNATURE,
                  path + ": entry " + std::to_string(i) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path + ": entry " + std::to_string(i) + ": " + e.what());
    }
  }
  try {
    return compile_signatures(sigs);
  } catch (Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

std::vector<PatternSignature> default_signatures() {
  std::vector<PatternSignature> v;
  auto add = [&](const char* id, const char* cwe, const char* rule,
                 const char* description) {
    PatternSignature s;
    s.id = id;
    s.agent = AgentKind::SECURITY;
    s.cwe = cwe;
    s.matcher = MatcherKind::SYNTAX_QUERY;
    s.rule = rule;
    s.produces = Verdict::FAIL;
    s.description = description;
    v.push_back(std::move(s));
  };
  add("sql-exec-dynamic", "CWE-089",
      "kind=call callee=(^|\\.)execute(many|script)?$ arg=dynamic",
      "SQL statement assembled from dynamic strings reaches execute");
  add("os-command-dynamic", "CWE-078",
      "kind=call "
      "callee=^(os\\.system|os\\.popen|subprocess\\.(run|call|check_call|check_"
      "output|Popen|getoutput)|commands\\.getoutput)$ arg=dynamic",
      "shell command built from dynamic strings");
  add("open-dynamic-path", "CWE-022",
      "kind=call callee=^(open|os\\.open|io\\.open|codecs\\.open)$ arg=dynamic",
      "file path assembled from dynamic strings");
  add("eval-nonliteral", "CWE-094",
      "kind=call callee=^(eval|exec)$ arg=nonliteral",
      "eval/exec of a non-literal expression");
  add("unsafe-deserialization", "CWE-502",
      "kind=call "
      "callee=^(pickle\\.(load|loads)|marshal\\.(load|loads)|yaml\\.load|dill\\."
      "(load|loads))$ lacks=SafeLoader|safe_load",
      "deserialization of untrusted data");
  add("weak-hash", "CWE-327", "kind=call callee=^hashlib\\.(md5|sha1)$",
      "weak cryptographic hash primitive");
  add("hardcoded-credential", "CWE-798",
      "kind=assign "
      "target=(password|passwd|pwd|secret|token|api_key|apikey|access_key) "
      "value=string_literal nocase",
      "credential literal assigned to a sensitive name");
  return v;
}

void to_json(nlohmann::json& j, const PatternSignature& s) {
  j = {{"id", s.id},
       {"agent", to_string(s.agent)},
       {"cwe", s.cwe},
       {"matcher", to_string(s.matcher)},
       {"rule", s.rule},
       {"produces", to_string(s.produces)},
       {"description", s.description}};
}

void from_json(const nlohmann::json& j, PatternSignature& s) {
  s.id = j.at("id").get<std::string>();
  auto agent = agent_from_string(j.at("agent").get<std::string>());
  if (!agent)
    throw Error(ErrorCode::INVALID_SIGNATURE,
                sig_error(s.id, "unknown agent '" + j["agent"].get<std::string>() + "'"));
  s.agent = *agent;
  s.cwe = j.value("cwe", "");
  s.matcher = matcher_kind_from_string(j.at("matcher").get<std::string>());
  s.rule = j.at("rule").get<std::string>();
  s.produces = Verdict::FAIL;
  if (j.contains("produces")) {
    auto produces = verdict_from_string(j.at("produces").get<std::string>());
    if (!produces)
      throw Error(ErrorCode::INVALID_SIGNATURE,
                  sig_error(s.id, "unknown produces level"));
    s.produces = *produces;
  }
  s.description = j.value("description", "");
}

ComplexityScore compute_complexity(const pysrc::ParsedSource& parsed,
                                   std::vector<std::string>* diagnostics) {
  if (!parsed.parse_ok) {
    if (diagnostics)
      diagnostics->push_back("PARSE_FAILURE: complexity defaulted: " +
                             parsed.parse_error);
    return ComplexityScore{0, parsed.total_lines};
  }
  if (!parsed.has_code) return ComplexityScore{0, parsed.nonblank_lines};
  return ComplexityScore{1 + parsed.branch_tokens, parsed.nonblank_lines};
}

std::vector<Finding> scan_signatures(const CodeSample& sample,
                                     const SignatureSet& set, AgentKind agent,
                                     const pysrc::ParsedSource& parsed,
                                     std::vector<std::string>* diagnostics) {
  std::vector<Finding> out;
  bool parse_noted = false;
  for (const CompiledSignature& cs : set.signatures) {
    if (cs.spec.agent != agent) continue;
    if (cs.textual) {
      std::istringstream is(sample.source);
      std::string line;
      int ln = 0;
      while (std::getline(is, line)) {
        ln += 1;
        if (std::regex_search(line, *cs.textual))
          out.push_back(make_finding(cs.spec.id, ln, ln, cs.spec.cwe,
                                     cs.category, cs.spec.description));
      }
      continue;
    }
    if (!parsed.parse_ok) {
      if (diagnostics && !parse_noted)
        diagnostics->push_back("PARSE_FAILURE: structural signatures skipped: " +
                               parsed.parse_error);
      parse_noted = true;
      continue;
    }
    if (cs.query == CompiledSignature::QueryKind::CALL) {
      for (const pysrc::CallSite& call : parsed.calls) {
        if (!std::regex_search(call.callee, *cs.callee)) continue;
        if (!arg_constraint_met(cs, call)) continue;
        if (cs.lacks && std::regex_search(call.text, *cs.lacks)) continue;
        out.push_back(make_finding(cs.spec.id, call.line, call.end_line,
                                   cs.spec.cwe, cs.category,
                                   cs.spec.description));
      }
    } else {
      for (const pysrc::Assignment& as : parsed.assigns) {
        if (as.op != "=") continue;
        if (!std::regex_search(as.target_text, *cs.target)) continue;
        if (cs.value_string_literal &&
            !(as.value.size() == 1 && as.value[0].kind == pysrc::TokKind::STRING))
          continue;
        out.push_back(make_finding(cs.spec.id, as.line, as.line, cs.spec.cwe,
                                   cs.category, cs.spec.description));
      }
    }
  }
  sort_dedupe(out);
  return out;
}

namespace {

// Handler bodies that only pass/continue/... swallow the error.
bool tokens_only_noise(const std::vector<pysrc::Token>& toks, size_t from) {
  bool any = false;
  for (size_t j = from; j < toks.size(); ++j) {
    const pysrc::Token& t = toks[j];
    if (t.kind == pysrc::TokKind::KEYWORD &&
        (t.text == "pass" || t.text == "continue")) {
      any = true;
    } else if (t.kind == pysrc::TokKind::OP && (t.text == "..." || t.text == ";")) {
      if (t.text == "...") any = true;
    } else {
      return false;
    }
  }
  return any;
}

std::vector<Finding> swallowed_exception_checks(const ParsedSource& ps) {
  std::vector<Finding> out;
  for (size_t li = 0; li < ps.lines.size(); ++li) {
    const pysrc::LogicalLine& ll = ps.lines[li];
    if (ll.head_keyword != "except") continue;
    size_t colon = ll.tokens.size();
    int d = 0;
    for (size_t j = 1; j < ll.tokens.size(); ++j) {
      const std::string& t = ll.tokens[j].text;
      if (ll.tokens[j].kind != pysrc::TokKind::OP) continue;
      if (t == "(" || t == "[" || t == "{") d += 1;
      else if (t == ")" || t == "]" || t == "}") d -= 1;
      else if (t == ":" && d == 0) { colon = j; break; }
    }
    if (colon == ll.tokens.size()) continue;
    bool bare = colon == 1;
    bool overbroad = false;
    if (!bare && ll.tokens[1].kind == pysrc::TokKind::IDENT &&
        (ll.tokens[1].text == "Exception" || ll.tokens[1].text == "BaseException")) {
      overbroad = colon == 2 ||
                  (ll.tokens[2].kind == pysrc::TokKind::KEYWORD &&
                   ll.tokens[2].text == "as");
    }
    if (!bare && !overbroad) continue;
    bool swallows = false;
    int end_line = ll.last_line;
    if (colon + 1 < ll.tokens.size()) {
      swallows = tokens_only_noise(ll.tokens, colon + 1);
    } else {
      auto body = ps.block_body(static_cast<int>(li));
      swallows = !body.empty();
      for (int b : body) {
        const pysrc::LogicalLine& bl = ps.lines[b];
        end_line = bl.last_line;
        if (!tokens_only_noise(bl.tokens, 0)) {
          swallows = false;
          break;
        }
      }
    }
    if (swallows)
      out.push_back(make_finding("swallowed-exception", ll.first_line, end_line,
                                 "CWE-703", FindingCategory::EXCEPTION_HANDLING,
                                 bare ? "bare except swallows all errors"
                                      : "overbroad except swallows all errors"));
  }
  return out;
}

std::vector<Finding> unvalidated_param_checks(const ParsedSource& ps) {
  std::vector<Finding> out;
  for (size_t fi = 0; fi < ps.functions.size(); ++fi) {
    const pysrc::Function& fn = ps.functions[fi];
    std::map<std::string, std::string> tainted;  // var -> origin param
    for (const std::string& p : fn.params)
      if (p != "self" && p != "cls") tainted[p] = p;
    if (tainted.empty()) continue;
    std::set<std::string> validated;
    struct Event {
      int line;
      int order;
      const pysrc::CallSite* call = nullptr;
      const pysrc::Assignment* assign = nullptr;
    };
    std::vector<Event> events;
    for (const pysrc::CallSite& cs : ps.calls)
      if (cs.function_index == static_cast<int>(fi))
        events.push_back({cs.line, 0, &cs, nullptr});
    for (const pysrc::Assignment& as : ps.assigns)
      if (as.function_index == static_cast<int>(fi))
        events.push_back({as.line, 1, nullptr, &as});
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) {
                       return std::tie(a.line, a.order) < std::tie(b.line, b.order);
                     });
    for (const Event& ev : events) {
      if (ev.call) {
        const pysrc::CallSite& call = *ev.call;
        if (classify_validation(call.callee)) {
          for (const pysrc::ArgExpr& arg : call.args)
            for (const std::string& name : pysrc::value_idents(arg.tokens)) {
              auto it = tainted.find(name);
              if (it != tainted.end()) validated.insert(it->second);
            }
          continue;
        }
        if (!classify_sink(call.callee)) continue;
        for (const pysrc::ArgExpr& arg : call.args) {
          bool hit = false;
          for (const std::string& name : pysrc::value_idents(arg.tokens)) {
            auto it = tainted.find(name);
            if (it == tainted.end() || validated.count(it->second)) continue;
            out.push_back(make_finding(
                "unvalidated-input", call.line, call.end_line, "CWE-020",
                FindingCategory::INPUT_VALIDATION,
                "parameter '" + it->second + "' reaches " + call.callee +
                    " without validation"));
            hit = true;
            break;
          }
          if (hit) break;
        }
      } else {
        const pysrc::Assignment& as = *ev.assign;
        std::string origin;
        for (const std::string& name : pysrc::value_idents(as.value)) {
          auto it = tainted.find(name);
          if (it != tainted.end()) {
            origin = it->second;
            break;
          }
        }
        if (as.op == "=") {
          if (origin.empty())
            tainted.erase(as.target_base);
          else
            tainted[as.target_base] = origin;
        } else if (!origin.empty() && !tainted.count(as.target_base)) {
          tainted[as.target_base] = origin;
        }
      }
    }
  }
  return out;
}

std::vector<Finding> unchecked_return_checks(const ParsedSource& ps) {
  static const std::set<std::string> kChecked = {"os.system", "subprocess.call",
                                                 "re.match", "re.search"};
  std::vector<Finding> out;
  for (const pysrc::CallSite& cs : ps.calls) {
    if (!cs.is_statement || !kChecked.count(cs.callee)) continue;
    out.push_back(make_finding("unchecked-return", cs.line, cs.end_line,
                               "CWE-703", FindingCategory::EXCEPTION_HANDLING,
                               "return value of " + cs.callee + " is discarded"));
  }
  return out;
}

}  // namespace

std::vector<Finding> correctness_checks(const pysrc::ParsedSource& parsed) {
  std::vector<Finding> out = swallowed_exception_checks(parsed);
  for (Finding& f : unvalidated_param_checks(parsed)) out.push_back(std::move(f));
  for (Finding& f : unchecked_return_checks(parsed)) out.push_back(std::move(f));
  sort_dedupe(out);
  return out;
}

namespace {

std::string loop_iterable_text(const pysrc::LogicalLine& ll) {
  size_t in_at = ll.tokens.size();
  for (size_t j = 0; j < ll.tokens.size(); ++j) {
    if (ll.tokens[j].kind == pysrc::TokKind::KEYWORD && ll.tokens[j].text == "in") {
      in_at = j;
      break;
    }
  }
  if (in_at == ll.tokens.size()) return "";
  size_t colon = ll.tokens.size();
  int d = 0;
  for (size_t j = in_at + 1; j < ll.tokens.size(); ++j) {
    const std::string& t = ll.tokens[j].text;
    if (ll.tokens[j].kind == pysrc::TokKind::OP) {
      if (t == "(" || t == "[" || t == "{") d += 1;
      else if (t == ")" || t == "]" || t == "}") d -= 1;
      else if (t == ":" && d == 0) { colon = j; break; }
    }
  }
  std::vector<pysrc::Token> span(ll.tokens.begin() + in_at + 1,
                                 ll.tokens.begin() + colon);
  return pysrc::join_tokens(span);
}

}  // namespace

std::vector<Finding> performance_checks(const pysrc::ParsedSource& parsed) {
  std::vector<Finding> out;
  // Loop bodies as logical-line index sets.
  std::set<int> in_loop;
  for (size_t li = 0; li < parsed.lines.size(); ++li) {
    const std::string& head = parsed.lines[li].head_keyword;
    if (head != "for" && head != "while") continue;
    for (int b : parsed.block_body(static_cast<int>(li))) in_loop.insert(b);
  }
  // (a) nested for-loops over the same iterable expression.
  for (size_t li = 0; li < parsed.lines.size(); ++li) {
    if (parsed.lines[li].head_keyword != "for") continue;
    std::string outer = loop_iterable_text(parsed.lines[li]);
    if (outer.empty()) continue;
    for (int b : parsed.block_body(static_cast<int>(li))) {
      const pysrc::LogicalLine& inner = parsed.lines[b];
      if (inner.head_keyword != "for") continue;
      if (loop_iterable_text(inner) == outer)
        out.push_back(make_finding(
            "nested-loop-same-iterable", inner.first_line, inner.last_line, "",
            FindingCategory::PERFORMANCE,
            "nested loops iterate over '" + outer + "'; quadratic scan"));
    }
  }
  // Variables bound to list values, for membership tests.
  std::set<std::string> list_vars;
  for (const pysrc::Assignment& as : parsed.assigns) {
    if (as.op != "=" || as.value.empty()) continue;
    bool is_list = as.value[0].text == "[" ||
                   (as.value[0].kind == pysrc::TokKind::IDENT &&
                    as.value[0].text == "list" && as.value.size() > 1 &&
                    as.value[1].text == "(");
    if (is_list) list_vars.insert(as.target_base);
  }
  // (b) membership tests against a list inside a loop.
  for (int li : in_loop) {
    const pysrc::LogicalLine& ll = parsed.lines[li];
    bool has_for = std::any_of(ll.tokens.begin(), ll.tokens.end(),
                               [](const pysrc::Token& t) {
                                 return t.kind == pysrc::TokKind::KEYWORD &&
                                        t.text == "for";
                               });
    if (has_for) continue;  // iteration or comprehension, not membership
    for (size_t j = 0; j + 1 < ll.tokens.size(); ++j) {
      const pysrc::Token& t = ll.tokens[j];
      if (t.kind != pysrc::TokKind::KEYWORD || t.text != "in") continue;
      const pysrc::Token& rhs = ll.tokens[j + 1];
      if (rhs.kind == pysrc::TokKind::IDENT && list_vars.count(rhs.text))
        out.push_back(make_finding(
            "list-membership-in-loop", ll.first_line, ll.last_line, "",
            FindingCategory::PERFORMANCE,
            "membership test against list '" + rhs.text +
                "' inside a loop; use a set"));
    }
  }
  // (c) string accumulation with += inside a loop.
  std::set<std::string> str_vars;
  for (const pysrc::Assignment& as : parsed.assigns)
    if (as.op == "=" && !as.value.empty() &&
        as.value[0].kind == pysrc::TokKind::STRING)
      str_vars.insert(as.target_base);
  std::map<int, int> logical_by_line;
  for (size_t li = 0; li < parsed.lines.size(); ++li)
    logical_by_line[parsed.lines[li].first_line] = static_cast<int>(li);
  for (const pysrc::Assignment& as : parsed.assigns) {
    if (as.op != "+=") continue;
    auto it = logical_by_line.find(as.line);
    if (it == logical_by_line.end() || !in_loop.count(it->second)) continue;
    bool stringy = str_vars.count(as.target_base) ||
                   std::any_of(as.value.begin(), as.value.end(),
                               [](const pysrc::Token& t) {
                                 return t.kind == pysrc::TokKind::STRING ||
                                        t.kind == pysrc::TokKind::FSTRING;
                               });
    if (stringy)
      out.push_back(make_finding(
          "string-concat-in-loop", as.line, as.line, "",
          FindingCategory::PERFORMANCE,
          "string '" + as.target_base + "' grown with += in a loop; use join"));
  }
  sort_dedupe(out);
  return out;
}

std::vector<Finding> style_checks(const pysrc::ParsedSource& parsed,
                                  const StyleLimits& limits) {
  static const std::regex kSnake("^[a-z_][a-z0-9_]*$");
  static const std::regex kCapWords("^[A-Z][A-Za-z0-9]*$");
  std::vector<Finding> out;
  for (const pysrc::Function& fn : parsed.functions) {
    if (!std::regex_match(fn.name, kSnake))
      out.push_back(make_finding("style-def-name", fn.def_line, fn.def_line, "",
                                 FindingCategory::STYLE,
                                 "function name '" + fn.name +
                                     "' is not snake_case"));
    if (fn.is_public() && !fn.has_docstring)
      out.push_back(make_finding("style-docstring", fn.def_line, fn.def_line,
                                 "", FindingCategory::STYLE,
                                 "public function '" + fn.name +
                                     "' lacks a docstring"));
    int span = fn.body_last - fn.def_line + 1;
    if (span > limits.max_function_lines)
      out.push_back(make_finding(
          "style-function-length", fn.def_line, fn.body_last, "",
          FindingCategory::STYLE,
          "function '" + fn.name + "' spans " + std::to_string(span) +
              " lines (limit " + std::to_string(limits.max_function_lines) + ")"));
  }
  for (const pysrc::ClassDef& cd : parsed.classes) {
    if (!std::regex_match(cd.name, kCapWords))
      out.push_back(make_finding("style-class-name", cd.line, cd.line, "",
                                 FindingCategory::STYLE,
                                 "class name '" + cd.name + "' is not CapWords"));
  }
  sort_dedupe(out);
  return out;
}

PatternResult pattern_pass(const CodeSample& sample, const SignatureSet& set,
                           AgentKind agent, const pysrc::ParsedSource& parsed,
                           std::vector<std::string>* diagnostics) {
  PatternResult result;
  result.findings = scan_signatures(sample, set, agent, parsed, diagnostics);
  if (parsed.parse_ok) {
    std::vector<Finding> extra;
    switch (agent) {
      case AgentKind::CORRECTNESS: extra = correctness_checks(parsed); break;
      case AgentKind::PERFORMANCE: extra = performance_checks(parsed); break;
      case AgentKind::STYLE: extra = style_checks(parsed); break;
      case AgentKind::SECURITY: break;
    }
    for (Finding& f : extra) result.findings.push_back(std::move(f));
    sort_dedupe(result.findings);
  }
  // FAIL only when a FAIL-producing signature matched; heuristics warn.
  std::map<std::string, Verdict> produces;
  for (const CompiledSignature& cs : set.signatures)
    produces[cs.spec.id] = cs.spec.produces;
  Verdict level = Verdict::PASS;
  for (const Finding& f : result.findings) {
    std::string prefix = f.id.substr(0, f.id.rfind(":L"));
    auto it = produces.find(prefix);
    Verdict produced = it != produces.end() ? it->second : Verdict::WARNING;
    if (severity_value(produced) > severity_value(level)) level = produced;
  }
  result.verdict = level;
  result.confidence = level == Verdict::FAIL      ? kPatternFailConfidence
                      : level == Verdict::WARNING ? kPatternWarnConfidence
                                                  : kPatternPassConfidence;
  return result;
}

}  // namespace multiver
