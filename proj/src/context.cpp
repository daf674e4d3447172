#include "multiver/context.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace multiver {

namespace {

std::string last_component(const std::string& callee) {
  size_t dot = callee.rfind('.');
  return dot == std::string::npos ? callee : callee.substr(dot + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

const std::set<std::string> kRequestObjects = {"request", "req"};
const std::set<std::string> kReadMethods = {"read", "readline", "readlines"};

}  // namespace

std::string to_string(SourceKind k) {
  switch (k) {
    case SourceKind::FUNCTION_PARAMETER: return "function_parameter";
    case SourceKind::REQUEST_FIELD: return "request_field";
    case SourceKind::FILE_READ: return "file_read";
  }
  return "function_parameter";
}

std::string to_string(SinkKind k) {
  switch (k) {
    case SinkKind::EXECUTE: return "execute";
    case SinkKind::EVAL: return "eval";
    case SinkKind::OPEN: return "open";
    case SinkKind::SYSTEM: return "system";
  }
  return "execute";
}

std::string to_string(ValidationKind k) {
  switch (k) {
    case ValidationKind::TYPE_CHECK: return "type-check";
    case ValidationKind::SANITIZE: return "sanitize-named call";
    case ValidationKind::ESCAPE: return "escape-named call";
  }
  return "type-check";
}

std::optional<SinkKind> classify_sink(const std::string& callee) {
  const std::string tail = last_component(callee);
  if (tail == "execute" || tail == "executemany" || tail == "executescript")
    return SinkKind::EXECUTE;
  if (callee == "eval" || callee == "exec") return SinkKind::EVAL;
  if (callee == "open" || callee == "os.open" || callee == "io.open" ||
      callee == "codecs.open")
    return SinkKind::OPEN;
  if (callee == "os.system" || callee == "os.popen" ||
      callee == "commands.getoutput")
    return SinkKind::SYSTEM;
  if (callee.rfind("subprocess.", 0) == 0 &&
      (tail == "run" || tail == "call" || tail == "check_call" ||
       tail == "check_output" || tail == "Popen" || tail == "getoutput"))
    return SinkKind::SYSTEM;
  return std::nullopt;
}

std::optional<ValidationKind> classify_validation(const std::string& callee) {
  if (callee == "isinstance" || callee == "issubclass" || callee == "type")
    return ValidationKind::TYPE_CHECK;
  const std::string tail = lower(last_component(callee));
  if (tail.find("sanitize") != std::string::npos) return ValidationKind::SANITIZE;
  if (tail.find("escape") != std::string::npos) return ValidationKind::ESCAPE;
  return std::nullopt;
}

namespace {

using pysrc::ParsedSource;
using pysrc::Token;

// Request-field chains (request.args etc.) appearing in a token span.
std::vector<std::pair<std::string, int>> request_fields_in(
    const std::vector<Token>& toks) {
  std::vector<std::pair<std::string, int>> out;
  for (size_t j = 0; j + 2 < toks.size(); ++j) {
    if (toks[j].kind != pysrc::TokKind::IDENT || !kRequestObjects.count(toks[j].text))
      continue;
    if (j > 0 && toks[j - 1].text == ".") continue;
    if (toks[j + 1].text != "." || toks[j + 2].kind != pysrc::TokKind::IDENT)
      continue;
    out.emplace_back(toks[j].text + "." + toks[j + 2].text, toks[j].line);
  }
  return out;
}

// Method read-calls (x.read() / open(...).read()) appearing in a token span.
std::vector<std::pair<std::string, int>> read_calls_in(
    const std::vector<Token>& toks) {
  std::vector<std::pair<std::string, int>> out;
  for (size_t j = 1; j + 1 < toks.size(); ++j) {
    if (toks[j].kind != pysrc::TokKind::IDENT || !kReadMethods.count(toks[j].text))
      continue;
    if (toks[j - 1].text != "." || toks[j + 1].text != "(") continue;
    out.emplace_back(toks[j].text, toks[j].line);
  }
  return out;
}

struct Extractor {
  const ParsedSource& ps;
  FlowContext ctx;
  // Lookup keys for source indices.
  std::map<std::pair<int, std::string>, int> param_source;  // (fn, name) -> idx
  std::map<std::pair<std::string, int>, int> field_source;  // (expr, line) -> idx
  std::map<int, int> read_source;                           // line -> idx
  std::map<std::string, int> fn_by_name;

  explicit Extractor(const ParsedSource& parsed) : ps(parsed) {}

  std::string fn_name(int fi) const {
    return fi < 0 ? "<module>" : ps.functions[fi].name;
  }

  int add_source(SourceKind kind, const std::string& name, int line) {
    for (size_t s = 0; s < ctx.sources.size(); ++s) {
      const SourceRef& sr = ctx.sources[s];
      if (sr.kind == kind && sr.name == name && sr.line == line)
        return static_cast<int>(s);
    }
    ctx.sources.push_back(SourceRef{kind, name, line});
    return static_cast<int>(ctx.sources.size() - 1);
  }

  void collect_endpoints() {
    for (size_t fi = 0; fi < ps.functions.size(); ++fi) {
      const pysrc::Function& fn = ps.functions[fi];
      fn_by_name.emplace(fn.name, static_cast<int>(fi));
      for (const std::string& p : fn.params) {
        if (p == "self" || p == "cls") continue;
        int idx = add_source(SourceKind::FUNCTION_PARAMETER, p, fn.def_line);
        param_source[{static_cast<int>(fi), p}] = idx;
      }
    }
    for (const pysrc::LogicalLine& ll : ps.lines) {
      for (auto& [expr, line] : request_fields_in(ll.tokens)) {
        int idx = add_source(SourceKind::REQUEST_FIELD, expr, line);
        field_source[{expr, line}] = idx;
      }
    }
    for (const pysrc::CallSite& cs : ps.calls) {
      const std::string tail = last_component(cs.callee);
      if (kReadMethods.count(tail) && cs.callee != tail) {
        int idx = add_source(SourceKind::FILE_READ, cs.callee, cs.line);
        read_source[cs.line] = idx;
      }
      if (auto sk = classify_sink(cs.callee))
        ctx.sinks.push_back(SinkRef{*sk, cs.callee, cs.line});
      if (auto vk = classify_validation(cs.callee))
        ctx.validations.push_back(ValidationRef{*vk, cs.callee, cs.line});
    }
  }

  // Origins carried by an expression under the current taint map.
  std::set<int> expr_origins(const std::vector<Token>& toks,
                             const std::map<std::string, std::set<int>>& tainted) {
    std::set<int> out;
    for (const std::string& name : pysrc::value_idents(toks)) {
      auto it = tainted.find(name);
      if (it != tainted.end()) out.insert(it->second.begin(), it->second.end());
    }
    for (auto& [expr, line] : request_fields_in(toks)) {
      auto it = field_source.find({expr, line});
      if (it != field_source.end()) out.insert(it->second);
    }
    for (auto& [name, line] : read_calls_in(toks)) {
      auto it = read_source.find(line);
      if (it != read_source.end()) out.insert(it->second);
    }
    return out;
  }

  struct WalkState {
    int fn = -1;
    std::map<std::string, std::set<int>> seeds;
    int depth = 0;
    std::vector<FlowStep> chain;  // call edges crossed so far
  };

  std::set<std::tuple<int, std::string, int, int>> visited;  // fn,var,origin,depth

  void emit_path(int origin, const SinkRef& sink,
                 const std::vector<FlowStep>& chain, int depth) {
    const SourceRef& src = ctx.sources[origin];
    int src_fn = ps.function_at(src.line);
    FlowPath path;
    path.source = src;
    path.sink = sink;
    path.call_depth = depth;
    path.steps.push_back(FlowStep{fn_name(src_fn), src.line});
    for (const FlowStep& st : chain) path.steps.push_back(st);
    path.steps.push_back(FlowStep{fn_name(ps.function_at(sink.line)), sink.line});
    for (const FlowPath& p : ctx.paths) {
      if (p.source.line == path.source.line && p.source.name == path.source.name &&
          p.sink.line == path.sink.line && p.sink.callee == path.sink.callee &&
          p.call_depth == path.call_depth)
        return;
    }
    ctx.paths.push_back(std::move(path));
  }

  void walk(const WalkState& state, std::deque<WalkState>& queue) {
    std::map<std::string, std::set<int>> tainted = state.seeds;
    struct Event {
      int line;
      int order;  // calls sink-check before same-line assignment lands
      const pysrc::CallSite* call = nullptr;
      const pysrc::Assignment* assign = nullptr;
    };
    std::vector<Event> events;
    for (const pysrc::CallSite& cs : ps.calls)
      if (cs.function_index == state.fn) events.push_back({cs.line, 0, &cs, nullptr});
    for (const pysrc::Assignment& as : ps.assigns)
      if (as.function_index == state.fn) events.push_back({as.line, 1, nullptr, &as});
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
      return std::tie(a.line, a.order) < std::tie(b.line, b.order);
    });
    for (const Event& ev : events) {
      if (ev.call) {
        const pysrc::CallSite& cs = *ev.call;
        std::set<int> all_origins;
        std::vector<std::set<int>> per_arg;
        for (const pysrc::ArgExpr& arg : cs.args) {
          per_arg.push_back(expr_origins(arg.tokens, tainted));
          all_origins.insert(per_arg.back().begin(), per_arg.back().end());
        }
        if (auto sk = classify_sink(cs.callee)) {
          SinkRef sink{*sk, cs.callee, cs.line};
          for (int origin : all_origins)
            emit_path(origin, sink, state.chain, state.depth);
        }
        auto fit = fn_by_name.find(last_component(cs.callee));
        if (fit != fn_by_name.end() && state.depth < kMaxFlowCallDepth) {
          const pysrc::Function& g = ps.functions[fit->second];
          size_t offset = (!g.params.empty() &&
                           (g.params[0] == "self" || g.params[0] == "cls") &&
                           cs.callee.find('.') != std::string::npos)
                              ? 1
                              : 0;
          for (size_t ai = 0; ai < per_arg.size(); ++ai) {
            if (per_arg[ai].empty()) continue;
            size_t pi = ai + offset;
            if (cs.args[ai].is_keyword) {
              auto pit = std::find(g.params.begin(), g.params.end(),
                                   cs.args[ai].keyword);
              if (pit == g.params.end()) continue;
              pi = static_cast<size_t>(pit - g.params.begin());
            }
            if (pi >= g.params.size()) continue;
            const std::string& pname = g.params[pi];
            if (pname == "self" || pname == "cls") continue;
            WalkState next;
            next.fn = fit->second;
            next.depth = state.depth + 1;
            next.chain = state.chain;
            next.chain.push_back(FlowStep{g.name, cs.line});
            bool any_new = false;
            for (int origin : per_arg[ai]) {
              if (visited.insert({next.fn, pname, origin, next.depth}).second) {
                next.seeds[pname].insert(origin);
                any_new = true;
              }
            }
            if (any_new) queue.push_back(std::move(next));
          }
        }
      } else {
        const pysrc::Assignment& as = *ev.assign;
        std::set<int> origins = expr_origins(as.value, tainted);
        if (as.op == "=") {
          if (origins.empty())
            tainted.erase(as.target_base);
          else
            tainted[as.target_base] = origins;
        } else if (!origins.empty()) {
          tainted[as.target_base].insert(origins.begin(), origins.end());
        }
      }
    }
  }

  void run() {
    collect_endpoints();
    std::deque<WalkState> queue;
    for (int fi = -1; fi < static_cast<int>(ps.functions.size()); ++fi) {
      WalkState st;
      st.fn = fi;
      if (fi >= 0) {
        for (const std::string& p : ps.functions[fi].params) {
          auto it = param_source.find({fi, p});
          if (it != param_source.end()) st.seeds[p] = {it->second};
        }
      }
      queue.push_back(std::move(st));
    }
    while (!queue.empty()) {
      WalkState st = std::move(queue.front());
      queue.pop_front();
      walk(st, queue);
    }
    std::sort(ctx.sinks.begin(), ctx.sinks.end(), [](const SinkRef& a, const SinkRef& b) {
      return std::tie(a.line, a.callee) < std::tie(b.line, b.callee);
    });
    std::sort(ctx.validations.begin(), ctx.validations.end(),
              [](const ValidationRef& a, const ValidationRef& b) {
                return std::tie(a.line, a.check) < std::tie(b.line, b.check);
              });
    std::sort(ctx.paths.begin(), ctx.paths.end(),
              [](const FlowPath& a, const FlowPath& b) {
                return std::tie(a.source.line, a.sink.line, a.call_depth,
                                a.source.name) <
                       std::tie(b.source.line, b.sink.line, b.call_depth,
                                b.source.name);
              });
    std::sort(ctx.sources.begin(), ctx.sources.end(),
              [](const SourceRef& a, const SourceRef& b) {
                return std::tie(a.line, a.name) < std::tie(b.line, b.name);
              });
  }
};

}  // namespace

std::optional<FlowContext> extract_context(const CodeSample& sample,
                                           const std::vector<Finding>& findings,
                                           const pysrc::ParsedSource& parsed,
                                           std::vector<std::string>* diagnostics) {
  (void)sample;
  bool wanted = std::any_of(findings.begin(), findings.end(), [](const Finding& f) {
    return is_injection_type(f.category);
  });
  if (!wanted) return std::nullopt;
  if (!parsed.parse_ok) {
    if (diagnostics)
      diagnostics->push_back("PARSE_FAILURE: context extraction skipped: " +
                             parsed.parse_error);
    return std::nullopt;
  }
  Extractor ex(parsed);
  ex.run();
  return ex.ctx;
}

std::string render_context(const FlowContext& ctx) {
  std::ostringstream os;
  os << "sources:\n";
  for (const SourceRef& s : ctx.sources)
    os << "  - " << to_string(s.kind) << " " << s.name << " @ L" << s.line << "\n";
  if (ctx.sources.empty()) os << "  (none)\n";
  os << "sinks:\n";
  for (const SinkRef& s : ctx.sinks)
    os << "  - " << to_string(s.kind) << " " << s.callee << " @ L" << s.line << "\n";
  if (ctx.sinks.empty()) os << "  (none)\n";
  os << "paths:\n";
  for (const FlowPath& p : ctx.paths) {
    os << "  - " << p.source.name << " @ L" << p.source.line << " -> "
       << p.sink.callee << " @ L" << p.sink.line << " (depth " << p.call_depth
       << ") via";
    for (const FlowStep& st : p.steps)
      os << " " << st.function << ":L" << st.line;
    os << "\n";
  }
  if (ctx.paths.empty()) os << "  (none)\n";
  os << "validations:\n";
  for (const ValidationRef& v : ctx.validations)
    os << "  - " << to_string(v.kind) << " " << v.check << " @ L" << v.line << "\n";
  if (ctx.validations.empty()) os << "  (none)\n";
  return os.str();
}

void to_json(nlohmann::json& j, const SourceRef& v) {
  j = {{"kind", to_string(v.kind)}, {"name", v.name}, {"line", v.line}};
}

void to_json(nlohmann::json& j, const SinkRef& v) {
  j = {{"kind", to_string(v.kind)}, {"callee", v.callee}, {"line", v.line}};
}

void to_json(nlohmann::json& j, const FlowPath& v) {
  nlohmann::json steps = nlohmann::json::array();
  for (const FlowStep& st : v.steps)
    steps.push_back({{"function", st.function}, {"line", st.line}});
  j = {{"source", v.source},
       {"sink", v.sink},
       {"steps", steps},
       {"call_depth", v.call_depth}};
}

void to_json(nlohmann::json& j, const ValidationRef& v) {
  j = {{"kind", to_string(v.kind)}, {"check", v.check}, {"line", v.line}};
}

void to_json(nlohmann::json& j, const FlowContext& v) {
  j = {{"sources", v.sources},
       {"sinks", v.sinks},
       {"paths", v.paths},
       {"validations", v.validations}};
}

}  // namespace multiver
