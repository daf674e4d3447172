#include "multiver/pysource.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <sstream>

namespace multiver::pysrc {

namespace {

const std::set<std::string>& keywords() {
  static const std::set<std::string> kw = {
      "False",  "None",   "True",  "and",    "as",     "assert", "async",
      "await",  "break",  "class", "continue", "def",  "del",    "elif",
      "else",   "except", "finally", "for",  "from",   "global", "if",
      "import", "in",     "is",    "lambda", "nonlocal", "not",  "or",
      "pass",   "raise",  "return", "try",   "while",  "with",   "yield"};
  return kw;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool is_string_prefix(const std::string& s) {
  if (s.empty() || s.size() > 3) return false;
  for (char c : s) {
    char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (l != 'r' && l != 'b' && l != 'f' && l != 'u') return false;
  }
  return true;
}

bool prefix_is_fstring(const std::string& s) {
  return s.find('f') != std::string::npos || s.find('F') != std::string::npos;
}

const char* kMultiOps[] = {"...", "**=", "//=", ">>=", "<<=", "==", "!=",
                           "<=",  ">=",  "->",  ":=",  "+=",  "-=", "*=",
                           "/=",  "%=",  "&=",  "|=",  "^=",  "**", "//",
                           "<<",  ">>"};

bool is_aug_assign(const std::string& op) {
  static const std::set<std::string> aug = {"+=", "-=", "*=", "/=", "//=",
                                            "%=", "**=", "&=", "|=", "^=",
                                            ">>=", "<<="};
  return aug.count(op) > 0;
}

struct Lexer {
  const std::string& src;
  ParsedSource& out;
  size_t i = 0;
  int line = 1;
  int depth = 0;
  bool line_has_content = false;  // any non-whitespace on current physical line
  std::vector<Token> pending;     // tokens of the logical line being built
  int pending_first_line = 0;
  int pending_indent = 0;

  explicit Lexer(const std::string& s, ParsedSource& o) : src(s), out(o) {}

  char peek(size_t ahead = 0) const {
    return i + ahead < src.size() ? src[i + ahead] : '\0';
  }

  void fail(const std::string& why) {
    if (out.parse_ok) {
      out.parse_ok = false;
      out.parse_error = why;
    }
  }

  void flush_logical() {
    if (!pending.empty()) {
      LogicalLine ll;
      ll.first_line = pending_first_line;
      ll.last_line = pending.back().line;
      ll.indent = pending_indent;
      if (pending.front().kind == TokKind::KEYWORD) ll.head_keyword = pending.front().text;
      ll.tokens = std::move(pending);
      out.lines.push_back(std::move(ll));
    }
    pending.clear();
  }

  int measure_indent(size_t pos) const {
    int col = 0;
    for (size_t j = pos; j < src.size(); ++j) {
      if (src[j] == ' ') col += 1;
      else if (src[j] == '\t') col = (col / 8 + 1) * 8;
      else break;
    }
    return col;
  }

  void push(TokKind kind, std::string text, int at_line) {
    if (pending.empty()) {
      pending_first_line = at_line;
      pending_indent = measure_indent(line_start_pos);
    }
    if (kind == TokKind::KEYWORD) {
      static const std::set<std::string> branchy = {"if", "elif", "while",
                                                    "for", "and", "or", "except"};
      if (branchy.count(text)) out.branch_tokens += 1;
    }
    out.has_code = true;
    pending.push_back(Token{kind, std::move(text), at_line});
  }

  size_t line_start_pos = 0;

  void newline() {
    if (line_has_content) out.nonblank_lines += 1;
    line_has_content = false;
    line += 1;
    line_start_pos = i + 1;
  }

  // Consumes a string literal starting at quote position; prefix already
  // consumed by the caller. Returns false on EOF before termination.
  bool lex_string(const std::string& prefix, int start_line) {
    char q = peek();
    bool triple = peek(1) == q && peek(2) == q;
    std::string text = prefix;
    text += q;
    i += 1;
    if (triple) {
      text += q;
      text += q;
      i += 2;
    }
    bool raw = prefix.find('r') != std::string::npos || prefix.find('R') != std::string::npos;
    while (i < src.size()) {
      char c = src[i];
      if (c == '\\' && !raw && i + 1 < src.size()) {
        text += c;
        text += src[i + 1];
        if (src[i + 1] == '\n') newline();
        i += 2;
        continue;
      }
      if (c == q) {
        if (!triple) {
          text += c;
          i += 1;
          push(prefix_is_fstring(prefix) ? TokKind::FSTRING : TokKind::STRING,
               text, start_line);
          return true;
        }
        if (peek(1) == q && peek(2) == q) {
          text += q; text += q; text += q;
          i += 3;
          push(prefix_is_fstring(prefix) ? TokKind::FSTRING : TokKind::STRING,
               text, start_line);
          return true;
        }
      }
      if (c == '\n') {
        if (!triple) {
          fail("unterminated string literal at line " + std::to_string(start_line));
          return true;  // resynchronize at newline
        }
        newline();
      }
      text += c;
      i += 1;
    }
    fail("unterminated string literal at line " + std::to_string(start_line));
    return false;
  }

  void run() {
    line_start_pos = 0;
    while (i < src.size()) {
      char c = src[i];
      if (c == '\n') {
        if (depth == 0) flush_logical();
        newline();
        i += 1;
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\r') {
        i += 1;
        continue;
      }
      line_has_content = true;
      if (c == '#') {
        while (i < src.size() && src[i] != '\n') i += 1;
        continue;
      }
      if (c == '\\' && peek(1) == '\n') {  // explicit continuation
        i += 2;
        newline();
        continue;
      }
      if (is_ident_start(c)) {
        size_t start = i;
        while (i < src.size() && is_ident_char(src[i])) i += 1;
        std::string word = src.substr(start, i - start);
        if ((peek() == '"' || peek() == '\'') && is_string_prefix(word)) {
          lex_string(word, line);
          continue;
        }
        TokKind kind =
            keywords().count(word) ? TokKind::KEYWORD : TokKind::IDENT;
        push(kind, std::move(word), line);
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) ||
          (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
        size_t start = i;
        i += 1;
        while (i < src.size() &&
               (std::isalnum(static_cast<unsigned char>(src[i])) ||
                src[i] == '.' || src[i] == '_')) {
          i += 1;
        }
        push(TokKind::NUMBER, src.substr(start, i - start), line);
        continue;
      }
      if (c == '"' || c == '\'') {
        lex_string("", line);
        continue;
      }
      if (c == '(' || c == '[' || c == '{') {
        depth += 1;
        push(TokKind::OP, std::string(1, c), line);
        i += 1;
        continue;
      }
      if (c == ')' || c == ']' || c == '}') {
        depth -= 1;
        if (depth < 0) {
          fail("unbalanced bracket at line " + std::to_string(line));
          depth = 0;
        }
        push(TokKind::OP, std::string(1, c), line);
        i += 1;
        continue;
      }
      bool matched = false;
      for (const char* op : kMultiOps) {
        size_t n = std::char_traits<char>::length(op);
        if (src.compare(i, n, op) == 0) {
          push(TokKind::OP, op, line);
          i += n;
          matched = true;
          break;
        }
      }
      if (matched) continue;
      push(TokKind::OP, std::string(1, c), line);
      i += 1;
    }
    if (line_has_content) out.nonblank_lines += 1;
    flush_logical();
    out.total_lines = line - (src.empty() || src.back() == '\n' ? 1 : 0);
    if (src.empty()) out.total_lines = 0;
    if (depth > 0) fail("unbalanced bracket at end of input");
  }
};

// --- structure extraction over logical lines ---

size_t matching_close(const std::vector<Token>& toks, size_t open) {
  int d = 0;
  for (size_t j = open; j < toks.size(); ++j) {
    const std::string& t = toks[j].text;
    if (toks[j].kind == TokKind::OP) {
      if (t == "(" || t == "[" || t == "{") d += 1;
      else if (t == ")" || t == "]" || t == "}") {
        d -= 1;
        if (d == 0) return j;
      }
    }
  }
  return toks.size();
}

std::vector<std::pair<size_t, size_t>> split_top_commas(
    const std::vector<Token>& toks, size_t begin, size_t end) {
  std::vector<std::pair<size_t, size_t>> groups;
  int d = 0;
  size_t start = begin;
  for (size_t j = begin; j < end; ++j) {
    const std::string& t = toks[j].text;
    if (toks[j].kind == TokKind::OP) {
      if (t == "(" || t == "[" || t == "{") d += 1;
      else if (t == ")" || t == "]" || t == "}") d -= 1;
      else if (t == "," && d == 0) {
        groups.emplace_back(start, j);
        start = j + 1;
      }
    }
  }
  if (start < end) groups.emplace_back(start, end);
  return groups;
}

void extract_functions_and_classes(ParsedSource& ps) {
  // Stack of (indent, function index) for nesting.
  std::vector<std::pair<int, int>> stack;
  for (size_t li = 0; li < ps.lines.size(); ++li) {
    const LogicalLine& ll = ps.lines[li];
    while (!stack.empty() && ll.indent <= stack.back().first) stack.pop_back();
    if (ll.head_keyword == "class" && ll.tokens.size() >= 2 &&
        ll.tokens[1].kind == TokKind::IDENT) {
      ps.classes.push_back(ClassDef{ll.tokens[1].text, ll.first_line});
      continue;
    }
    bool is_def = ll.head_keyword == "def" ||
                  (ll.head_keyword == "async" && ll.tokens.size() > 1 &&
                   ll.tokens[1].kind == TokKind::KEYWORD && ll.tokens[1].text == "def");
    if (!is_def) continue;
    size_t name_at = ll.head_keyword == "async" ? 2 : 1;
    if (ll.tokens.size() <= name_at + 1 || ll.tokens[name_at].kind != TokKind::IDENT)
      continue;
    Function fn;
    fn.name = ll.tokens[name_at].text;
    fn.def_line = ll.first_line;
    fn.indent = ll.indent;
    fn.logical_index = static_cast<int>(li);
    fn.parent_index = stack.empty() ? -1 : stack.back().second;
    size_t open = name_at + 1;
    if (open < ll.tokens.size() && ll.tokens[open].text == "(") {
      size_t close = matching_close(ll.tokens, open);
      for (auto [gb, ge] : split_top_commas(ll.tokens, open + 1, close)) {
        size_t j = gb;
        while (j < ge && ll.tokens[j].kind == TokKind::OP &&
               (ll.tokens[j].text == "*" || ll.tokens[j].text == "**"))
          j += 1;
        if (j < ge && ll.tokens[j].kind == TokKind::IDENT)
          fn.params.push_back(ll.tokens[j].text);
      }
      // Inline body: tokens after the header colon on the same logical line.
      size_t colon = ll.tokens.size();
      int d = 0;
      for (size_t j = close + 1; j < ll.tokens.size(); ++j) {
        const std::string& t = ll.tokens[j].text;
        if (ll.tokens[j].kind == TokKind::OP) {
          if (t == "(" || t == "[" || t == "{") d += 1;
          else if (t == ")" || t == "]" || t == "}") d -= 1;
          else if (t == ":" && d == 0) { colon = j; break; }
        }
      }
      if (colon + 1 < ll.tokens.size()) {
        fn.body_first = fn.body_last = ll.last_line;
        if (ll.tokens[colon + 1].kind == TokKind::STRING ||
            ll.tokens[colon + 1].kind == TokKind::FSTRING)
          fn.has_docstring = true;
      }
    }
    // Indented body: following logical lines deeper than the def.
    size_t j = li + 1;
    bool saw_body = false;
    for (; j < ps.lines.size() && ps.lines[j].indent > ll.indent; ++j) {
      if (!saw_body) {
        fn.body_first = ps.lines[j].first_line;
        saw_body = true;
        const Token& t0 = ps.lines[j].tokens.front();
        if (t0.kind == TokKind::STRING || t0.kind == TokKind::FSTRING)
          fn.has_docstring = true;
      }
      fn.body_last = ps.lines[j].last_line;
    }
    if (fn.body_first == 0) fn.body_first = fn.body_last = fn.def_line;
    ps.functions.push_back(std::move(fn));
    stack.emplace_back(ll.indent, static_cast<int>(ps.functions.size() - 1));
  }
}

void extract_calls_and_assigns(ParsedSource& ps) {
  for (const LogicalLine& ll : ps.lines) {
    const auto& toks = ll.tokens;
    // Calls: IDENT followed by '(' with a dotted chain walked backwards.
    for (size_t j = 0; j + 1 < toks.size(); ++j) {
      if (toks[j].kind != TokKind::IDENT || toks[j + 1].text != "(") continue;
      size_t chain_start = j;
      while (chain_start >= 2 && toks[chain_start - 1].text == "." &&
             toks[chain_start - 2].kind == TokKind::IDENT)
        chain_start -= 2;
      if (chain_start > 0 && toks[chain_start - 1].kind == TokKind::KEYWORD &&
          (toks[chain_start - 1].text == "def" || toks[chain_start - 1].text == "class"))
        continue;
      CallSite cs;
      for (size_t k = chain_start; k <= j; ++k) cs.callee += toks[k].text;
      cs.line = toks[chain_start].line;
      size_t close = matching_close(toks, j + 1);
      cs.end_line = close < toks.size() ? toks[close].line : ll.last_line;
      for (auto [gb, ge] : split_top_commas(toks, j + 2, close)) {
        ArgExpr arg;
        size_t vb = gb;
        if (ge - gb >= 2 && toks[gb].kind == TokKind::IDENT &&
            toks[gb + 1].text == "=") {
          arg.is_keyword = true;
          arg.keyword = toks[gb].text;
          vb = gb + 2;
        }
        arg.tokens.assign(toks.begin() + vb, toks.begin() + ge);
        arg.text = join_tokens(arg.tokens);
        cs.args.push_back(std::move(arg));
      }
      std::vector<Token> span(toks.begin() + chain_start,
                              toks.begin() + std::min(close + 1, toks.size()));
      cs.text = join_tokens(span);
      cs.is_statement = chain_start == 0 && close + 1 == toks.size();
      cs.function_index = ps.function_at(cs.line);
      ps.calls.push_back(std::move(cs));
    }
    // Assignments: top-level '=' or augmented operator, statement lines only.
    if (!ll.head_keyword.empty() && ll.head_keyword != "async") continue;
    int d = 0;
    size_t eq = toks.size();
    for (size_t j = 0; j < toks.size(); ++j) {
      const std::string& t = toks[j].text;
      if (toks[j].kind != TokKind::OP) continue;
      if (t == "(" || t == "[" || t == "{") d += 1;
      else if (t == ")" || t == "]" || t == "}") d -= 1;
      else if (d == 0 && (t == "=" || is_aug_assign(t))) { eq = j; break; }
    }
    if (eq == toks.size() || eq == 0) continue;
    std::vector<Token> value(toks.begin() + eq + 1, toks.end());
    // Tuple targets produce one record per bare identifier.
    std::vector<std::pair<std::string, std::string>> targets;
    {
      int td = 0;
      for (size_t j = 0; j < eq; ++j) {
        const std::string& t = toks[j].text;
        if (toks[j].kind == TokKind::OP) {
          if (t == "(" || t == "[" || t == "{") td += 1;
          else if (t == ")" || t == "]" || t == "}") td -= 1;
        }
        if (toks[j].kind == TokKind::IDENT && td == 0 &&
            (j == 0 || toks[j - 1].text != ".")) {
          std::vector<Token> tt(toks.begin(), toks.begin() + eq);
          targets.emplace_back(toks[j].text, join_tokens(tt));
        }
      }
    }
    for (auto& [base, text] : targets) {
      Assignment as;
      as.target_base = base;
      as.target_text = text;
      as.op = toks[eq].text;
      as.value = value;
      as.line = ll.first_line;
      as.function_index = ps.function_at(as.line);
      ps.assigns.push_back(std::move(as));
    }
  }
}

std::vector<std::string> fstring_idents(const std::string& literal) {
  std::vector<std::string> out;
  size_t q = literal.find_first_of("\"'");
  if (q == std::string::npos) return out;
  for (size_t j = q; j < literal.size(); ++j) {
    if (literal[j] != '{') continue;
    if (j + 1 < literal.size() && literal[j + 1] == '{') { j += 1; continue; }
    size_t end = j + 1;
    int d = 1;
    while (end < literal.size() && d > 0) {
      if (literal[end] == '{') d += 1;
      if (literal[end] == '}') d -= 1;
      end += 1;
    }
    std::string inner = literal.substr(j + 1, end - j - 2 + (d > 0 ? 1 : 0));
    for (size_t k = 0; k < inner.size();) {
      if (is_ident_start(inner[k])) {
        size_t s = k;
        while (k < inner.size() && is_ident_char(inner[k])) k += 1;
        std::string word = inner.substr(s, k - s);
        bool attr = s > 0 && inner[s - 1] == '.';
        if (!attr && !keywords().count(word)) out.push_back(word);
      } else {
        k += 1;
      }
    }
    j = end > j ? end - 1 : j;
  }
  return out;
}

}  // namespace

int ParsedSource::function_at(int physical_line) const {
  int best = -1;
  int best_def = -1;
  for (size_t fi = 0; fi < functions.size(); ++fi) {
    const Function& fn = functions[fi];
    if (fn.def_line <= physical_line && physical_line <= fn.body_last &&
        fn.def_line > best_def) {
      best = static_cast<int>(fi);
      best_def = fn.def_line;
    }
  }
  return best;
}

std::vector<int> ParsedSource::block_body(int logical_index) const {
  std::vector<int> body;
  if (logical_index < 0 || static_cast<size_t>(logical_index) >= lines.size())
    return body;
  int indent = lines[logical_index].indent;
  for (size_t j = logical_index + 1; j < lines.size() && lines[j].indent > indent; ++j)
    body.push_back(static_cast<int>(j));
  return body;
}

ParsedSource parse(const std::string& source) {
  ParsedSource ps;
  Lexer lx(source, ps);
  lx.run();
  extract_functions_and_classes(ps);
  extract_calls_and_assigns(ps);
  return ps;
}

std::vector<std::string> value_idents(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  for (size_t j = 0; j < tokens.size(); ++j) {
    const Token& t = tokens[j];
    if (t.kind == TokKind::IDENT) {
      if (j > 0 && tokens[j - 1].kind == TokKind::OP && tokens[j - 1].text == ".")
        continue;
      out.push_back(t.text);
    } else if (t.kind == TokKind::FSTRING) {
      for (auto& name : fstring_idents(t.text)) out.push_back(name);
    }
  }
  return out;
}

bool is_dynamic_string_expr(const std::vector<Token>& tokens) {
  bool has_string = false, has_plus = false, pct_after_string = false,
       format_on_string = false, fstring_interp = false;
  for (size_t j = 0; j < tokens.size(); ++j) {
    const Token& t = tokens[j];
    if (t.kind == TokKind::STRING) has_string = true;
    if (t.kind == TokKind::FSTRING) {
      has_string = true;
      if (!fstring_idents(t.text).empty()) fstring_interp = true;
    }
    if (t.kind == TokKind::OP && t.text == "+") has_plus = true;
    if ((t.kind == TokKind::STRING || t.kind == TokKind::FSTRING) &&
        j + 1 < tokens.size()) {
      if (tokens[j + 1].text == "%") pct_after_string = true;
      if (tokens[j + 1].text == "." && j + 2 < tokens.size() &&
          tokens[j + 2].text == "format")
        format_on_string = true;
    }
  }
  bool has_ident = !value_idents(tokens).empty();
  if (fstring_interp) return true;
  if (has_string && has_plus && has_ident) return true;
  if (pct_after_string && has_ident) return true;
  if (format_on_string && has_ident) return true;
  return false;
}

bool is_pure_literal_expr(const std::vector<Token>& tokens) {
  if (tokens.empty()) return false;
  for (const Token& t : tokens) {
    switch (t.kind) {
      case TokKind::STRING:
      case TokKind::NUMBER:
        break;
      case TokKind::FSTRING:
        if (!fstring_idents(t.text).empty()) return false;
        break;
      case TokKind::KEYWORD:
        if (t.text != "True" && t.text != "False" && t.text != "None") return false;
        break;
      case TokKind::IDENT:
        return false;
      case TokKind::OP: {
        static const std::set<std::string> ok = {"(", ")", "[", "]", "{", "}",
                                                 ",", "+", "-", ":"};
        if (!ok.count(t.text)) return false;
        break;
      }
    }
  }
  return true;
}

std::string join_tokens(const std::vector<Token>& tokens) {
  std::string out;
  for (size_t j = 0; j < tokens.size(); ++j) {
    const Token& t = tokens[j];
    if (!out.empty()) {
      bool tight_left = t.kind == TokKind::OP &&
                        (t.text == "." || t.text == "(" || t.text == ")" ||
                         t.text == "[" || t.text == "]" || t.text == "," ||
                         t.text == ":");
      bool prev_tight = tokens[j - 1].kind == TokKind::OP &&
                        (tokens[j - 1].text == "." || tokens[j - 1].text == "(" ||
                         tokens[j - 1].text == "[");
      if (!tight_left && !prev_tight) out += ' ';
    }
    out += t.text;
  }
  return out;
}

}  // namespace multiver::pysrc
