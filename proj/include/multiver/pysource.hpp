#pragma once

// Lightweight lexical/structural scanner for Python sources. Not a full
// parser: it produces tokens grouped into logical lines, function/class
// outlines, call sites and assignments — enough for deterministic pattern
// checks and bounded data-flow extraction. Unlexable input (unterminated
// strings, unbalanced brackets) is reported, never thrown.

#include <optional>
#include <string>
#include <vector>

namespace multiver::pysrc {

enum class TokKind { IDENT, KEYWORD, NUMBER, STRING, FSTRING, OP };

struct Token {
  TokKind kind = TokKind::OP;
  std::string text;  // strings keep prefix and quotes
  int line = 0;      // 1-based physical line of token start
};

struct LogicalLine {
  int first_line = 0;
  int last_line = 0;
  int indent = 0;
  std::string head_keyword;  // "def", "if", "except", ... or empty
  std::vector<Token> tokens;
};

struct ArgExpr {
  std::vector<Token> tokens;  // value tokens (keyword name stripped)
  std::string text;
  bool is_keyword = false;
  std::string keyword;
};

struct CallSite {
  std::string callee;  // dotted chain immediately before '(', e.g. "os.system"
  int line = 0;
  int end_line = 0;
  std::vector<ArgExpr> args;
  int function_index = -1;  // -1 = module level
  bool is_statement = false;  // whole logical line, result discarded
  std::string text;           // callee + argument text
};

struct Assignment {
  std::string target_base;  // base identifier of the target
  std::string target_text;
  std::string op;  // "=", "+=", ...
  std::vector<Token> value;
  int line = 0;
  int function_index = -1;
};

struct Function {
  std::string name;
  std::vector<std::string> params;
  int def_line = 0;
  int indent = 0;
  int body_first = 0;  // physical range; == def_line for inline bodies
  int body_last = 0;
  bool has_docstring = false;
  int parent_index = -1;
  int logical_index = -1;  // index of the def logical line

  bool is_public() const { return name.empty() || name[0] != '_'; }
};

struct ClassDef {
  std::string name;
  int line = 0;
};

struct ParsedSource {
  bool parse_ok = true;
  std::string parse_error;
  int total_lines = 0;
  int nonblank_lines = 0;
  int branch_tokens = 0;  // if/elif/for/while/and/or/except occurrences
  bool has_code = false;
  std::vector<LogicalLine> lines;
  std::vector<Function> functions;
  std::vector<ClassDef> classes;
  std::vector<CallSite> calls;
  std::vector<Assignment> assigns;

  // Innermost function containing the physical line, or -1.
  int function_at(int physical_line) const;
  // Logical lines with indices in [begin, end) whose indent exceeds `indent`,
  // starting right after logical line `index`: the block body.
  std::vector<int> block_body(int logical_index) const;
};

ParsedSource parse(const std::string& source);

// Identifiers carrying values in an expression: names not preceded by '.'
// plus identifiers interpolated inside f-strings. Keywords excluded.
std::vector<std::string> value_idents(const std::vector<Token>& tokens);

// Expression builds a string from non-literal parts: f-string interpolation,
// literal + identifier concatenation, "%"-formatting or .format() on a
// literal with identifiers involved.
bool is_dynamic_string_expr(const std::vector<Token>& tokens);

// Expression is composed purely of literals (strings/numbers/True/False/None
// and grouping punctuation).
bool is_pure_literal_expr(const std::vector<Token>& tokens);

std::string join_tokens(const std::vector<Token>& tokens);

}  // namespace multiver::pysrc
