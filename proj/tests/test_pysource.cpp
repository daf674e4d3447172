#include "doctest.h"

#include <algorithm>

#include "multiver/pysource.hpp"

using namespace multiver::pysrc;

namespace {

std::vector<Token> lex_expr(const std::string& expr) {
  ParsedSource ps = parse("x = " + expr + "\n");
  REQUIRE(ps.assigns.size() == 1);
  return ps.assigns[0].value;
}

}  // namespace

TEST_CASE("keywords lex as keywords, names as identifiers") {
  ParsedSource ps = parse("def f():\n    return x\n");
  REQUIRE_FALSE(ps.lines.empty());
  const LogicalLine& def_line = ps.lines[0];
  REQUIRE_FALSE(def_line.tokens.empty());
  CHECK(def_line.tokens[0].kind == TokKind::KEYWORD);
  CHECK(def_line.tokens[0].text == "def");
  CHECK(def_line.tokens[1].kind == TokKind::IDENT);
  CHECK(def_line.tokens[1].text == "f");
  CHECK(def_line.head_keyword == "def");
}

TEST_CASE("functions are extracted with params, lines and docstrings") {
  ParsedSource ps = parse(
      "def get_user(db, user_id):\n"
      "    \"\"\"Fetch one user.\"\"\"\n"
      "    return db.get(user_id)\n"
      "\n"
      "def _helper(a=1, *args, **kwargs):\n"
      "    pass\n");
  REQUIRE(ps.functions.size() == 2);
  const Function& f0 = ps.functions[0];
  CHECK(f0.name == "get_user");
  CHECK(f0.params == std::vector<std::string>{"db", "user_id"});
  CHECK(f0.def_line == 1);
  CHECK(f0.has_docstring);
  CHECK(f0.is_public());

  const Function& f1 = ps.functions[1];
  CHECK(f1.name == "_helper");
  CHECK(f1.params == std::vector<std::string>{"a", "args", "kwargs"});
  CHECK_FALSE(f1.has_docstring);
  CHECK_FALSE(f1.is_public());
}

TEST_CASE("nested functions record their parent") {
  ParsedSource ps = parse(
      "def outer():\n"
      "    def inner():\n"
      "        pass\n"
      "    return inner\n");
  REQUIRE(ps.functions.size() == 2);
  CHECK(ps.functions[0].parent_index == -1);
  CHECK(ps.functions[1].parent_index == 0);
  CHECK(ps.function_at(3) == 1);  // inner body line belongs to inner
  CHECK(ps.function_at(4) == 0);
}

TEST_CASE("calls capture dotted callees and argument structure") {
  ParsedSource ps = parse(
      "import os\n"
      "\n"
      "def run(path):\n"
      "    os.system(\"tar \" + path)\n"
      "    x = client.get(\"/r\", api_key=KEY)\n");
  auto find_call = [&](const std::string& callee) -> const CallSite* {
    for (const CallSite& c : ps.calls)
      if (c.callee == callee) return &c;
    return nullptr;
  };

  const CallSite* sys = find_call("os.system");
  REQUIRE(sys != nullptr);
  CHECK(sys->line == 4);
  CHECK(sys->is_statement);
  CHECK(sys->function_index == 0);
  REQUIRE(sys->args.size() == 1);
  CHECK_FALSE(sys->args[0].is_keyword);

  const CallSite* get = find_call("client.get");
  REQUIRE(get != nullptr);
  CHECK_FALSE(get->is_statement);  // value consumed by the assignment
  REQUIRE(get->args.size() == 2);
  CHECK_FALSE(get->args[0].is_keyword);
  CHECK(get->args[1].is_keyword);
  CHECK(get->args[1].keyword == "api_key");
}

TEST_CASE("def headers are not calls") {
  ParsedSource ps = parse("def f(a, b):\n    pass\n");
  CHECK(ps.calls.empty());
}

TEST_CASE("assignments only come from statement-level equals") {
  ParsedSource ps = parse(
      "a = 1\n"
      "b += f(x=2)\n"
      "obj.attr = \"v\"\n");
  REQUIRE(ps.assigns.size() == 3);
  CHECK(ps.assigns[0].target_base == "a");
  CHECK(ps.assigns[0].op == "=");
  CHECK(ps.assigns[0].function_index == -1);
  CHECK(ps.assigns[1].target_base == "b");
  CHECK(ps.assigns[1].op == "+=");
  CHECK(ps.assigns[2].target_base == "obj");
  // the x=2 keyword argument inside f(...) must not register as an assignment
  for (const Assignment& as : ps.assigns) CHECK(as.target_base != "x");
}

TEST_CASE("logical lines absorb bracket continuations") {
  ParsedSource ps = parse(
      "result = do_thing(1,\n"
      "                  2,\n"
      "                  3)\n"
      "y = 4\n");
  REQUIRE(ps.lines.size() == 2);
  CHECK(ps.lines[0].first_line == 1);
  CHECK(ps.lines[0].last_line == 3);
  REQUIRE(ps.calls.size() == 1);
  CHECK(ps.calls[0].args.size() == 3);
}

TEST_CASE("comments and string contents do not confuse the lexer") {
  ParsedSource ps = parse(
      "x = \"# not a comment\"  # trailing note\n"
      "y = 2\n");
  CHECK(ps.parse_ok);
  REQUIRE(ps.assigns.size() == 2);
  CHECK(ps.assigns[0].value.size() == 1);
  CHECK(ps.assigns[0].value[0].kind == TokKind::STRING);
}

TEST_CASE("unterminated strings and unbalanced brackets fail parsing") {
  CHECK_FALSE(parse("x = \"oops\n").parse_ok);
  CHECK_FALSE(parse("f(1, 2\n").parse_ok);
  CHECK(parse("").parse_ok);
  CHECK_FALSE(parse("").has_code);
}

TEST_CASE("line counting") {
  ParsedSource ps = parse("a = 1\n\n\nb = 2\n");
  CHECK(ps.total_lines == 4);
  CHECK(ps.nonblank_lines == 2);
}

TEST_CASE("branch tokens count the decision keywords") {
  ParsedSource ps = parse(
      "if a and b:\n"
      "    pass\n"
      "elif c or d:\n"
      "    pass\n"
      "for i in xs:\n"
      "    while y:\n"
      "        pass\n"
      "try:\n"
      "    pass\n"
      "except ValueError:\n"
      "    pass\n");
  // if, and, elif, or, for, while, except = 7
  CHECK(ps.branch_tokens == 7);
}

TEST_CASE("value_idents skips attribute tails and sees f-string names") {
  auto toks = lex_expr("a.b + c");
  auto names = value_idents(toks);
  CHECK(names == std::vector<std::string>{"a", "c"});

  auto ftoks = lex_expr("f\"hello {user}\"");
  auto fnames = value_idents(ftoks);
  REQUIRE(fnames.size() == 1);
  CHECK(fnames[0] == "user");
}

TEST_CASE("dynamic string expression classifier") {
  CHECK(is_dynamic_string_expr(lex_expr("\"a\" + b")));
  CHECK(is_dynamic_string_expr(lex_expr("f\"{x}/etc\"")));
  CHECK(is_dynamic_string_expr(lex_expr("\"%s\" % name")));
  CHECK(is_dynamic_string_expr(lex_expr("\"{}\".format(name)")));
  CHECK_FALSE(is_dynamic_string_expr(lex_expr("\"a\" + \"b\"")));
  CHECK_FALSE(is_dynamic_string_expr(lex_expr("f\"static\"")));
  CHECK_FALSE(is_dynamic_string_expr(lex_expr("name")));  // bare names excluded
  CHECK_FALSE(is_dynamic_string_expr(lex_expr("\"plain\"")));
}

TEST_CASE("pure literal expression classifier") {
  CHECK(is_pure_literal_expr(lex_expr("\"a\"")));
  CHECK(is_pure_literal_expr(lex_expr("1")));
  CHECK(is_pure_literal_expr(lex_expr("True")));
  CHECK(is_pure_literal_expr(lex_expr("None")));
  CHECK(is_pure_literal_expr(lex_expr("(1, 2)")));
  CHECK(is_pure_literal_expr(lex_expr("\"a\" + \"b\"")));
  CHECK_FALSE(is_pure_literal_expr(lex_expr("x")));
  CHECK_FALSE(is_pure_literal_expr(lex_expr("f(1)")));
  CHECK_FALSE(is_pure_literal_expr(lex_expr("\"a\" + x")));
  CHECK_FALSE(is_pure_literal_expr(std::vector<Token>{}));
}

TEST_CASE("function_at resolves the innermost enclosing function") {
  ParsedSource ps = parse(
      "x = 1\n"
      "def f():\n"
      "    y = 2\n"
      "z = 3\n");
  CHECK(ps.function_at(1) == -1);
  CHECK(ps.function_at(3) == 0);
  CHECK(ps.function_at(4) == -1);
}

TEST_CASE("classes are recorded") {
  ParsedSource ps = parse(
      "class HttpClient:\n"
      "    pass\n"
      "\n"
      "class badName:\n"
      "    pass\n");
  REQUIRE(ps.classes.size() == 2);
  CHECK(ps.classes[0].name == "HttpClient");
  CHECK(ps.classes[1].name == "badName");
}
