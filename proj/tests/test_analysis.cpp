#include "doctest.h"

#include <algorithm>
#include <set>

#include "multiver/analysis.hpp"
#include "multiver/patterns.hpp"

using namespace multiver;

namespace {

const char* kSqlSource =
    "def get_user(db, user_id):\n"
    "    cur = db.cursor()\n"
    "    return cur.execute(\"SELECT * FROM users WHERE id = \" + user_id)\n";

const char* kCleanSource =
    "def add(a, b):\n"
    "    \"\"\"Add two numbers.\"\"\"\n"
    "    return a + b\n";

CodeSample make_sample(const std::string& id, const std::string& source) {
  CodeSample s;
  s.id = id;
  s.source = source;
  return s;
}

AgentVerdict vote(Verdict v, double conf, const std::string& cwe = "",
                  const std::string& reasoning = "") {
  AgentVerdict av;
  av.agent = AgentKind::SECURITY;
  av.verdict = v;
  av.confidence = conf;
  av.reasoning = reasoning;
  if (!cwe.empty()) {
    Finding f;
    f.id = "f-" + cwe;
    f.cwe = cwe;
    f.start_line = 1;
    f.end_line = 1;
    av.findings.push_back(f);
  }
  return av;
}

ProviderResponse response_with(const std::string& text) {
  ProviderResponse r;
  r.text = text;
  r.cost_usd = 0.01;
  r.latency_ms = 5;
  return r;
}

std::string fenced(const std::string& body) {
  return "Reviewed.\n```json\n" + body + "\n```\n";
}

AgentConfig agent_config(AgentKind kind, InvocationPolicy policy,
                         bool self_consistency) {
  AgentConfig c;
  c.kind = kind;
  c.invocation_policy = policy;
  c.self_consistency = self_consistency;
  return c;
}

}  // namespace

TEST_CASE("invocation policy truth table") {
  const InvocationPolicy policies[] = {
      InvocationPolicy::ALWAYS, InvocationPolicy::NEVER,
      InvocationPolicy::ON_PATTERN_SILENCE_OR_COMPLEXITY};
  const int cyclos[] = {1, 10, 11};
  Finding f;
  int cases = 0;
  for (InvocationPolicy policy : policies) {
    for (bool empty : {true, false}) {
      for (int cyclo : cyclos) {
        AgentConfig config =
            agent_config(AgentKind::CORRECTNESS, policy, false);
        std::vector<Finding> findings;
        if (!empty) findings.push_back(f);
        ComplexityScore score{cyclo, 20};
        bool expect = policy == InvocationPolicy::ALWAYS ? true
                      : policy == InvocationPolicy::NEVER
                          ? false
                          : (empty || cyclo > 10);
        CAPTURE(static_cast<int>(policy));
        CAPTURE(empty);
        CAPTURE(cyclo);
        CHECK(should_invoke_llm(config, findings, score) == expect);
        ++cases;
      }
    }
  }
  CHECK(cases == 18);

  // threshold is configurable
  AgentConfig cond = agent_config(
      AgentKind::CORRECTNESS,
      InvocationPolicy::ON_PATTERN_SILENCE_OR_COMPLEXITY, false);
  CHECK(should_invoke_llm(cond, {f}, ComplexityScore{3, 5}, 2));
  CHECK_FALSE(should_invoke_llm(cond, {f}, ComplexityScore{3, 5}, 3));
}

TEST_CASE("prompt blocks appear in a fixed order") {
  CodeSample sample = make_sample("s-1", kSqlSource);
  auto parsed = pysrc::parse(sample.source);

  Finding pf;
  pf.id = "sql-dynamic";
  pf.cwe = "CWE-089";
  pf.category = FindingCategory::INJECTION;
  pf.message = "query built by string concatenation";
  pf.start_line = 3;
  pf.end_line = 3;

  RetrievalBundle bundle;
  ScoredExample ex;
  ex.record.id = "e1";
  ex.record.code = "db.execute(q + x)\nreturn rows";
  ex.record.label = SampleLabel::VULNERABLE;
  ex.record.cwe = "CWE-089";
  ex.record.description = "concatenated query";
  ex.record.fix = "bind parameters";
  ex.similarity = 0.8123456;
  bundle.examples.push_back(ex);
  SpecRecord sp;
  sp.id = "s1";
  sp.cwe = "CWE-089";
  sp.cause = "untrusted data in a query string";
  sp.fix_guidance = "use placeholders";
  bundle.specs.push_back(sp);

  auto context = extract_context(sample, {pf}, parsed, nullptr);
  REQUIRE(context.has_value());

  std::string prompt =
      build_prompt(sample, {pf}, bundle, context, AgentKind::SECURITY);

  const char* blocks[] = {"You are the security code-review agent",
                          "Sample: s-1\n",
                          "CODE:\n",
                          "\nPATTERN FINDINGS:\n",
                          "\nSIMILAR EXAMPLES:\n",
                          "\nSPECIFICATIONS:\n",
                          "\nDATA FLOW:\n",
                          "\nOUTPUT FORMAT:\n"};
  size_t last = 0;
  for (const char* block : blocks) {
    size_t pos = prompt.find(block);
    CAPTURE(block);
    REQUIRE(pos != std::string::npos);
    CHECK(pos >= last);
    last = pos;
  }

  CHECK(prompt.find("   1 | def get_user(db, user_id):\n") !=
        std::string::npos);
  CHECK(prompt.find("   3 | ") != std::string::npos);
  CHECK(prompt.find("- lines 3-3 CWE-089 [sql-dynamic] query built by "
                    "string concatenation\n") != std::string::npos);
  CHECK(prompt.find("[1] id=e1 label=vulnerable cwe=CWE-089 "
                    "similarity=0.8123\n") != std::string::npos);
  CHECK(prompt.find("    description: concatenated query\n") !=
        std::string::npos);
  CHECK(prompt.find("    fix: bind parameters\n") != std::string::npos);
  CHECK(prompt.find("    | db.execute(q + x)\n    | return rows\n") !=
        std::string::npos);
  CHECK(prompt.find("[1] id=s1 cwe=CWE-089\n    cause: untrusted data in a "
                    "query string\n    fix: use placeholders\n") !=
        std::string::npos);
  CHECK(prompt.find("sources:") != std::string::npos);
  CHECK(prompt.find("fenced json code block") != std::string::npos);

  // identical inputs, identical prompt
  CHECK(build_prompt(sample, {pf}, bundle, context, AgentKind::SECURITY) ==
        prompt);
}

TEST_CASE("prompt placeholders for empty blocks") {
  CodeSample sample = make_sample("s-2", kCleanSource);
  std::string prompt =
      build_prompt(sample, {}, RetrievalBundle{}, std::nullopt,
                   AgentKind::PERFORMANCE);
  CHECK(prompt.find("PATTERN FINDINGS:\n(none)\n") != std::string::npos);
  CHECK(prompt.find("SIMILAR EXAMPLES:\n(none)\n") != std::string::npos);
  CHECK(prompt.find("SPECIFICATIONS:\n(none)\n") != std::string::npos);
  CHECK(prompt.find("DATA FLOW:") == std::string::npos);
  CHECK(prompt.find("You are the performance code-review agent") !=
        std::string::npos);

  // a finding with no CWE renders without one
  Finding f;
  f.id = "style-docstring";
  f.message = "missing docstring";
  f.start_line = 1;
  f.end_line = 1;
  std::string styled = build_prompt(sample, {f}, RetrievalBundle{},
                                    std::nullopt, AgentKind::STYLE);
  CHECK(styled.find("- lines 1-1 [style-docstring] missing docstring\n") !=
        std::string::npos);

  // empty source still renders a code block
  CodeSample empty = make_sample("s-3", "");
  std::string blank = build_prompt(empty, {}, RetrievalBundle{}, std::nullopt,
                                   AgentKind::SECURITY);
  CHECK(blank.find("CODE:\n   1 | \n") != std::string::npos);
}

TEST_CASE("parse_verdict reads the fenced object") {
  std::vector<std::string> diags;
  ProviderResponse resp = response_with(fenced(
      R"({"verdict": "FAIL", "confidence": 0.9, "findings": [{"cwe": "89", "message": "concat", "start_line": 2, "end_line": 3}], "reasoning": "query is dynamic"})"));
  AgentVerdict v = parse_verdict(resp, AgentKind::SECURITY, &diags);
  CHECK(v.verdict == Verdict::FAIL);
  CHECK(v.confidence == 0.9);
  CHECK(v.reasoning == "query is dynamic");
  CHECK(v.tier_reached == Tier::LLM);
  CHECK(v.cost_usd == 0.01);
  CHECK(v.latency_ms == 5);
  REQUIRE(v.findings.size() == 1);
  CHECK(v.findings[0].id == "llm-security-1");
  CHECK(v.findings[0].cwe == "CWE-089");
  CHECK(v.findings[0].category == FindingCategory::INJECTION);
  CHECK(v.findings[0].start_line == 2);
  CHECK(v.findings[0].end_line == 3);
  CHECK(v.findings[0].tier == Tier::LLM);
  CHECK(diags.empty());
}

TEST_CASE("parse_verdict falls back to the last balanced object") {
  std::vector<std::string> diags;
  ProviderResponse resp = response_with(
      "Here is my analysis without fences: "
      R"({"verdict": "WARNING", "confidence": 0.6, "reasoning": "meh"})"
      " — done.");
  AgentVerdict v = parse_verdict(resp, AgentKind::CORRECTNESS, &diags);
  CHECK(v.verdict == Verdict::WARNING);
  CHECK(v.confidence == 0.6);
  CHECK(diags.empty());
}

TEST_CASE("parse_verdict prefers the object that carries the verdict key") {
  // nested finding objects sit later in the text than the verdict object
  std::vector<std::string> diags;
  ProviderResponse resp = response_with(
      R"({"verdict": "FAIL", "confidence": 0.8, "findings": [{"cwe": "CWE-078", "message": "shell", "start_line": 1, "end_line": 1}], "reasoning": "r"})");
  AgentVerdict v = parse_verdict(resp, AgentKind::SECURITY, &diags);
  CHECK(v.verdict == Verdict::FAIL);
  REQUIRE(v.findings.size() == 1);
  CHECK(v.findings[0].cwe == "CWE-078");

  // a later fenced block without a verdict does not shadow an earlier one
  ProviderResponse two = response_with(
      fenced(R"({"verdict": "PASS", "confidence": 0.9, "reasoning": "ok"})") +
      "\nAppendix:\n" + fenced(R"({"note": "ignore me"})"));
  AgentVerdict w = parse_verdict(two, AgentKind::SECURITY, &diags);
  CHECK(w.verdict == Verdict::PASS);
  CHECK(w.confidence == 0.9);
}

TEST_CASE("unparseable responses degrade to WARNING 0.3") {
  std::vector<std::string> diags;
  ProviderResponse resp = response_with("no structure to be found");
  AgentVerdict v = parse_verdict(resp, AgentKind::SECURITY, &diags);
  CHECK(v.verdict == Verdict::WARNING);
  CHECK(v.confidence == 0.3);
  CHECK(v.reasoning == "no structure to be found");
  CHECK(v.findings.empty());
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].rfind("MALFORMED_VERDICT:", 0) == 0);

  diags.clear();
  ProviderResponse odd = response_with(
      fenced(R"({"verdict": "MAYBE", "confidence": 0.5})"));
  AgentVerdict u = parse_verdict(odd, AgentKind::SECURITY, &diags);
  CHECK(u.verdict == Verdict::WARNING);
  CHECK(u.confidence == 0.3);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].find("unknown verdict 'MAYBE'") != std::string::npos);

  diags.clear();
  ProviderResponse noverdict =
      response_with(fenced(R"({"confidence": 0.9})"));
  AgentVerdict t = parse_verdict(noverdict, AgentKind::SECURITY, &diags);
  CHECK(t.verdict == Verdict::WARNING);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].find("lacks a verdict") != std::string::npos);
}

TEST_CASE("confidence defaults and clamping") {
  std::vector<std::string> diags;
  ProviderResponse missing =
      response_with(fenced(R"({"verdict": "PASS", "reasoning": "fine"})"));
  AgentVerdict v = parse_verdict(missing, AgentKind::STYLE, &diags);
  CHECK(v.verdict == Verdict::PASS);
  CHECK(v.confidence == 0.5);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0] == "verdict missing confidence; defaulted to 0.5");

  diags.clear();
  ProviderResponse high = response_with(
      fenced(R"({"verdict": "FAIL", "confidence": 1.7})"));
  AgentVerdict h = parse_verdict(high, AgentKind::STYLE, &diags);
  CHECK(h.confidence == 1.0);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].find("clamped") != std::string::npos);

  diags.clear();
  ProviderResponse low = response_with(
      fenced(R"({"verdict": "FAIL", "confidence": -0.2})"));
  CHECK(parse_verdict(low, AgentKind::STYLE, &diags).confidence == 0.0);

  diags.clear();
  ProviderResponse stringy = response_with(
      fenced(R"({"verdict": "PASS", "confidence": "high"})"));
  CHECK(parse_verdict(stringy, AgentKind::STYLE, &diags).confidence == 0.5);
  CHECK(diags.size() == 1);
}

TEST_CASE("finding arrays: ids, span repair, non-object entries") {
  std::vector<std::string> diags;
  ProviderResponse resp = response_with(fenced(
      R"({"verdict": "FAIL", "confidence": 0.9, "findings": [{"cwe": "CWE-089", "start_line": 4, "end_line": 2}, "junk", {"message": "no cwe", "start_line": -3}]})"));
  AgentVerdict v = parse_verdict(resp, AgentKind::SECURITY, &diags);
  REQUIRE(v.findings.size() == 2);
  CHECK(v.findings[0].id == "llm-security-1");
  CHECK(v.findings[1].id == "llm-security-2");
  CHECK(v.findings[0].start_line == 4);
  CHECK(v.findings[0].end_line == 4);  // end < start repaired
  CHECK(v.findings[1].start_line == 1);  // negative raised to 1
  CHECK(v.findings[1].cwe.empty());
  CHECK(v.findings[1].category == FindingCategory::OTHER);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0] == "non-object entry in findings skipped");
}

TEST_CASE("combine_verdicts matches a majority-else-severity oracle") {
  const Verdict kLevels[] = {Verdict::PASS, Verdict::WARNING, Verdict::FAIL};
  const double kConf[] = {0.9, 0.6, 0.3};
  const char* kCwe[] = {"CWE-001", "CWE-002", "CWE-003"};
  int combos = 0;
  for (Verdict a : kLevels)
    for (Verdict b : kLevels)
      for (Verdict c : kLevels) {
        std::vector<AgentVerdict> batch = {vote(a, kConf[0], kCwe[0]),
                                           vote(b, kConf[1], kCwe[1]),
                                           vote(c, kConf[2], kCwe[2])};
        // oracle
        int counts[3] = {0, 0, 0};
        counts[static_cast<int>(a)]++;
        counts[static_cast<int>(b)]++;
        counts[static_cast<int>(c)]++;
        int majority = -1;
        for (int level = 0; level < 3; ++level)
          if (counts[level] >= 2) majority = level;
        Verdict expect;
        std::vector<int> agree;
        if (majority >= 0) {
          expect = static_cast<Verdict>(majority);
          for (int i = 0; i < 3; ++i)
            if (batch[i].verdict == expect) agree.push_back(i);
        } else {
          for (int level = 2; level >= 0; --level)
            if (counts[level] > 0) {
              expect = static_cast<Verdict>(level);
              break;
            }
          agree = {0, 1, 2};
        }
        double conf = 0.0;
        for (int i : agree) conf += kConf[i];
        conf /= static_cast<double>(agree.size());
        std::set<std::string> cwes;
        for (int i : agree) cwes.insert(kCwe[i]);

        AgentVerdict got = combine_verdicts(batch);
        CAPTURE(static_cast<int>(a));
        CAPTURE(static_cast<int>(b));
        CAPTURE(static_cast<int>(c));
        CHECK(got.verdict == expect);
        CHECK(got.confidence == conf);
        std::set<std::string> got_cwes;
        for (const Finding& f : got.findings) got_cwes.insert(f.cwe);
        CHECK(got_cwes == cwes);
        ++combos;
      }
  CHECK(combos == 27);
}

TEST_CASE("combine_verdicts over other batch sizes") {
  CHECK_THROWS_AS(combine_verdicts({}), Error);
  try {
    combine_verdicts({});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EMPTY_INPUT);
  }

  // singleton: identity on verdict/confidence
  AgentVerdict solo = combine_verdicts({vote(Verdict::WARNING, 0.4)});
  CHECK(solo.verdict == Verdict::WARNING);
  CHECK(solo.confidence == 0.4);

  // 1-1 split: most severe, both count
  AgentVerdict split =
      combine_verdicts({vote(Verdict::PASS, 1.0), vote(Verdict::FAIL, 0.5)});
  CHECK(split.verdict == Verdict::FAIL);
  CHECK(split.confidence == 0.75);

  // 2-2 split: still a tie, most severe wins, all four count
  AgentVerdict even = combine_verdicts(
      {vote(Verdict::PASS, 1.0), vote(Verdict::PASS, 1.0),
       vote(Verdict::FAIL, 0.5), vote(Verdict::FAIL, 0.5)});
  CHECK(even.verdict == Verdict::FAIL);
  CHECK(even.confidence == 0.75);

  // 3-2 majority: only the agreeing three shape the confidence
  AgentVerdict five = combine_verdicts(
      {vote(Verdict::PASS, 0.9), vote(Verdict::PASS, 0.9),
       vote(Verdict::PASS, 0.9), vote(Verdict::FAIL, 0.1),
       vote(Verdict::FAIL, 0.1)});
  CHECK(five.verdict == Verdict::PASS);
  CHECK(five.confidence == 0.9);
}

TEST_CASE("combine_verdicts accounting and bookkeeping") {
  AgentVerdict a = vote(Verdict::PASS, 0.9, "", "looks fine");
  a.cost_usd = 0.13;
  a.latency_ms = 100;
  a.tier_reached = Tier::LLM;
  AgentVerdict b = vote(Verdict::PASS, 0.7, "", "");
  b.cost_usd = 0.13;
  b.latency_ms = 50;
  AgentVerdict dissent = vote(Verdict::FAIL, 1.0, "CWE-089", "injection");
  dissent.cost_usd = 0.13;
  dissent.latency_ms = 200;

  AgentVerdict out = combine_verdicts({a, b, dissent});
  CHECK(out.verdict == Verdict::PASS);
  // dissenting cost and latency still counted
  CHECK(out.cost_usd == doctest::Approx(0.39).epsilon(1e-12));
  CHECK(out.latency_ms == 350);
  CHECK(out.tier_reached == Tier::LLM);
  // dissenting findings and reasoning are not
  CHECK(out.findings.empty());
  CHECK(out.reasoning == "looks fine");

  // reasonings join with a separator; duplicate findings collapse
  AgentVerdict x = vote(Verdict::FAIL, 0.8, "CWE-089", "first");
  AgentVerdict y = vote(Verdict::FAIL, 0.6, "CWE-089", "second");
  AgentVerdict joined = combine_verdicts({x, y});
  CHECK(joined.reasoning == "first\n---\nsecond");
  CHECK(joined.findings.size() == 1);
}

TEST_CASE("self-consistency insists on exactly three verdicts") {
  std::vector<AgentVerdict> two = {vote(Verdict::PASS, 0.9),
                                   vote(Verdict::PASS, 0.9)};
  try {
    self_consistent_verdict(two);
    FAIL_CHECK("expected WRONG_ARITY");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::WRONG_ARITY);
    CHECK(std::string(e.what()).find("got 2") != std::string::npos);
  }
  std::vector<AgentVerdict> three = {vote(Verdict::PASS, 1.0),
                                     vote(Verdict::FAIL, 0.5),
                                     vote(Verdict::PASS, 0.5)};
  AgentVerdict got = self_consistent_verdict(three);
  CHECK(got.verdict == Verdict::PASS);
  CHECK(got.confidence == 0.75);
}

TEST_CASE("run_agent: self-consistency issues the 1.0/0.7/0.9 batch") {
  SignatureSet sigs = compile_signatures(default_signatures());
  MockProvider mock;
  AgentRunDeps deps;
  deps.signatures = &sigs;
  deps.provider = &mock;

  CodeSample sample = make_sample("s-sql", kSqlSource);
  AgentConfig security =
      config_for(default_agent_configs(), AgentKind::SECURITY);
  REQUIRE(security.self_consistency);

  AgentRunResult result = run_agent(sample, security, deps);

  auto log = mock.recorded();
  REQUIRE(log.size() == 3);
  std::multiset<std::pair<double, int>> calls;
  for (const auto& req : log)
    calls.insert({req.temperature, req.thinking_budget_tokens});
  std::multiset<std::pair<double, int>> expect = {
      {1.0, 10000}, {0.7, 0}, {0.9, 0}};
  CHECK(calls == expect);
  for (const auto& req : log) CHECK(req.prompt == log[0].prompt);

  // pattern findings in the prompt steer the mock fallback to FAIL 0.8 ×3
  CHECK(result.verdict.verdict == Verdict::FAIL);
  CHECK(result.verdict.confidence == (0.8 + 0.8 + 0.8) / 3.0);
  CHECK(result.verdict.tier_reached == Tier::LLM);
  CHECK(result.verdict.cost_usd == 0.39);
  CHECK(result.verdict.latency_ms == 90000);
  CHECK_FALSE(result.provider_failed);
  CHECK(result.context.has_value());  // injection finding present
  REQUIRE(!result.verdict.findings.empty());
  CHECK(result.verdict.findings[0].cwe == "CWE-089");
}

TEST_CASE("run_agent: single-call agents make exactly one request") {
  SignatureSet sigs = compile_signatures(default_signatures());
  MockProvider mock;
  AgentRunDeps deps;
  deps.signatures = &sigs;
  deps.provider = &mock;

  CodeSample sample = make_sample("s-clean", kCleanSource);
  AgentConfig perf =
      config_for(default_agent_configs(), AgentKind::PERFORMANCE);
  REQUIRE_FALSE(perf.self_consistency);

  AgentRunResult result = run_agent(sample, perf, deps);
  auto log = mock.recorded();
  REQUIRE(log.size() == 1);
  CHECK(log[0].temperature == 1.0);
  CHECK(log[0].thinking_budget_tokens == 10000);
  CHECK(result.verdict.verdict == Verdict::PASS);  // fallback: no findings
  CHECK(result.verdict.confidence == 0.7);
  CHECK(result.verdict.cost_usd == 0.13);
  CHECK(result.verdict.tier_reached == Tier::LLM);
}

TEST_CASE("run_agent: NEVER policy stops at the pattern tier") {
  SignatureSet sigs = compile_signatures(default_signatures());
  MockProvider mock;
  AgentRunDeps deps;
  deps.signatures = &sigs;
  deps.provider = &mock;

  CodeSample sample = make_sample("s-clean", kCleanSource);
  AgentConfig style = config_for(default_agent_configs(), AgentKind::STYLE);
  REQUIRE(style.invocation_policy == InvocationPolicy::NEVER);

  AgentRunResult result = run_agent(sample, style, deps);
  CHECK(mock.call_count() == 0);
  CHECK(result.verdict.tier_reached == Tier::PATTERN);
  CHECK(result.verdict.cost_usd == 0.0);
  CHECK(result.retrieval_ids.empty());
}

TEST_CASE("run_agent: conditional policy skips noisy low-complexity code") {
  SignatureSet sigs = compile_signatures(default_signatures());
  MockProvider mock;
  AgentRunDeps deps;
  deps.signatures = &sigs;
  deps.provider = &mock;

  AgentConfig correctness =
      config_for(default_agent_configs(), AgentKind::CORRECTNESS);
  REQUIRE(correctness.invocation_policy ==
          InvocationPolicy::ON_PATTERN_SILENCE_OR_COMPLEXITY);

  // bare except: pattern findings present, cyclomatic small → no LLM
  CodeSample noisy = make_sample("s-noisy",
                                 "def load():\n"
                                 "    try:\n"
                                 "        return int(open('f').read())\n"
                                 "    except:\n"
                                 "        pass\n");
  AgentRunResult skipped = run_agent(noisy, correctness, deps);
  CHECK(mock.call_count() == 0);
  CHECK(skipped.verdict.tier_reached == Tier::PATTERN);
  CHECK_FALSE(skipped.verdict.findings.empty());

  // silent patterns → escalate
  CodeSample quiet = make_sample("s-quiet", kCleanSource);
  run_agent(quiet, correctness, deps);
  CHECK(mock.call_count() == 1);
}

TEST_CASE("run_agent without a provider reports the stop") {
  SignatureSet sigs = compile_signatures(default_signatures());
  AgentRunDeps deps;
  deps.signatures = &sigs;

  CodeSample sample = make_sample("s-sql", kSqlSource);
  AgentConfig security =
      config_for(default_agent_configs(), AgentKind::SECURITY);
  AgentRunResult result = run_agent(sample, security, deps);
  CHECK(result.verdict.tier_reached == Tier::PATTERN);
  CHECK_FALSE(result.provider_failed);
  bool noted = false;
  for (const auto& d : result.diagnostics)
    if (d.find("no provider configured") != std::string::npos) noted = true;
  CHECK(noted);

  AgentRunDeps empty;
  CHECK_THROWS_AS(run_agent(sample, security, empty), Error);
}

TEST_CASE("run_agent: retrieval feeds the prompt only when enabled") {
  SignatureSet sigs = compile_signatures(default_signatures());
  std::vector<KnowledgeRecord> records;
  for (int i = 0; i < 4; ++i) {
    KnowledgeRecord r;
    r.id = "kb-" + std::to_string(i);
    r.code = "db.execute(query + value)";
    r.label = SampleLabel::VULNERABLE;
    r.cwe = "CWE-089";
    records.push_back(r);
  }
  KnowledgeStore store = KnowledgeStore::from_records(records, {});

  CodeSample sample = make_sample("s-sql", kSqlSource);
  AgentConfig perf =
      config_for(default_agent_configs(), AgentKind::PERFORMANCE);

  MockProvider with_rag;
  AgentRunDeps deps;
  deps.signatures = &sigs;
  deps.provider = &with_rag;
  deps.store = &store;
  AgentRunResult result = run_agent(sample, perf, deps);
  CHECK(result.retrieval_ids.size() == 4);  // min(k=5, 4 records)
  REQUIRE(with_rag.call_count() == 1);
  CHECK(with_rag.recorded()[0].prompt.find("[1] id=kb-") !=
        std::string::npos);

  MockProvider no_rag;
  deps.provider = &no_rag;
  deps.rag_enabled = false;
  AgentRunResult dry = run_agent(sample, perf, deps);
  CHECK(dry.retrieval_ids.empty());
  REQUIRE(no_rag.call_count() == 1);
  CHECK(no_rag.recorded()[0].prompt.find("SIMILAR EXAMPLES:\n(none)\n") !=
        std::string::npos);
}

TEST_CASE("run_agent: total provider failure keeps the pattern verdict") {
  SignatureSet sigs = compile_signatures(default_signatures());
  MockProvider mock;
  MockProvider::Rule boom;
  boom.fail_call = true;
  mock.add_rule(boom);

  CodeSample sample = make_sample("s-sql", kSqlSource);
  AgentConfig security =
      config_for(default_agent_configs(), AgentKind::SECURITY);

  AgentRunDeps deps;
  deps.signatures = &sigs;
  deps.provider = &mock;
  AgentRunResult result = run_agent(sample, security, deps);
  CHECK(mock.call_count() == 3);
  CHECK(result.provider_failed);
  CHECK(result.verdict.tier_reached == Tier::PATTERN);  // nothing retrieved
  CHECK(result.verdict.verdict == Verdict::FAIL);  // the pattern verdict
  CHECK(result.verdict.cost_usd == 0.0);
  CHECK(result.verdict.latency_ms == 0);
  int failures = 0;
  bool kept = false;
  for (const auto& d : result.diagnostics) {
    if (d.find("PROVIDER_FAILURE: call ") != std::string::npos) ++failures;
    if (d.find("all provider calls failed; pattern verdict kept") !=
        std::string::npos)
      kept = true;
  }
  CHECK(failures == 3);
  CHECK(kept);

  // with retrieval done first, the verdict reports the RAG tier
  std::vector<KnowledgeRecord> records(1);
  records[0].id = "kb-0";
  records[0].code = "db.execute(q)";
  records[0].cwe = "CWE-089";
  KnowledgeStore store = KnowledgeStore::from_records(records, {});
  deps.store = &store;
  AgentRunResult ragged = run_agent(sample, security, deps);
  CHECK(ragged.provider_failed);
  CHECK(ragged.verdict.tier_reached == Tier::RAG);
  CHECK(ragged.retrieval_ids.size() == 1);
}

TEST_CASE("run_agent: partial failures combine the surviving calls") {
  SignatureSet sigs = compile_signatures(default_signatures());
  MockProvider mock;
  MockProvider::Rule boom;
  boom.temperature = 0.7;  // only the second self-consistency sample dies
  boom.fail_call = true;
  mock.add_rule(boom);

  CodeSample sample = make_sample("s-sql", kSqlSource);
  AgentConfig security =
      config_for(default_agent_configs(), AgentKind::SECURITY);

  AgentRunDeps deps;
  deps.signatures = &sigs;
  deps.provider = &mock;
  AgentRunResult result = run_agent(sample, security, deps);
  CHECK(mock.call_count() == 3);
  CHECK_FALSE(result.provider_failed);
  CHECK(result.verdict.verdict == Verdict::FAIL);  // two FAIL 0.8 fallbacks
  CHECK(result.verdict.confidence == 0.8);
  CHECK(result.verdict.cost_usd == 0.26);  // the failed call cost nothing
  CHECK(result.verdict.latency_ms == 60000);
  bool noted = false;
  for (const auto& d : result.diagnostics)
    if (d.find("PROVIDER_FAILURE: call 2 of 3") != std::string::npos)
      noted = true;
  CHECK(noted);
}

TEST_CASE("run_agent merges pattern and LLM findings without duplicates") {
  SignatureSet sigs = compile_signatures(default_signatures());
  CodeSample sample = make_sample("s-sql", kSqlSource);
  AgentConfig security =
      config_for(default_agent_configs(), AgentKind::SECURITY);
  security.self_consistency = false;

  // learn the pattern finding's span first
  AgentRunDeps pattern_only;
  pattern_only.signatures = &sigs;
  AgentRunResult base = run_agent(sample, security, pattern_only);
  REQUIRE(base.verdict.findings.size() == 1);
  const Finding& pat = base.verdict.findings[0];

  MockProvider mock;
  MockProvider::Rule rule;
  rule.sample_id = "s-sql";
  rule.verdict = Verdict::FAIL;
  rule.confidence = 0.9;
  rule.findings = nlohmann::json::array(
      {{{"cwe", pat.cwe},
        {"message", "duplicate of the pattern hit"},
        {"start_line", pat.start_line},
        {"end_line", pat.end_line}},
       {{"cwe", "CWE-078"},
        {"message", "way out of range"},
        {"start_line", 1},
        {"end_line", 999}}});
  mock.add_rule(rule);

  AgentRunDeps deps;
  deps.signatures = &sigs;
  deps.provider = &mock;
  AgentRunResult result = run_agent(sample, security, deps);

  // pattern finding + the clamped novel finding; the duplicate collapsed
  REQUIRE(result.verdict.findings.size() == 2);
  CHECK(result.verdict.findings[0].id == pat.id);
  CHECK(result.verdict.findings[1].cwe == "CWE-078");
  CHECK(result.verdict.findings[1].end_line == 3);  // clamped to the source
  bool clamped = false;
  for (const auto& d : result.diagnostics)
    if (d.find("span clamped to 3 lines") != std::string::npos)
      clamped = true;
  CHECK(clamped);
}
