#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "multiver/eval.hpp"

namespace fs = std::filesystem;
using namespace multiver;

namespace {

int fail(const std::string& message) {
  std::cerr << "error: " << message << "\n";
  return 2;
}

bool stdout_is_tty() { return ::isatty(::fileno(stdout)) != 0; }

std::string env_or_empty(const char* name) {
  const char* value = std::getenv(name);
  return value ? value : "";
}

// --- shared option plumbing -------------------------------------------------

struct CommonOptions {
  std::string kb_path;
  std::string signatures_path;
  std::string provider = "mock";
  std::string mock_rules;
  std::string format = "text";
  std::string out_path;
  int jobs = 0;
  bool no_color = false;
};

void add_common_flags(CLI::App* cmd, CommonOptions& opt, bool with_provider) {
  cmd->add_option("--kb", opt.kb_path,
                  "knowledge base JSONL (default: $MULTIVER_KB)");
  cmd->add_option("--signatures", opt.signatures_path,
                  "pattern signature JSON (default: built-in set)");
  if (with_provider) {
    cmd->add_option("--provider", opt.provider, "completion provider")
        ->check(CLI::IsMember({"mock", "live"}));
    cmd->add_option("--mock-rules", opt.mock_rules,
                    "canned responses for the mock provider");
  }
  cmd->add_option("--format", opt.format, "output format")
      ->check(CLI::IsMember({"json", "text"}));
  cmd->add_option("--out", opt.out_path, "write the report to a file");
  cmd->add_option("--jobs", opt.jobs,
                  "worker threads (default: logical cores)");
  cmd->add_flag("--no-color", opt.no_color, "disable ANSI colors");
}

SignatureSet load_signature_set(const CommonOptions& opt) {
  if (!opt.signatures_path.empty())
    return load_signatures(opt.signatures_path);
  return compile_signatures(default_signatures());
}

std::optional<KnowledgeStore> load_store(const CommonOptions& opt,
                                         bool rag_enabled,
                                         std::ostream& log) {
  std::string path = opt.kb_path;
  if (path.empty()) path = env_or_empty("MULTIVER_KB");
  if (path.empty() || !rag_enabled) return std::nullopt;
  if (!fs::exists(path))
    throw Error(ErrorCode::IO_FAILURE, "knowledge base not found: " + path);
  auto store = KnowledgeStore::ingest(path);
  log << "knowledge base: " << store.example_count() << " examples, "
      << store.spec_count() << " specs ("
      << (store.info().cache_hit ? "cache hit" : "index rebuilt") << ")\n";
  return store;
}

std::unique_ptr<CompletionProvider> make_provider(const CommonOptions& opt) {
  if (opt.provider == "live") return make_live_provider({});
  auto mock = std::make_unique<MockProvider>();
  if (!opt.mock_rules.empty()) mock->load_rules(opt.mock_rules);
  return mock;
}

std::set<AgentKind> parse_agents(const std::string& csv) {
  std::set<AgentKind> agents;
  std::stringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    auto kind = agent_from_string(token);
    if (!kind)
      throw Error(ErrorCode::INVALID_CONFIG, "unknown agent '" + token +
                      "' (expected security|correctness|performance|style)");
    agents.insert(*kind);
  }
  return agents;
}

// --- analyze ----------------------------------------------------------------

struct AnalyzeOptions {
  std::vector<std::string> paths;
  std::string mode = "union";
  bool no_rag = false;
  std::string agents;
  double warn_at = 0.25;
  double fail_at = 0.5;
  CommonOptions common;
};

std::vector<fs::path> collect_files(const std::vector<std::string>& paths) {
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    fs::path path(p);
    if (!fs::exists(path))
      throw Error(ErrorCode::IO_FAILURE, "no such path: " + p);
    if (fs::is_directory(path)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::recursive_directory_iterator(path))
        if (entry.is_regular_file() && entry.path().extension() == ".py")
          found.push_back(entry.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(path);
    }
  }
  return files;
}

int cmd_analyze(const AnalyzeOptions& opt) {
  auto mode = vote_mode_from_string(opt.mode);
  if (!mode) return fail("unknown mode '" + opt.mode + "' (union|weighted)");

  EngineConfig config;
  config.mode = *mode;
  config.rag_enabled = !opt.no_rag;
  config.thresholds = {opt.warn_at, opt.fail_at};
  if (!opt.agents.empty()) config.enabled_agents = parse_agents(opt.agents);

  std::vector<fs::path> files = collect_files(opt.paths);

  std::ofstream out_file;
  if (!opt.common.out_path.empty()) {
    out_file.open(opt.common.out_path);
    if (!out_file)
      throw Error(ErrorCode::IO_FAILURE,
                  "cannot write: " + opt.common.out_path);
  }
  std::ostream& out = out_file.is_open() ? out_file : std::cout;
  const bool json_format = opt.common.format == "json";
  const bool color =
      !json_format && !opt.common.no_color && !out_file.is_open() &&
      stdout_is_tty();

  SignatureSet signatures = load_signature_set(opt.common);
  auto store = load_store(opt.common, config.rag_enabled, std::cerr);
  auto provider = make_provider(opt.common);

  Engine engine(config, &signatures, store ? &*store : nullptr,
                provider.get());

  size_t flagged = 0;
  double total_cost = 0.0;
  std::int64_t total_latency = 0;
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::IO_FAILURE, "cannot read: " + file.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    CodeSample sample;
    sample.id = file.string();
    sample.source = buffer.str();
    sample.origin = file.string();

    AnalysisReport report = engine.analyze(sample);
    if (report.decision.flagged) ++flagged;
    total_cost += report.total_cost_usd;
    total_latency += report.total_latency_ms;
    if (json_format) {
      out << json(report).dump() << "\n";
    } else {
      out << render_report_text(report, color);
    }
  }
  if (json_format) {
    json summary = {{"summary",
                     {{"files", files.size()},
                      {"flagged", flagged},
                      {"total_cost_usd", total_cost},
                      {"total_latency_ms", total_latency}}}};
    out << summary.dump() << "\n";
  } else {
    char line[128];
    std::snprintf(line, sizeof(line),
                  "%zu file(s), %zu flagged, total $%.4f, %lld ms\n",
                  files.size(), flagged, total_cost,
                  static_cast<long long>(total_latency));
    out << line;
  }
  return flagged > 0 ? 1 : 0;
}

// --- eval -------------------------------------------------------------------

struct EvalOptions {
  std::string dataset;
  std::string preset = "full";
  int runs = 0;
  std::string seeds;
  CommonOptions common;
};

int cmd_eval(const EvalOptions& opt) {
  RunConfig config = preset_config(opt.preset);
  if (opt.runs > 0) config.runs = opt.runs;
  if (!opt.seeds.empty()) {
    config.seeds.clear();
    std::stringstream ss(opt.seeds);
    std::string token;
    while (std::getline(ss, token, ',')) {
      try {
        config.seeds.push_back(std::stoi(token));
      } catch (const std::exception&) {
        throw Error(ErrorCode::INVALID_CONFIG, "bad seed '" + token + "'");
      }
    }
    if (opt.runs <= 0) config.runs = static_cast<int>(config.seeds.size());
  }
  auto provider_kind = provider_kind_from_string(opt.common.provider);
  if (provider_kind) config.provider = *provider_kind;

  std::vector<std::string> diags;
  std::vector<CodeSample> corpus = load_dataset(opt.dataset, &diags);

  SignatureSet signatures = load_signature_set(opt.common);
  auto store = load_store(opt.common, config.rag_enabled, std::cerr);
  auto provider = make_provider(opt.common);

  EvalDeps deps;
  deps.signatures = &signatures;
  deps.store = store ? &*store : nullptr;
  deps.provider = provider.get();
  deps.jobs = opt.common.jobs > 0
                  ? opt.common.jobs
                  : static_cast<int>(std::thread::hardware_concurrency());

  EvalReport report = evaluate(corpus, config, deps);
  report.preset = opt.preset;
  report.diagnostics.insert(report.diagnostics.begin(), diags.begin(),
                            diags.end());

  if (opt.common.format == "json") {
    std::cout << json(report).dump(2) << "\n";
  } else {
    for (const auto& d : report.diagnostics) std::cout << d << "\n";
    std::cout << render_eval_text(report);
    size_t run_diags = 0;
    for (const auto& r : report.per_run) run_diags += r.diagnostics.size();
    if (run_diags > 0)
      std::cout << "\n" << run_diags
                << " per-sample diagnostic(s); use --format json or --out "
                   "for the full list\n";
  }
  if (!opt.common.out_path.empty()) {
    std::ofstream out(opt.common.out_path);
    if (!out)
      throw Error(ErrorCode::IO_FAILURE,
                  "cannot write: " + opt.common.out_path);
    out << json(report).dump(2) << "\n";
  }
  return 0;
}

// --- kb ---------------------------------------------------------------------

int cmd_kb(const std::string& action, std::string path) {
  if (path.empty()) path = env_or_empty("MULTIVER_KB");
  if (path.empty())
    return fail("no knowledge base given (pass a path or set MULTIVER_KB)");
  KnowledgeStore store = KnowledgeStore::ingest(path);
  const auto& info = store.info();
  if (action == "ingest") {
    std::cout << "ingested " << info.example_count << " examples, "
              << info.spec_count << " specs from " << path << "\n";
    std::cout << "cache: " << (info.cache_hit ? "hit" : "rebuilt") << " ("
              << info.cache_path << ")\n";
  } else {
    std::cout << "examples: " << store.example_count() << "\n";
    std::cout << "specs: " << store.spec_count() << "\n";
    std::cout << "embedding dimension: " << kEmbeddingDim << "\n";
    std::cout << "cache: " << (info.cache_hit ? "hit" : "rebuilt") << " ("
              << info.cache_path << ")\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multiver: multi-agent vulnerability detection for Python"};
  app.require_subcommand(1);

  AnalyzeOptions analyze_opt;
  CLI::App* analyze = app.add_subcommand("analyze", "analyze files or trees");
  analyze->add_option("paths", analyze_opt.paths, "files or directories")
      ->required();
  analyze->add_option("--mode", analyze_opt.mode, "union|weighted");
  analyze->add_flag("--no-rag", analyze_opt.no_rag, "disable retrieval");
  analyze->add_option("--agents", analyze_opt.agents,
                      "comma-separated agent subset (must include security)");
  analyze->add_option("--warn-at", analyze_opt.warn_at,
                      "weighted warn threshold");
  analyze->add_option("--fail-at", analyze_opt.fail_at,
                      "weighted fail threshold");
  add_common_flags(analyze, analyze_opt.common, true);

  EvalOptions eval_opt;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a labeled corpus");
  eval_cmd->add_option("dataset", eval_opt.dataset, "JSONL corpus")
      ->required();
  eval_cmd->add_option("--preset", eval_opt.preset,
                       "full|no-rag|security-only|no-correctness|weighted");
  eval_cmd->add_option("--runs", eval_opt.runs, "number of runs");
  eval_cmd->add_option("--seeds", eval_opt.seeds, "comma-separated seeds");
  add_common_flags(eval_cmd, eval_opt.common, true);

  std::string kb_action, kb_path;
  CLI::App* kb = app.add_subcommand("kb", "knowledge-base maintenance");
  kb->add_option("action", kb_action, "ingest|stats")
      ->required()
      ->check(CLI::IsMember({"ingest", "stats"}));
  kb->add_option("path", kb_path, "KB path (default: $MULTIVER_KB)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (analyze->parsed()) return cmd_analyze(analyze_opt);
    if (eval_cmd->parsed()) return cmd_eval(eval_opt);
    if (kb->parsed()) return cmd_kb(kb_action, kb_path);
  } catch (const Error& e) {
    return fail(e.what());
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  return 2;
}
