#include "multiver/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace multiver {

const char* to_string(ProviderKind p) {
  return p == ProviderKind::LIVE ? "live" : "mock";
}

std::optional<ProviderKind> provider_kind_from_string(const std::string& s) {
  if (s == "mock") return ProviderKind::MOCK;
  if (s == "live") return ProviderKind::LIVE;
  return std::nullopt;
}

std::vector<std::string> preset_names() {
  return {"full", "no-rag", "security-only", "no-correctness", "weighted"};
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;  // defaults: union, rag on, all four agents
  if (name == "full") return c;
  if (name == "no-rag") {
    c.rag_enabled = false;
    return c;
  }
  if (name == "security-only") {
    c.enabled_agents = {AgentKind::SECURITY};
    return c;
  }
  if (name == "no-correctness") {
    c.enabled_agents = {AgentKind::SECURITY, AgentKind::PERFORMANCE,
                        AgentKind::STYLE};
    return c;
  }
  if (name == "weighted") {
    c.mode = VoteMode::WEIGHTED;
    return c;
  }
  std::string valid;
  for (const auto& p : preset_names()) {
    if (!valid.empty()) valid += ", ";
    valid += p;
  }
  throw Error(ErrorCode::INVALID_CONFIG,
              "unknown preset '" + name + "' (valid presets: " + valid + ")");
}

std::vector<int> effective_seeds(const RunConfig& config) {
  if (config.runs < 1)
    throw Error(ErrorCode::INVALID_CONFIG, "runs must be positive");
  std::vector<int> seeds = config.seeds;
  if (seeds.empty()) seeds.push_back(42);
  while (static_cast<int>(seeds.size()) < config.runs)
    seeds.push_back(seeds.back() + 1);
  seeds.resize(config.runs);
  return seeds;
}

Metrics compute_metrics(const ConfusionCounts& counts) {
  Metrics m;
  m.counts = counts;
  const double tp = counts.tp, fp = counts.fp, tn = counts.tn, fn = counts.fn;
  if (counts.tp + counts.fn > 0) m.recall = tp / (tp + fn);
  if (counts.tp + counts.fp > 0) m.precision = tp / (tp + fp);
  if (counts.fp + counts.tn > 0) m.fpr = fp / (fp + tn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0)
    m.f1 = f1_from(*m.precision, *m.recall);
  return m;
}

double f1_from(double precision, double recall) {
  return 2.0 * precision * recall / (precision + recall);
}

namespace {

AggregateStat aggregate_one(
    const std::vector<Metrics>& per_run,
    std::optional<double> Metrics::*field) {
  std::vector<double> values;
  for (const auto& m : per_run)
    if (m.*field) values.push_back(*(m.*field));
  AggregateStat stat;
  if (values.empty()) return stat;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  stat.mean = mean;
  stat.std_dev = std::sqrt(var / n);
  return stat;
}

}  // namespace

MetricsAggregate aggregate_runs(const std::vector<Metrics>& per_run) {
  if (per_run.empty())
    throw Error(ErrorCode::EMPTY_INPUT, "no runs to aggregate");
  MetricsAggregate agg;
  agg.recall = aggregate_one(per_run, &Metrics::recall);
  agg.precision = aggregate_one(per_run, &Metrics::precision);
  agg.f1 = aggregate_one(per_run, &Metrics::f1);
  agg.fpr = aggregate_one(per_run, &Metrics::fpr);
  return agg;
}

std::vector<CodeSample> load_dataset(const std::string& path,
                                     std::vector<std::string>* diagnostics) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IO_FAILURE, "cannot open dataset: " + path);

  std::vector<CodeSample> corpus;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  size_t vulnerable = 0, fixed = 0;
  auto at = [&](const std::string& what) {
    return path + ":line " + std::to_string(line_no) + ": " + what;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MALFORMED_RECORD, at(e.what()));
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() ||
        !j.contains("code") || !j["code"].is_string())
      throw Error(ErrorCode::MALFORMED_RECORD,
                  at("record requires string fields 'id' and 'code'"));
    CodeSample s;
    s.id = j["id"].get<std::string>();
    s.source = j["code"].get<std::string>();
    s.origin = path + ":" + std::to_string(line_no);
    if (!j.contains("label"))
      throw Error(ErrorCode::MISSING_LABEL,
                  at("record '" + s.id + "' has no label"));
    if (!j["label"].is_string())
      throw Error(ErrorCode::MALFORMED_RECORD,
                  at("label must be a string"));
    auto label = label_from_string(j["label"].get<std::string>());
    if (!label)
      throw Error(ErrorCode::MALFORMED_RECORD,
                  at("unknown label '" + j["label"].get<std::string>() +
                     "' (expected vulnerable|fixed)"));
    s.label = *label;
    if (j.contains("cwe") && j["cwe"].is_string())
      s.cwe = normalize_cwe(j["cwe"].get<std::string>());
    if (!ids.insert(s.id).second)
      throw Error(ErrorCode::MALFORMED_RECORD,
                  at("duplicate sample id '" + s.id + "'"));
    (*label == SampleLabel::VULNERABLE ? vulnerable : fixed)++;
    corpus.push_back(std::move(s));
  }
  if (diagnostics) {
    if (corpus.empty()) {
      diagnostics->push_back(path + ": empty dataset");
    } else {
      diagnostics->push_back(path + ": loaded " +
                             std::to_string(corpus.size()) + " samples (" +
                             std::to_string(vulnerable) + " vulnerable, " +
                             std::to_string(fixed) + " fixed)");
    }
  }
  return corpus;
}

namespace {

std::vector<AnalysisReport> analyze_all(const Engine& engine,
                                        const std::vector<CodeSample>& corpus,
                                        int jobs) {
  std::vector<AnalysisReport> reports(corpus.size());
  if (corpus.empty()) return reports;
  const int workers =
      std::max(1, std::min<int>(jobs, static_cast<int>(corpus.size())));
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    for (size_t i = next.fetch_add(1); i < corpus.size();
         i = next.fetch_add(1)) {
      try {
        reports[i] = engine.analyze(corpus[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return reports;
}

}  // namespace

EvalReport evaluate(const std::vector<CodeSample>& corpus,
                    const RunConfig& config, const EvalDeps& deps) {
  for (const auto& s : corpus)
    if (!s.label)
      throw Error(ErrorCode::MISSING_LABEL,
                  "sample '" + s.id + "' has no label");

  EngineConfig engine_config;
  engine_config.mode = config.mode;
  engine_config.rag_enabled = config.rag_enabled;
  engine_config.enabled_agents = config.enabled_agents;
  engine_config.provider_inflight_limit = deps.provider_inflight_limit;
  Engine engine(engine_config, deps.signatures, deps.store, deps.provider);

  int jobs = deps.jobs > 0
                 ? deps.jobs
                 : static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  jobs = std::min(jobs, std::max(1, deps.provider_inflight_limit));

  // Deterministic aggregation order regardless of worker scheduling.
  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return corpus[a].id != corpus[b].id ? corpus[a].id < corpus[b].id
                                        : a < b;
  });

  EvalReport report;
  report.config = config;
  for (const auto& s : corpus)
    (*s.label == SampleLabel::VULNERABLE ? report.vulnerable_count
                                         : report.fixed_count)++;

  for (int seed : effective_seeds(config)) {
    std::vector<AnalysisReport> analyses = analyze_all(engine, corpus, jobs);
    RunMetrics run;
    run.seed = seed;
    ConfusionCounts counts;
    for (size_t idx : order) {
      const CodeSample& sample = corpus[idx];
      const AnalysisReport& a = analyses[idx];
      for (const auto& d : a.diagnostics)
        run.diagnostics.push_back("sample " + sample.id + ": " + d);
      if (!a.provider_failures.empty()) {
        ++run.excluded;
        std::string agents;
        for (AgentKind k : a.provider_failures) {
          if (!agents.empty()) agents += ",";
          agents += to_string(k);
        }
        run.diagnostics.push_back("sample " + sample.id +
                                  ": excluded from metrics (provider "
                                  "failure in: " +
                                  agents + ")");
      } else {
        const bool vulnerable = *sample.label == SampleLabel::VULNERABLE;
        if (a.decision.flagged) {
          (vulnerable ? counts.tp : counts.fp)++;
        } else {
          (vulnerable ? counts.fn : counts.tn)++;
        }
        if (a.decision.flagged) run.flagged_ids.push_back(sample.id);
      }
      run.total_cost_usd += a.total_cost_usd;
      run.total_latency_ms += a.total_latency_ms;
    }
    run.metrics = compute_metrics(counts);
    report.per_run.push_back(std::move(run));
  }

  std::vector<Metrics> per_run_metrics;
  for (const auto& r : report.per_run) per_run_metrics.push_back(r.metrics);
  report.aggregate = aggregate_runs(per_run_metrics);
  return report;
}

// --- serialization ----------------------------------------------------------

void to_json(json& j, const ConfusionCounts& c) {
  j = json{{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

void to_json(json& j, const Metrics& m) {
  j = json{{"counts", m.counts}};
  if (m.recall) j["recall"] = *m.recall;
  if (m.precision) j["precision"] = *m.precision;
  if (m.f1) j["f1"] = *m.f1;
  if (m.fpr) j["fpr"] = *m.fpr;
}

namespace {

json stat_json(const AggregateStat& s) {
  json j = json::object();
  if (s.mean) j["mean"] = *s.mean;
  if (s.std_dev) j["std"] = *s.std_dev;
  return j;
}

}  // namespace

void to_json(json& j, const MetricsAggregate& a) {
  j = json{{"recall", stat_json(a.recall)},
           {"precision", stat_json(a.precision)},
           {"f1", stat_json(a.f1)},
           {"fpr", stat_json(a.fpr)}};
}

void to_json(json& j, const RunConfig& c) {
  auto agents = json::array();
  for (AgentKind k : kAllAgents)
    if (c.enabled_agents.count(k)) agents.push_back(to_string(k));
  j = json{{"mode", to_string(c.mode)},
           {"rag_enabled", c.rag_enabled},
           {"enabled_agents", agents},
           {"runs", c.runs},
           {"seeds", c.seeds},
           {"provider", to_string(c.provider)}};
}

void to_json(json& j, const RunMetrics& r) {
  j = json{{"seed", r.seed},
           {"metrics", r.metrics},
           {"flagged_ids", r.flagged_ids},
           {"excluded", r.excluded},
           {"total_cost_usd", r.total_cost_usd},
           {"total_latency_ms", r.total_latency_ms},
           {"diagnostics", r.diagnostics}};
}

void to_json(json& j, const EvalReport& r) {
  j = json{{"preset", r.preset},
           {"config", r.config},
           {"per_run", r.per_run},
           {"aggregate", r.aggregate},
           {"vulnerable_count", r.vulnerable_count},
           {"fixed_count", r.fixed_count},
           {"diagnostics", r.diagnostics}};
}

// --- text rendering ---------------------------------------------------------

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "   --";
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.3f", *v);
  return buf;
}

std::string pm(const AggregateStat& s) {
  if (!s.mean) return "--";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f +/- %.3f", *s.mean,
                s.std_dev.value_or(0.0));
  return buf;
}

}  // namespace

std::string render_eval_text(const EvalReport& report) {
  std::ostringstream os;
  std::string agents;
  for (AgentKind k : kAllAgents)
    if (report.config.enabled_agents.count(k))
      agents += std::string(" ") + to_string(k);
  os << "preset: " << report.preset << " (mode "
     << to_string(report.config.mode) << ", rag "
     << (report.config.rag_enabled ? "on" : "off") << ", agents:" << agents
     << ")\n";
  os << "samples: " << report.vulnerable_count << " vulnerable, "
     << report.fixed_count << " fixed\n\n";
  os << "run  seed    tp  fp  tn  fn  recall  prec.   f1      fpr     "
        "excl  cost\n";
  int n = 0;
  for (const auto& r : report.per_run) {
    char line[160];
    std::snprintf(line, sizeof(line),
                  "%-4d %-6d %3d %3d %3d %3d  %-6s  %-6s  %-6s  %-6s  %-4zu "
                  "$%.4f\n",
                  ++n, r.seed, r.metrics.counts.tp, r.metrics.counts.fp,
                  r.metrics.counts.tn, r.metrics.counts.fn,
                  cell(r.metrics.recall).c_str(),
                  cell(r.metrics.precision).c_str(),
                  cell(r.metrics.f1).c_str(), cell(r.metrics.fpr).c_str(),
                  r.excluded, r.total_cost_usd);
    os << line;
  }
  os << "\nmean over " << report.per_run.size()
     << " run(s):  recall " << pm(report.aggregate.recall) << "  |  prec. "
     << pm(report.aggregate.precision) << "  |  f1 "
     << pm(report.aggregate.f1) << "  |  fpr " << pm(report.aggregate.fpr)
     << "\n";
  return os.str();
}

}  // namespace multiver
