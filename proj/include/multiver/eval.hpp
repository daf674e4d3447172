#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "multiver/engine.hpp"

namespace multiver {

enum class ProviderKind { MOCK, LIVE };

const char* to_string(ProviderKind p);
std::optional<ProviderKind> provider_kind_from_string(const std::string& s);

struct RunConfig {
  VoteMode mode = VoteMode::UNION;
  bool rag_enabled = true;
  std::set<AgentKind> enabled_agents = {AgentKind::SECURITY,
                                        AgentKind::CORRECTNESS,
                                        AgentKind::PERFORMANCE,
                                        AgentKind::STYLE};
  int runs = 3;
  std::vector<int> seeds = {42, 43, 44};
  ProviderKind provider = ProviderKind::MOCK;
};

// Ablation presets; preset_config throws INVALID_CONFIG for unknown names
// (the message lists the valid ones).
std::vector<std::string> preset_names();
RunConfig preset_config(const std::string& name);

// One seed per run: the configured list, padded by incrementing its last
// entry (base 42 when the list is empty).
std::vector<int> effective_seeds(const RunConfig& config);

struct ConfusionCounts {
  int tp = 0;
  int fp = 0;
  int tn = 0;
  int fn = 0;
};

// Derived rates stay absent (not zero) when their denominator is zero.
struct Metrics {
  ConfusionCounts counts;
  std::optional<double> recall;
  std::optional<double> precision;
  std::optional<double> f1;
  std::optional<double> fpr;
};

Metrics compute_metrics(const ConfusionCounts& counts);

// Harmonic mean; pre: precision + recall > 0.
double f1_from(double precision, double recall);

struct AggregateStat {
  std::optional<double> mean;
  std::optional<double> std_dev;  // population standard deviation
};

struct MetricsAggregate {
  AggregateStat recall;
  AggregateStat precision;
  AggregateStat f1;
  AggregateStat fpr;
};

// Mean/population-std per metric, runs missing a metric excluded pairwise;
// EMPTY_INPUT on an empty list.
MetricsAggregate aggregate_runs(const std::vector<Metrics>& per_run);

// Line-delimited records {id, code, label, cwe?}. MALFORMED_RECORD and
// MISSING_LABEL carry the offending line number; an empty file yields an
// empty corpus plus a warning diagnostic; label counts are reported.
std::vector<CodeSample> load_dataset(const std::string& path,
                                     std::vector<std::string>* diagnostics);

struct RunMetrics {
  int seed = 0;
  Metrics metrics;
  std::vector<std::string> flagged_ids;  // sample-id order
  size_t excluded = 0;                   // provider-failure exclusions
  double total_cost_usd = 0.0;
  std::int64_t total_latency_ms = 0;
  std::vector<std::string> diagnostics;
};

struct EvalReport {
  std::string preset = "custom";
  RunConfig config;
  std::vector<RunMetrics> per_run;
  MetricsAggregate aggregate;
  size_t vulnerable_count = 0;
  size_t fixed_count = 0;
  std::vector<std::string> diagnostics;
};

struct EvalDeps {
  const SignatureSet* signatures = nullptr;
  const KnowledgeStore* store = nullptr;
  CompletionProvider* provider = nullptr;
  int jobs = 0;  // <= 0: logical cores; always capped by the in-flight limit
  int provider_inflight_limit = kDefaultInflightLimit;
};

// Analyzes every sample once per seed under bounded concurrency,
// aggregating in sample-id order. Samples whose provider calls all failed
// are excluded from the confusion counts and surfaced in diagnostics.
EvalReport evaluate(const std::vector<CodeSample>& corpus,
                    const RunConfig& config, const EvalDeps& deps);

void to_json(json& j, const ConfusionCounts& c);
void to_json(json& j, const Metrics& m);
void to_json(json& j, const MetricsAggregate& a);
void to_json(json& j, const RunConfig& c);
void to_json(json& j, const RunMetrics& r);
void to_json(json& j, const EvalReport& r);

std::string render_eval_text(const EvalReport& report);

}  // namespace multiver
