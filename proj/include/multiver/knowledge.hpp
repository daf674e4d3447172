#pragma once

// Retrieval backend for the RAG tier: labeled example records plus short
// vulnerability-cause specifications, embedded with a deterministic
// feature-hashing scheme (384 buckets, L2-normalized token counts) and
// searched by exact cosine scan. Ingest caches the embedded index beside the
// source file keyed by content hash; a rebuilt index is byte-identical.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "multiver/core.hpp"

namespace multiver {

constexpr size_t kEmbeddingDim = 384;

using Embedding = std::vector<double>;

// Throws EMPTY_TEXT when the text has no alphanumeric tokens. Result has
// unit L2 norm.
Embedding embed_text(const std::string& text);
double cosine_similarity(const Embedding& a, const Embedding& b);

std::uint64_t fnv1a64(const void* data, size_t len);

struct KnowledgeRecord {
  std::string id;
  std::string code;
  SampleLabel label = SampleLabel::VULNERABLE;
  std::string cwe;
  std::string description;
  std::string fix;
};

struct SpecRecord {
  std::string id;
  std::string cwe;
  std::string cause;
  std::string fix_guidance;
};

void to_json(nlohmann::json& j, const KnowledgeRecord& r);
void from_json(const nlohmann::json& j, KnowledgeRecord& r);
void to_json(nlohmann::json& j, const SpecRecord& r);
void from_json(const nlohmann::json& j, SpecRecord& r);

struct ScoredExample {
  KnowledgeRecord record;
  double similarity = 0.0;
};

struct RetrievalBundle {
  std::vector<ScoredExample> examples;  // at most k, similarity descending
  std::vector<SpecRecord> specs;        // at most kSpecsPerQuery
  std::string query_id;
};

constexpr size_t kDefaultRetrievalK = 5;
constexpr size_t kSpecsPerQuery = 3;

void to_json(nlohmann::json& j, const RetrievalBundle& b);

class KnowledgeStore {
 public:
  struct IngestInfo {
    size_t example_count = 0;
    size_t spec_count = 0;
    bool cache_hit = false;
    std::string cache_path;
  };

  // Reads a JSONL file of example/spec records. Throws Error with
  // MALFORMED_RECORD ("path:line N: ..."), DUPLICATE_ID, or IO_FAILURE.
  static KnowledgeStore ingest(const std::string& path);

  // Empty examples → empty bundle. Ties broken by record id ascending.
  RetrievalBundle retrieve(const std::string& query_code,
                           size_t k = kDefaultRetrievalK,
                           const std::string& query_id = "") const;

  size_t example_count() const { return examples_.size(); }
  size_t spec_count() const { return specs_.size(); }
  const IngestInfo& info() const { return info_; }
  std::vector<KnowledgeRecord> example_records() const;
  std::vector<SpecRecord> spec_records() const;

  // In-memory construction for tests.
  static KnowledgeStore from_records(const std::vector<KnowledgeRecord>& examples,
                                     const std::vector<SpecRecord>& specs);

 private:
  struct EmbeddedExample {
    KnowledgeRecord record;
    Embedding embedding;
  };
  struct EmbeddedSpec {
    SpecRecord record;
    Embedding embedding;
  };
  std::vector<EmbeddedExample> examples_;
  std::vector<EmbeddedSpec> specs_;
  IngestInfo info_;
};

}  // namespace multiver
