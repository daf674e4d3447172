#include "multiver/knowledge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "multiver/errors.hpp"

namespace multiver {

std::uint64_t fnv1a64(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

Embedding embed_text(const std::string& text) {
  Embedding v(kEmbeddingDim, 0.0);
  bool any = false;
  size_t i = 0;
  while (i < text.size()) {
    if (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_') {
      size_t start = i;
      while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) ||
                                 text[i] == '_'))
        i += 1;
      std::string tok = text.substr(start, i - start);
      std::transform(tok.begin(), tok.end(), tok.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      v[fnv1a64(tok.data(), tok.size()) % kEmbeddingDim] += 1.0;
      any = true;
    } else {
      i += 1;
    }
  }
  if (!any)
    throw Error(ErrorCode::EMPTY_TEXT, "no embeddable tokens in input text");
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size() && i < b.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

void to_json(nlohmann::json& j, const KnowledgeRecord& r) {
  j = {{"type", "example"},   {"id", r.id},
       {"code", r.code},      {"label", to_string(r.label)},
       {"cwe", r.cwe},        {"description", r.description},
       {"fix", r.fix}};
}

void from_json(const nlohmann::json& j, KnowledgeRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.code = j.at("code").get<std::string>();
  auto label = label_from_string(j.at("label").get<std::string>());
  if (!label)
    throw Error(ErrorCode::MALFORMED_RECORD,
                "record '" + r.id + "': unknown label '" +
                    j["label"].get<std::string>() + "'");
  r.label = *label;
  r.cwe = j.value("cwe", "").empty() ? "" : normalize_cwe(j.value("cwe", ""));
  r.description = j.value("description", "");
  r.fix = j.value("fix", "");
}

void to_json(nlohmann::json& j, const SpecRecord& r) {
  j = {{"type", "spec"},
       {"id", r.id},
       {"cwe", r.cwe},
       {"cause", r.cause},
       {"fix_guidance", r.fix_guidance}};
}

void from_json(const nlohmann::json& j, SpecRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.cwe = normalize_cwe(j.value("cwe", ""));
  r.cause = j.at("cause").get<std::string>();
  r.fix_guidance = j.at("fix_guidance").get<std::string>();
}

void to_json(nlohmann::json& j, const RetrievalBundle& b) {
  nlohmann::json examples = nlohmann::json::array();
  for (const ScoredExample& e : b.examples) {
    nlohmann::json je = e.record;
    je["similarity"] = e.similarity;
    examples.push_back(std::move(je));
  }
  j = {{"examples", examples}, {"specs", b.specs}, {"query_id", b.query_id}};
}

namespace {

constexpr int kIndexFormatVersion = 1;

std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

nlohmann::json embedding_to_json(const Embedding& e) {
  nlohmann::json arr = nlohmann::json::array();
  for (double x : e) arr.push_back(x);
  return arr;
}

Embedding embedding_from_json(const nlohmann::json& arr) {
  Embedding e;
  e.reserve(arr.size());
  for (const auto& x : arr) e.push_back(x.get<double>());
  return e;
}

}  // namespace

std::vector<KnowledgeRecord> KnowledgeStore::example_records() const {
  std::vector<KnowledgeRecord> out;
  out.reserve(examples_.size());
  for (const EmbeddedExample& e : examples_) out.push_back(e.record);
  return out;
}

std::vector<SpecRecord> KnowledgeStore::spec_records() const {
  std::vector<SpecRecord> out;
  out.reserve(specs_.size());
  for (const EmbeddedSpec& s : specs_) out.push_back(s.record);
  return out;
}

KnowledgeStore KnowledgeStore::from_records(
    const std::vector<KnowledgeRecord>& examples,
    const std::vector<SpecRecord>& specs) {
  KnowledgeStore store;
  std::set<std::string> ids;
  for (const KnowledgeRecord& r : examples) {
    if (!ids.insert(r.id).second)
      throw Error(ErrorCode::DUPLICATE_ID, "duplicate record id '" + r.id + "'");
    store.examples_.push_back({r, embed_text(r.code)});
  }
  for (const SpecRecord& r : specs) {
    if (!ids.insert(r.id).second)
      throw Error(ErrorCode::DUPLICATE_ID, "duplicate record id '" + r.id + "'");
    store.specs_.push_back({r, embed_text(r.cause + " " + r.fix_guidance)});
  }
  store.info_.example_count = store.examples_.size();
  store.info_.spec_count = store.specs_.size();
  return store;
}

KnowledgeStore KnowledgeStore::ingest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::IO_FAILURE, "cannot open knowledge file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  const std::string digest = hash_hex(fnv1a64(bytes.data(), bytes.size()));

  namespace fs = std::filesystem;
  fs::path src(path);
  fs::path cache = src.parent_path() /
                   (src.filename().string() + "." + digest + ".index.json");

  auto try_load_cache = [&]() -> std::optional<KnowledgeStore> {
    std::ifstream cin(cache);
    if (!cin) return std::nullopt;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(cin);
      if (doc.value("format_version", 0) != kIndexFormatVersion) return std::nullopt;
      if (doc.value("source_hash", "") != digest) return std::nullopt;
      if (doc.value("dim", 0) != static_cast<int>(kEmbeddingDim)) return std::nullopt;
      KnowledgeStore store;
      for (const auto& je : doc.at("examples")) {
        EmbeddedExample e;
        e.record = je.get<KnowledgeRecord>();
        e.embedding = embedding_from_json(je.at("embedding"));
        if (e.embedding.size() != kEmbeddingDim) return std::nullopt;
        store.examples_.push_back(std::move(e));
      }
      for (const auto& js : doc.at("specs")) {
        EmbeddedSpec s;
        s.record = js.get<SpecRecord>();
        s.embedding = embedding_from_json(js.at("embedding"));
        if (s.embedding.size() != kEmbeddingDim) return std::nullopt;
        store.specs_.push_back(std::move(s));
      }
      return store;
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;  // corrupt cache: rebuild
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  if (auto cached = try_load_cache()) {
    cached->info_ = IngestInfo{cached->examples_.size(), cached->specs_.size(),
                               true, cache.string()};
    return std::move(*cached);
  }

  KnowledgeStore store;
  std::set<std::string> ids;
  std::istringstream lines(bytes);
  std::string line;
  int ln = 0;
  auto fail = [&](const std::string& why) -> Error {
    return Error(ErrorCode::MALFORMED_RECORD,
                 path + ":line " + std::to_string(ln) + ": " + why);
  };
  while (std::getline(lines, line)) {
    ln += 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw fail(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw fail("record is not an object");
    const std::string type = j.value("type", "");
    try {
      if (type == "example") {
        KnowledgeRecord r = j.get<KnowledgeRecord>();
        if (r.id.empty()) throw fail("empty id");
        if (r.code.find_first_not_of(" \t\r\n") == std::string::npos)
          throw fail("example '" + r.id + "' has empty code");
        if (!ids.insert(r.id).second)
          throw Error(ErrorCode::DUPLICATE_ID,
                      path + ":line " + std::to_string(ln) +
                          ": duplicate record id '" + r.id + "'");
        Embedding emb = embed_text(r.code);
        store.examples_.push_back({std::move(r), std::move(emb)});
      } else if (type == "spec") {
        SpecRecord r = j.get<SpecRecord>();
        if (r.id.empty()) throw fail("empty id");
        if (r.cause.empty() || r.fix_guidance.empty())
          throw fail("spec '" + r.id + "' needs cause and fix_guidance");
        if (!ids.insert(r.id).second)
          throw Error(ErrorCode::DUPLICATE_ID,
                      path + ":line " + std::to_string(ln) +
                          ": duplicate record id '" + r.id + "'");
        Embedding emb = embed_text(r.cause + " " + r.fix_guidance);
        store.specs_.push_back({std::move(r), std::move(emb)});
      } else {
        throw fail("unknown record type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw fail(std::string("missing or invalid field: ") + e.what());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DUPLICATE_ID) throw;
      std::string msg = e.what();
      if (msg.rfind(path + ":line ", 0) == 0) throw;  // already located
      throw fail(msg);
    }
  }
  store.info_ = IngestInfo{store.examples_.size(), store.specs_.size(), false,
                           cache.string()};

  nlohmann::json doc;
  doc["format_version"] = kIndexFormatVersion;
  doc["source_hash"] = digest;
  doc["dim"] = static_cast<int>(kEmbeddingDim);
  doc["embedding"] = "token-hash-v1";
  nlohmann::json jex = nlohmann::json::array();
  for (const EmbeddedExample& e : store.examples_) {
    nlohmann::json je = e.record;
    je["embedding"] = embedding_to_json(e.embedding);
    jex.push_back(std::move(je));
  }
  nlohmann::json jsp = nlohmann::json::array();
  for (const EmbeddedSpec& s : store.specs_) {
    nlohmann::json js = s.record;
    js["embedding"] = embedding_to_json(s.embedding);
    jsp.push_back(std::move(js));
  }
  doc["examples"] = std::move(jex);
  doc["specs"] = std::move(jsp);
  fs::path tmp = cache;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (out) out << doc.dump() << "\n";
  }
  std::error_code ec;
  fs::rename(tmp, cache, ec);
  if (ec) fs::remove(tmp, ec);  // cache is best-effort; ingest still succeeds

  return store;
}

RetrievalBundle KnowledgeStore::retrieve(const std::string& query_code, size_t k,
                                         const std::string& query_id) const {
  RetrievalBundle bundle;
  bundle.query_id = query_id;
  if (examples_.empty()) return bundle;
  const Embedding q = embed_text(query_code);

  std::vector<std::pair<double, const EmbeddedExample*>> scored;
  scored.reserve(examples_.size());
  for (const EmbeddedExample& e : examples_)
    scored.emplace_back(cosine_similarity(q, e.embedding), &e);
  auto rank = [](const std::pair<double, const EmbeddedExample*>& a,
                 const std::pair<double, const EmbeddedExample*>& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->record.id < b.second->record.id;
  };
  size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + take, scored.end(), rank);
  for (size_t i = 0; i < take; ++i)
    bundle.examples.push_back({scored[i].second->record, scored[i].first});

  // Specs: CWEs of retrieved examples in rank order, then similarity padding.
  std::set<std::string> chosen;
  for (const ScoredExample& ex : bundle.examples) {
    if (bundle.specs.size() >= kSpecsPerQuery) break;
    if (ex.record.cwe.empty()) continue;
    std::vector<const EmbeddedSpec*> matching;
    for (const EmbeddedSpec& s : specs_)
      if (s.record.cwe == ex.record.cwe && !chosen.count(s.record.id))
        matching.push_back(&s);
    std::sort(matching.begin(), matching.end(),
              [](const EmbeddedSpec* a, const EmbeddedSpec* b) {
                return a->record.id < b->record.id;
              });
    for (const EmbeddedSpec* s : matching) {
      if (bundle.specs.size() >= kSpecsPerQuery) break;
      bundle.specs.push_back(s->record);
      chosen.insert(s->record.id);
    }
  }
  if (bundle.specs.size() < kSpecsPerQuery) {
    std::vector<std::pair<double, const EmbeddedSpec*>> rest;
    for (const EmbeddedSpec& s : specs_)
      if (!chosen.count(s.record.id))
        rest.emplace_back(cosine_similarity(q, s.embedding), &s);
    std::sort(rest.begin(), rest.end(),
              [](const std::pair<double, const EmbeddedSpec*>& a,
                 const std::pair<double, const EmbeddedSpec*>& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second->record.id < b.second->record.id;
              });
    for (auto& [sim, s] : rest) {
      if (bundle.specs.size() >= kSpecsPerQuery) break;
      bundle.specs.push_back(s->record);
    }
  }
  return bundle;
}

}  // namespace multiver
