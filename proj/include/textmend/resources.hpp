#pragma once

// Pluggable resource tables backing the table-driven perturbations:
// confusion sets, radical splits, pinyin, unicode lookalikes, synonyms,
// embedding vectors, and checklist entities. Tables are immutable after
// load and shared read-only. File format is UTF-8 TSV, one key per line,
// candidates (or vector components) in the remaining columns; a manifest
// maps table kind to path.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace textmend {

enum class ResourceKind {
  Visual,
  Phonetic,
  RadicalSplit,
  PerfectPinyin,
  UnicodeLookalike,
  Synonym,
  EmbeddingVectors,
  ChecklistEntities,
};

inline std::string_view to_string(ResourceKind kind) {
  switch (kind) {
    case ResourceKind::Visual: return "visual";
    case ResourceKind::Phonetic: return "phonetic";
    case ResourceKind::RadicalSplit: return "radical-split";
    case ResourceKind::PerfectPinyin: return "perfect-pinyin";
    case ResourceKind::UnicodeLookalike: return "unicode-lookalike";
    case ResourceKind::Synonym: return "synonym";
    case ResourceKind::EmbeddingVectors: return "embedding-vectors";
    case ResourceKind::ChecklistEntities: return "checklist-entities";
  }
  return "?";
}

inline ResourceKind resource_kind_from(std::string_view name) {
  static const std::pair<std::string_view, ResourceKind> table[] = {
      {"visual", ResourceKind::Visual},
      {"phonetic", ResourceKind::Phonetic},
      {"radical-split", ResourceKind::RadicalSplit},
      {"perfect-pinyin", ResourceKind::PerfectPinyin},
      {"unicode-lookalike", ResourceKind::UnicodeLookalike},
      {"synonym", ResourceKind::Synonym},
      {"embedding-vectors", ResourceKind::EmbeddingVectors},
      {"checklist-entities", ResourceKind::ChecklistEntities},
  };
  for (const auto& [n, k] : table)
    if (n == name) return k;
  throw std::invalid_argument("unknown resource kind: " + std::string(name));
}

class ResourceTable {
 public:
  ResourceKind kind = ResourceKind::Visual;
  std::string source_path;

  // Candidate lists in file order; keys in file order for deterministic
  // iteration.
  std::unordered_map<std::string, std::vector<std::string>> candidates;
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::vector<std::string> keys;
  std::size_t vector_dim = 0;

  bool has(const std::string& key) const {
    return candidates.count(key) != 0 || vectors.count(key) != 0;
  }

  static ResourceTable load(ResourceKind kind, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("resource table not readable: " + path);
    ResourceTable t;
    t.kind = kind;
    t.source_path = path;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::vector<std::string> cols;
      std::size_t start = 0;
      for (;;) {
        const std::size_t tab = line.find('\t', start);
        cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
      }
      if (cols.size() < 2)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": key without candidates");
      const std::string& key = cols[0];
      if (t.has(key))
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": duplicate key " + key);
      if (kind == ResourceKind::EmbeddingVectors) {
        std::vector<double> vec;
        for (std::size_t i = 1; i < cols.size(); ++i) {
          try {
            vec.push_back(std::stod(cols[i]));
          } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad float " + cols[i]);
          }
        }
        if (t.vector_dim == 0) t.vector_dim = vec.size();
        if (vec.size() != t.vector_dim)
          throw std::runtime_error(path + ":" + std::to_string(lineno) + ": vector dimension " +
                                   std::to_string(vec.size()) + " != " + std::to_string(t.vector_dim));
        t.vectors.emplace(key, std::move(vec));
      } else {
        std::vector<std::string> cands(cols.begin() + 1, cols.end());
        t.candidates.emplace(key, std::move(cands));
      }
      t.keys.push_back(key);
    }
    return t;
  }

  static ResourceTable from_map(ResourceKind kind,
                                const std::vector<std::pair<std::string, std::vector<std::string>>>& rows) {
    ResourceTable t;
    t.kind = kind;
    for (const auto& [key, cands] : rows) {
      if (cands.empty()) throw std::invalid_argument("resource table: empty candidate list for " + key);
      t.candidates.emplace(key, cands);
      t.keys.push_back(key);
    }
    return t;
  }

  static ResourceTable from_vectors(const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
    ResourceTable t;
    t.kind = ResourceKind::EmbeddingVectors;
    for (const auto& [key, vec] : rows) {
      if (t.vector_dim == 0) t.vector_dim = vec.size();
      if (vec.size() != t.vector_dim)
        throw std::invalid_argument("resource table: inconsistent vector dimension for " + key);
      t.vectors.emplace(key, vec);
      t.keys.push_back(key);
    }
    return t;
  }
};

inline double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v) {
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu < 1e-24 || nv < 1e-24) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

class ResourceSet {
 public:
  void put(ResourceTable table) { tables_[table.kind] = std::move(table); }

  bool has(ResourceKind kind) const { return tables_.count(kind) != 0; }

  const ResourceTable& get(ResourceKind kind) const {
    auto it = tables_.find(kind);
    if (it == tables_.end())
      throw std::runtime_error("resource table not loaded: " + std::string(to_string(kind)));
    return it->second;
  }

  // Character pool for the insert perturbation: union of substitution-table
  // keys, deduplicated, in deterministic sorted order.
  std::vector<std::string> insert_charset() const {
    std::vector<std::string> pool;
    for (ResourceKind k : {ResourceKind::Visual, ResourceKind::Phonetic, ResourceKind::UnicodeLookalike}) {
      auto it = tables_.find(k);
      if (it == tables_.end()) continue;
      pool.insert(pool.end(), it->second.keys.begin(), it->second.keys.end());
    }
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    return pool;
  }

  // Manifest: lines of "<kind>\t<path>", paths relative to the manifest.
  static ResourceSet load_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw std::runtime_error("manifest not readable: " + manifest_path);
    const std::size_t slash = manifest_path.find_last_of('/');
    const std::string dir = slash == std::string::npos ? "" : manifest_path.substr(0, slash + 1);
    ResourceSet set;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const std::size_t tab = line.find('\t');
      if (tab == std::string::npos)
        throw std::runtime_error(manifest_path + ":" + std::to_string(lineno) + ": expected kind<TAB>path");
      const ResourceKind kind = resource_kind_from(line.substr(0, tab));
      std::string path = line.substr(tab + 1);
      if (!path.empty() && path[0] != '/') path = dir + path;
      set.put(ResourceTable::load(kind, path));
    }
    return set;
  }

 private:
  std::map<ResourceKind, ResourceTable> tables_;
};

}  // namespace textmend
