#pragma once

// Adversarial example construction: a normal perturbation budget clamped to
// [1, e], uniform position sampling, per-kind perturbation recipes over
// resource tables, and deterministic corpus building with replayable edit
// scripts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "textmend/resources.hpp"
#include "textmend/rng.hpp"
#include "textmend/text.hpp"

namespace textmend {

struct NoCandidateError : std::runtime_error {
  explicit NoCandidateError(const std::string& what) : std::runtime_error(what) {}
};

struct PerturbConfig {
  std::vector<std::pair<PerturbKind, double>> kinds;  // enabled kinds with weights
  double mask_rate = 0.15;
  double embedding_floor = 0.8;
  std::uint64_t seed = 0;
  std::size_t max_kind_retries = 4;  // alternative kinds tried after a NoCandidate
  double test_fraction = 0.0;

  void validate() const {
    if (kinds.empty()) throw std::invalid_argument("PerturbConfig: no kinds enabled");
    double total = 0.0;
    for (const auto& [kind, w] : kinds) {
      if (w < 0.0) throw std::invalid_argument("PerturbConfig: negative weight for " +
                                               std::string(to_string(kind)));
      total += w;
    }
    if (total <= 0.0) throw std::invalid_argument("PerturbConfig: weights sum to zero");
  }
};

// delta = min(max(trunc(eps), 1), e), eps ~ N(max(1, rate*e), 1).
// At least one unit is always attacked.
inline std::size_t sample_budget(std::size_t e, Rng& rng, double mask_rate = 0.15) {
  if (e == 0) throw std::invalid_argument("sample_budget: empty sentence");
  const double mean = std::max(1.0, mask_rate * static_cast<double>(e));
  const double eps = rng.normal(mean, 1.0);
  const long long truncated = static_cast<long long>(eps);  // toward zero
  const long long clamped = std::min<long long>(std::max<long long>(truncated, 1),
                                                static_cast<long long>(e));
  return static_cast<std::size_t>(clamped);
}

inline std::vector<std::size_t> choose_positions(const Sentence& sentence, std::size_t delta,
                                                 Rng& rng) {
  if (delta > sentence.unit_count())
    throw std::invalid_argument("choose_positions: delta " + std::to_string(delta) + " > e " +
                                std::to_string(sentence.unit_count()));
  return rng.sample_without_replacement(sentence.unit_count(), delta);
}

namespace detail {

inline ResourceKind table_for(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::Visual: return ResourceKind::Visual;
    case PerturbKind::Phonetic: return ResourceKind::Phonetic;
    case PerturbKind::Split: return ResourceKind::RadicalSplit;
    case PerturbKind::PerfectPinyin:
    case PerturbKind::AbbrevPinyin: return ResourceKind::PerfectPinyin;
    case PerturbKind::Unicode: return ResourceKind::UnicodeLookalike;
    case PerturbKind::Wordnet:
    case PerturbKind::Eda: return ResourceKind::Synonym;
    case PerturbKind::Embedding: return ResourceKind::EmbeddingVectors;
    case PerturbKind::Checklist: return ResourceKind::ChecklistEntities;
    default:
      throw std::logic_error("no table for kind " + std::string(to_string(kind)));
  }
}

inline const std::vector<std::string>* lookup_candidates(const ResourceSet& resources,
                                                         PerturbKind kind,
                                                         const std::string& unit) {
  const ResourceKind rk = table_for(kind);
  if (!resources.has(rk)) return nullptr;
  const auto& table = resources.get(rk).candidates;
  auto it = table.find(unit);
  return it == table.end() ? nullptr : &it->second;
}

// Uniform pick among candidates differing from the original span.
inline std::string pick_non_identity(const std::vector<std::string>& candidates,
                                     const std::string& original, Rng& rng, PerturbKind kind) {
  std::vector<const std::string*> viable;
  for (const auto& c : candidates)
    if (c != original) viable.push_back(&c);
  if (viable.empty())
    throw NoCandidateError("no non-identity candidate for '" + original + "' under " +
                           std::string(to_string(kind)));
  return *viable[rng.below(viable.size())];
}

inline std::string random_ascii_letter(Rng& rng) {
  return std::string(1, static_cast<char>('a' + rng.below(26)));
}

// One character-level edit inside a word: substitute, delete, insert, or
// swap adjacent characters. Resamples identities a bounded number of times.
inline std::string charswap_once(const std::string& unit, Rng& rng) {
  const auto cps = utf8::decode_all(unit);
  for (int attempt = 0; attempt < 8; ++attempt) {
    std::vector<char32_t> out = cps;
    switch (rng.below(4)) {
      case 0: {  // substitute
        if (out.empty()) continue;
        const std::size_t i = rng.below(out.size());
        out[i] = static_cast<char32_t>('a' + rng.below(26));
        break;
      }
      case 1: {  // delete
        if (out.size() < 2) continue;
        out.erase(out.begin() + static_cast<std::ptrdiff_t>(rng.below(out.size())));
        break;
      }
      case 2: {  // insert
        const std::size_t i = rng.below(out.size() + 1);
        out.insert(out.begin() + static_cast<std::ptrdiff_t>(i),
                   static_cast<char32_t>('a' + rng.below(26)));
        break;
      }
      default: {  // swap adjacent
        if (out.size() < 2) continue;
        const std::size_t i = rng.below(out.size() - 1);
        std::swap(out[i], out[i + 1]);
        break;
      }
    }
    std::string s = utf8::encode(out);
    if (s != unit && !s.empty()) return s;
  }
  throw NoCandidateError("charswap: no non-identity edit for '" + unit + "'");
}

inline std::string first_letter(const std::string& pinyin) {
  std::size_t pos = 0;
  std::string_view sv(pinyin);
  std::string out;
  if (sv.empty()) return out;
  const std::size_t start = pos;
  utf8::decode(sv, pos);
  out.assign(sv.substr(start, pos - start));
  return out;
}

}  // namespace detail

// Applies one perturbation of `kind` to `units[position]` and returns the
// replayable record. Throws NoCandidateError when the required table has no
// usable entry; the caller falls back to another kind or position.
inline PerturbOp apply_kind_units(PerturbKind kind, const std::vector<std::string>& units,
                                  std::size_t position, const ResourceSet& resources, Rng& rng,
                                  const PerturbConfig& config) {
  if (position >= units.size())
    throw std::out_of_range("apply_kind: position " + std::to_string(position));
  const std::string& unit = units[position];

  switch (kind) {
    case PerturbKind::Visual:
    case PerturbKind::Phonetic:
    case PerturbKind::Split:
    case PerturbKind::Unicode:
    case PerturbKind::Wordnet:
    case PerturbKind::Checklist:
    case PerturbKind::PerfectPinyin: {
      const auto* cands = detail::lookup_candidates(resources, kind, unit);
      if (!cands)
        throw NoCandidateError("'" + unit + "' not in " +
                               std::string(to_string(detail::table_for(kind))) + " table");
      return {kind, position, unit, detail::pick_non_identity(*cands, unit, rng, kind)};
    }

    case PerturbKind::AbbrevPinyin: {
      const auto* cands = detail::lookup_candidates(resources, kind, unit);
      if (!cands) throw NoCandidateError("'" + unit + "' not in perfect-pinyin table");
      const std::string full = detail::pick_non_identity(*cands, unit, rng, kind);
      const std::string abbrev = detail::first_letter(full);
      if (abbrev.empty() || abbrev == unit)
        throw NoCandidateError("abbreviation of '" + full + "' unusable");
      return {kind, position, unit, abbrev};
    }

    case PerturbKind::Embedding: {
      if (!resources.has(ResourceKind::EmbeddingVectors))
        throw NoCandidateError("embedding-vectors table not loaded");
      const ResourceTable& table = resources.get(ResourceKind::EmbeddingVectors);
      auto it = table.vectors.find(unit);
      if (it == table.vectors.end())
        throw NoCandidateError("'" + unit + "' has no embedding vector");
      std::vector<const std::string*> neighbors;
      for (const auto& key : table.keys) {
        if (key == unit) continue;
        if (cosine_similarity(it->second, table.vectors.at(key)) >= config.embedding_floor)
          neighbors.push_back(&key);
      }
      if (neighbors.empty())
        throw NoCandidateError("no embedding neighbor of '" + unit + "' with cosine >= " +
                               std::to_string(config.embedding_floor));
      return {kind, position, unit, *neighbors[rng.below(neighbors.size())]};
    }

    case PerturbKind::Insert: {
      std::vector<std::string> pool = resources.insert_charset();
      if (pool.empty()) {
        pool = units;
        std::sort(pool.begin(), pool.end());
        pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
      }
      if (pool.empty()) throw NoCandidateError("insert: empty character pool");
      const std::string& picked = pool[rng.below(pool.size())];
      const bool left = rng.below(2) == 0;
      return {kind, left ? position : position + 1, "", picked};
    }

    case PerturbKind::Swap: {
      std::size_t i = position;
      if (i + 1 >= units.size()) {
        if (i == 0) throw NoCandidateError("swap: no neighbor");
        i -= 1;  // last unit swaps with its left neighbor
      }
      if (units[i] == units[i + 1]) throw NoCandidateError("swap: identical neighbors");
      return {kind, i, units[i] + units[i + 1], units[i + 1] + units[i]};
    }

    case PerturbKind::Delete:
      return {kind, position, unit, ""};

    case PerturbKind::Charswap:
      return {kind, position, unit, detail::charswap_once(unit, rng)};

    case PerturbKind::Eda: {
      const auto* own = detail::lookup_candidates(resources, PerturbKind::Eda, unit);
      switch (rng.below(3)) {
        case 0: {  // substitute with a synonym
          if (!own) throw NoCandidateError("eda: '" + unit + "' has no synonyms");
          return {kind, position, unit, detail::pick_non_identity(*own, unit, rng, kind)};
        }
        case 1: {  // insert a synonym adjacent to a word that has one
          std::size_t anchor = position;
          const std::vector<std::string>* cands = own;
          if (!cands) {
            std::vector<std::size_t> anchors;
            for (std::size_t j = 0; j < units.size(); ++j)
              if (detail::lookup_candidates(resources, PerturbKind::Eda, units[j])) anchors.push_back(j);
            if (anchors.empty()) throw NoCandidateError("eda: no word with synonyms to insert");
            anchor = anchors[rng.below(anchors.size())];
            cands = detail::lookup_candidates(resources, PerturbKind::Eda, units[anchor]);
          }
          const std::string syn = detail::pick_non_identity(*cands, units[anchor], rng, kind);
          const bool left = rng.below(2) == 0;
          return {kind, left ? anchor : anchor + 1, "", syn};
        }
        default:  // delete the word
          return {kind, position, unit, ""};
      }
    }
  }
  throw std::logic_error("apply_kind: unhandled kind");
}

inline PerturbOp apply_kind(PerturbKind kind, const Sentence& sentence, std::size_t position,
                            const ResourceSet& resources, Rng& rng, const PerturbConfig& config) {
  return apply_kind_units(kind, sentence.units(), position, resources, rng, config);
}

// Deterministic replay of an edit script. The mechanical action is derived
// from the record: Swap exchanges pos/pos+1, empty orig inserts, empty repl
// deletes, anything else substitutes the unit at pos.
inline Sentence apply_ops(const Sentence& clean, const EditScript& script) {
  if (script.empty()) return clean;
  std::vector<std::string> units = clean.units();
  for (std::size_t k = 0; k < script.size(); ++k) {
    const PerturbOp& op = script[k];
    const auto fail = [&](const char* why) {
      throw std::out_of_range("apply_ops: op " + std::to_string(k) + " (" +
                              std::string(to_string(op.kind)) + " @ " + std::to_string(op.pos) +
                              "): " + why);
    };
    if (op.kind == PerturbKind::Swap) {
      if (op.pos + 1 >= units.size()) fail("swap needs two units");
      std::swap(units[op.pos], units[op.pos + 1]);
    } else if (op.orig.empty()) {
      if (op.pos > units.size()) fail("insert position out of range");
      units.insert(units.begin() + static_cast<std::ptrdiff_t>(op.pos), op.repl);
    } else if (op.repl.empty()) {
      if (op.pos >= units.size()) fail("delete position out of range");
      units.erase(units.begin() + static_cast<std::ptrdiff_t>(op.pos));
    } else {
      if (op.pos >= units.size()) fail("position out of range");
      units[op.pos] = op.repl;
    }
  }
  return Sentence::from_units(units, clean.mode());
}

namespace detail {

// Weighted order without replacement: the kind list a position will try,
// most-preferred first.
inline std::vector<PerturbKind> kind_order(const PerturbConfig& config, Rng& rng) {
  std::vector<std::pair<PerturbKind, double>> remaining = config.kinds;
  std::vector<PerturbKind> order;
  while (!remaining.empty()) {
    double total = 0.0;
    for (const auto& [k, w] : remaining) total += w;
    if (total <= 0.0) break;
    double draw = rng.next_double() * total;
    std::size_t chosen = remaining.size() - 1;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      draw -= remaining[i].second;
      if (draw < 0.0) {
        chosen = i;
        break;
      }
    }
    order.push_back(remaining[chosen].first);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(chosen));
  }
  return order;
}

}  // namespace detail

struct PerturbResult {
  Sentence perturbed;
  EditScript script;
  bool identity = false;  // every position exhausted all kinds
};

// Budget, positions, weighted kinds with bounded NoCandidate fallback.
// Identity outcomes are flagged, never dropped.
inline PerturbResult perturb_sentence(const Sentence& clean, const PerturbConfig& config,
                                      const ResourceSet& resources, Rng& rng) {
  config.validate();
  const std::size_t e = clean.unit_count();
  if (e == 0) throw std::invalid_argument("perturb_sentence: empty sentence");

  const std::size_t delta = sample_budget(e, rng, config.mask_rate);
  std::vector<std::size_t> positions = choose_positions(clean, delta, rng);
  std::sort(positions.begin(), positions.end());

  std::vector<std::string> units = clean.units();
  // where[i] = current index of clean unit i (npos once deleted); ops may
  // change lengths anywhere, so each chosen position is re-resolved exactly.
  constexpr std::size_t gone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> where(e);
  for (std::size_t i = 0; i < e; ++i) where[i] = i;
  const auto shift_insert = [&](std::size_t at) {
    for (auto& w : where)
      if (w != gone && w >= at) ++w;
  };
  const auto shift_delete = [&](std::size_t at) {
    for (auto& w : where) {
      if (w == gone) continue;
      if (w == at)
        w = gone;
      else if (w > at)
        --w;
    }
  };
  const auto apply_swap = [&](std::size_t at) {
    for (auto& w : where) {
      if (w == at)
        w = at + 1;
      else if (w == at + 1)
        w = at;
    }
  };

  EditScript script;
  for (const std::size_t pos : positions) {
    const std::size_t current = where[pos];
    if (current == gone || current >= units.size()) continue;
    const std::vector<PerturbKind> order = detail::kind_order(config, rng);
    const std::size_t tries = std::min(order.size(), config.max_kind_retries + 1);
    for (std::size_t t = 0; t < tries; ++t) {
      try {
        PerturbOp op = apply_kind_units(order[t], units, current, resources, rng, config);
        if (op.kind == PerturbKind::Swap) {
          std::swap(units[op.pos], units[op.pos + 1]);
          apply_swap(op.pos);
        } else if (op.orig.empty()) {
          units.insert(units.begin() + static_cast<std::ptrdiff_t>(op.pos), op.repl);
          shift_insert(op.pos);
        } else if (op.repl.empty()) {
          units.erase(units.begin() + static_cast<std::ptrdiff_t>(op.pos));
          shift_delete(op.pos);
        } else {
          units[op.pos] = op.repl;
        }
        script.push_back(std::move(op));
        break;
      } catch (const NoCandidateError&) {
        continue;
      }
    }
  }

  PerturbResult result;
  if (script.empty()) {
    result.perturbed = clean;
    result.identity = true;
  } else {
    result.perturbed = Sentence::from_units(units, clean.mode());
    result.script = std::move(script);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Corpus building

struct CorpusStats {
  std::size_t lines_read = 0;
  std::size_t pairs_emitted = 0;
  std::size_t skipped_malformed = 0;
  std::size_t skipped_empty = 0;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::size_t pos_pairs = 0;  // perturbed
  std::size_t neg_pairs = 0;  // identity-flagged
  std::map<std::string, std::size_t> ops_by_kind;
};

struct BuiltPair {
  ParallelPair pair;
  bool is_test = false;
};

namespace detail {

inline bool line_is_test(std::uint64_t seed, std::size_t line_index, double fraction) {
  if (fraction <= 0.0) return false;
  const std::uint64_t h = fnv1a64(static_cast<std::uint64_t>(line_index),
                                  fnv1a64("split", fnv1a64(seed)));
  return static_cast<double>(h % 1000000ull) < fraction * 1000000.0;
}

}  // namespace detail

// Builds one pair per input line. Randomness depends only on
// (config.seed, line index), so any thread count yields identical output in
// input order. Malformed or empty lines are counted and skipped.
inline std::vector<BuiltPair> build_parallel_corpus(const std::vector<std::string>& lines,
                                                    const PerturbConfig& config,
                                                    const ResourceSet& resources, SegmentMode mode,
                                                    CorpusStats& stats, std::size_t threads = 1) {
  config.validate();
  stats = CorpusStats{};
  stats.lines_read = lines.size();

  struct Slot {
    std::optional<BuiltPair> pair;
    bool malformed = false;
    bool empty = false;
  };
  std::vector<Slot> slots(lines.size());

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Slot& slot = slots[i];
      try {
        const Sentence clean = segment(lines[i], mode);
        if (clean.empty()) {
          slot.empty = true;
          continue;
        }
        Rng rng = substream(config.seed, "perturb", i);
        PerturbResult r = perturb_sentence(clean, config, resources, rng);
        BuiltPair bp;
        bp.pair.source = std::move(r.perturbed);
        bp.pair.target = clean;
        bp.pair.ops = std::move(r.script);
        if (r.identity) bp.pair.flags.push_back("identity");
        bp.is_test = detail::line_is_test(config.seed, i, config.test_fraction);
        slot.pair = std::move(bp);
      } catch (const BadUtf8&) {
        slot.malformed = true;
      }
    }
  };

  if (threads <= 1 || lines.size() < 2) {
    work(0, lines.size());
  } else {
    const std::size_t n = std::min(threads, lines.size());
    std::vector<std::thread> pool;
    const std::size_t chunk = (lines.size() + n - 1) / n;
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(lines.size(), begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  std::vector<BuiltPair> out;
  out.reserve(lines.size());
  for (auto& slot : slots) {
    if (slot.malformed) {
      ++stats.skipped_malformed;
      continue;
    }
    if (slot.empty) {
      ++stats.skipped_empty;
      continue;
    }
    if (!slot.pair) continue;
    BuiltPair& bp = *slot.pair;
    ++stats.pairs_emitted;
    if (bp.is_test)
      ++stats.test_count;
    else
      ++stats.train_count;
    if (bp.pair.has_flag("identity"))
      ++stats.neg_pairs;
    else
      ++stats.pos_pairs;
    if (bp.pair.ops)
      for (const auto& op : *bp.pair.ops) ++stats.ops_by_kind[std::string(to_string(op.kind))];
    out.push_back(std::move(bp));
  }
  return out;
}

}  // namespace textmend
