#pragma once

// Synthetic correction task for training tests and the end-to-end
// experiment: clean sentences come from a sparse first-order Markov chain
// over lowercase letters (so an undertrained language model has real
// co-occurrence pressure to overcorrect rare transitions), and corruption
// replaces letters with a bijective out-of-alphabet symbol via the visual
// confusion table.

#include <cstdint>
#include <string>
#include <vector>

#include "textmend/perturb.hpp"
#include "textmend/resources.hpp"
#include "textmend/rng.hpp"
#include "textmend/text.hpp"

namespace toytask {

inline const std::string kSymbols = "0123456789!@#$%^&*()_+-=[]{};<";  // 26 + extras unused

inline textmend::ResourceSet resources() {
  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  for (int i = 0; i < 26; ++i) {
    rows.push_back({std::string(1, static_cast<char>('a' + i)),
                    {std::string(1, kSymbols[static_cast<std::size_t>(i)])}});
  }
  textmend::ResourceSet set;
  set.put(textmend::ResourceTable::from_map(textmend::ResourceKind::Visual, rows));
  return set;
}

inline textmend::PerturbConfig perturb_config(std::uint64_t seed) {
  textmend::PerturbConfig cfg;
  cfg.kinds = {{textmend::PerturbKind::Visual, 1.0}};
  cfg.seed = seed;
  return cfg;
}

// 70% of the transition mass on 4 preferred successors, 30% uniform.
inline char next_letter(char current, textmend::Rng& rng) {
  if (rng.next_double() < 0.7) {
    const int base = current - 'a';
    const int k = static_cast<int>(rng.below(4));
    return static_cast<char>('a' + (base * 7 + 3 + k * 5) % 26);
  }
  return static_cast<char>('a' + rng.below(26));
}

inline std::string sentence(textmend::Rng& rng, std::size_t min_len = 3, std::size_t max_len = 12) {
  const std::size_t len = min_len + rng.below(max_len - min_len + 1);
  std::string s(1, static_cast<char>('a' + rng.below(26)));
  while (s.size() < len) s.push_back(next_letter(s.back(), rng));
  return s;
}

inline std::vector<std::string> clean_lines(std::size_t count, std::uint64_t seed,
                                            std::string_view stream = "toy-clean") {
  textmend::Rng rng = textmend::substream(seed, stream);
  std::vector<std::string> lines;
  lines.reserve(count);
  for (std::size_t i = 0; i < count; ++i) lines.push_back(sentence(rng));
  return lines;
}

inline std::vector<textmend::ParallelPair> corpus(std::size_t count, std::uint64_t seed,
                                                  std::string_view stream = "toy-clean") {
  const std::vector<std::string> lines = clean_lines(count, seed, stream);
  textmend::CorpusStats stats;
  textmend::PerturbConfig cfg = perturb_config(seed);
  const auto built = textmend::build_parallel_corpus(lines, cfg, resources(),
                                                     textmend::SegmentMode::CjkChar, stats);
  std::vector<textmend::ParallelPair> out;
  out.reserve(built.size());
  for (const auto& bp : built) out.push_back(bp.pair);
  return out;
}

inline textmend::Vocabulary vocabulary() {
  textmend::Vocabulary v;
  for (int i = 0; i < 26; ++i) v.add(std::string(1, static_cast<char>('a' + i)));
  for (int i = 0; i < 26; ++i) v.add(std::string(1, kSymbols[static_cast<std::size_t>(i)]));
  return v;
}

}  // namespace toytask
