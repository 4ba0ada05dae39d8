#pragma once

// Sentence-level correction metrics: precision/recall/F1 and accuracy over
// (source, output, target) rows, ROUGE-1/2/L and BLEU against a reference,
// and over-/under-correction counts from dual alignments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "textmend/text.hpp"

namespace textmend {

struct EvalRow {
  std::string source;
  std::string output;
  std::string target;
  bool changed = false;    // output != source
  bool corrected = false;  // output == target
  bool positive = false;   // target != source
  double rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0, bleu = 0.0;
  bool rouge1_defined = false, rouge2_defined = false, rougeL_defined = false, bleu_defined = false;
  std::size_t over = 0, under = 0;
};

struct EvalReport {
  double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;
  double rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0, bleu = 0.0;
  std::size_t overcorrections = 0, undercorrections = 0;
  std::vector<EvalRow> rows;
};

struct EvalTriple {
  Sentence source;
  Sentence output;
  Sentence target;
};

struct PrfScores {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

// changed := output != source; corrected := output == target;
// positive := target != source. P = |changed and corrected| / |changed|,
// R = |changed and corrected| / |positive|; zero denominators give zero.
inline PrfScores sentence_correction_prf(const std::vector<EvalTriple>& rows) {
  if (rows.empty()) throw std::invalid_argument("sentence_correction_prf: no rows");
  std::size_t tp = 0, changed = 0, positive = 0;
  for (const auto& r : rows) {
    const bool ch = r.output.raw() != r.source.raw();
    const bool ok = r.output.raw() == r.target.raw();
    const bool pos = r.target.raw() != r.source.raw();
    changed += ch;
    positive += pos;
    tp += (ch && ok);
  }
  PrfScores s;
  s.precision = changed ? static_cast<double>(tp) / static_cast<double>(changed) : 0.0;
  s.recall = positive ? static_cast<double>(tp) / static_cast<double>(positive) : 0.0;
  s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

inline double accuracy(const std::vector<EvalTriple>& rows) {
  if (rows.empty()) throw std::invalid_argument("accuracy: no rows");
  std::size_t correct = 0;
  for (const auto& r : rows) correct += (r.output.raw() == r.target.raw());
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

namespace detail {

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(
    const std::vector<std::string>& units, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (units.size() < n) return counts;
  for (std::size_t i = 0; i + n <= units.size(); ++i)
    ++counts[std::vector<std::string>(units.begin() + i, units.begin() + i + n)];
  return counts;
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

// Clipped n-gram overlap divided by the reference n-gram count.
inline double rouge_n(const Sentence& generated, const Sentence& reference, std::size_t n) {
  if (n < 1 || n > 2) throw std::invalid_argument("rouge_n: n must be 1 or 2");
  if (reference.unit_count() < n)
    throw std::invalid_argument("rouge_n: reference shorter than n");
  const auto gen = detail::ngram_counts(generated.units(), n);
  const auto ref = detail::ngram_counts(reference.units(), n);
  std::size_t overlap = 0, total = 0;
  for (const auto& [gram, count] : ref) {
    total += count;
    auto it = gen.find(gram);
    if (it != gen.end()) overlap += std::min(count, it->second);
  }
  return static_cast<double>(overlap) / static_cast<double>(total);
}

inline double rouge_l(const Sentence& generated, const Sentence& reference) {
  if (reference.empty()) throw std::invalid_argument("rouge_l: empty reference");
  const std::size_t lcs = detail::lcs_length(generated.units(), reference.units());
  return static_cast<double>(lcs) / static_cast<double>(reference.unit_count());
}

// Sentence BLEU, orders 1..4 truncated to the shorter of the two lengths.
// Order 1 is exact; higher orders use add-one smoothing so short toy
// candidates still get discriminative scores. Brevity penalty exp(1 - r/c).
inline double bleu(const Sentence& candidate, const Sentence& reference) {
  if (candidate.empty() || reference.empty())
    throw std::invalid_argument("bleu: empty input");
  const std::size_t c = candidate.unit_count();
  const std::size_t r = reference.unit_count();
  const std::size_t max_order = std::min<std::size_t>(4, std::min(c, r));
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_order; ++n) {
    const auto cand = detail::ngram_counts(candidate.units(), n);
    const auto ref = detail::ngram_counts(reference.units(), n);
    std::size_t matched = 0, total = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      auto it = ref.find(gram);
      if (it != ref.end()) matched += std::min(count, it->second);
    }
    double p;
    if (n == 1) {
      if (matched == 0) return 0.0;
      p = static_cast<double>(matched) / static_cast<double>(total);
    } else {
      p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
    }
    log_sum += std::log(p) / static_cast<double>(max_order);
  }
  const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
  return bp * std::exp(log_sum);
}

struct OverUnder {
  std::size_t over = 0;
  std::size_t under = 0;
};

// Counts through the shared target coordinates of two alignments:
// align(source,target) classifies each target position as clean (MATCH) or
// dirty (SUB/INS); align(output,target) classifies it as satisfied (MATCH)
// or violated. over = clean-but-violated, under = dirty-and-still-violated.
// Extra source units (DEL steps) have no target coordinate and are not
// counted.
inline OverUnder over_under_counts(const Sentence& source, const Sentence& output,
                                   const Sentence& target) {
  const std::size_t m = target.unit_count();
  std::vector<bool> dirty(m, false), violated(m, false);
  for (const auto& step : levenshtein_align(source, target).steps) {
    if (step.op == EditStep::Sub || step.op == EditStep::Ins) dirty[step.b_index] = true;
  }
  for (const auto& step : levenshtein_align(output, target).steps) {
    if (step.op == EditStep::Sub || step.op == EditStep::Ins) violated[step.b_index] = true;
  }
  OverUnder result;
  for (std::size_t j = 0; j < m; ++j) {
    if (!violated[j]) continue;
    if (dirty[j])
      ++result.under;
    else
      ++result.over;
  }
  return result;
}

struct EvalOptions {
  bool per_row_details = true;
};

// Deterministic aggregate: P/R/F1 and accuracy from the row predicates,
// ROUGE/BLEU macro-averaged over rows where they are defined, and
// over/under counts summed.
inline EvalReport evaluate(const std::vector<EvalTriple>& rows, const EvalOptions& opts = {}) {
  if (rows.empty()) throw std::invalid_argument("evaluate: no rows");
  EvalReport rep;
  const PrfScores prf = sentence_correction_prf(rows);
  rep.precision = prf.precision;
  rep.recall = prf.recall;
  rep.f1 = prf.f1;
  rep.accuracy = accuracy(rows);

  double r1 = 0, r2 = 0, rl = 0, bl = 0;
  std::size_t n1 = 0, n2 = 0, nl = 0, nb = 0;
  for (const auto& t : rows) {
    EvalRow row;
    row.source = t.source.raw();
    row.output = t.output.raw();
    row.target = t.target.raw();
    row.changed = t.output.raw() != t.source.raw();
    row.corrected = t.output.raw() == t.target.raw();
    row.positive = t.target.raw() != t.source.raw();
    if (t.target.unit_count() >= 1) {
      row.rouge1 = rouge_n(t.output, t.target, 1);
      row.rouge1_defined = true;
      row.rougeL = rouge_l(t.output, t.target);
      row.rougeL_defined = true;
      r1 += row.rouge1, ++n1;
      rl += row.rougeL, ++nl;
    }
    if (t.target.unit_count() >= 2) {
      row.rouge2 = rouge_n(t.output, t.target, 2);
      row.rouge2_defined = true;
      r2 += row.rouge2, ++n2;
    }
    if (!t.output.empty() && !t.target.empty()) {
      row.bleu = bleu(t.output, t.target);
      row.bleu_defined = true;
      bl += row.bleu, ++nb;
    }
    const OverUnder ou = over_under_counts(t.source, t.output, t.target);
    row.over = ou.over;
    row.under = ou.under;
    rep.overcorrections += ou.over;
    rep.undercorrections += ou.under;
    if (opts.per_row_details) rep.rows.push_back(std::move(row));
  }
  rep.rouge1 = n1 ? r1 / static_cast<double>(n1) : 0.0;
  rep.rouge2 = n2 ? r2 / static_cast<double>(n2) : 0.0;
  rep.rougeL = nl ? rl / static_cast<double>(nl) : 0.0;
  rep.bleu = nb ? bl / static_cast<double>(nb) : 0.0;
  return rep;
}

}  // namespace textmend
