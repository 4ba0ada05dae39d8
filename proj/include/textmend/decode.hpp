#pragma once

// Decoding: standard beam search with an optional per-token input-similarity
// bonus (the decoding intervention), and Hamming-diversity grouped beam
// search used to mine negative candidates.
//
// Tie order everywhere: higher score, then shorter sequence, then
// lexicographically smaller token ids. With alpha == 0 the bonus branch is
// skipped entirely, so results are bitwise identical to a plain beam search.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "textmend/model.hpp"
#include "textmend/tensor.hpp"
#include "textmend/text.hpp"

namespace textmend {

struct DecodeConfig {
  std::size_t beam_width = 12;       // K
  std::size_t diversity_groups = 0;  // G; 0 means one group per hypothesis (G = K)
  double diversity_penalty = 0.5;    // lambda
  double alpha = 0.5;                // weight of the input-similarity bonus
  std::size_t max_length = 32;
  bool length_normalize = false;

  std::size_t groups_or_default() const { return diversity_groups == 0 ? beam_width : diversity_groups; }

  void validate() const {
    if (beam_width < 1) throw std::invalid_argument("DecodeConfig: beam_width must be >= 1");
    const std::size_t g = groups_or_default();
    if (g < 1 || beam_width % g != 0)
      throw std::invalid_argument("DecodeConfig: diversity_groups must divide beam_width");
    if (alpha < 0.0) throw std::invalid_argument("DecodeConfig: alpha must be nonnegative");
    if (max_length < 1) throw std::invalid_argument("DecodeConfig: max_length must be >= 1");
  }
};

struct BeamHypothesis {
  std::vector<int> ids;  // emitted tokens, including the terminating EOS
  double log_prob = 0.0;
  double bonus = 0.0;  // accumulated alpha * sim terms
  Tensor state;
  bool finished = false;
  bool forced = false;  // reached max_length without EOS

  double score(bool length_normalize) const {
    const double s = log_prob + bonus;
    if (length_normalize && !ids.empty()) return s / static_cast<double>(ids.size());
    return s;
  }
};

struct DecodedCandidate {
  Sentence sentence;
  std::vector<int> ids;
  double log_prob = 0.0;
  double bonus = 0.0;
  double score = 0.0;
  bool forced = false;
};

struct BeamSearchResult {
  DecodedCandidate best;
  std::vector<DecodedCandidate> beam;
};

// Max over input positions of cosine(embedding(token), H_row). Rewards tokens
// consistent with the encoded input context, which is what the intervention
// bonus feeds on.
inline double token_input_sim(int token_id, const Tensor& H, const CorrectorModel& model) {
  const Tensor& emb = model.embedding();
  if (token_id < 0 || static_cast<std::size_t>(token_id) >= emb.rows())
    throw std::out_of_range("token_input_sim: bad token id");
  const std::size_t d = emb.cols();
  if (H.shape.size() != 2 || H.shape[1] != d)
    throw std::invalid_argument("token_input_sim: embedding width " + std::to_string(d) +
                                " vs encoder width " + std::to_string(H.shape.size() == 2 ? H.shape[1] : 0));
  double best = -1.0;
  for (std::size_t r = 0; r < H.shape[0]; ++r) {
    double dot = 0, nu = 0, nv = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double u = emb.at(static_cast<std::size_t>(token_id), j);
      const double v = H.at(r, j);
      dot += u * v;
      nu += u * u;
      nv += v * v;
    }
    const double cos = (nu < 1e-24 || nv < 1e-24) ? 0.0 : dot / (std::sqrt(nu) * std::sqrt(nv));
    best = std::max(best, cos);
  }
  return best;
}

namespace detail {

inline bool hyp_better(const BeamHypothesis& a, const BeamHypothesis& b, double a_sel, double b_sel) {
  if (a_sel != b_sel) return a_sel > b_sel;
  if (a.ids.size() != b.ids.size()) return a.ids.size() < b.ids.size();
  return a.ids < b.ids;
}

inline std::vector<double> log_softmax_values(const Tensor& logits) {
  double mx = -HUGE_VAL;
  for (double v : logits.values) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits.values) z += std::exp(v - mx);
  const double logz = std::log(z) + mx;
  std::vector<double> out(logits.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits.values[i] - logz;
  return out;
}

inline Sentence sentence_from_ids(const std::vector<int>& ids, const Vocabulary& vocab,
                                  SegmentMode mode) {
  std::vector<std::string> units;
  units.reserve(ids.size());
  for (int id : ids) {
    if (id == Vocabulary::kEos || id == Vocabulary::kBos || id == Vocabulary::kPad) continue;
    units.push_back(vocab.unit_of(id));
  }
  return Sentence::from_units(units, mode);
}

struct GroupedBeamOutput {
  std::vector<std::vector<BeamHypothesis>> groups;
  Tensor H;
};

// Shared grouped-beam core. One group reproduces standard beam search; with
// several groups, each step penalizes tokens already chosen by earlier
// groups at the same step (selection only; stored scores stay pure).
inline GroupedBeamOutput grouped_beam_search(const Sentence& source, const Vocabulary& vocab,
                                             CorrectorModel& model, const DecodeConfig& config,
                                             std::size_t groups, std::size_t width) {
  const Encoding enc = model.encode(CorrectorModel::framed_ids(source, vocab));
  const Tensor s0 = model.initial_state(enc.z);
  const std::size_t vocab_size = model.config().vocab_size;

  std::vector<double> token_sims;
  if (config.alpha != 0.0) {
    token_sims.resize(vocab_size);
    for (std::size_t v = 0; v < vocab_size; ++v)
      token_sims[v] = token_input_sim(static_cast<int>(v), enc.H, model);
  }

  BeamHypothesis root;
  root.state = s0;
  std::vector<std::vector<BeamHypothesis>> beam(groups, std::vector<BeamHypothesis>{root});

  for (std::size_t step = 0; step < config.max_length; ++step) {
    bool any_open = false;
    for (const auto& g : beam)
      for (const auto& h : g) any_open |= !h.finished;
    if (!any_open) break;

    std::vector<std::size_t> counts(vocab_size, 0);
    for (std::size_t g = 0; g < groups; ++g) {
      std::vector<BeamHypothesis> expansions;
      std::vector<double> selection;
      for (const auto& hyp : beam[g]) {
        if (hyp.finished) {
          expansions.push_back(hyp);
          selection.push_back(hyp.score(config.length_normalize));
          continue;
        }
        const int prev = hyp.ids.empty() ? Vocabulary::kBos : hyp.ids.back();
        const DecodeStepResult sr = model.decode_step(prev, hyp.state, enc.H);
        const std::vector<double> lp = log_softmax_values(sr.logits);
        for (std::size_t v = 0; v < vocab_size; ++v) {
          if (v == Vocabulary::kPad || v == Vocabulary::kBos) continue;
          BeamHypothesis next = hyp;
          next.ids.push_back(static_cast<int>(v));
          next.log_prob += lp[v];
          if (config.alpha != 0.0) next.bonus += config.alpha * token_sims[v];
          next.state = sr.state;
          next.finished = v == Vocabulary::kEos;
          double sel = next.score(config.length_normalize);
          if (g > 0 && config.diversity_penalty != 0.0)
            sel -= config.diversity_penalty * static_cast<double>(counts[v]);
          expansions.push_back(std::move(next));
          selection.push_back(sel);
        }
      }
      std::vector<std::size_t> order(expansions.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return hyp_better(expansions[a], expansions[b], selection[a], selection[b]);
      });
      std::vector<BeamHypothesis> kept;
      for (std::size_t i = 0; i < order.size() && kept.size() < width; ++i)
        kept.push_back(std::move(expansions[order[i]]));
      for (const auto& h : kept) {
        if (h.ids.size() == step + 1) ++counts[static_cast<std::size_t>(h.ids.back())];
      }
      beam[g] = std::move(kept);
    }
  }

  for (auto& g : beam)
    for (auto& h : g) {
      if (!h.finished) {
        h.finished = true;
        h.forced = true;
      }
    }
  GroupedBeamOutput out;
  out.groups = std::move(beam);
  out.H = enc.H;
  return out;
}

inline DecodedCandidate to_candidate(const BeamHypothesis& h, const Vocabulary& vocab,
                                     SegmentMode mode, bool length_normalize) {
  DecodedCandidate c;
  c.sentence = sentence_from_ids(h.ids, vocab, mode);
  c.ids = h.ids;
  c.log_prob = h.log_prob;
  c.bonus = h.bonus;
  c.score = h.score(length_normalize);
  c.forced = h.forced;
  return c;
}

}  // namespace detail

// Beam search maximizing sum_t [log p(y_t | y_<t, x) + alpha * sim(y_t, x)].
inline BeamSearchResult intervened_beam_search(const Sentence& source, const Vocabulary& vocab,
                                               CorrectorModel& model, const DecodeConfig& config) {
  config.validate();
  if (source.empty()) throw std::invalid_argument("intervened_beam_search: empty source");
  auto out = detail::grouped_beam_search(source, vocab, model, config, 1, config.beam_width);
  auto& hyps = out.groups[0];
  std::sort(hyps.begin(), hyps.end(), [&](const BeamHypothesis& a, const BeamHypothesis& b) {
    return detail::hyp_better(a, b, a.score(config.length_normalize), b.score(config.length_normalize));
  });
  BeamSearchResult result;
  result.beam.reserve(hyps.size());
  for (const auto& h : hyps)
    result.beam.push_back(detail::to_candidate(h, vocab, source.mode(), config.length_normalize));
  result.best = result.beam.front();
  return result;
}

// Grouped beam producing up to K pairwise-distinct token sequences, groups in
// order, each group's hypotheses sorted by score.
inline std::vector<DecodedCandidate> diverse_beam_search(const Sentence& source,
                                                         const Vocabulary& vocab,
                                                         CorrectorModel& model,
                                                         const DecodeConfig& config) {
  config.validate();
  if (source.empty()) throw std::invalid_argument("diverse_beam_search: empty source");
  const std::size_t groups = config.groups_or_default();
  const std::size_t width = config.beam_width / groups;
  auto out = detail::grouped_beam_search(source, vocab, model, config, groups, width);

  std::vector<DecodedCandidate> result;
  for (auto& g : out.groups) {
    std::sort(g.begin(), g.end(), [&](const BeamHypothesis& a, const BeamHypothesis& b) {
      return detail::hyp_better(a, b, a.score(config.length_normalize), b.score(config.length_normalize));
    });
    for (const auto& h : g) {
      bool duplicate = false;
      for (const auto& seen : result) duplicate |= seen.ids == h.ids;
      if (!duplicate)
        result.push_back(detail::to_candidate(h, vocab, source.mode(), config.length_normalize));
    }
  }
  return result;
}

}  // namespace textmend
