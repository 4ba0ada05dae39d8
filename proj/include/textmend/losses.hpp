#pragma once

// Training objectives: temperature-scaled contrastive loss with the positive
// pair in the denominator, pairwise margin ranking loss over beam-mined
// candidates, and their weighted combination with token-level NLL.

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "textmend/model.hpp"
#include "textmend/tensor.hpp"
#include "textmend/text.hpp"

namespace textmend {

enum class CandidateProvenance { BeamMined };

struct RankedCandidate {
  Sentence sentence;
  std::vector<int> ids;       // token ids without EOS
  double bleu_score = 0.0;
  double sim_to_target = 0.0;
  double rank_score = 0.0;    // bleu + sim, descending order key
  bool exact_target = false;  // excluded from negative duty
  std::size_t beam_index = 0;
  CandidateProvenance provenance = CandidateProvenance::BeamMined;
};

// Candidates in strictly decreasing (rank_score, then beam order). Exact
// matches of the target are flagged; they never serve as the lower-ranked
// side of a ranking pair and never enter the contrastive denominator.
struct RankedCandidateSet {
  std::vector<RankedCandidate> candidates;
  bool empty_negatives = false;

  std::size_t negative_count() const {
    std::size_t n = 0;
    for (const auto& c : candidates) n += !c.exact_target;
    return n;
  }
};

struct LossConfig {
  double w_nll = 1.0;
  double w_con = 0.0;  // InfoNCE arm, enabled for the ablation
  double w_rank = 1.0;
  double tau = 0.1;
  double gamma = 0.01;
};

struct LossBreakdown {
  double total = 0.0;
  double nll = 0.0;
  double contrastive = 0.0;
  double rank = 0.0;
  double w_nll = 1.0, w_con = 0.0, w_rank = 1.0;
  bool rank_degenerate = false;  // fewer than two ranked candidates
};

// L = -log( exp(sim(x,pos)/tau) / (exp(sim(x,pos)/tau) + sum_n exp(sim(x,n)/tau)) ).
// The positive term is part of the denominator, so L >= 0.
inline Var contrastive_loss_on(Tape& t, Var z_x, Var z_pos, std::span<const Var> z_negs, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("contrastive_loss: tau must be positive");
  if (z_negs.empty()) throw std::invalid_argument("contrastive_loss: needs at least one negative");
  std::vector<Var> sims;
  sims.reserve(z_negs.size() + 1);
  sims.push_back(t.cosine(z_x, z_pos));
  for (Var zn : z_negs) sims.push_back(t.cosine(z_x, zn));
  const Var scaled = t.scale(t.concat(std::span<const Var>(sims)), 1.0 / tau);
  return t.scale(t.select(t.log_softmax(scaled), 0), -1.0);
}

inline double contrastive_loss(const Tensor& z_x, const Tensor& z_pos,
                               std::span<const Tensor> z_negs, double tau) {
  Tape t;
  const Var x = t.leaf(z_x);
  const Var p = t.leaf(z_pos);
  std::vector<Var> negs;
  negs.reserve(z_negs.size());
  for (const auto& n : z_negs) negs.push_back(t.leaf(n));
  return t.scalar_value(contrastive_loss_on(t, x, p, negs, tau));
}

struct RankingLossVar {
  Var value;
  bool degenerate = false;
};

// Sum over rank pairs i < j of max(0, gamma + sim(x, z_j) - sim(x, z_i)):
// a better-ranked candidate must be closer to the input by the margin.
// `exact_target[j]` removes candidate j from the negative (j-th) side.
inline RankingLossVar ranking_loss_on(Tape& t, Var z_x, std::span<const Var> ranked_z,
                                      const std::vector<bool>& exact_target, double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("ranking_loss: gamma must be nonnegative");
  RankingLossVar out;
  if (ranked_z.size() < 2) {
    out.value = t.scalar(0.0);
    out.degenerate = true;
    return out;
  }
  std::vector<Var> sims;
  sims.reserve(ranked_z.size());
  for (Var z : ranked_z) sims.push_back(t.cosine(z_x, z));
  std::vector<Var> terms;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    for (std::size_t j = i + 1; j < sims.size(); ++j) {
      if (j < exact_target.size() && exact_target[j]) continue;
      terms.push_back(t.relu(t.add_scalar(t.sub(sims[j], sims[i]), gamma)));
    }
  }
  if (terms.empty()) {
    out.value = t.scalar(0.0);
    out.degenerate = true;
    return out;
  }
  out.value = t.sum(t.concat(std::span<const Var>(terms)));
  return out;
}

inline double ranking_loss(const Tensor& z_x, std::span<const Tensor> ranked_z,
                           const std::vector<bool>& exact_target, double gamma) {
  Tape t;
  const Var x = t.leaf(z_x);
  std::vector<Var> zs;
  zs.reserve(ranked_z.size());
  for (const auto& z : ranked_z) zs.push_back(t.leaf(z));
  return t.scalar_value(ranking_loss_on(t, x, zs, exact_target, gamma).value);
}

struct TotalLossVars {
  Var total;
  LossBreakdown breakdown;
};

// Weighted sum w_nll * (-log_prob) + w_con * contrastive + w_rank * ranking,
// all composed through the shared encoder on one tape. Candidates must come
// from beam mining; representations are recomputed here so gradients flow
// into the encoder.
inline TotalLossVars total_loss_on(Tape& t, const CorrectorModel& model, const ModelVars& mv,
                                   const Vocabulary& vocab, const ParallelPair& pair,
                                   const RankedCandidateSet& ranked, const LossConfig& cfg) {
  for (const auto& c : ranked.candidates) {
    if (c.provenance != CandidateProvenance::BeamMined)
      throw std::invalid_argument("total_loss: candidate " + std::to_string(c.beam_index) +
                                  " not beam-mined");
  }

  TotalLossVars out;
  out.breakdown.w_nll = cfg.w_nll;
  out.breakdown.w_con = cfg.w_con;
  out.breakdown.w_rank = cfg.w_rank;

  const Var lp = model.log_prob_on(t, mv, CorrectorModel::framed_ids(pair.source, vocab),
                                   vocab.encode(pair.target));
  const Var nll = t.scale(lp, -1.0);

  const Var z_x = model.represent_on(t, mv, pair.source, vocab);
  const Var z_y = model.represent_on(t, mv, pair.target, vocab);

  std::vector<Var> cand_z;
  std::vector<bool> exact;
  std::vector<Var> neg_z;
  cand_z.reserve(ranked.candidates.size());
  for (const auto& c : ranked.candidates) {
    const Var z = model.represent_on(t, mv, c.sentence, vocab);
    cand_z.push_back(z);
    exact.push_back(c.exact_target);
    if (!c.exact_target) neg_z.push_back(z);
  }

  Var contrastive = t.scalar(0.0);
  if (!neg_z.empty()) contrastive = contrastive_loss_on(t, z_x, z_y, neg_z, cfg.tau);

  const RankingLossVar rank = ranking_loss_on(t, z_x, cand_z, exact, cfg.gamma);
  out.breakdown.rank_degenerate = rank.degenerate;

  out.total = t.add(t.add(t.scale(nll, cfg.w_nll), t.scale(contrastive, cfg.w_con)),
                    t.scale(rank.value, cfg.w_rank));
  out.breakdown.nll = t.scalar_value(nll);
  out.breakdown.contrastive = t.scalar_value(contrastive);
  out.breakdown.rank = t.scalar_value(rank.value);
  out.breakdown.total = t.scalar_value(out.total);
  return out;
}

inline LossBreakdown total_loss(CorrectorModel& model, const Vocabulary& vocab,
                                const ParallelPair& pair, const RankedCandidateSet& ranked,
                                const LossConfig& cfg) {
  Tape t;
  const BoundModel bound = model.bind(t);
  return total_loss_on(t, model, bound.vars, vocab, pair, ranked, cfg).breakdown;
}

}  // namespace textmend
