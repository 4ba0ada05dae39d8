#pragma once

// Self-correct adversarial training: negatives are mined from the model's
// own diverse-beam predictions, ranked by BLEU + representation similarity
// to the target, and fed to the combined loss. Optimization is Adam with
// linear warm-up. Every piece of run state (moments, rng, mined cache) is
// serializable so a resumed run reproduces the uninterrupted one exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "textmend/decode.hpp"
#include "textmend/losses.hpp"
#include "textmend/metrics.hpp"
#include "textmend/model.hpp"
#include "textmend/rng.hpp"

namespace textmend {

struct TrainConfig {
  double learning_rate = 1e-3;  // desk scale; a full-size run would want 1e-5
  std::size_t batch_size = 8;
  std::size_t steps = 500;
  std::size_t warmup_steps = 0;
  std::size_t beam_k = 12;
  double gamma = 0.01;
  double tau = 0.1;
  double alpha = 0.0;  // in-loop decoding intervention weight for mining
  double w_nll = 1.0;
  double w_con = 0.0;
  double w_rank = 1.0;
  std::size_t mining_interval = 1;  // steps between candidate refreshes per pair
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::size_t max_decode_length = 24;
  double diversity_penalty = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (learning_rate <= 0) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (mining_interval < 1) throw std::invalid_argument("TrainConfig: mining_interval must be >= 1");
    if (beam_k < 1) throw std::invalid_argument("TrainConfig: beam_k must be >= 1");
    if (tau <= 0) throw std::invalid_argument("TrainConfig: tau must be positive");
    if (gamma < 0) throw std::invalid_argument("TrainConfig: gamma must be nonnegative");
  }

  LossConfig loss_config() const { return LossConfig{w_nll, w_con, w_rank, tau, gamma}; }

  DecodeConfig mining_decode_config() const {
    DecodeConfig dc;
    dc.beam_width = beam_k;
    dc.diversity_groups = 0;  // one hypothesis per group
    dc.diversity_penalty = diversity_penalty;
    dc.alpha = alpha;
    dc.max_length = max_decode_length;
    return dc;
  }
};

struct MinedEntry {
  std::size_t mined_step = 0;
  RankedCandidateSet set;
};

struct StepRecord {
  std::size_t step = 0;
  LossBreakdown loss;
  double lr = 0.0;
};

struct TrainState {
  std::size_t step = 0;
  double lr_scale = 1.0;
  bool lr_halved = false;
  Rng rng{1};
  std::vector<Tensor> adam_m;
  std::vector<Tensor> adam_v;
  std::unordered_map<std::size_t, MinedEntry> mined;
  std::vector<StepRecord> history;
  std::vector<std::string> events;
};

inline TrainState make_train_state(CorrectorModel& model, const TrainConfig& config) {
  TrainState s;
  s.rng = substream(config.seed, "train");
  for (Tensor* p : model.parameters()) {
    s.adam_m.push_back(Tensor::zeros(p->shape));
    s.adam_v.push_back(Tensor::zeros(p->shape));
  }
  return s;
}

// Diverse-beam candidates ranked by r_k = BLEU(cand, target) + sim(z_cand,
// z_target), descending, original beam order breaking ties. Exact-target
// candidates are flagged; an all-exact beam yields the empty-negatives flag.
inline RankedCandidateSet mine_negatives(const ParallelPair& pair, const Vocabulary& vocab,
                                         CorrectorModel& model, const TrainConfig& config) {
  const std::vector<DecodedCandidate> decoded =
      diverse_beam_search(pair.source, vocab, model, config.mining_decode_config());
  const Tensor z_y = model.represent(pair.target, vocab);

  RankedCandidateSet set;
  set.candidates.reserve(decoded.size());
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    RankedCandidate c;
    c.sentence = decoded[i].sentence;
    c.ids = decoded[i].ids;
    c.beam_index = i;
    c.exact_target = c.sentence.units() == pair.target.units();
    c.bleu_score = c.sentence.empty() ? 0.0 : bleu(c.sentence, pair.target);
    const Tensor z_c = model.represent(c.sentence, vocab);
    c.sim_to_target = cosine_similarity(z_c.values, z_y.values);
    c.rank_score = c.bleu_score + c.sim_to_target;
    set.candidates.push_back(std::move(c));
  }
  std::sort(set.candidates.begin(), set.candidates.end(),
            [](const RankedCandidate& a, const RankedCandidate& b) {
              if (a.rank_score != b.rank_score) return a.rank_score > b.rank_score;
              return a.beam_index < b.beam_index;
            });
  set.empty_negatives = set.negative_count() == 0;
  return set;
}

namespace detail {

inline double effective_lr(const TrainConfig& config, const TrainState& state) {
  double lr = config.learning_rate * state.lr_scale;
  if (config.warmup_steps > 0) {
    const double f = static_cast<double>(state.step + 1) / static_cast<double>(config.warmup_steps);
    lr *= std::min(1.0, f);
  }
  return lr;
}

inline void adam_update(CorrectorModel& model, TrainState& state, const TrainConfig& config,
                        double lr) {
  const std::vector<Tensor*> params = model.parameters();
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(b1, t);
  const double bc2 = 1.0 - std::pow(b2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& par = *params[p];
    par.ensure_grad();
    Tensor& m = state.adam_m[p];
    Tensor& v = state.adam_v[p];
    for (std::size_t i = 0; i < par.numel(); ++i) {
      const double g = par.grad[i];
      m.values[i] = b1 * m.values[i] + (1.0 - b1) * g;
      v.values[i] = b2 * v.values[i] + (1.0 - b2) * g * g;
      const double mhat = m.values[i] / bc1;
      const double vhat = v.values[i] / bc2;
      par.values[i] -= lr * mhat / (std::sqrt(vhat) + config.adam_eps);
    }
  }
}

struct BatchPass {
  LossBreakdown mean;
  bool finite = true;
};

inline BatchPass run_batch(const std::vector<ParallelPair>& corpus,
                           const std::vector<std::size_t>& batch, CorrectorModel& model,
                           const Vocabulary& vocab, TrainState& state, const TrainConfig& config) {
  for (Tensor* p : model.parameters()) p->zero_grad();
  BatchPass pass;
  LossBreakdown agg;
  agg.w_nll = config.w_nll;
  agg.w_con = config.w_con;
  agg.w_rank = config.w_rank;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const std::size_t idx : batch) {
    auto it = state.mined.find(idx);
    if (it == state.mined.end() || state.step - it->second.mined_step >= config.mining_interval) {
      MinedEntry entry;
      entry.mined_step = state.step;
      entry.set = mine_negatives(corpus[idx], vocab, model, config);
      it = state.mined.insert_or_assign(idx, std::move(entry)).first;
    }
    Tape tape;
    const BoundModel bound = model.bind(tape);
    const TotalLossVars loss =
        total_loss_on(tape, model, bound.vars, vocab, corpus[idx], it->second.set, config.loss_config());
    if (!std::isfinite(loss.breakdown.total)) {
      pass.finite = false;
      return pass;
    }
    // mean over the batch: scale the scalar before backward
    tape.backward(tape.scale(loss.total, inv));
    bound.accumulate_grads(tape);
    agg.total += loss.breakdown.total * inv;
    agg.nll += loss.breakdown.nll * inv;
    agg.contrastive += loss.breakdown.contrastive * inv;
    agg.rank += loss.breakdown.rank * inv;
    agg.rank_degenerate |= loss.breakdown.rank_degenerate;
  }
  pass.mean = agg;
  return pass;
}

}  // namespace detail

// One optimization step over an explicit batch. Non-finite losses abort the
// step, halve the learning rate once, and retry; a second failure is fatal.
inline LossBreakdown train_step(const std::vector<ParallelPair>& corpus,
                                const std::vector<std::size_t>& batch, CorrectorModel& model,
                                const Vocabulary& vocab, TrainState& state,
                                const TrainConfig& config) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  detail::BatchPass pass = detail::run_batch(corpus, batch, model, vocab, state, config);
  if (!pass.finite) {
    state.events.push_back("non-finite loss at step " + std::to_string(state.step));
    if (state.lr_halved) throw std::runtime_error("train_step: non-finite loss twice; aborting");
    state.lr_halved = true;
    state.lr_scale *= 0.5;
    pass = detail::run_batch(corpus, batch, model, vocab, state, config);
    if (!pass.finite) throw std::runtime_error("train_step: non-finite loss after retry; aborting");
  }
  const double lr = detail::effective_lr(config, state);
  detail::adam_update(model, state, config, lr);
  state.history.push_back({state.step, pass.mean, lr});
  ++state.step;
  return pass.mean;
}

inline std::vector<std::size_t> next_batch(TrainState& state, std::size_t corpus_size,
                                           std::size_t batch_size) {
  std::vector<std::size_t> batch(batch_size);
  for (auto& idx : batch) idx = static_cast<std::size_t>(state.rng.below(corpus_size));
  return batch;
}

// Runs until config.steps, invoking `on_step` after each step (may be null).
template <typename OnStep>
inline void train_loop(const std::vector<ParallelPair>& corpus, const Vocabulary& vocab,
                       CorrectorModel& model, TrainState& state, const TrainConfig& config,
                       OnStep&& on_step) {
  config.validate();
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  while (state.step < config.steps) {
    const std::vector<std::size_t> batch = next_batch(state, corpus.size(), config.batch_size);
    train_step(corpus, batch, model, vocab, state, config);
    on_step(state.history.back());
  }
}

// ---------------------------------------------------------------------------
// State serialization (for resume-equivalence)

inline nlohmann::json train_state_to_json(const TrainState& state) {
  nlohmann::json j;
  j["step"] = state.step;
  j["lr_scale"] = state.lr_scale;
  j["lr_halved"] = state.lr_halved;
  j["rng"] = state.rng.state();
  auto moments = [](const std::vector<Tensor>& ts) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : ts) arr.push_back({{"shape", t.shape}, {"values", t.values}});
    return arr;
  };
  j["adam_m"] = moments(state.adam_m);
  j["adam_v"] = moments(state.adam_v);
  std::vector<std::size_t> keys;
  keys.reserve(state.mined.size());
  for (const auto& [idx, entry] : state.mined) keys.push_back(idx);
  std::sort(keys.begin(), keys.end());
  nlohmann::json mined = nlohmann::json::array();
  for (const std::size_t idx : keys) {
    const MinedEntry& entry = state.mined.at(idx);
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : entry.set.candidates) {
      cands.push_back({{"ids", c.ids},
                       {"bleu", c.bleu_score},
                       {"sim", c.sim_to_target},
                       {"rank_score", c.rank_score},
                       {"exact", c.exact_target},
                       {"beam_index", c.beam_index}});
    }
    mined.push_back({{"pair", idx},
                     {"mined_step", entry.mined_step},
                     {"empty_negatives", entry.set.empty_negatives},
                     {"candidates", std::move(cands)}});
  }
  j["mined"] = std::move(mined);
  j["events"] = state.events;
  nlohmann::json history = nlohmann::json::array();
  for (const auto& rec : state.history) {
    history.push_back({{"step", rec.step},
                       {"nll", rec.loss.nll},
                       {"contrastive", rec.loss.contrastive},
                       {"rank", rec.loss.rank},
                       {"total", rec.loss.total},
                       {"w_nll", rec.loss.w_nll},
                       {"w_con", rec.loss.w_con},
                       {"w_rank", rec.loss.w_rank},
                       {"rank_degenerate", rec.loss.rank_degenerate},
                       {"lr", rec.lr}});
  }
  j["history"] = std::move(history);
  return j;
}

inline TrainState train_state_from_json(const nlohmann::json& j, const Vocabulary& vocab,
                                        SegmentMode mode) {
  TrainState s;
  s.step = j.at("step").get<std::size_t>();
  s.lr_scale = j.at("lr_scale").get<double>();
  s.lr_halved = j.at("lr_halved").get<bool>();
  s.rng.set_state(j.at("rng").get<Rng::State>());
  auto moments = [](const nlohmann::json& arr) {
    std::vector<Tensor> ts;
    for (const auto& tj : arr)
      ts.emplace_back(tj.at("shape").get<std::vector<std::size_t>>(),
                      tj.at("values").get<std::vector<double>>());
    return ts;
  };
  s.adam_m = moments(j.at("adam_m"));
  s.adam_v = moments(j.at("adam_v"));
  for (const auto& mj : j.at("mined")) {
    MinedEntry entry;
    entry.mined_step = mj.at("mined_step").get<std::size_t>();
    entry.set.empty_negatives = mj.at("empty_negatives").get<bool>();
    for (const auto& cj : mj.at("candidates")) {
      RankedCandidate c;
      c.ids = cj.at("ids").get<std::vector<int>>();
      c.bleu_score = cj.at("bleu").get<double>();
      c.sim_to_target = cj.at("sim").get<double>();
      c.rank_score = cj.at("rank_score").get<double>();
      c.exact_target = cj.at("exact").get<bool>();
      c.beam_index = cj.at("beam_index").get<std::size_t>();
      std::vector<std::string> units;
      for (int id : c.ids)
        if (id != Vocabulary::kEos && id != Vocabulary::kBos && id != Vocabulary::kPad)
          units.push_back(vocab.unit_of(id));
      c.sentence = Sentence::from_units(units, mode);
      entry.set.candidates.push_back(std::move(c));
    }
    s.mined.emplace(mj.at("pair").get<std::size_t>(), std::move(entry));
  }
  s.events = j.at("events").get<std::vector<std::string>>();
  for (const auto& hj : j.at("history")) {
    StepRecord rec;
    rec.step = hj.at("step").get<std::size_t>();
    rec.loss.nll = hj.at("nll").get<double>();
    rec.loss.contrastive = hj.at("contrastive").get<double>();
    rec.loss.rank = hj.at("rank").get<double>();
    rec.loss.total = hj.at("total").get<double>();
    rec.loss.w_nll = hj.at("w_nll").get<double>();
    rec.loss.w_con = hj.at("w_con").get<double>();
    rec.loss.w_rank = hj.at("w_rank").get<double>();
    rec.loss.rank_degenerate = hj.at("rank_degenerate").get<bool>();
    rec.lr = hj.at("lr").get<double>();
    s.history.push_back(rec);
  }
  return s;
}

}  // namespace textmend
