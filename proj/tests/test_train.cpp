#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "support/toytask.hpp"
#include "textmend/train.hpp"

using namespace textmend;

namespace {

ModelConfig toy_model_config(const Vocabulary& vocab) {
  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.embed_dim = 12;
  mc.hidden_dim = 12;
  return mc;
}

TrainConfig fast_config(std::uint64_t seed) {
  TrainConfig tc;
  tc.seed = seed;
  tc.batch_size = 4;
  tc.beam_k = 4;
  tc.max_decode_length = 16;
  tc.learning_rate = 2e-3;
  return tc;
}

}  // namespace

TEST_CASE("mine_negatives: untrained model almost surely misses the target") {
  const auto corpus = toytask::corpus(4, 11);
  Vocabulary vocab = toytask::vocabulary();
  CorrectorModel model(toy_model_config(vocab), 5);
  const TrainConfig tc = fast_config(1);
  const RankedCandidateSet set = mine_negatives(corpus[0], vocab, model, tc);
  REQUIRE_FALSE(set.candidates.empty());
  REQUIRE(set.negative_count() > 0);
  REQUIRE_FALSE(set.empty_negatives);
  for (const auto& c : set.candidates) REQUIRE(c.provenance == CandidateProvenance::BeamMined);
}

TEST_CASE("mine_negatives: ordering matches independent re-scoring") {
  const auto corpus = toytask::corpus(3, 23);
  Vocabulary vocab = toytask::vocabulary();
  CorrectorModel model(toy_model_config(vocab), 17);
  const TrainConfig tc = fast_config(2);
  const RankedCandidateSet set = mine_negatives(corpus[1], vocab, model, tc);

  const Tensor z_y = model.represent(corpus[1].target, vocab);
  for (std::size_t i = 0; i < set.candidates.size(); ++i) {
    const auto& c = set.candidates[i];
    const double b = c.sentence.empty() ? 0.0 : bleu(c.sentence, corpus[1].target);
    const Tensor z_c = model.represent(c.sentence, vocab);
    const double sim = cosine_similarity(z_c.values, z_y.values);
    REQUIRE(c.rank_score == Catch::Approx(b + sim).margin(1e-12));
    if (i > 0) {
      const auto& prev = set.candidates[i - 1];
      const bool ordered = prev.rank_score > c.rank_score ||
                           (prev.rank_score == c.rank_score && prev.beam_index < c.beam_index);
      REQUIRE(ordered);
    }
  }
}

TEST_CASE("mine_negatives: memorized pair with K=1 flags empty negatives") {
  // memorize a single pair with plain NLL steps until the greedy beam
  // reproduces the target, then mine with beam_k = 1
  const Vocabulary vocab = toytask::vocabulary();
  ParallelPair pair;
  pair.source = segment("0b", SegmentMode::CjkChar);
  pair.target = segment("ab", SegmentMode::CjkChar);
  ModelConfig mc = toy_model_config(vocab);
  CorrectorModel model(mc, 41);
  TrainConfig tc = fast_config(3);
  tc.w_rank = 0;
  tc.w_con = 0;
  tc.batch_size = 1;
  tc.learning_rate = 5e-3;
  TrainState state = make_train_state(model, tc);
  const std::vector<ParallelPair> corpus = {pair};
  for (int step = 0; step < 400; ++step) {
    train_step(corpus, {0}, model, vocab, state, tc);
    TrainConfig probe = tc;
    probe.beam_k = 1;
    const RankedCandidateSet set = mine_negatives(pair, vocab, model, probe);
    if (set.empty_negatives) {
      REQUIRE(set.candidates.size() == 1);
      REQUIRE(set.candidates[0].exact_target);
      SUCCEED("model memorized the pair and the only candidate is the target");
      return;
    }
  }
  FAIL("memorization did not converge within 400 steps");
}

TEST_CASE("train_step: two runs with the same seed produce identical history") {
  const auto corpus = toytask::corpus(12, 99);
  const Vocabulary vocab = toytask::vocabulary();
  auto run = [&](std::uint64_t seed) {
    CorrectorModel model(toy_model_config(vocab), seed);
    TrainConfig tc = fast_config(seed);
    tc.steps = 6;
    TrainState state = make_train_state(model, tc);
    train_loop(corpus, vocab, model, state, tc, [](const StepRecord&) {});
    return state.history;
  };
  const auto a = run(7);
  const auto b = run(7);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].loss.total == b[i].loss.total);  // full precision
    REQUIRE(a[i].loss.nll == b[i].loss.nll);
    REQUIRE(a[i].loss.rank == b[i].loss.rank);
    REQUIRE(a[i].lr == b[i].lr);
  }
}

TEST_CASE("train_step: zero-weight ranking and contrastive reduces to NLL training") {
  const auto corpus = toytask::corpus(8, 5);
  const Vocabulary vocab = toytask::vocabulary();
  CorrectorModel model(toy_model_config(vocab), 13);
  TrainConfig tc = fast_config(4);
  tc.w_rank = 0;
  tc.w_con = 0;
  TrainState state = make_train_state(model, tc);
  const LossBreakdown out = train_step(corpus, {0, 1, 2, 3}, model, vocab, state, tc);
  REQUIRE(out.total == Catch::Approx(out.nll).margin(1e-12));
}

TEST_CASE("train_step: loss components satisfy the weighted-sum identity") {
  const auto corpus = toytask::corpus(8, 15);
  const Vocabulary vocab = toytask::vocabulary();
  CorrectorModel model(toy_model_config(vocab), 3);
  TrainConfig tc = fast_config(6);
  tc.w_con = 0.5;
  tc.steps = 4;
  TrainState state = make_train_state(model, tc);
  train_loop(corpus, vocab, model, state, tc, [&](const StepRecord& rec) {
    const double recon = tc.w_nll * rec.loss.nll + tc.w_con * rec.loss.contrastive +
                         tc.w_rank * rec.loss.rank;
    REQUIRE(std::fabs(rec.loss.total - recon) <= 1e-12);
  });
}

TEST_CASE("train: 500 NLL steps reduce the loss on the toy task") {
  const auto corpus = toytask::corpus(64, 21);
  const Vocabulary vocab = toytask::vocabulary();
  CorrectorModel model(toy_model_config(vocab), 9);
  TrainConfig tc = fast_config(8);
  tc.w_rank = 0;
  tc.w_con = 0;
  tc.steps = 500;
  tc.batch_size = 8;
  TrainState state = make_train_state(model, tc);
  train_loop(corpus, vocab, model, state, tc, [](const StepRecord&) {});
  double head = 0, tail = 0;
  for (int i = 0; i < 20; ++i) head += state.history[static_cast<std::size_t>(i)].loss.nll;
  for (int i = 0; i < 20; ++i)
    tail += state.history[state.history.size() - 1 - static_cast<std::size_t>(i)].loss.nll;
  REQUIRE(tail / 20.0 < head / 20.0);
}

TEST_CASE("train state round-trips through JSON") {
  const auto corpus = toytask::corpus(6, 33);
  const Vocabulary vocab = toytask::vocabulary();
  CorrectorModel model(toy_model_config(vocab), 19);
  TrainConfig tc = fast_config(10);
  tc.steps = 3;
  TrainState state = make_train_state(model, tc);
  train_loop(corpus, vocab, model, state, tc, [](const StepRecord&) {});

  const nlohmann::json j = train_state_to_json(state);
  const TrainState back = train_state_from_json(j, vocab, SegmentMode::CjkChar);
  REQUIRE(back.step == state.step);
  REQUIRE(back.rng.state() == state.rng.state());
  REQUIRE(back.adam_m.size() == state.adam_m.size());
  for (std::size_t i = 0; i < state.adam_m.size(); ++i) {
    REQUIRE(back.adam_m[i].values == state.adam_m[i].values);  // bitwise through JSON
    REQUIRE(back.adam_v[i].values == state.adam_v[i].values);
  }
  REQUIRE(back.mined.size() == state.mined.size());
}

TEST_CASE("resume: interrupted training reproduces the uninterrupted trajectory") {
  const auto corpus = toytask::corpus(10, 44);
  const Vocabulary vocab = toytask::vocabulary();

  // uninterrupted: 8 steps
  CorrectorModel full_model(toy_model_config(vocab), 23);
  TrainConfig tc = fast_config(12);
  tc.steps = 8;
  TrainState full_state = make_train_state(full_model, tc);
  train_loop(corpus, vocab, full_model, full_state, tc, [](const StepRecord&) {});

  // interrupted at 4, serialized, resumed to 8
  CorrectorModel part_model(toy_model_config(vocab), 23);
  TrainConfig tc_half = tc;
  tc_half.steps = 4;
  TrainState part_state = make_train_state(part_model, tc_half);
  train_loop(corpus, vocab, part_model, part_state, tc_half, [](const StepRecord&) {});

  nlohmann::json blob = train_state_to_json(part_state);
  nlohmann::json model_blob = checkpoint_to_json(part_model, vocab);
  Checkpoint restored = checkpoint_from_json(model_blob);
  TrainState resumed = train_state_from_json(blob, restored.vocab, SegmentMode::CjkChar);
  train_loop(corpus, restored.vocab, restored.model, resumed, tc, [](const StepRecord&) {});

  // byte-identical final parameters
  auto full_params = full_model.named_parameters();
  auto res_params = restored.model.named_parameters();
  REQUIRE(full_params.size() == res_params.size());
  for (std::size_t i = 0; i < full_params.size(); ++i) {
    REQUIRE(full_params[i].second->values == res_params[i].second->values);
  }
  REQUIRE(full_state.history.size() == resumed.history.size());
  for (std::size_t i = 4; i < 8; ++i)
    REQUIRE(full_state.history[i].loss.total == resumed.history[i].loss.total);
}
