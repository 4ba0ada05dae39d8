// Acceptance suite: runs every top-level criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exit code is the number of
// failed criteria. Criterion 6 is the end-to-end toy experiment; its arm
// numbers are printed regardless of outcome.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "support/toytask.hpp"
#include "textmend/pipeline.hpp"

using namespace textmend;
namespace fs = std::filesystem;

namespace {

std::string g_fixtures = "data/fixtures";
std::string g_work = "acceptance_work";

struct Outcome {
  bool pass = false;
  std::string detail;
};

Sentence cjk(const std::string& s) { return segment(s, SegmentMode::CjkChar); }

// ---------------------------------------------------------------------------
// 1. Gradient integrity of the full composite loss

Outcome criterion_gradient_integrity() {
  ModelConfig mc;
  mc.vocab_size = 12;
  mc.embed_dim = 8;
  mc.hidden_dim = 8;
  CorrectorModel model(mc, 20240811);
  Vocabulary vocab;
  for (char c : {'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h'}) vocab.add(std::string(1, c));

  ParallelPair pair;
  pair.source = cjk("aheb");
  pair.target = cjk("abcd");

  TrainConfig tc;
  tc.beam_k = 12;
  tc.max_decode_length = 5;
  const RankedCandidateSet ranked = mine_negatives(pair, vocab, model, tc);
  if (ranked.negative_count() == 0) return {false, "mining produced no negatives"};

  LossConfig lc;
  lc.w_nll = 1.0;
  lc.w_con = 1.0;
  lc.w_rank = 1.0;
  lc.tau = 0.1;
  lc.gamma = 0.01;

  for (Tensor* p : model.parameters()) p->zero_grad();
  {
    Tape tape;
    const BoundModel bound = model.bind(tape);
    const TotalLossVars loss = total_loss_on(tape, model, bound.vars, vocab, pair, ranked, lc);
    tape.backward(loss.total);
    bound.accumulate_grads(tape);
  }
  const std::vector<Tensor*> params = model.parameters();
  const auto value = [&]() { return total_loss(model, vocab, pair, ranked, lc).total; };
  const GradCheckResult r = grad_check(value, params, 1e-5);

  std::ostringstream os;
  os << "max relative error " << r.max_rel_error << " over " << model.parameter_count()
     << " parameters (tolerance 1e-5)";
  return {r.max_rel_error <= 1e-5, os.str()};
}

// ---------------------------------------------------------------------------
// 2. Perturbation budget statistics vs an independent Monte-Carlo oracle

Outcome criterion_budget() {
  const int draws = 100000;
  std::ostringstream os;
  bool pass = true;
  for (const std::size_t e : {1ul, 7ul, 20ul, 40ul}) {
    Rng rng = substream(7, "budget", e);
    double sum = 0, sq = 0;
    for (int i = 0; i < draws; ++i) {
      const std::size_t d = sample_budget(e, rng);
      if (d < 1 || d > e) return {false, "delta out of [1, e]"};
      sum += static_cast<double>(d);
      sq += static_cast<double>(d) * static_cast<double>(d);
    }
    const double mean = sum / draws;
    const double var = sq / draws - mean * mean;

    std::mt19937_64 gen(1000 + e);
    std::normal_distribution<double> dist(std::max(1.0, 0.15 * static_cast<double>(e)), 1.0);
    double osum = 0, osq = 0;
    for (int i = 0; i < draws; ++i) {
      const long long t = static_cast<long long>(dist(gen));
      const double d = static_cast<double>(
          std::min<long long>(std::max<long long>(t, 1), static_cast<long long>(e)));
      osum += d;
      osq += d * d;
    }
    const double omean = osum / draws;
    const double ovar = osq / draws - omean * omean;

    const bool ok = std::fabs(mean - omean) <= 0.05 && std::fabs(var - ovar) <= 0.1;
    pass = pass && ok;
    os << "e=" << e << " mean " << mean << " vs " << omean << ", var " << var << " vs " << ovar
       << (ok ? "; " : " [out of tolerance]; ");
  }
  return {pass, os.str()};
}

// ---------------------------------------------------------------------------
// 3. Metric oracles

Outcome criterion_metric_oracles() {
  Rng rng(90210);
  auto random_units = [&](std::size_t min_len) {
    std::string s;
    const std::size_t len = min_len + rng.below(12 - min_len + 1);
    for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng.below(5)));
    return s;
  };
  for (int trial = 0; trial < 200; ++trial) {
    const Sentence gen = cjk(random_units(1));
    const Sentence ref = cjk(random_units(2));
    if (std::fabs(rouge_n(gen, ref, 1) - oracles::rouge_n(gen.units(), ref.units(), 1)) > 1e-12)
      return {false, "rouge-1 disagrees"};
    if (std::fabs(rouge_n(gen, ref, 2) - oracles::rouge_n(gen.units(), ref.units(), 2)) > 1e-12)
      return {false, "rouge-2 disagrees"};
    if (std::fabs(rouge_l(gen, ref) - oracles::rouge_l(gen.units(), ref.units())) > 1e-12)
      return {false, "rouge-l disagrees"};
    if (std::fabs(bleu(gen, ref) - oracles::bleu(gen.units(), ref.units())) > 1e-12)
      return {false, "bleu disagrees"};
  }

  // accuracy and sentence-level P/R/F1 on random triples
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EvalTriple> rows;
    std::vector<std::array<std::string, 3>> raw;
    const std::size_t n = 3 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string s = random_units(1), o = random_units(1), t = random_units(1);
      rows.push_back({cjk(s), cjk(o), cjk(t)});
      raw.push_back({s, o, t});
    }
    const PrfScores mine = sentence_correction_prf(rows);
    const oracles::Prf ref = oracles::prf(raw);
    if (std::fabs(mine.precision - ref.p) > 1e-12 || std::fabs(mine.recall - ref.r) > 1e-12 ||
        std::fabs(mine.f1 - ref.f1) > 1e-12)
      return {false, "P/R/F1 disagrees"};
    if (std::fabs(accuracy(rows) - oracles::accuracy(raw)) > 1e-12)
      return {false, "accuracy disagrees"};
  }

  // hand-labeled over/under fixture, matched exactly
  std::ifstream in(g_fixtures + "/over_under_cases.tsv");
  if (!in) return {false, "fixture missing: " + g_fixtures + "/over_under_cases.tsv"};
  std::string line;
  int cases = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const OverUnder ou = over_under_counts(cjk(cols[0]), cjk(cols[1]), cjk(cols[2]));
    if (ou.over != std::stoul(cols[3]) || ou.under != std::stoul(cols[4]))
      return {false, "over/under fixture case " + std::to_string(cases) + " mismatched"};
    ++cases;
  }
  if (cases != 20) return {false, "expected 20 fixture cases, found " + std::to_string(cases)};
  return {true, "200 random metric pairs within 1e-12; 20-case fixture exact"};
}

// ---------------------------------------------------------------------------
// 4. Decoding equivalences

Outcome criterion_decoding() {
  Rng rng(5150);
  // (a) alpha = 0 intervened beam vs reference beam, bitwise, 100 inputs
  for (int trial = 0; trial < 100; ++trial) {
    Vocabulary vocab;
    const std::size_t units = 3 + rng.below(4);
    for (std::size_t i = 0; i < units; ++i) vocab.add(std::string(1, static_cast<char>('a' + i)));
    ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.embed_dim = 6;
    mc.hidden_dim = 6;
    CorrectorModel model(mc, 9000 + trial);
    std::string text;
    const std::size_t len = 1 + rng.below(6);
    for (std::size_t i = 0; i < len; ++i)
      text.push_back(static_cast<char>('a' + rng.below(units)));

    DecodeConfig dc;
    dc.beam_width = 4;
    dc.alpha = 0.0;
    dc.max_length = 7;
    const BeamSearchResult mine = intervened_beam_search(cjk(text), vocab, model, dc);
    const auto ref = oracles::ref_beam_search(model, vocab, cjk(text), 4, 7);
    if (mine.beam.size() != ref.size()) return {false, "beam size mismatch"};
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (mine.beam[i].ids != ref[i].ids || mine.beam[i].log_prob != ref[i].log_prob)
        return {false, "alpha=0 beam differs from the reference on input " + text};
    }

    // (b) G=1 diverse equals standard top-K on the same input
    DecodeConfig dd = dc;
    dd.diversity_groups = 1;
    const auto diverse = diverse_beam_search(cjk(text), vocab, model, dd);
    if (diverse.size() != ref.size()) return {false, "G=1 diverse size mismatch"};
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (diverse[i].ids != ref[i].ids || diverse[i].log_prob != ref[i].log_prob)
        return {false, "G=1 diverse differs from standard top-K"};
    }
  }

  // (c) K=4 diverse beam scores vs exhaustive enumeration on a |V|=6 model
  Vocabulary vocab;
  vocab.add("a");
  vocab.add("b");
  ModelConfig mc;
  mc.vocab_size = vocab.size();  // 6
  mc.embed_dim = 6;
  mc.hidden_dim = 6;
  for (int seed = 0; seed < 5; ++seed) {
    CorrectorModel model(mc, 777 + seed);
    DecodeConfig dc;
    dc.beam_width = 4;
    dc.diversity_groups = 0;  // G = K
    dc.alpha = 0.0;
    dc.max_length = 4;
    const auto out = diverse_beam_search(cjk("ab"), vocab, model, dc);
    const auto all = oracles::enumerate_sequences(model, vocab, cjk("ab"), 4);
    for (const auto& cand : out) {
      bool found = false;
      for (const auto& seq : all) {
        if (seq.ids == cand.ids) {
          found = true;
          if (std::fabs(seq.log_prob - cand.log_prob) > 1e-12)
            return {false, "diverse beam score differs from enumeration"};
          break;
        }
      }
      if (!found) return {false, "diverse beam produced a sequence enumeration lacks"};
    }
  }
  return {true, "alpha=0 bitwise x100; G=1 reduction x100; K=4 scores match enumeration x5 seeds"};
}

// ---------------------------------------------------------------------------
// 5. Round-trip perturbation and byte-identical corpus builds

Outcome criterion_roundtrip() {
  const std::vector<std::string> lines = toytask::clean_lines(10000, 3141);
  PerturbConfig pc = toytask::perturb_config(57);
  // mixed kinds exercise inserts, deletes, swaps, and opaque spans
  pc.kinds = {{PerturbKind::Visual, 2.0},
              {PerturbKind::Delete, 0.4},
              {PerturbKind::Insert, 0.4},
              {PerturbKind::Swap, 0.4},
              {PerturbKind::Charswap, 0.4}};
  const ResourceSet res = toytask::resources();

  CorpusStats s1, s2;
  const auto a = build_parallel_corpus(lines, pc, res, SegmentMode::CjkChar, s1, 1);
  const auto b = build_parallel_corpus(lines, pc, res, SegmentMode::CjkChar, s2, 3);
  if (a.size() != 10000) return {false, "expected 10000 pairs"};

  std::size_t replayed = 0;
  std::string dump_a, dump_b;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const ParallelPair& pair = a[i].pair;
    const Sentence replay = apply_ops(pair.target, pair.ops.value());
    if (!(replay == pair.source))
      return {false, "replay mismatch at pair " + std::to_string(i)};
    ++replayed;
    dump_a += pair_to_json(pair).dump() + "\n";
    dump_b += pair_to_json(b[i].pair).dump() + "\n";
  }
  if (dump_a != dump_b) return {false, "rebuild with the same seed differs byte-for-byte"};
  return {true, std::to_string(replayed) + " pairs replay exactly; rebuild byte-identical"};
}

// ---------------------------------------------------------------------------
// 6. End-to-end toy experiment: NLL vs ranking loss vs +intervention

struct ArmNumbers {
  double f1 = 0.0;
  double bleu = 0.0;
  std::size_t over = 0;
  std::size_t under = 0;
};

ArmNumbers measure(const std::vector<ParallelPair>& rows, CorrectorModel& model,
                   const Vocabulary& vocab, const DecodeConfig& dc) {
  std::vector<Sentence> sources, targets;
  for (const auto& p : rows) {
    sources.push_back(p.source);
    targets.push_back(p.target);
  }
  const std::vector<CorrectedRow> pred = correct_sentences(sources, model, vocab, dc);
  const EvalReport rep = evaluate_rows(pred, targets, SegmentMode::CjkChar, EvalOptions{false});
  return {rep.f1, rep.bleu, rep.overcorrections, rep.undercorrections};
}

Outcome criterion_toy_experiment() {
  const std::vector<double> grid = {0.3, 0.4, 0.5, 0.6, 0.7};
  const std::vector<std::uint64_t> seeds = {101, 202, 303};
  const Vocabulary vocab = toytask::vocabulary();

  bool over_ok = true;
  double mean_f1_a = 0, mean_f1_c = 0;
  std::ostringstream os;
  os << "\n";

  for (const std::uint64_t seed : seeds) {
    const auto train_pairs = toytask::corpus(2000, seed, "toy-train");
    const auto heldout = toytask::corpus(500, seed, "toy-heldout");
    const std::vector<ParallelPair> dev(heldout.begin(), heldout.begin() + 250);
    const std::vector<ParallelPair> test(heldout.begin() + 250, heldout.end());

    ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.embed_dim = 20;
    mc.hidden_dim = 20;

    TrainConfig base;
    base.seed = seed;
    base.learning_rate = 3e-3;
    base.batch_size = 8;
    base.steps = 3500;  // both arms trained to NLL convergence
    base.warmup_steps = 30;
    base.beam_k = 12;
    base.gamma = 0.01;
    base.tau = 0.1;
    base.max_decode_length = 16;

    // arm a: NLL only
    TrainConfig cfg_a = base;
    cfg_a.w_rank = 0.0;
    cfg_a.w_con = 0.0;
    CorrectorModel model_a(mc, seed);
    TrainState state_a = make_train_state(model_a, cfg_a);
    train_loop(train_pairs, vocab, model_a, state_a, cfg_a, [](const StepRecord&) {});

    // arm b: NLL + ranking loss
    TrainConfig cfg_b = base;
    cfg_b.w_rank = 1.0;
    cfg_b.w_con = 0.0;
    CorrectorModel model_b(mc, seed);
    TrainState state_b = make_train_state(model_b, cfg_b);
    train_loop(train_pairs, vocab, model_b, state_b, cfg_b, [](const StepRecord&) {});

    DecodeConfig plain;
    plain.beam_width = 12;
    plain.alpha = 0.0;
    plain.max_length = 16;

    const ArmNumbers a = measure(test, model_a, vocab, plain);
    const ArmNumbers b = measure(test, model_b, vocab, plain);

    // arm c: arm b's model + intervention, alpha tuned on the dev split
    double best_alpha = grid.front();
    double best_f1 = -1.0;
    for (const double alpha : grid) {
      DecodeConfig dc = plain;
      dc.alpha = alpha;
      const ArmNumbers dev_run = measure(dev, model_b, vocab, dc);
      if (dev_run.f1 > best_f1 || (dev_run.f1 == best_f1 && alpha > best_alpha)) {
        best_f1 = dev_run.f1;
        best_alpha = alpha;
      }
    }
    DecodeConfig dc_c = plain;
    dc_c.alpha = best_alpha;
    const ArmNumbers c = measure(test, model_b, vocab, dc_c);

    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "    seed %llu: a(F1 %.4f over %zu under %zu) b(F1 %.4f over %zu) "
                  "c(alpha %.1f F1 %.4f over %zu under %zu)\n",
                  static_cast<unsigned long long>(seed), a.f1, a.over, a.under, b.f1, b.over,
                  best_alpha, c.f1, c.over, c.under);
    os << buf;

    over_ok = over_ok && (c.over <= a.over);
    mean_f1_a += a.f1 / static_cast<double>(seeds.size());
    mean_f1_c += c.f1 / static_cast<double>(seeds.size());
  }

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "    mean F1: arm a %.4f, arm c %.4f (threshold: c >= a - 0.01); "
                "overcorrections c <= a on every seed: %s",
                mean_f1_a, mean_f1_c, over_ok ? "yes" : "NO");
  os << buf;
  const bool f1_ok = mean_f1_c >= mean_f1_a - 0.01;
  return {over_ok && f1_ok, os.str()};
}

// ---------------------------------------------------------------------------
// 7. Ablation harness fidelity

Outcome criterion_ablation_fidelity() {
  const std::string work = g_work + "/ablation";
  fs::remove_all(work);
  fs::create_directories(work);

  // build a micro corpus + checkpoint through the commands themselves
  {
    std::ofstream out(work + "/clean.txt", std::ios::binary);
    for (const auto& line : toytask::clean_lines(300, 7)) out << line << "\n";
  }
  std::ostringstream cfg_text;
  cfg_text << "seed = 7\nmode = cjk-char\n[perturb]\nkinds = visual:1\nresources = " << g_fixtures
           << "/toy_manifest.tsv\n[train]\nsteps = 150\nbatch_size = 8\nbeam_k = 4\n"
           << "embed_dim = 16\nhidden_dim = 16\nw_rank = 0\nmax_decode_length = 16\n"
           << "learning_rate = 0.002\n[decode]\nbeam_width = 8\nmax_length = 16\n";
  const ExperimentConfig cfg = ExperimentConfig::from_kv(KvConfig::parse(cfg_text.str()));

  cmd_perturb(work + "/clean.txt", cfg, work + "/p");
  cmd_train(work + "/p/corpus.jsonl", cfg, work + "/t");

  // 40-pair dev slice
  {
    const auto lines = io::read_lines(work + "/p/corpus.jsonl");
    std::ofstream out(work + "/dev.jsonl", std::ios::binary);
    for (std::size_t i = 0; i < 40 && i < lines.size(); ++i) out << lines[i] << "\n";
  }

  const std::vector<double> grid = {0.3, 0.4, 0.5, 0.6, 0.7};
  const auto rows = cmd_ablate_alpha(work + "/t/checkpoint_final.json", work + "/dev.jsonl", grid,
                                     cfg, work + "/ab");
  if (rows.size() != grid.size())
    return {false, "expected one row per grid point, got " + std::to_string(rows.size())};

  for (std::size_t i = 0; i < grid.size(); ++i) {
    ExperimentConfig redo = cfg;
    redo.decode.alpha = grid[i];
    cmd_correct(work + "/t/checkpoint_final.json", work + "/dev.jsonl", redo,
                work + "/c" + std::to_string(i));
    const EvalReport rep = cmd_evaluate(work + "/c" + std::to_string(i) + "/corrected.jsonl",
                                        work + "/dev.jsonl", redo, work + "/e" + std::to_string(i));
    if (rows[i].alpha != grid[i] || rows[i].bleu != rep.bleu || rows[i].f1 != rep.f1)
      return {false, "row for alpha " + std::to_string(grid[i]) +
                         " not reproduced exactly by correct+evaluate"};
  }
  return {true, "5 grid rows reproduced exactly by independent correct+evaluate runs"};
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--fixtures") g_fixtures = argv[i + 1];
    if (flag == "--work") g_work = argv[i + 1];
  }
  fs::create_directories(g_work);

  struct Criterion {
    std::string name;
    std::function<Outcome()> run;
    double budget_seconds;
  };
  const std::vector<Criterion> criteria = {
      {"1. gradient integrity of the composite loss", criterion_gradient_integrity, 60},
      {"2. perturbation budget statistics", criterion_budget, 30},
      {"3. metric oracles and over/under fixture", criterion_metric_oracles, 0},
      {"4. decoding equivalences", criterion_decoding, 0},
      {"5. perturbation round-trip and byte-identical builds", criterion_roundtrip, 0},
      {"6. end-to-end toy experiment", criterion_toy_experiment, 1800},
      {"7. ablation harness fidelity", criterion_ablation_fidelity, 0},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = out.pass;
    std::string note = out.detail;
    if (c.budget_seconds > 0 && secs > c.budget_seconds) {
      pass = false;
      note += " [runtime " + std::to_string(secs) + "s exceeds budget " +
              std::to_string(c.budget_seconds) + "s]";
    }
    std::printf("[%s] %s (%.1fs) %s\n", pass ? "PASS" : "FAIL", c.name.c_str(), secs,
                note.c_str());
    std::fflush(stdout);
    failures += !pass;
  }
  return failures;
}
