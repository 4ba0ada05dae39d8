// Command-line front end: perturb, train, correct, evaluate, ablate-alpha,
// analyze. Exit code 0 on success; failures print a machine-readable error
// record to stderr and exit nonzero.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "textmend/pipeline.hpp"

namespace {

struct GlobalArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "run";
  std::optional<std::size_t> threads;
};

textmend::ExperimentConfig load_config(const GlobalArgs& g) {
  textmend::KvConfig kv =
      g.config_path.empty() ? textmend::KvConfig::parse("") : textmend::KvConfig::parse_file(g.config_path);
  textmend::ExperimentConfig cfg = textmend::ExperimentConfig::from_kv(kv);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.perturb.seed = *g.seed;
    cfg.train.seed = *g.seed;
  }
  if (g.threads) cfg.threads = *g.threads;
  return cfg;
}

std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> grid;
  std::string item;
  std::istringstream in(spec);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) grid.push_back(std::stod(item));
  }
  return grid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unnatural-text correction laboratory"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "sectioned key-value config file")->expected(1);
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--out", g.out_dir, "output directory");
  app.add_option("--threads", g.threads, "worker threads where supported");

  std::string input, corpus, checkpoint, pred, gold, resume, grid_spec = "0.3,0.4,0.5,0.6,0.7";
  std::optional<double> alpha_override;
  std::optional<std::size_t> beam_override;

  auto* perturb = app.add_subcommand("perturb", "build an adversarial parallel corpus");
  perturb->fallthrough();
  perturb->add_option("--input", input, "clean text, one sentence per line")->required();

  auto* train = app.add_subcommand("train", "train the corrector");
  train->fallthrough();
  train->add_option("--corpus", corpus, "parallel corpus JSONL")->required();
  train->add_option("--resume", resume, "previous run directory to resume from");

  auto* correct = app.add_subcommand("correct", "decode corrections for input sentences");
  correct->fallthrough();
  correct->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  correct->add_option("--input", input, "text or corpus JSONL to correct")->required();
  correct->add_option("--alpha", alpha_override, "decoding intervention weight");
  correct->add_option("--beam-width", beam_override, "beam width");

  auto* evaluate = app.add_subcommand("evaluate", "score predictions against references");
  evaluate->fallthrough();
  evaluate->add_option("--pred", pred, "predictions (corrected JSONL or text)")->required();
  evaluate->add_option("--gold", gold, "references (corpus JSONL or text)")->required();

  auto* ablate = app.add_subcommand("ablate-alpha", "sweep the intervention weight");
  ablate->fallthrough();
  ablate->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  ablate->add_option("--dev", corpus, "dev corpus JSONL")->required();
  ablate->add_option("--grid", grid_spec, "comma-separated alpha grid");

  auto* analyze = app.add_subcommand("analyze", "over/under-corrections per perturbation kind");
  analyze->fallthrough();
  analyze->add_option("--pred", pred, "predictions (corrected JSONL or text)")->required();
  analyze->add_option("--gold", gold, "corpus JSONL with edit scripts")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    textmend::ExperimentConfig cfg = load_config(g);
    if (alpha_override) cfg.decode.alpha = *alpha_override;
    if (beam_override) cfg.decode.beam_width = *beam_override;

    if (perturb->parsed()) {
      const textmend::CorpusStats stats = textmend::cmd_perturb(input, cfg, g.out_dir);
      std::cout << textmend::stats_to_json(stats).dump(2) << "\n";
    } else if (train->parsed()) {
      const textmend::TrainOutcome out = textmend::cmd_train(corpus, cfg, g.out_dir, resume);
      std::cout << "trained " << out.state.step << " steps; final checkpoint in " << g.out_dir
                << "\n";
    } else if (correct->parsed()) {
      const auto rows = textmend::cmd_correct(checkpoint, input, cfg, g.out_dir);
      std::cout << "corrected " << rows.size() << " sentences -> " << g.out_dir
                << "/corrected.jsonl\n";
    } else if (evaluate->parsed()) {
      const textmend::EvalReport rep = textmend::cmd_evaluate(pred, gold, cfg, g.out_dir);
      std::cout << textmend::report_to_table(rep);
    } else if (ablate->parsed()) {
      const auto rows = textmend::cmd_ablate_alpha(checkpoint, corpus, parse_grid(grid_spec), cfg,
                                                   g.out_dir);
      for (const auto& r : rows)
        std::cout << "alpha " << r.alpha << "  bleu " << r.bleu << "  f1 " << r.f1 << "\n";
    } else if (analyze->parsed()) {
      const auto table = textmend::cmd_analyze(pred, gold, cfg, g.out_dir);
      for (const auto& [kind, row] : table)
        std::cout << kind << "\tover " << row.over << "\tunder " << row.under << "\n";
    }
  } catch (const std::exception& e) {
    const nlohmann::json err = {{"error", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
