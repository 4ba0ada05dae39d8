#pragma once

// Experiment harness: sectioned key-value configs (archived verbatim),
// JSONL corpus/prediction schemas, run manifests with input/artifact
// digests, and the command drivers behind the CLI: perturb, train, correct,
// evaluate, ablate-alpha, analyze.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "textmend/decode.hpp"
#include "textmend/metrics.hpp"
#include "textmend/model.hpp"
#include "textmend/perturb.hpp"
#include "textmend/train.hpp"

namespace textmend {

// ---------------------------------------------------------------------------
// Config file: "key = value" lines grouped by [section]; '#' comments.

class KvConfig {
 public:
  static KvConfig parse(const std::string& text) {
    KvConfig cfg;
    cfg.raw_ = text;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      if (t.front() == '[' && t.back() == ']') {
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const std::size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
      cfg.values_[section][trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return cfg;
  }

  static KvConfig parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("config not readable: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& section, const std::string& key) const {
    auto s = values_.find(section);
    return s != values_.end() && s->second.count(key) != 0;
  }

  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback = "") const {
    auto s = values_.find(section);
    if (s == values_.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
  }

  double get_double(const std::string& section, const std::string& key, double fallback) const {
    const std::string v = get(section, key);
    return v.empty() ? fallback : std::stod(v);
  }

  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const {
    const std::string v = get(section, key);
    return v.empty() ? fallback : std::stoll(v);
  }

  bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const std::string v = get(section, key);
    if (v.empty()) return fallback;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error("config: bad boolean '" + v + "' for " + section + "." + key);
  }

  const std::string& raw() const noexcept { return raw_; }

  void set(const std::string& section, const std::string& key, const std::string& value) {
    values_[section][key] = value;
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    std::size_t e = s.find_last_not_of(" \t");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }

  std::string raw_;
  std::map<std::string, std::map<std::string, std::string>> values_;
};

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  SegmentMode mode = SegmentMode::CjkChar;
  PerturbConfig perturb;
  TrainConfig train;
  DecodeConfig decode;
  ModelConfig model;  // vocab_size filled from the corpus
  EvalOptions eval;
  std::string resources_manifest;
  std::string raw_text;  // archived verbatim

  static ExperimentConfig from_kv(const KvConfig& kv) {
    ExperimentConfig c;
    c.raw_text = kv.raw();
    c.seed = static_cast<std::uint64_t>(kv.get_int("", "seed", 42));
    c.threads = static_cast<std::size_t>(kv.get_int("", "threads", 1));
    c.mode = segment_mode_from(kv.get("", "mode", "cjk-char"));

    const std::string kinds = kv.get("perturb", "kinds", "visual:1");
    c.perturb.kinds = parse_kinds(kinds);
    c.perturb.mask_rate = kv.get_double("perturb", "mask_rate", 0.15);
    c.perturb.embedding_floor = kv.get_double("perturb", "embedding_floor", 0.8);
    c.perturb.max_kind_retries =
        static_cast<std::size_t>(kv.get_int("perturb", "max_kind_retries", 4));
    c.perturb.test_fraction = kv.get_double("perturb", "test_fraction", 0.0);
    c.perturb.seed = c.seed;
    c.resources_manifest = kv.get("perturb", "resources", "");

    c.train.learning_rate = kv.get_double("train", "learning_rate", 1e-3);
    c.train.batch_size = static_cast<std::size_t>(kv.get_int("train", "batch_size", 8));
    c.train.steps = static_cast<std::size_t>(kv.get_int("train", "steps", 500));
    c.train.warmup_steps = static_cast<std::size_t>(kv.get_int("train", "warmup_steps", 0));
    c.train.beam_k = static_cast<std::size_t>(kv.get_int("train", "beam_k", 12));
    c.train.gamma = kv.get_double("train", "gamma", 0.01);
    c.train.tau = kv.get_double("train", "tau", 0.1);
    c.train.alpha = kv.get_double("train", "alpha", 0.0);
    c.train.w_nll = kv.get_double("train", "w_nll", 1.0);
    c.train.w_con = kv.get_double("train", "w_con", 0.0);
    c.train.w_rank = kv.get_double("train", "w_rank", 1.0);
    c.train.mining_interval = static_cast<std::size_t>(kv.get_int("train", "mining_interval", 1));
    c.train.checkpoint_every = static_cast<std::size_t>(kv.get_int("train", "checkpoint_every", 0));
    c.train.max_decode_length =
        static_cast<std::size_t>(kv.get_int("train", "max_decode_length", 24));
    c.train.diversity_penalty = kv.get_double("train", "diversity_penalty", 0.5);
    c.train.seed = c.seed;

    c.model.embed_dim = static_cast<std::size_t>(kv.get_int("train", "embed_dim", 16));
    c.model.hidden_dim = static_cast<std::size_t>(kv.get_int("train", "hidden_dim", 16));
    c.model.bidirectional = kv.get_bool("train", "bidirectional", false);

    c.decode.beam_width = static_cast<std::size_t>(kv.get_int("decode", "beam_width", 12));
    c.decode.diversity_groups =
        static_cast<std::size_t>(kv.get_int("decode", "diversity_groups", 0));
    c.decode.diversity_penalty = kv.get_double("decode", "diversity_penalty", 0.5);
    c.decode.alpha = kv.get_double("decode", "alpha", 0.5);
    c.decode.max_length = static_cast<std::size_t>(kv.get_int("decode", "max_length", 32));
    c.decode.length_normalize = kv.get_bool("decode", "length_normalize", false);

    c.eval.per_row_details = kv.get_bool("eval", "per_row_details", true);
    return c;
  }

  static std::vector<std::pair<PerturbKind, double>> parse_kinds(const std::string& listing) {
    std::vector<std::pair<PerturbKind, double>> kinds;
    std::istringstream in(listing);
    std::string item;
    while (std::getline(in, item, ',')) {
      std::size_t b = item.find_first_not_of(" \t");
      std::size_t e = item.find_last_not_of(" \t");
      if (b == std::string::npos) continue;
      item = item.substr(b, e - b + 1);
      const std::size_t colon = item.find(':');
      double weight = 1.0;
      std::string name = item;
      if (colon != std::string::npos) {
        name = item.substr(0, colon);
        weight = std::stod(item.substr(colon + 1));
      }
      kinds.emplace_back(perturb_kind_from(name), weight);
    }
    return kinds;
  }
};

// ---------------------------------------------------------------------------
// File helpers, digests, manifests

namespace io {

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("input not readable: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("input not readable: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << content;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

inline std::string digest_file(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

}  // namespace io

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::map<std::string, std::string> inputs;     // path -> digest
  std::map<std::string, std::string> artifacts;  // path -> digest
  double timing_ms = 0.0;
  std::string status = "ok";

  nlohmann::json to_json() const {
    return {{"command", command}, {"config_hash", config_hash}, {"inputs", inputs},
            {"artifacts", artifacts}, {"timing_ms", timing_ms}, {"status", status}};
  }
};

// Archives the effective config and the manifest next to a command's outputs.
class RunContext {
 public:
  RunContext(std::string command, const ExperimentConfig& config, std::string out_dir)
      : out_dir_(std::move(out_dir)), start_(std::chrono::steady_clock::now()) {
    std::filesystem::create_directories(out_dir_);
    manifest_.command = std::move(command);
    manifest_.config_hash = io::hex64(fnv1a64(config.raw_text));
    io::write_file(path("config_archive.txt"), config.raw_text);
  }

  std::string path(const std::string& name) const { return out_dir_ + "/" + name; }

  void note_input(const std::string& p) { manifest_.inputs[p] = io::digest_file(p); }

  void write_artifact(const std::string& name, const std::string& content) {
    io::write_file(path(name), content);
    manifest_.artifacts[name] = io::hex64(fnv1a64(content));
  }

  void finish() {
    manifest_.timing_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start_)
                              .count();
    io::write_file(path("manifest.json"), manifest_.to_json().dump(2) + "\n");
  }

  const RunManifest& manifest() const noexcept { return manifest_; }

 private:
  std::string out_dir_;
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Corpus serialization

inline nlohmann::json pair_to_json(const ParallelPair& pair) {
  nlohmann::json ops = nlohmann::json::array();
  if (pair.ops) {
    for (const auto& op : *pair.ops)
      ops.push_back({{"kind", std::string(to_string(op.kind))},
                     {"pos", op.pos},
                     {"orig", op.orig},
                     {"repl", op.repl}});
  }
  return {{"source", pair.source.raw()},
          {"target", pair.target.raw()},
          {"ops", std::move(ops)},
          {"flags", pair.flags}};
}

inline ParallelPair pair_from_json(const nlohmann::json& j, SegmentMode mode) {
  ParallelPair p;
  p.source = segment(j.at("source").get<std::string>(), mode);
  p.target = segment(j.at("target").get<std::string>(), mode);
  EditScript script;
  for (const auto& oj : j.at("ops")) {
    PerturbOp op;
    op.kind = perturb_kind_from(oj.at("kind").get<std::string>());
    op.pos = oj.at("pos").get<std::size_t>();
    op.orig = oj.at("orig").get<std::string>();
    op.repl = oj.at("repl").get<std::string>();
    script.push_back(std::move(op));
  }
  p.ops = std::move(script);
  p.flags = j.at("flags").get<std::vector<std::string>>();
  return p;
}

inline std::vector<ParallelPair> load_corpus(const std::string& path, SegmentMode mode) {
  std::vector<ParallelPair> pairs;
  std::size_t lineno = 0;
  for (const auto& line : io::read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      pairs.push_back(pair_from_json(nlohmann::json::parse(line), mode));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pairs;
}

inline Vocabulary build_vocab(const std::vector<ParallelPair>& pairs) {
  Vocabulary vocab;
  for (const auto& p : pairs) {
    for (const auto& u : p.target.units()) vocab.add(u);
    for (const auto& u : p.source.units()) vocab.add(u);
  }
  return vocab;
}

inline nlohmann::json stats_to_json(const CorpusStats& stats) {
  return {{"lines_read", stats.lines_read},
          {"pairs_emitted", stats.pairs_emitted},
          {"skipped_malformed", stats.skipped_malformed},
          {"skipped_empty", stats.skipped_empty},
          {"train", stats.train_count},
          {"test", stats.test_count},
          {"pos", stats.pos_pairs},
          {"neg", stats.neg_pairs},
          {"ops_by_kind", stats.ops_by_kind}};
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"source", r.source},   {"output", r.output},   {"target", r.target},
                    {"changed", r.changed}, {"corrected", r.corrected}, {"positive", r.positive},
                    {"rouge1", r.rouge1},   {"rouge2", r.rouge2},   {"rougeL", r.rougeL},
                    {"bleu", r.bleu},       {"over", r.over},       {"under", r.under}});
  }
  return {{"precision", rep.precision},
          {"recall", rep.recall},
          {"f1", rep.f1},
          {"accuracy", rep.accuracy},
          {"rouge1", rep.rouge1},
          {"rouge2", rep.rouge2},
          {"rougeL", rep.rougeL},
          {"bleu", rep.bleu},
          {"overcorrections", rep.overcorrections},
          {"undercorrections", rep.undercorrections},
          {"rows", std::move(rows)}};
}

inline std::string report_to_table(const EvalReport& rep) {
  char buf[256];
  std::ostringstream os;
  os << "              Pre      F1\n";
  std::snprintf(buf, sizeof(buf), "overall     %6.2f  %6.2f\n", rep.precision * 100.0,
                rep.f1 * 100.0);
  os << buf;
  os << "\n";
  std::snprintf(buf, sizeof(buf),
                "recall %.4f  accuracy %.4f\nrouge1 %.4f  rouge2 %.4f  rougeL %.4f  bleu %.4f\n"
                "overcorrections %zu  undercorrections %zu  rows %zu\n",
                rep.recall, rep.accuracy, rep.rouge1, rep.rouge2, rep.rougeL, rep.bleu,
                rep.overcorrections, rep.undercorrections, rep.rows.size());
  os << buf;
  return os.str();
}

// ---------------------------------------------------------------------------
// Shared command cores (ablate-alpha reruns must match these exactly)

struct CorrectedRow {
  std::string source;
  std::string output;
  double score = 0.0;
  bool forced = false;
};

inline std::vector<CorrectedRow> correct_sentences(const std::vector<Sentence>& sources,
                                                   CorrectorModel& model, const Vocabulary& vocab,
                                                   const DecodeConfig& config) {
  std::vector<CorrectedRow> rows;
  rows.reserve(sources.size());
  for (const auto& src : sources) {
    CorrectedRow row;
    row.source = src.raw();
    if (src.empty()) {
      row.output = src.raw();  // nothing to decode
    } else {
      const BeamSearchResult r = intervened_beam_search(src, vocab, model, config);
      row.output = r.best.sentence.raw();
      row.score = r.best.score;
      row.forced = r.best.forced;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline EvalReport evaluate_rows(const std::vector<CorrectedRow>& pred,
                                const std::vector<Sentence>& targets, SegmentMode mode,
                                const EvalOptions& opts) {
  if (pred.size() != targets.size())
    throw std::runtime_error("evaluate: row-count mismatch: " + std::to_string(pred.size()) +
                             " predictions vs " + std::to_string(targets.size()) + " references");
  std::vector<EvalTriple> triples;
  triples.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    EvalTriple t;
    t.source = segment(pred[i].source, mode);
    t.output = segment(pred[i].output, mode);
    t.target = targets[i];
    triples.push_back(std::move(t));
  }
  return evaluate(triples, opts);
}

// ---------------------------------------------------------------------------
// Commands

// Builds the adversarial corpus. Fails up front, by name, when an enabled
// table-driven kind has no table in the manifest.
inline CorpusStats cmd_perturb(const std::string& input_path, const ExperimentConfig& config,
                               const std::string& out_dir) {
  RunContext ctx("perturb", config, out_dir);
  ctx.note_input(input_path);

  ResourceSet resources;
  if (!config.resources_manifest.empty()) {
    ctx.note_input(config.resources_manifest);
    resources = ResourceSet::load_manifest(config.resources_manifest);
  }
  for (const auto& [kind, weight] : config.perturb.kinds) {
    if (weight <= 0.0) continue;
    switch (kind) {
      case PerturbKind::Insert:
      case PerturbKind::Swap:
      case PerturbKind::Delete:
      case PerturbKind::Charswap:
        continue;
      default: {
        const ResourceKind rk = detail::table_for(kind);
        if (!resources.has(rk))
          throw std::runtime_error("perturb kind '" + std::string(to_string(kind)) +
                                   "' requires resource table '" + std::string(to_string(rk)) +
                                   "' which is not in the manifest");
      }
    }
  }

  const std::vector<std::string> lines = io::read_lines(input_path);
  CorpusStats stats;
  const std::vector<BuiltPair> built =
      build_parallel_corpus(lines, config.perturb, resources, config.mode, stats, config.threads);

  std::string train_out, test_out;
  for (const auto& bp : built) {
    (bp.is_test ? test_out : train_out) += pair_to_json(bp.pair).dump() + "\n";
  }
  ctx.write_artifact("corpus.jsonl", train_out);
  if (config.perturb.test_fraction > 0.0) ctx.write_artifact("corpus_test.jsonl", test_out);
  ctx.write_artifact("stats.json", stats_to_json(stats).dump(2) + "\n");
  ctx.finish();
  return stats;
}

struct TrainOutcome {
  Checkpoint checkpoint;
  TrainState state;
};

// Trains from scratch or resumes from a previous run directory. Writes
// checkpoint_final.json, state_final.json, report.jsonl, and periodic
// checkpoints at the configured cadence.
inline TrainOutcome cmd_train(const std::string& corpus_path, const ExperimentConfig& config,
                              const std::string& out_dir, const std::string& resume_dir = "") {
  RunContext ctx("train", config, out_dir);
  ctx.note_input(corpus_path);

  const std::vector<ParallelPair> corpus = load_corpus(corpus_path, config.mode);
  if (corpus.empty()) throw std::runtime_error("train: empty corpus " + corpus_path);

  TrainOutcome out;
  if (resume_dir.empty()) {
    out.checkpoint.vocab = build_vocab(corpus);
    ModelConfig mc = config.model;
    mc.vocab_size = out.checkpoint.vocab.size();
    out.checkpoint.model = CorrectorModel(mc, config.seed);
    out.state = make_train_state(out.checkpoint.model, config.train);
  } else {
    out.checkpoint = load_checkpoint(resume_dir + "/checkpoint_final.json");
    const nlohmann::json sj = nlohmann::json::parse(io::read_file(resume_dir + "/state_final.json"));
    out.state = train_state_from_json(sj, out.checkpoint.vocab, config.mode);
  }

  train_loop(corpus, out.checkpoint.vocab, out.checkpoint.model, out.state, config.train,
             [&](const StepRecord& rec) {
               if (config.train.checkpoint_every > 0 &&
                   (rec.step + 1) % config.train.checkpoint_every == 0) {
                 char name[64];
                 std::snprintf(name, sizeof(name), "checkpoint_%06zu.json", rec.step + 1);
                 ctx.write_artifact(name,
                                    checkpoint_to_json(out.checkpoint.model, out.checkpoint.vocab)
                                            .dump(2) +
                                        "\n");
               }
             });

  std::string report;
  for (const auto& rec : out.state.history) {
    const nlohmann::json line = {{"step", rec.step},       {"nll", rec.loss.nll},
                                 {"contrastive", rec.loss.contrastive}, {"rank", rec.loss.rank},
                                 {"total", rec.loss.total}, {"lr", rec.lr}};
    report += line.dump() + "\n";
  }
  ctx.write_artifact("report.jsonl", report);
  ctx.write_artifact("checkpoint_final.json",
                     checkpoint_to_json(out.checkpoint.model, out.checkpoint.vocab).dump(2) + "\n");
  ctx.write_artifact("state_final.json", train_state_to_json(out.state).dump(2) + "\n");
  ctx.finish();
  return out;
}

// Reads either a plain-text file (one sentence per line) or a corpus JSONL
// (its "source" fields).
inline std::vector<Sentence> load_sources(const std::string& path, SegmentMode mode) {
  std::vector<Sentence> sources;
  for (const auto& line : io::read_lines(path)) {
    if (line.empty()) continue;
    if (line.front() == '{') {
      const nlohmann::json j = nlohmann::json::parse(line);
      sources.push_back(segment(j.at(j.contains("output") ? "output" : "source").get<std::string>(), mode));
    } else {
      sources.push_back(segment(line, mode));
    }
  }
  return sources;
}

inline std::vector<Sentence> load_targets(const std::string& path, SegmentMode mode) {
  std::vector<Sentence> targets;
  for (const auto& line : io::read_lines(path)) {
    if (line.empty()) continue;
    if (line.front() == '{') {
      const nlohmann::json j = nlohmann::json::parse(line);
      targets.push_back(segment(j.at("target").get<std::string>(), mode));
    } else {
      targets.push_back(segment(line, mode));
    }
  }
  return targets;
}

inline std::vector<CorrectedRow> cmd_correct(const std::string& checkpoint_path,
                                             const std::string& input_path,
                                             const ExperimentConfig& config,
                                             const std::string& out_dir) {
  RunContext ctx("correct", config, out_dir);
  ctx.note_input(checkpoint_path);
  ctx.note_input(input_path);
  Checkpoint ck = load_checkpoint(checkpoint_path);
  const std::vector<Sentence> sources = load_sources(input_path, config.mode);
  const std::vector<CorrectedRow> rows =
      correct_sentences(sources, ck.model, ck.vocab, config.decode);
  std::string out;
  for (const auto& row : rows) {
    const nlohmann::json j = {{"source", row.source},
                              {"output", row.output},
                              {"score", row.score},
                              {"forced", row.forced}};
    out += j.dump() + "\n";
  }
  ctx.write_artifact("corrected.jsonl", out);
  ctx.finish();
  return rows;
}

inline std::vector<CorrectedRow> load_predictions(const std::string& path) {
  std::vector<CorrectedRow> rows;
  for (const auto& line : io::read_lines(path)) {
    if (line.empty()) continue;
    CorrectedRow row;
    if (line.front() == '{') {
      const nlohmann::json j = nlohmann::json::parse(line);
      row.output = j.at(j.contains("output") ? "output" : "source").get<std::string>();
      row.source = j.value("source", row.output);
    } else {
      row.output = line;
      row.source = line;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline EvalReport cmd_evaluate(const std::string& pred_path, const std::string& gold_path,
                               const ExperimentConfig& config, const std::string& out_dir) {
  RunContext ctx("evaluate", config, out_dir);
  ctx.note_input(pred_path);
  ctx.note_input(gold_path);
  std::vector<CorrectedRow> pred = load_predictions(pred_path);
  const std::vector<Sentence> targets = load_targets(gold_path, config.mode);

  // When the gold file carries sources (corpus JSONL), prefer them: the
  // prediction file may have been produced from plain text.
  std::vector<ParallelPair> gold_pairs;
  bool gold_has_sources = false;
  {
    const auto lines = io::read_lines(gold_path);
    if (!lines.empty() && !lines.front().empty() && lines.front().front() == '{') {
      gold_pairs = load_corpus(gold_path, config.mode);
      gold_has_sources = true;
    }
  }
  if (gold_has_sources) {
    if (gold_pairs.size() != pred.size())
      throw std::runtime_error("evaluate: row-count mismatch: " + std::to_string(pred.size()) +
                               " predictions vs " + std::to_string(gold_pairs.size()) +
                               " references");
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i].source = gold_pairs[i].source.raw();
  }

  const EvalReport rep = evaluate_rows(pred, targets, config.mode, config.eval);
  ctx.write_artifact("report.json", report_to_json(rep).dump(2) + "\n");
  ctx.write_artifact("report.txt", report_to_table(rep));
  ctx.finish();
  return rep;
}

struct AblationRow {
  double alpha = 0.0;
  double bleu = 0.0;
  double f1 = 0.0;
};

// One (alpha, BLEU, F1) row per grid point; every row is reproducible by an
// independent cmd_correct + cmd_evaluate at that alpha.
inline std::vector<AblationRow> cmd_ablate_alpha(const std::string& checkpoint_path,
                                                 const std::string& dev_corpus_path,
                                                 const std::vector<double>& grid,
                                                 const ExperimentConfig& config,
                                                 const std::string& out_dir) {
  if (grid.empty()) throw std::invalid_argument("ablate-alpha: empty grid");
  RunContext ctx("ablate-alpha", config, out_dir);
  ctx.note_input(checkpoint_path);
  ctx.note_input(dev_corpus_path);
  Checkpoint ck = load_checkpoint(checkpoint_path);
  const std::vector<ParallelPair> dev = load_corpus(dev_corpus_path, config.mode);
  if (dev.empty()) throw std::runtime_error("ablate-alpha: empty dev corpus");

  std::vector<Sentence> sources, targets;
  for (const auto& p : dev) {
    sources.push_back(p.source);
    targets.push_back(p.target);
  }

  std::vector<AblationRow> rows;
  for (const double alpha : grid) {
    DecodeConfig dc = config.decode;
    dc.alpha = alpha;
    const std::vector<CorrectedRow> corrected = correct_sentences(sources, ck.model, ck.vocab, dc);
    const EvalReport rep = evaluate_rows(corrected, targets, config.mode, EvalOptions{false});
    rows.push_back({alpha, rep.bleu, rep.f1});
  }

  nlohmann::json rows_json = nlohmann::json::array();
  std::string tsv = "alpha\tbleu\tf1\n";
  for (const auto& r : rows) {
    rows_json.push_back({{"alpha", r.alpha}, {"bleu", r.bleu}, {"f1", r.f1}});
    std::ostringstream line;
    line << r.alpha << '\t' << r.bleu << '\t' << r.f1 << '\n';
    tsv += line.str();
  }
  ctx.write_artifact("ablation.json", rows_json.dump(2) + "\n");
  ctx.write_artifact("ablation.tsv", tsv);
  ctx.finish();
  return rows;
}

struct AnalysisRow {
  std::size_t over = 0;
  std::size_t under = 0;
  std::size_t sentences = 0;
};

// Over/under-correction counts per perturbation kind. A pair with several op
// kinds contributes to each of them; "all" aggregates every pair once.
inline std::map<std::string, AnalysisRow> cmd_analyze(const std::string& pred_path,
                                                      const std::string& gold_path,
                                                      const ExperimentConfig& config,
                                                      const std::string& out_dir) {
  RunContext ctx("analyze", config, out_dir);
  ctx.note_input(pred_path);
  ctx.note_input(gold_path);
  const std::vector<CorrectedRow> pred = load_predictions(pred_path);
  const std::vector<ParallelPair> gold = load_corpus(gold_path, config.mode);
  if (gold.size() != pred.size())
    throw std::runtime_error("analyze: row-count mismatch: " + std::to_string(pred.size()) +
                             " predictions vs " + std::to_string(gold.size()) + " references");

  std::map<std::string, AnalysisRow> table;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const Sentence output = segment(pred[i].output, config.mode);
    const OverUnder ou = over_under_counts(gold[i].source, output, gold[i].target);
    std::vector<std::string> kinds;
    if (gold[i].ops) {
      for (const auto& op : *gold[i].ops) {
        const std::string k{to_string(op.kind)};
        bool seen = false;
        for (const auto& s : kinds) seen |= s == k;
        if (!seen) kinds.push_back(k);
      }
    }
    if (kinds.empty()) kinds.push_back("none");
    for (const auto& k : kinds) {
      table[k].over += ou.over;
      table[k].under += ou.under;
      table[k].sentences += 1;
    }
    table["all"].over += ou.over;
    table["all"].under += ou.under;
    table["all"].sentences += 1;
  }

  nlohmann::json j = nlohmann::json::object();
  std::string tsv = "kind\tover\tunder\tsentences\n";
  for (const auto& [kind, row] : table) {
    j[kind] = {{"over", row.over}, {"under", row.under}, {"sentences", row.sentences}};
    tsv += kind + "\t" + std::to_string(row.over) + "\t" + std::to_string(row.under) + "\t" +
           std::to_string(row.sentences) + "\n";
  }
  ctx.write_artifact("analysis.json", j.dump(2) + "\n");
  ctx.write_artifact("analysis.tsv", tsv);
  ctx.finish();
  return table;
}

}  // namespace textmend
