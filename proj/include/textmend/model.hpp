#pragma once

// The toy generative corrector: embedding table, gated recurrent encoder
// (optionally bidirectional), additive-attention GRU decoder, and mean-pooled
// sentence representations shared by training, ranking, and decoding.
//
// Tape-building members (*_on) compose differentiable graphs on a caller's
// tape; the value-level wrappers run a local tape forward-only, so there is
// exactly one implementation of every formula.

#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "textmend/rng.hpp"
#include "textmend/tensor.hpp"
#include "textmend/text.hpp"

namespace textmend {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 16;
  bool bidirectional = false;

  std::size_t encoder_width() const noexcept {
    return bidirectional ? 2 * hidden_dim : hidden_dim;
  }
};

struct GruParams {
  Tensor w_r, u_r, b_r;
  Tensor w_z, u_z, b_z;
  Tensor w_n, u_n, b_n;
};

struct GruVars {
  Var w_r, u_r, b_r;
  Var w_z, u_z, b_z;
  Var w_n, u_n, b_n;
};

struct ModelVars {
  Var embedding;
  GruVars enc_fwd, enc_bwd;
  GruVars dec;
  Var attn_w_s, attn_w_h, attn_v;
  Var dec_init_w, dec_init_b;
  Var out_w, out_b;
};

// Parameter vars on a tape plus the bindings needed to pull gradients back
// into the owning tensors after backward().
struct BoundModel {
  ModelVars vars;
  std::vector<std::pair<Tensor*, Var>> bindings;

  void accumulate_grads(const Tape& tape) const {
    for (const auto& [tensor, var] : bindings) {
      tensor->ensure_grad();
      const auto& g = tape.grad(var);
      for (std::size_t i = 0; i < g.size(); ++i) tensor->grad[i] += g[i];
    }
  }
};

struct EncodingVars {
  Var H;  // m x encoder_width
  Var z;  // mean of the rows of H
};

struct Encoding {
  Tensor H;
  Tensor z;
};

struct DecodeStepVars {
  Var logits;
  Var state;
  Var attention;
};

struct DecodeStepResult {
  Tensor logits;
  Tensor state;
  Tensor attention;
};

class CorrectorModel {
 public:
  CorrectorModel() = default;

  CorrectorModel(const ModelConfig& config, std::uint64_t seed) : cfg_(config), seed_(seed) {
    if (cfg_.vocab_size < 4) throw std::invalid_argument("CorrectorModel: vocabulary too small");
    allocate();
    Rng rng = substream(seed, "init");
    for (auto& [name, tensor] : named_parameters()) {
      if (tensor->shape.size() == 2) {
        const double bound = std::sqrt(6.0 / static_cast<double>(tensor->shape[0] + tensor->shape[1]));
        for (auto& v : tensor->values) v = rng.uniform(-bound, bound);
      }
      // biases stay zero
    }
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  std::uint64_t init_seed() const noexcept { return seed_; }

  std::vector<std::pair<std::string, Tensor*>> named_parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("embedding", &embedding_);
    auto gru = [&](const std::string& prefix, GruParams& g) {
      out.emplace_back(prefix + ".w_r", &g.w_r);
      out.emplace_back(prefix + ".u_r", &g.u_r);
      out.emplace_back(prefix + ".b_r", &g.b_r);
      out.emplace_back(prefix + ".w_z", &g.w_z);
      out.emplace_back(prefix + ".u_z", &g.u_z);
      out.emplace_back(prefix + ".b_z", &g.b_z);
      out.emplace_back(prefix + ".w_n", &g.w_n);
      out.emplace_back(prefix + ".u_n", &g.u_n);
      out.emplace_back(prefix + ".b_n", &g.b_n);
    };
    gru("enc_fwd", enc_fwd_);
    if (cfg_.bidirectional) gru("enc_bwd", enc_bwd_);
    gru("dec", dec_);
    out.emplace_back("attn_w_s", &attn_w_s_);
    out.emplace_back("attn_w_h", &attn_w_h_);
    out.emplace_back("attn_v", &attn_v_);
    out.emplace_back("dec_init_w", &dec_init_w_);
    out.emplace_back("dec_init_b", &dec_init_b_);
    out.emplace_back("out_w", &out_w_);
    out.emplace_back("out_b", &out_b_);
    return out;
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* t : parameters()) n += t->numel();
    return n;
  }

  // --- tape-side builders ---------------------------------------------------

  BoundModel bind(Tape& tape) {
    BoundModel bound;
    auto reg = [&](Tensor& t) {
      Var v = tape.leaf(t);
      bound.bindings.emplace_back(&t, v);
      return v;
    };
    bound.vars.embedding = reg(embedding_);
    auto bind_gru = [&](GruParams& g) {
      GruVars v;
      v.w_r = reg(g.w_r), v.u_r = reg(g.u_r), v.b_r = reg(g.b_r);
      v.w_z = reg(g.w_z), v.u_z = reg(g.u_z), v.b_z = reg(g.b_z);
      v.w_n = reg(g.w_n), v.u_n = reg(g.u_n), v.b_n = reg(g.b_n);
      return v;
    };
    bound.vars.enc_fwd = bind_gru(enc_fwd_);
    if (cfg_.bidirectional) bound.vars.enc_bwd = bind_gru(enc_bwd_);
    bound.vars.dec = bind_gru(dec_);
    bound.vars.attn_w_s = reg(attn_w_s_);
    bound.vars.attn_w_h = reg(attn_w_h_);
    bound.vars.attn_v = reg(attn_v_);
    bound.vars.dec_init_w = reg(dec_init_w_);
    bound.vars.dec_init_b = reg(dec_init_b_);
    bound.vars.out_w = reg(out_w_);
    bound.vars.out_b = reg(out_b_);
    return bound;
  }

  static Var gru_step_on(Tape& t, const GruVars& g, Var x, Var h) {
    const Var r = t.sigmoid(t.add(t.add(t.matmul(g.w_r, x), t.matmul(g.u_r, h)), g.b_r));
    const Var z = t.sigmoid(t.add(t.add(t.matmul(g.w_z, x), t.matmul(g.u_z, h)), g.b_z));
    const Var n = t.tanh(t.add(t.add(t.matmul(g.w_n, x), t.mul(r, t.matmul(g.u_n, h))), g.b_n));
    // h' = (1 - z) * n + z * h
    const Var one_minus_z = t.add_scalar(t.scale(z, -1.0), 1.0);
    return t.add(t.mul(one_minus_z, n), t.mul(z, h));
  }

  EncodingVars encode_on(Tape& t, const ModelVars& mv, const std::vector<int>& ids) const {
    check_ids(ids);
    const std::size_t m = ids.size();
    std::vector<Var> fwd(m);
    Var h = t.leaf({cfg_.hidden_dim}, std::vector<double>(cfg_.hidden_dim, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
      const Var x = t.flatten(t.embedding_lookup(mv.embedding, {ids[i]}));
      h = gru_step_on(t, mv.enc_fwd, x, h);
      fwd[i] = h;
    }
    std::vector<Var> rows(m);
    if (cfg_.bidirectional) {
      std::vector<Var> bwd(m);
      Var hb = t.leaf({cfg_.hidden_dim}, std::vector<double>(cfg_.hidden_dim, 0.0));
      for (std::size_t i = m; i-- > 0;) {
        const Var x = t.flatten(t.embedding_lookup(mv.embedding, {ids[i]}));
        hb = gru_step_on(t, mv.enc_bwd, x, hb);
        bwd[i] = hb;
      }
      for (std::size_t i = 0; i < m; ++i) rows[i] = t.concat({fwd[i], bwd[i]});
    } else {
      rows = fwd;
    }
    EncodingVars enc;
    enc.H = t.stack_rows(rows);
    enc.z = t.mean_pool(enc.H, 0);
    return enc;
  }

  Var initial_state_on(Tape& t, const ModelVars& mv, Var z) const {
    return t.tanh(t.add(t.matmul(mv.dec_init_w, z), mv.dec_init_b));
  }

  DecodeStepVars decode_step_on(Tape& t, const ModelVars& mv, int prev_id, Var state, Var H) const {
    return decode_step_with_proj(t, mv, prev_id, state, H, t.matmul(H, t.transpose(mv.attn_w_h)));
  }

  // `proj` = H W_h^T is loop-invariant across decoder steps; callers that
  // unroll a whole target sequence hoist it.
  DecodeStepVars decode_step_with_proj(Tape& t, const ModelVars& mv, int prev_id, Var state,
                                       Var H, Var proj) const {
    check_ids({prev_id});
    // additive attention: score_j = v . tanh(W_h H_j + W_s s)
    const Var query = t.matmul(mv.attn_w_s, state);                  // h
    const Var energies = t.matmul(t.tanh(t.add_rowvec(proj, query)), mv.attn_v);  // m
    const Var attention = t.softmax(energies);
    const Var context = t.matmul(t.transpose(H), attention);         // encoder_width
    const Var emb = t.flatten(t.embedding_lookup(mv.embedding, {prev_id}));
    const Var x = t.concat({emb, context});
    const Var next = gru_step_on(t, mv.dec, x, state);
    DecodeStepVars out;
    out.logits = t.add(t.matmul(mv.out_w, next), mv.out_b);
    out.state = next;
    out.attention = attention;
    return out;
  }

  Var represent_on(Tape& t, const ModelVars& mv, const Sentence& s, const Vocabulary& vocab) const {
    return encode_on(t, mv, framed_ids(s, vocab)).z;
  }

  // Teacher-forced sum over target tokens plus EOS of log p(y_t | y_<t, X').
  Var log_prob_on(Tape& t, const ModelVars& mv, const std::vector<int>& framed_src,
                  const std::vector<int>& target_ids) const {
    const EncodingVars enc = encode_on(t, mv, framed_src);
    const Var proj = t.matmul(enc.H, t.transpose(mv.attn_w_h));
    Var state = initial_state_on(t, mv, enc.z);
    int prev = Vocabulary::kBos;
    std::vector<Var> terms;
    terms.reserve(target_ids.size() + 1);
    for (std::size_t step = 0; step <= target_ids.size(); ++step) {
      const int y = step < target_ids.size() ? target_ids[step] : Vocabulary::kEos;
      const DecodeStepVars sv = decode_step_with_proj(t, mv, prev, state, enc.H, proj);
      terms.push_back(t.select(t.log_softmax(sv.logits), static_cast<std::size_t>(y)));
      state = sv.state;
      prev = y;
    }
    return t.sum(t.concat(std::span<const Var>(terms)));
  }

  // --- value-level wrappers --------------------------------------------------
  //
  // Tape-free inference mirroring the tape primitives operation for
  // operation (same loop nesting, same accumulation order), so results are
  // bit-equal to the differentiable path. A unit test pins that equality.

  Encoding encode(const std::vector<int>& ids) const {
    check_ids(ids);
    const std::size_t m = ids.size();
    const std::size_t h = cfg_.hidden_dim, hw = cfg_.encoder_width();
    Encoding enc;
    enc.H = Tensor::zeros({m, hw});
    std::vector<double> state(h, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      fast_gru(enc_fwd_, embedding_row(ids[i]), state);
      std::copy(state.begin(), state.end(), enc.H.values.begin() + static_cast<std::ptrdiff_t>(i * hw));
    }
    if (cfg_.bidirectional) {
      std::vector<double> back(h, 0.0);
      for (std::size_t i = m; i-- > 0;) {
        fast_gru(enc_bwd_, embedding_row(ids[i]), back);
        std::copy(back.begin(), back.end(),
                  enc.H.values.begin() + static_cast<std::ptrdiff_t>(i * hw + h));
      }
    }
    enc.z = Tensor::zeros({hw});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < hw; ++j)
        enc.z.values[j] += enc.H.values[i * hw + j] / static_cast<double>(m);
    return enc;
  }

  Tensor represent(const Sentence& s, const Vocabulary& vocab) const {
    return encode(framed_ids(s, vocab)).z;
  }

  Tensor initial_state(const Tensor& z) const {
    Tensor s = Tensor::zeros({cfg_.hidden_dim});
    matvec_into(dec_init_w_, z.values, s.values);
    for (std::size_t i = 0; i < s.numel(); ++i)
      s.values[i] = std::tanh(s.values[i] + dec_init_b_.values[i]);
    return s;
  }

  DecodeStepResult decode_step(int prev_id, const Tensor& state, const Tensor& H) const {
    check_ids({prev_id});
    const std::size_t m = H.rows();
    const std::size_t h = cfg_.hidden_dim, hw = cfg_.encoder_width();
    if (H.shape.size() != 2 || H.shape[1] != hw || state.numel() != h)
      throw std::invalid_argument("decode_step: state " + shape_str(state.shape) + ", H " +
                                  shape_str(H.shape));

    // proj = H W_h^T, accumulated in the tape's (i, k, j) matmul order
    std::vector<double> proj(m * h, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t kk = 0; kk < hw; ++kk) {
        const double av = H.values[i * hw + kk];
        if (av == 0.0) continue;
        for (std::size_t j = 0; j < h; ++j) proj[i * h + j] += av * attn_w_h_.values[j * hw + kk];
      }
    std::vector<double> query(h, 0.0);
    matvec_into(attn_w_s_, state.values, query);
    std::vector<double> energies(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t kk = 0; kk < h; ++kk) {
        const double av = std::tanh(proj[i * h + kk] + query[kk]);
        if (av == 0.0) continue;
        energies[i] += av * attn_v_.values[kk];
      }
    }

    DecodeStepResult out;
    out.attention = Tensor::zeros({m});
    double mx = -HUGE_VAL;
    for (double e : energies) mx = std::max(mx, e);
    double z = 0.0;
    for (double e : energies) z += std::exp(e - mx);
    const double logz = std::log(z) + mx;
    for (std::size_t i = 0; i < m; ++i) out.attention.values[i] = std::exp(energies[i] - logz);

    // context = H^T a, in the tape's transpose-then-matmul order
    std::vector<double> context(hw, 0.0);
    for (std::size_t i = 0; i < hw; ++i)
      for (std::size_t kk = 0; kk < m; ++kk) {
        const double av = H.values[kk * hw + i];
        if (av == 0.0) continue;
        context[i] += av * out.attention.values[kk];
      }

    std::vector<double> x = embedding_row(prev_id);
    x.insert(x.end(), context.begin(), context.end());
    std::vector<double> next(state.values);
    fast_gru(dec_, x, next);

    out.logits = Tensor::zeros({cfg_.vocab_size});
    matvec_into(out_w_, next, out.logits.values);
    for (std::size_t i = 0; i < out.logits.numel(); ++i) out.logits.values[i] += out_b_.values[i];
    out.state = Tensor({h}, std::move(next));
    return out;
  }

  double log_prob(const ParallelPair& pair, const Vocabulary& vocab) {
    if (pair.target.empty()) throw std::invalid_argument("log_prob: empty target");
    Tape tape;
    const BoundModel bound = bind(tape);
    const Var lp = log_prob_on(tape, bound.vars, framed_ids(pair.source, vocab), vocab.encode(pair.target));
    return tape.scalar_value(lp);
  }

  static std::vector<int> framed_ids(const Sentence& s, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.reserve(s.unit_count() + 2);
    ids.push_back(Vocabulary::kBos);
    for (const auto& u : s.units()) ids.push_back(vocab.id_of(u));
    ids.push_back(Vocabulary::kEos);
    return ids;
  }

  const Tensor& embedding() const noexcept { return embedding_; }

 private:
  std::vector<double> embedding_row(int id) const {
    const std::size_t d = cfg_.embed_dim;
    const auto begin = embedding_.values.begin() + static_cast<std::ptrdiff_t>(
                                                       static_cast<std::size_t>(id) * d);
    return std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(d));
  }

  // out[i] += sum_k W[i,k] x[k], in the tape matmul's loop and skip order.
  static void matvec_into(const Tensor& w, const std::vector<double>& x, std::vector<double>& out) {
    const std::size_t r = w.shape[0], k = w.shape[1];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = w.values[i * k + kk];
        if (av == 0.0) continue;
        out[i] += av * x[kk];
      }
  }

  // In-place GRU step matching gru_step_on element for element.
  void fast_gru(const GruParams& g, const std::vector<double>& x, std::vector<double>& h) const {
    const std::size_t n = cfg_.hidden_dim;
    std::vector<double> wx(n, 0.0), uh(n, 0.0), r(n), z(n), cand(n);
    matvec_into(g.w_r, x, wx);
    matvec_into(g.u_r, h, uh);
    for (std::size_t i = 0; i < n; ++i)
      r[i] = 1.0 / (1.0 + std::exp(-((wx[i] + uh[i]) + g.b_r.values[i])));
    std::fill(wx.begin(), wx.end(), 0.0);
    std::fill(uh.begin(), uh.end(), 0.0);
    matvec_into(g.w_z, x, wx);
    matvec_into(g.u_z, h, uh);
    for (std::size_t i = 0; i < n; ++i)
      z[i] = 1.0 / (1.0 + std::exp(-((wx[i] + uh[i]) + g.b_z.values[i])));
    std::fill(wx.begin(), wx.end(), 0.0);
    std::fill(uh.begin(), uh.end(), 0.0);
    matvec_into(g.w_n, x, wx);
    matvec_into(g.u_n, h, uh);
    for (std::size_t i = 0; i < n; ++i)
      cand[i] = std::tanh((wx[i] + r[i] * uh[i]) + g.b_n.values[i]);
    for (std::size_t i = 0; i < n; ++i)
      h[i] = ((z[i] * -1.0) + 1.0) * cand[i] + z[i] * h[i];
  }

  void check_ids(const std::vector<int>& ids) const {
    if (ids.empty()) throw std::invalid_argument("encode: empty input");
    for (int id : ids)
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size)
        throw std::out_of_range("encode: id " + std::to_string(id) + " outside vocabulary of " +
                                std::to_string(cfg_.vocab_size));
  }

  void allocate() {
    const std::size_t v = cfg_.vocab_size, d = cfg_.embed_dim, h = cfg_.hidden_dim;
    const std::size_t hw = cfg_.encoder_width();
    embedding_ = Tensor::zeros({v, d});
    auto make_gru = [&](GruParams& g, std::size_t in) {
      g.w_r = Tensor::zeros({h, in});
      g.u_r = Tensor::zeros({h, h});
      g.b_r = Tensor::zeros({h});
      g.w_z = Tensor::zeros({h, in});
      g.u_z = Tensor::zeros({h, h});
      g.b_z = Tensor::zeros({h});
      g.w_n = Tensor::zeros({h, in});
      g.u_n = Tensor::zeros({h, h});
      g.b_n = Tensor::zeros({h});
    };
    make_gru(enc_fwd_, d);
    if (cfg_.bidirectional) make_gru(enc_bwd_, d);
    make_gru(dec_, d + hw);
    attn_w_s_ = Tensor::zeros({h, h});
    attn_w_h_ = Tensor::zeros({h, hw});
    attn_v_ = Tensor::zeros({h});
    dec_init_w_ = Tensor::zeros({h, hw});
    dec_init_b_ = Tensor::zeros({h});
    out_w_ = Tensor::zeros({v, h});
    out_b_ = Tensor::zeros({v});
  }

  ModelConfig cfg_;
  std::uint64_t seed_ = 0;
  Tensor embedding_;
  GruParams enc_fwd_, enc_bwd_, dec_;
  Tensor attn_w_s_, attn_w_h_, attn_v_;
  Tensor dec_init_w_, dec_init_b_;
  Tensor out_w_, out_b_;
};

// ---------------------------------------------------------------------------
// Checkpointing. JSON with full-precision doubles: loading reproduces the
// model's outputs bitwise.

struct Checkpoint {
  CorrectorModel model;
  Vocabulary vocab;
};

inline nlohmann::json checkpoint_to_json(CorrectorModel& model, const Vocabulary& vocab) {
  nlohmann::json j;
  j["format"] = "textmend-checkpoint-v1";
  const ModelConfig& cfg = model.config();
  j["config"] = {{"vocab_size", cfg.vocab_size},
                 {"embed_dim", cfg.embed_dim},
                 {"hidden_dim", cfg.hidden_dim},
                 {"bidirectional", cfg.bidirectional}};
  j["init_seed"] = model.init_seed();
  j["vocab"] = vocab.entries();
  nlohmann::json params = nlohmann::json::object();
  for (auto& [name, tensor] : model.named_parameters()) {
    params[name] = {{"shape", tensor->shape}, {"values", tensor->values}};
  }
  j["params"] = std::move(params);
  return j;
}

inline void save_checkpoint(CorrectorModel& model, const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << checkpoint_to_json(model, vocab).dump(2) << '\n';
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "textmend-checkpoint-v1")
    throw std::runtime_error("unrecognized checkpoint format");
  ModelConfig cfg;
  cfg.vocab_size = j.at("config").at("vocab_size").get<std::size_t>();
  cfg.embed_dim = j.at("config").at("embed_dim").get<std::size_t>();
  cfg.hidden_dim = j.at("config").at("hidden_dim").get<std::size_t>();
  cfg.bidirectional = j.at("config").at("bidirectional").get<bool>();
  Checkpoint ck;
  ck.model = CorrectorModel(cfg, j.value("init_seed", std::uint64_t{0}));
  const auto entries = j.at("vocab").get<std::vector<std::string>>();
  ck.vocab = Vocabulary::from_entries(entries);
  for (auto& [name, tensor] : ck.model.named_parameters()) {
    const auto& pj = j.at("params").at(name);
    const auto shape = pj.at("shape").get<std::vector<std::size_t>>();
    if (shape != tensor->shape)
      throw std::runtime_error("checkpoint param " + name + " shape mismatch");
    tensor->values = pj.at("values").get<std::vector<double>>();
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  return checkpoint_from_json(j);
}

}  // namespace textmend
