#ifndef ATTNKIT_TOY_MODEL_HPP
#define ATTNKIT_TOY_MODEL_HPP

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnkit/adjoints.hpp"
#include "attnkit/io.hpp"
#include "attnkit/kernels.hpp"
#include "attnkit/rng.hpp"
#include "attnkit/toy/dataset.hpp"
#include "attnkit/types.hpp"

// Small deterministic seq2seq model: embedding -> bidirectional GRU encoder
// -> single GRU decoder with a pluggable alignment mechanism -> linear frame
// and stop heads. Gradients are hand-derived reverse mode over the step
// caches; there is no autodiff anywhere.
//
// One model struct carries the parameters of every mechanism. Only the
// selected mechanism's parameters are touched by forward/backward, which is
// itself a tested invariant (unused parameters receive exactly zero gradient).

namespace attnkit {
namespace toy {

enum class Mechanism { BaselineLsa, Gmm, Ma, Fa, FaTa, Sma };

inline const char* mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::BaselineLsa: return "baseline_lsa";
    case Mechanism::Gmm: return "gmm";
    case Mechanism::Ma: return "ma";
    case Mechanism::Fa: return "fa";
    case Mechanism::FaTa: return "fa_ta";
    case Mechanism::Sma: return "sma";
  }
  return "?";
}

inline Mechanism mechanism_from_name(const std::string& s) {
  if (s == "baseline_lsa") return Mechanism::BaselineLsa;
  if (s == "gmm") return Mechanism::Gmm;
  if (s == "ma") return Mechanism::Ma;
  if (s == "fa") return Mechanism::Fa;
  if (s == "fa_ta") return Mechanism::FaTa;
  if (s == "sma") return Mechanism::Sma;
  throw std::runtime_error("unknown mechanism '" + s + "'");
}

struct ToyConfig {
  Mechanism mechanism = Mechanism::Sma;
  int symbols = 12;  // task alphabet incl. boundary and punctuation
  int frame_dim = 13;
  int emb_dim = 16;
  int enc_hidden = 32;  // per direction
  int dec_hidden = 64;
  int attn_dim = 24;
  int loc_filters = 4;
  int loc_width = 9;
  int gmm_components = 20;
  double init_bias = 0.0;    // energy bias offset (slows the initial advance)
  double noise_scale = 0.0;  // training-time energy noise
  double pos_loss_weight = 4.0;  // MSE weight on the position channel
  EdgePolicy sma_edge = EdgePolicy::Clamp;
  bool gmm_normalize = true;

  // encoder states from both directions plus a raw position column
  int mem_dim() const { return 2 * enc_hidden + 1; }
};

// Paper-style defaults: the sigmoid-gated mechanisms get the large positive
// energy bias and heavy training noise, the softmax ones run clean.
inline ToyConfig default_config(Mechanism mech, const ToyTaskSpec& task) {
  ToyConfig c;
  c.mechanism = mech;
  c.symbols = task.symbol_count();
  c.frame_dim = task.frame_dim();
  if (mech == Mechanism::Ma || mech == Mechanism::Sma) {
    c.init_bias = 3.5;
    c.noise_scale = 2.0;
  }
  return c;
}

inline double default_clip_norm(Mechanism mech) {
  // forward attention is gradient-fragile; everything else tolerates 5.0
  return (mech == Mechanism::Fa || mech == Mechanism::FaTa) ? 1.0 : 5.0;
}

// ---------------------------------------------------------------------------
// GRU cell
// ---------------------------------------------------------------------------

struct GruParams {
  Matrix wz, uz, wr, ur, wh, uh;  // W*: hid x in, U*: hid x hid
  Vec bz, br, bh;
};

struct GruCache {
  Vec x, h_in, z, r, hbar;
};

inline Vec gru_forward(const GruParams& g, const Vec& x, const Vec& h, GruCache* cache) {
  const int hid = g.wz.rows;
  Vec z = matvec(g.wz, x), r = matvec(g.wr, x), pre_h = matvec(g.wh, x);
  matvec_acc(g.uz, h, z);
  matvec_acc(g.ur, h, r);
  for (int k = 0; k < hid; ++k) {
    z[k] = sigmoid(z[k] + g.bz[k]);
    r[k] = sigmoid(r[k] + g.br[k]);
  }
  Vec rh(hid);
  for (int k = 0; k < hid; ++k) rh[k] = r[k] * h[k];
  matvec_acc(g.uh, rh, pre_h);
  Vec hbar(hid), out(hid);
  for (int k = 0; k < hid; ++k) {
    hbar[k] = std::tanh(pre_h[k] + g.bh[k]);
    out[k] = (1.0 - z[k]) * h[k] + z[k] * hbar[k];
  }
  if (cache != nullptr) *cache = GruCache{x, h, z, r, hbar};
  return out;
}

// Accumulates parameter gradients into `grads`; dx and dh_in are assigned.
inline void gru_backward(const GruParams& g, const GruCache& c, const Vec& dh_out,
                         GruParams& grads, Vec& dx, Vec& dh_in) {
  const int hid = g.wz.rows;
  dx.assign(c.x.size(), 0.0);
  dh_in.assign(hid, 0.0);
  Vec dpre_z(hid), dpre_r(hid), dpre_h(hid), rh(hid);
  for (int k = 0; k < hid; ++k) rh[k] = c.r[k] * c.h_in[k];
  for (int k = 0; k < hid; ++k) {
    double dz = dh_out[k] * (c.hbar[k] - c.h_in[k]);
    double dhbar = dh_out[k] * c.z[k];
    dh_in[k] += dh_out[k] * (1.0 - c.z[k]);
    dpre_h[k] = dhbar * (1.0 - c.hbar[k] * c.hbar[k]);
    dpre_z[k] = dz * c.z[k] * (1.0 - c.z[k]);
  }
  Vec drh(hid, 0.0);
  matvec_t_acc(g.uh, dpre_h, drh);
  for (int k = 0; k < hid; ++k) {
    double dr = drh[k] * c.h_in[k];
    dh_in[k] += drh[k] * c.r[k];
    dpre_r[k] = dr * c.r[k] * (1.0 - c.r[k]);
  }
  outer_acc(1.0, dpre_h, c.x, grads.wh);
  outer_acc(1.0, dpre_h, rh, grads.uh);
  outer_acc(1.0, dpre_z, c.x, grads.wz);
  outer_acc(1.0, dpre_z, c.h_in, grads.uz);
  outer_acc(1.0, dpre_r, c.x, grads.wr);
  outer_acc(1.0, dpre_r, c.h_in, grads.ur);
  axpy(1.0, dpre_h, grads.bh);
  axpy(1.0, dpre_z, grads.bz);
  axpy(1.0, dpre_r, grads.br);
  matvec_t_acc(g.wh, dpre_h, dx);
  matvec_t_acc(g.wz, dpre_z, dx);
  matvec_t_acc(g.wr, dpre_r, dx);
  matvec_t_acc(g.uz, dpre_z, dh_in);
  matvec_t_acc(g.ur, dpre_r, dh_in);
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ToyModel {
  ToyConfig cfg;
  Matrix emb;  // symbols x emb_dim
  GruParams enc_fwd, enc_bwd;
  GruParams dec;
  EnergyParams attn;
  Matrix loc_filters;  // F x W (baseline only)
  Matrix w_gmm;        // 3K x dec_hidden
  Vec b_gmm;           // 3K: [weight_raw | advance_raw | width_raw] sections
  Vec w_ta;            // dec_hidden + mem_dim
  double b_ta = 0.0;
  Matrix w_out;  // frame_dim x (dec_hidden + mem_dim)
  Vec b_out;
  Vec w_stop;  // dec_hidden + mem_dim
  double b_stop = 0.0;
};

struct ParamView {
  const char* name;
  double* data;
  size_t len;
};

inline std::vector<ParamView> collect_params(ToyModel& m) {
  std::vector<ParamView> v;
  auto mat = [&](const char* n, Matrix& x) { v.push_back({n, x.a.data(), x.a.size()}); };
  auto vec = [&](const char* n, Vec& x) { v.push_back({n, x.data(), x.size()}); };
  auto sca = [&](const char* n, double& x) { v.push_back({n, &x, 1}); };
  auto gru = [&](const char* const (&names)[9], GruParams& g) {
    mat(names[0], g.wz);
    mat(names[1], g.uz);
    mat(names[2], g.wr);
    mat(names[3], g.ur);
    mat(names[4], g.wh);
    mat(names[5], g.uh);
    vec(names[6], g.bz);
    vec(names[7], g.br);
    vec(names[8], g.bh);
  };
  static const char* const kEncFwd[9] = {"enc_fwd.wz", "enc_fwd.uz", "enc_fwd.wr",
                                         "enc_fwd.ur", "enc_fwd.wh", "enc_fwd.uh",
                                         "enc_fwd.bz", "enc_fwd.br", "enc_fwd.bh"};
  static const char* const kEncBwd[9] = {"enc_bwd.wz", "enc_bwd.uz", "enc_bwd.wr",
                                         "enc_bwd.ur", "enc_bwd.wh", "enc_bwd.uh",
                                         "enc_bwd.bz", "enc_bwd.br", "enc_bwd.bh"};
  static const char* const kDec[9] = {"dec.wz", "dec.uz", "dec.wr", "dec.ur", "dec.wh",
                                      "dec.uh", "dec.bz", "dec.br", "dec.bh"};
  mat("emb", m.emb);
  gru(kEncFwd, m.enc_fwd);
  gru(kEncBwd, m.enc_bwd);
  gru(kDec, m.dec);
  mat("attn.w_query", m.attn.w_query);
  mat("attn.w_key", m.attn.w_key);
  mat("attn.w_loc", m.attn.w_loc);
  vec("attn.v", m.attn.v);
  vec("attn.hidden_bias", m.attn.hidden_bias);
  sca("attn.gain", m.attn.gain);
  sca("attn.bias", m.attn.bias);
  mat("loc_filters", m.loc_filters);
  mat("w_gmm", m.w_gmm);
  vec("b_gmm", m.b_gmm);
  vec("w_ta", m.w_ta);
  sca("b_ta", m.b_ta);
  mat("w_out", m.w_out);
  vec("b_out", m.b_out);
  vec("w_stop", m.w_stop);
  sca("b_stop", m.b_stop);
  return v;
}

inline size_t param_count(ToyModel& m) {
  size_t total = 0;
  for (const auto& p : collect_params(m)) total += p.len;
  return total;
}

namespace detail {
inline void uniform_fill(Matrix& m, Rng& rng, double scale) {
  for (double& x : m.a) x = rng.uniform(-scale, scale);
}
inline void gru_init(GruParams& g, int in, int hid, Rng& rng) {
  const double ws = 1.0 / std::sqrt(static_cast<double>(in));
  const double us = 1.0 / std::sqrt(static_cast<double>(hid));
  g.wz = Matrix(hid, in);
  g.uz = Matrix(hid, hid);
  g.wr = Matrix(hid, in);
  g.ur = Matrix(hid, hid);
  g.wh = Matrix(hid, in);
  g.uh = Matrix(hid, hid);
  uniform_fill(g.wz, rng, ws);
  uniform_fill(g.uz, rng, us);
  uniform_fill(g.wr, rng, ws);
  uniform_fill(g.ur, rng, us);
  uniform_fill(g.wh, rng, ws);
  uniform_fill(g.uh, rng, us);
  g.bz.assign(hid, 0.0);
  g.br.assign(hid, 0.0);
  g.bh.assign(hid, 0.0);
}
inline void gru_zero(GruParams& g, int in, int hid) {
  g.wz = Matrix(hid, in);
  g.uz = Matrix(hid, hid);
  g.wr = Matrix(hid, in);
  g.ur = Matrix(hid, hid);
  g.wh = Matrix(hid, in);
  g.uh = Matrix(hid, hid);
  g.bz.assign(hid, 0.0);
  g.br.assign(hid, 0.0);
  g.bh.assign(hid, 0.0);
}
}  // namespace detail

inline ToyModel init_model(const ToyConfig& cfg, uint64_t seed) {
  ToyModel m;
  m.cfg = cfg;
  Rng rng(seed);
  const int head_in = cfg.dec_hidden + cfg.mem_dim();
  const int dec_in = cfg.frame_dim + cfg.mem_dim();
  const int k3 = 3 * cfg.gmm_components;

  m.emb = Matrix(cfg.symbols, cfg.emb_dim);
  detail::uniform_fill(m.emb, rng, 1.0 / std::sqrt(static_cast<double>(cfg.emb_dim)));
  detail::gru_init(m.enc_fwd, cfg.emb_dim + 1, cfg.enc_hidden, rng);
  detail::gru_init(m.enc_bwd, cfg.emb_dim + 1, cfg.enc_hidden, rng);
  detail::gru_init(m.dec, dec_in, cfg.dec_hidden, rng);

  m.attn.w_query = Matrix(cfg.attn_dim, cfg.dec_hidden);
  m.attn.w_key = Matrix(cfg.attn_dim, cfg.mem_dim());
  m.attn.w_loc = Matrix(cfg.attn_dim, cfg.loc_filters);
  detail::uniform_fill(m.attn.w_query, rng, 1.0 / std::sqrt(static_cast<double>(cfg.dec_hidden)));
  detail::uniform_fill(m.attn.w_key, rng, 1.0 / std::sqrt(static_cast<double>(cfg.mem_dim())));
  detail::uniform_fill(m.attn.w_loc, rng, 1.0 / std::sqrt(static_cast<double>(cfg.loc_filters)));
  m.attn.v.resize(cfg.attn_dim);
  for (double& x : m.attn.v) x = rng.uniform(-1.0, 1.0);
  m.attn.hidden_bias.assign(cfg.attn_dim, 0.0);
  m.attn.gain = 1.0;
  m.attn.bias = cfg.init_bias;
  m.attn.noise_scale = cfg.noise_scale;

  m.loc_filters = Matrix(cfg.loc_filters, cfg.loc_width);
  detail::uniform_fill(m.loc_filters, rng, 1.0 / std::sqrt(static_cast<double>(cfg.loc_width)));

  m.w_gmm = Matrix(k3, cfg.dec_hidden);
  detail::uniform_fill(m.w_gmm, rng, 1.0 / std::sqrt(static_cast<double>(cfg.dec_hidden)));
  m.b_gmm.assign(k3, 0.0);
  // bias the centers toward roughly half a token per frame at init
  for (int k = 0; k < cfg.gmm_components; ++k) m.b_gmm[cfg.gmm_components + k] = std::log(0.5);

  m.w_ta.resize(head_in);
  for (double& x : m.w_ta) x = rng.uniform(-1.0, 1.0) / std::sqrt(static_cast<double>(head_in));
  m.b_ta = 0.0;

  m.w_out = Matrix(cfg.frame_dim, head_in);
  detail::uniform_fill(m.w_out, rng, 1.0 / std::sqrt(static_cast<double>(head_in)));
  m.b_out.assign(cfg.frame_dim, 0.0);
  m.w_stop.resize(head_in);
  for (double& x : m.w_stop) x = rng.uniform(-1.0, 1.0) / std::sqrt(static_cast<double>(head_in));
  m.b_stop = -2.0;  // stopping is rare
  return m;
}

// A zeroed model of the same shape; doubles as the gradient container.
inline ToyModel zeros_like(const ToyModel& src) {
  ToyModel g;
  const ToyConfig& cfg = src.cfg;
  g.cfg = cfg;
  g.emb = Matrix(cfg.symbols, cfg.emb_dim);
  detail::gru_zero(g.enc_fwd, cfg.emb_dim + 1, cfg.enc_hidden);
  detail::gru_zero(g.enc_bwd, cfg.emb_dim + 1, cfg.enc_hidden);
  detail::gru_zero(g.dec, cfg.frame_dim + cfg.mem_dim(), cfg.dec_hidden);
  g.attn.w_query = Matrix(cfg.attn_dim, cfg.dec_hidden);
  g.attn.w_key = Matrix(cfg.attn_dim, cfg.mem_dim());
  g.attn.w_loc = Matrix(cfg.attn_dim, cfg.loc_filters);
  g.attn.v.assign(cfg.attn_dim, 0.0);
  g.attn.hidden_bias.assign(cfg.attn_dim, 0.0);
  g.attn.gain = 0.0;
  g.attn.bias = 0.0;
  g.attn.noise_scale = 0.0;
  g.loc_filters = Matrix(cfg.loc_filters, cfg.loc_width);
  g.w_gmm = Matrix(3 * cfg.gmm_components, cfg.dec_hidden);
  g.b_gmm.assign(3 * cfg.gmm_components, 0.0);
  g.w_ta.assign(cfg.dec_hidden + cfg.mem_dim(), 0.0);
  g.b_ta = 0.0;
  g.w_out = Matrix(cfg.frame_dim, cfg.dec_hidden + cfg.mem_dim());
  g.b_out.assign(cfg.frame_dim, 0.0);
  g.w_stop.assign(cfg.dec_hidden + cfg.mem_dim(), 0.0);
  g.b_stop = 0.0;
  return g;
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

struct EncoderCache {
  std::vector<Vec> enc_in;  // embedding + relative-position feature
  std::vector<GruCache> fwd, bwd;
  Matrix memory;  // n x mem_dim, [h_fwd | h_bwd]
};

// Encoder input is the token embedding with the token's relative position
// (j+1)/n appended; the targets carry that position verbatim, and a small
// recurrent net cannot synthesize the ratio on its own. The same scalar is
// also exposed as the last memory column, so a context vector carries the
// expected aligned position linearly.
inline EncoderCache encode(const ToyModel& m, const std::vector<int>& tokens) {
  const int n = static_cast<int>(tokens.size());
  require(n >= 1, "encode: empty token sequence");
  const int H = m.cfg.enc_hidden;
  EncoderCache ec;
  ec.enc_in.reserve(n);
  for (int j = 0; j < n; ++j) {
    require(tokens[j] >= 0 && tokens[j] < m.cfg.symbols, "encode: token id out of range");
    Vec x = m.emb.row(tokens[j]);
    x.push_back(static_cast<double>(j + 1) / n);
    ec.enc_in.push_back(std::move(x));
  }
  ec.fwd.resize(n);
  ec.bwd.resize(n);
  ec.memory = Matrix(n, m.cfg.mem_dim());
  Vec h(H, 0.0);
  for (int j = 0; j < n; ++j) {
    h = gru_forward(m.enc_fwd, ec.enc_in[j], h, &ec.fwd[j]);
    for (int k = 0; k < H; ++k) ec.memory(j, k) = h[k];
  }
  h.assign(H, 0.0);
  for (int j = n - 1; j >= 0; --j) {
    h = gru_forward(m.enc_bwd, ec.enc_in[j], h, &ec.bwd[j]);
    for (int k = 0; k < H; ++k) ec.memory(j, H + k) = h[k];
  }
  for (int j = 0; j < n; ++j) ec.memory(j, 2 * H) = static_cast<double>(j + 1) / n;
  return ec;
}

// ---------------------------------------------------------------------------
// Teacher-forced forward
// ---------------------------------------------------------------------------

struct StepCache {
  Vec h_prev;       // decoder state entering the step
  Vec prev_frame;   // teacher-forced input
  Vec prev_align;   // alignment entering the step
  Vec ctx_prev;     // context entering the step (transition-agent input)
  Vec energies;     // post-noise energies
  EnergyCache ecache;
  Matrix loc_feats;
  Vec p_row;      // ma / sma
  Vec y_row;      // softmax row (baseline, fa)
  Vec inspect;    // ma scan-inspection cache
  Vec align;      // alignment used for the context
  ForwardAttentionState fa_state_in;
  ForwardStepResult fa_res;
  double u = 0.0;  // transition-agent output
  Vec ta_input;
  GmmAttentionState gmm_state_in;
  std::vector<GmmUpdate> gmm_updates;
  GmmStepResult gmm_res;
  Vec ctx;
  GruCache dec_cache;
  Vec head_in;
  Vec yhat;
  double stop_logit = 0.0;
};

struct ForwardResult {
  double loss = 0.0, mse = 0.0, bce = 0.0;
  Matrix alignments;  // T x n
  bool finite = true;
  EncoderCache enc;
  std::vector<StepCache> steps;
};

// Snap a raw output frame onto the target alphabet: one-hot over the symbol
// block (stop channel excluded from the argmax), position on the 1/n grid.
inline Vec quantize_frame(const Vec& yhat, int frame_dim, int n) {
  const int S = frame_dim - 1;
  Vec snapped(frame_dim, 0.0);
  int best = 0;
  for (int s = 1; s < S; ++s)
    if (yhat[s] > yhat[best]) best = s;
  snapped[best] = 1.0;
  long grid = std::lround(yhat[S] * n);
  if (grid < 1) grid = 1;
  if (grid > n) grid = n;
  snapped[S] = static_cast<double>(grid) / n;
  return snapped;
}

inline ForwardResult forward_teacher_forced(const ToyModel& m, const ToyCase& c, bool training,
                                            Rng* noise_rng) {
  const ToyConfig& cfg = m.cfg;
  const int T = c.frames.rows;
  require(c.frames.cols == cfg.frame_dim, "forward: frame dimension mismatch");
  ForwardResult f;
  f.enc = encode(m, c.tokens);
  const int n = f.enc.memory.rows;
  f.alignments = Matrix(T, n);
  f.steps.resize(T);

  Vec h(cfg.dec_hidden, 0.0);
  Vec prev_align = one_hot(n, 0);
  Vec ctx_prev(cfg.mem_dim(), 0.0);
  GmmAttentionState gstate = GmmAttentionState::initial(cfg.gmm_components);

  for (int i = 0; i < T; ++i) {
    StepCache& sc = f.steps[i];
    sc.h_prev = h;
    sc.prev_frame = i > 0 ? c.frames.row(i - 1) : Vec(cfg.frame_dim, 0.0);
    sc.prev_align = prev_align;
    sc.ctx_prev = ctx_prev;

    switch (cfg.mechanism) {
      case Mechanism::BaselineLsa: {
        sc.loc_feats = location_features(prev_align, m.loc_filters);
        sc.energies = compute_energy(h, f.enc.memory, m.attn, &sc.loc_feats, training,
                                     noise_rng, &sc.ecache);
        sc.y_row = softmax_alignment(sc.energies);
        sc.align = sc.y_row;
        break;
      }
      case Mechanism::Ma: {
        sc.energies = compute_energy(h, f.enc.memory, m.attn, nullptr, training, noise_rng,
                                     &sc.ecache);
        sc.p_row = selection_probabilities(sc.energies);
        sc.align = ma_alignment_recursive(prev_align, sc.p_row, &sc.inspect);
        break;
      }
      case Mechanism::Sma: {
        sc.energies = compute_energy(h, f.enc.memory, m.attn, nullptr, training, noise_rng,
                                     &sc.ecache);
        sc.p_row = selection_probabilities(sc.energies);
        sc.align = sma_alignment(prev_align, sc.p_row, cfg.sma_edge);
        break;
      }
      case Mechanism::Fa:
      case Mechanism::FaTa: {
        const bool use_ta = cfg.mechanism == Mechanism::FaTa;
        sc.energies = compute_energy(h, f.enc.memory, m.attn, nullptr, training, noise_rng,
                                     &sc.ecache);
        sc.y_row = softmax_alignment(sc.energies);
        sc.fa_state_in.prev_alignment = prev_align;
        if (use_ta) {
          sc.ta_input = h;
          sc.ta_input.insert(sc.ta_input.end(), ctx_prev.begin(), ctx_prev.end());
          sc.u = sigmoid(dot(m.w_ta, sc.ta_input) + m.b_ta);
          sc.fa_state_in.transition_prob = sc.u;
        }
        sc.fa_res = forward_attention_step(sc.fa_state_in, sc.y_row, use_ta);
        sc.align = sc.fa_res.row;
        break;
      }
      case Mechanism::Gmm: {
        sc.gmm_state_in = gstate;
        Vec raw = matvec(m.w_gmm, h);
        axpy(1.0, m.b_gmm, raw);
        const int K = cfg.gmm_components;
        sc.gmm_updates.resize(K);
        for (int k = 0; k < K; ++k)
          sc.gmm_updates[k] = GmmUpdate{raw[k], raw[K + k], raw[2 * K + k]};
        sc.gmm_res = gmm_attention_step(gstate, sc.gmm_updates, n, cfg.gmm_normalize);
        sc.align = sc.gmm_res.row;
        gstate = sc.gmm_res.state;
        break;
      }
    }
    f.alignments.set_row(i, sc.align);

    sc.ctx = context_vector(sc.align, f.enc.memory);
    Vec dec_in = sc.prev_frame;
    dec_in.insert(dec_in.end(), sc.ctx.begin(), sc.ctx.end());
    h = gru_forward(m.dec, dec_in, h, &sc.dec_cache);

    sc.head_in = h;
    sc.head_in.insert(sc.head_in.end(), sc.ctx.begin(), sc.ctx.end());
    sc.yhat = matvec(m.w_out, sc.head_in);
    axpy(1.0, m.b_out, sc.yhat);
    sc.stop_logit = dot(m.w_stop, sc.head_in) + m.b_stop;

    // frame loss: per-dim MSE averaged over frames, with the trailing
    // position channel upweighted (it carries 1/frame_dim of the mass
    // otherwise, yet its tolerance at eval time is the tightest); stop loss:
    // BCE, target 1 only on the final (all-zero) frame
    double se = 0.0;
    for (int d = 0; d < cfg.frame_dim; ++d) {
      double diff = sc.yhat[d] - c.frames(i, d);
      se += (d == cfg.frame_dim - 1 ? cfg.pos_loss_weight : 1.0) * diff * diff;
    }
    f.mse += se / cfg.frame_dim;
    const double target = i == T - 1 ? 1.0 : 0.0;
    const double l = sc.stop_logit;
    f.bce += std::max(l, 0.0) - l * target + std::log1p(std::exp(-std::fabs(l)));

    prev_align = sc.align;
    ctx_prev = sc.ctx;
  }
  f.mse /= T;
  f.bce /= T;
  f.loss = f.mse + f.bce;
  f.finite = std::isfinite(f.loss);
  return f;
}

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

inline void backward(const ToyModel& m, const ToyCase& c, const ForwardResult& f,
                     ToyModel& grads) {
  const ToyConfig& cfg = m.cfg;
  const int T = c.frames.rows;
  const int n = f.enc.memory.rows;
  const int H = cfg.dec_hidden;
  const int D = cfg.frame_dim;
  const int M = cfg.mem_dim();
  const bool use_ta = cfg.mechanism == Mechanism::FaTa;

  Matrix gmem(n, M);
  Vec dh_next(H, 0.0);        // into h_i from step i+1
  Vec dalign_next(n, 0.0);    // into align_i from step i+1
  Vec dctx_ta_next(M, 0.0);   // into ctx_i from step i+1's transition agent
  Vec dcenter_next;           // into GMM centers from step i+1

  for (int i = T - 1; i >= 0; --i) {
    const StepCache& sc = f.steps[i];

    // heads
    Vec dyhat(D);
    for (int d = 0; d < D; ++d)
      dyhat[d] = (d == D - 1 ? cfg.pos_loss_weight : 1.0) * 2.0 *
                 (sc.yhat[d] - c.frames(i, d)) / (static_cast<double>(D) * T);
    const double target = i == T - 1 ? 1.0 : 0.0;
    const double dstop = (sigmoid(sc.stop_logit) - target) / T;

    Vec dhead(sc.head_in.size(), 0.0);
    matvec_t_acc(m.w_out, dyhat, dhead);
    outer_acc(1.0, dyhat, sc.head_in, grads.w_out);
    axpy(1.0, dyhat, grads.b_out);
    axpy(dstop, m.w_stop, dhead);
    axpy(dstop, sc.head_in, grads.w_stop);
    grads.b_stop += dstop;

    Vec dh(dhead.begin(), dhead.begin() + H);
    axpy(1.0, dh_next, dh);
    Vec dctx(dhead.begin() + H, dhead.end());
    axpy(1.0, dctx_ta_next, dctx);

    // decoder GRU
    Vec ddec_in, dh_prev;
    gru_backward(m.dec, sc.dec_cache, dh, grads.dec, ddec_in, dh_prev);
    for (int d = 0; d < M; ++d) dctx[d] += ddec_in[D + d];
    // ddec_in[0:D] is the teacher-forced frame: data, no gradient needed

    // context
    Vec dalign = adjoint_context(sc.align, f.enc.memory, dctx, &gmem);
    axpy(1.0, dalign_next, dalign);

    Vec dh_prev_total = dh_prev;
    Vec dalign_prev(n, 0.0);
    Vec dctx_prev(M, 0.0);
    Vec dcenter_prev;

    auto energy_backward = [&](const Vec& de, const Matrix* loc) {
      EnergyGrads eg = adjoint_compute_energy(sc.h_prev, f.enc.memory, m.attn, loc, sc.ecache, de);
      axpy(1.0, eg.dquery, dh_prev_total);
      for (size_t t = 0; t < gmem.a.size(); ++t) gmem.a[t] += eg.dmemory.a[t];
      for (size_t t = 0; t < grads.attn.w_query.a.size(); ++t)
        grads.attn.w_query.a[t] += eg.dw_query.a[t];
      for (size_t t = 0; t < grads.attn.w_key.a.size(); ++t)
        grads.attn.w_key.a[t] += eg.dw_key.a[t];
      for (size_t t = 0; t < grads.attn.w_loc.a.size(); ++t)
        grads.attn.w_loc.a[t] += eg.dw_loc.a[t];
      axpy(1.0, eg.dv, grads.attn.v);
      axpy(1.0, eg.dhidden_bias, grads.attn.hidden_bias);
      grads.attn.gain += eg.dgain;
      grads.attn.bias += eg.dbias;
      return eg;
    };

    switch (cfg.mechanism) {
      case Mechanism::BaselineLsa: {
        Vec de = adjoint_softmax(sc.y_row, dalign);
        EnergyGrads eg = energy_backward(de, &sc.loc_feats);
        LocationGrads lg = adjoint_location_features(sc.prev_align, m.loc_filters, eg.dlocation);
        for (size_t t = 0; t < grads.loc_filters.a.size(); ++t)
          grads.loc_filters.a[t] += lg.dfilters.a[t];
        dalign_prev = lg.dprev;
        break;
      }
      case Mechanism::Ma: {
        RowGrads rg = adjoint_ma_recursive(sc.prev_align, sc.p_row, sc.inspect, dalign);
        Vec de = adjoint_selection(sc.p_row, rg.dp);
        energy_backward(de, nullptr);
        dalign_prev = rg.dprev;
        break;
      }
      case Mechanism::Sma: {
        RowGrads rg = adjoint_sma(sc.prev_align, sc.p_row, cfg.sma_edge, dalign);
        Vec de = adjoint_selection(sc.p_row, rg.dp);
        energy_backward(de, nullptr);
        dalign_prev = rg.dprev;
        break;
      }
      case Mechanism::Fa:
      case Mechanism::FaTa: {
        ForwardAttentionGrads fg =
            adjoint_forward_attention(sc.fa_state_in, sc.y_row, use_ta, sc.fa_res, dalign);
        Vec de = adjoint_softmax(sc.y_row, fg.dsoftmax);
        energy_backward(de, nullptr);
        dalign_prev = fg.dprev;
        if (use_ta) {
          const double dta_pre = fg.du * sc.u * (1.0 - sc.u);
          axpy(dta_pre, sc.ta_input, grads.w_ta);
          grads.b_ta += dta_pre;
          for (int k = 0; k < H; ++k) dh_prev_total[k] += dta_pre * m.w_ta[k];
          for (int d = 0; d < M; ++d) dctx_prev[d] += dta_pre * m.w_ta[H + d];
        }
        break;
      }
      case Mechanism::Gmm: {
        GmmGrads gg = adjoint_gmm_step(sc.gmm_state_in, sc.gmm_updates, n, cfg.gmm_normalize,
                                       sc.gmm_res, dalign, dcenter_next);
        const int K = cfg.gmm_components;
        Vec draw(3 * K);
        for (int k = 0; k < K; ++k) {
          draw[k] = gg.dupdates[k].weight_raw;
          draw[K + k] = gg.dupdates[k].advance_raw;
          draw[2 * K + k] = gg.dupdates[k].width_raw;
        }
        outer_acc(1.0, draw, sc.h_prev, grads.w_gmm);
        axpy(1.0, draw, grads.b_gmm);
        matvec_t_acc(m.w_gmm, draw, dh_prev_total);
        dcenter_prev = gg.dcenter_prev;
        break;
      }
    }

    dh_next = dh_prev_total;
    dalign_next = dalign_prev;
    dctx_ta_next = dctx_prev;
    dcenter_next = dcenter_prev;
  }
  // carries into the fixed initial state (zeros / one-hot / zero centers) stop here

  // encoder BPTT: forward direction right-to-left, backward direction
  // left-to-right (its recurrence runs right-to-left)
  const int He = cfg.enc_hidden;
  // gradient w.r.t. the appended position feature is dropped (it is input data)
  std::vector<Vec> demb(n, Vec(cfg.emb_dim, 0.0));
  Vec carry(He, 0.0);
  for (int j = n - 1; j >= 0; --j) {
    Vec dh(He);
    for (int k = 0; k < He; ++k) dh[k] = gmem(j, k) + carry[k];
    Vec dx, dh_in;
    gru_backward(m.enc_fwd, f.enc.fwd[j], dh, grads.enc_fwd, dx, dh_in);
    for (int d = 0; d < cfg.emb_dim; ++d) demb[j][d] += dx[d];
    carry = dh_in;
  }
  carry.assign(He, 0.0);
  for (int j = 0; j < n; ++j) {
    Vec dh(He);
    for (int k = 0; k < He; ++k) dh[k] = gmem(j, He + k) + carry[k];
    Vec dx, dh_in;
    gru_backward(m.enc_bwd, f.enc.bwd[j], dh, grads.enc_bwd, dx, dh_in);
    for (int d = 0; d < cfg.emb_dim; ++d) demb[j][d] += dx[d];
    carry = dh_in;
  }
  for (int j = 0; j < n; ++j) {
    for (int d = 0; d < cfg.emb_dim; ++d) grads.emb(c.tokens[j], d) += demb[j][d];
  }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline io::json config_to_json(const ToyConfig& c) {
  io::json j;
  j["mechanism"] = mechanism_name(c.mechanism);
  j["symbols"] = c.symbols;
  j["frame_dim"] = c.frame_dim;
  j["emb_dim"] = c.emb_dim;
  j["enc_hidden"] = c.enc_hidden;
  j["dec_hidden"] = c.dec_hidden;
  j["attn_dim"] = c.attn_dim;
  j["loc_filters"] = c.loc_filters;
  j["loc_width"] = c.loc_width;
  j["gmm_components"] = c.gmm_components;
  j["init_bias"] = c.init_bias;
  j["noise_scale"] = c.noise_scale;
  j["pos_loss_weight"] = c.pos_loss_weight;
  j["sma_edge"] = edge_policy_name(c.sma_edge);
  j["gmm_normalize"] = c.gmm_normalize;
  return j;
}

inline ToyConfig config_from_json(const io::json& j) {
  ToyConfig c;
  c.mechanism = mechanism_from_name(j.at("mechanism").get<std::string>());
  c.symbols = j.at("symbols").get<int>();
  c.frame_dim = j.at("frame_dim").get<int>();
  c.emb_dim = j.at("emb_dim").get<int>();
  c.enc_hidden = j.at("enc_hidden").get<int>();
  c.dec_hidden = j.at("dec_hidden").get<int>();
  c.attn_dim = j.at("attn_dim").get<int>();
  c.loc_filters = j.at("loc_filters").get<int>();
  c.loc_width = j.at("loc_width").get<int>();
  c.gmm_components = j.at("gmm_components").get<int>();
  c.init_bias = j.at("init_bias").get<double>();
  c.noise_scale = j.at("noise_scale").get<double>();
  c.pos_loss_weight = j.at("pos_loss_weight").get<double>();
  c.sma_edge = j.at("sma_edge").get<std::string>() == "leak" ? EdgePolicy::Leak : EdgePolicy::Clamp;
  c.gmm_normalize = j.at("gmm_normalize").get<bool>();
  return c;
}

inline void save_checkpoint(const std::string& path, ToyModel& m,
                            const io::json& run_config = io::json()) {
  io::json j;
  j["format_version"] = 1;
  j["kind"] = "attnkit_checkpoint";
  j["mechanism"] = mechanism_name(m.cfg.mechanism);
  j["model_config"] = config_to_json(m.cfg);
  if (!run_config.is_null()) j["run_config"] = run_config;
  io::json params = io::json::object();
  for (const auto& p : collect_params(m)) {
    io::json entry;
    entry["len"] = p.len;
    entry["data"] = std::vector<double>(p.data, p.data + p.len);
    params[p.name] = std::move(entry);
  }
  j["params"] = std::move(params);
  io::write_json_file(path, j);
}

inline ToyModel load_checkpoint(const std::string& path, io::json* run_config = nullptr) {
  io::json j = io::read_json_file(path);
  if (!j.contains("kind") || j["kind"] != "attnkit_checkpoint")
    throw std::runtime_error("not a checkpoint file: " + path);
  if (j.at("format_version").get<int>() != 1)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  ToyConfig cfg = config_from_json(j.at("model_config"));
  ToyModel m = init_model(cfg, 0);
  const io::json& params = j.at("params");
  for (const auto& p : collect_params(m)) {
    if (!params.contains(p.name))
      throw std::runtime_error(std::string("checkpoint missing parameter ") + p.name);
    const auto data = params.at(p.name).at("data").get<std::vector<double>>();
    if (data.size() != p.len)
      throw std::runtime_error(std::string("checkpoint size mismatch for ") + p.name);
    std::copy(data.begin(), data.end(), p.data);
  }
  if (run_config != nullptr && j.contains("run_config")) *run_config = j["run_config"];
  return m;
}

}  // namespace toy
}  // namespace attnkit

#endif  // ATTNKIT_TOY_MODEL_HPP
