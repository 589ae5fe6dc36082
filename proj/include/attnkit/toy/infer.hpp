#ifndef ATTNKIT_TOY_INFER_HPP
#define ATTNKIT_TOY_INFER_HPP

#include <string>
#include <vector>

#include "attnkit/hard_decoder.hpp"
#include "attnkit/toy/model.hpp"

// Free-running inference. Soft mode replays the training-time attention with
// the model's own previous frame fed back; hard modes replace the expected
// context with a single committed memory row per frame (monotonic scan or
// stepwise stay/move). No noise is ever injected at inference time.

namespace attnkit {
namespace toy {

enum class InferMode { Soft, HardSampled, HardGreedy };

inline const char* infer_mode_name(InferMode m) {
  switch (m) {
    case InferMode::Soft: return "soft";
    case InferMode::HardSampled: return "hard_sampled";
    case InferMode::HardGreedy: return "hard_greedy";
  }
  return "?";
}

inline InferMode infer_mode_from_name(const std::string& s) {
  if (s == "soft") return InferMode::Soft;
  if (s == "hard_sampled") return InferMode::HardSampled;
  if (s == "hard_greedy") return InferMode::HardGreedy;
  throw std::runtime_error("unknown inference mode '" + s + "'");
}

struct InferConfig {
  InferMode mode = InferMode::Soft;
  int max_frames = 200;
  double stop_threshold = 0.5;
  // Snap each fed-back frame onto the target alphabet (one-hot symbol block,
  // position on the 1/n grid). Training always feeds clean target frames, so
  // without this the decoder sees inputs from a distribution it never trained
  // on and small output errors compound.
  bool quantize_feedback = true;
  uint64_t seed = 0;
};

struct InferResult {
  Matrix frames;          // one row per emitted frame
  Matrix alignments;      // soft rows, or one-hot rows in hard modes
  std::vector<int> path;  // hard modes: committed positions, 1-based
  bool stopped = false;   // stop head fired before max_frames
  bool past_end = false;  // hard decode walked past the last token
};

inline InferResult infer(const ToyModel& m, const std::vector<int>& tokens,
                         const InferConfig& ic) {
  const ToyConfig& cfg = m.cfg;
  require(ic.max_frames >= 1, "infer: max_frames must be positive");
  const bool hard = ic.mode != InferMode::Soft;
  if (hard) {
    require(cfg.mechanism == Mechanism::Ma || cfg.mechanism == Mechanism::Sma,
            "infer: hard modes need a sigmoid-gated mechanism (ma or sma)");
  }
  EncoderCache enc = encode(m, tokens);
  const int n = enc.memory.rows;

  std::vector<Vec> out_frames, out_aligns;
  InferResult res;
  Rng rng(ic.seed);
  const hard::SampleMode smode =
      ic.mode == InferMode::HardGreedy ? hard::SampleMode::Greedy : hard::SampleMode::Sampled;

  Vec h(cfg.dec_hidden, 0.0);
  Vec prev_frame(cfg.frame_dim, 0.0);
  Vec prev_align = one_hot(n, 0);
  Vec ctx_prev(cfg.mem_dim(), 0.0);
  GmmAttentionState gstate = GmmAttentionState::initial(cfg.gmm_components);
  int pos = 1;  // stepwise: current attended entry; monotonic: scan start

  for (int i = 0; i < ic.max_frames; ++i) {
    Vec align, ctx;
    if (hard) {
      Vec e = compute_energy(h, enc.memory, m.attn, nullptr, false, nullptr);
      Vec p = selection_probabilities(e);
      std::optional<int> next;
      if (cfg.mechanism == Mechanism::Sma) {
        next = hard::sma_hard_step(pos, n, p[pos - 1], smode, rng, cfg.sma_edge);
      } else {
        next = hard::ma_hard_step(pos, p, smode, rng);
      }
      if (!next.has_value()) {
        res.past_end = true;
        break;
      }
      pos = *next;
      res.path.push_back(pos);
      align = one_hot(n, pos - 1);
      ctx = enc.memory.row(pos - 1);
    } else {
      switch (cfg.mechanism) {
        case Mechanism::BaselineLsa: {
          Matrix loc = location_features(prev_align, m.loc_filters);
          align = softmax_alignment(compute_energy(h, enc.memory, m.attn, &loc, false, nullptr));
          break;
        }
        case Mechanism::Ma: {
          Vec p = selection_probabilities(
              compute_energy(h, enc.memory, m.attn, nullptr, false, nullptr));
          align = ma_alignment_recursive(prev_align, p);
          break;
        }
        case Mechanism::Sma: {
          Vec p = selection_probabilities(
              compute_energy(h, enc.memory, m.attn, nullptr, false, nullptr));
          align = sma_alignment(prev_align, p, cfg.sma_edge);
          break;
        }
        case Mechanism::Fa:
        case Mechanism::FaTa: {
          const bool use_ta = cfg.mechanism == Mechanism::FaTa;
          Vec y = softmax_alignment(compute_energy(h, enc.memory, m.attn, nullptr, false, nullptr));
          ForwardAttentionState st;
          st.prev_alignment = prev_align;
          if (use_ta) {
            Vec ta_in = h;
            ta_in.insert(ta_in.end(), ctx_prev.begin(), ctx_prev.end());
            st.transition_prob = sigmoid(dot(m.w_ta, ta_in) + m.b_ta);
          }
          align = forward_attention_step(st, y, use_ta).row;
          break;
        }
        case Mechanism::Gmm: {
          Vec raw = matvec(m.w_gmm, h);
          axpy(1.0, m.b_gmm, raw);
          const int K = cfg.gmm_components;
          std::vector<GmmUpdate> ups(K);
          for (int k = 0; k < K; ++k) ups[k] = GmmUpdate{raw[k], raw[K + k], raw[2 * K + k]};
          GmmStepResult r = gmm_attention_step(gstate, ups, n, cfg.gmm_normalize);
          align = r.row;
          gstate = r.state;
          break;
        }
      }
      ctx = context_vector(align, enc.memory);
    }

    Vec dec_in = prev_frame;
    dec_in.insert(dec_in.end(), ctx.begin(), ctx.end());
    h = gru_forward(m.dec, dec_in, h, nullptr);
    Vec head_in = h;
    head_in.insert(head_in.end(), ctx.begin(), ctx.end());
    Vec yhat = matvec(m.w_out, head_in);
    axpy(1.0, m.b_out, yhat);
    const double stop_p = sigmoid(dot(m.w_stop, head_in) + m.b_stop);

    out_frames.push_back(yhat);
    out_aligns.push_back(align);
    prev_frame = ic.quantize_feedback ? quantize_frame(yhat, cfg.frame_dim, n) : std::move(yhat);
    prev_align = align;
    ctx_prev = ctx;
    if (stop_p >= ic.stop_threshold) {
      res.stopped = true;
      break;
    }
  }

  const int rows = static_cast<int>(out_frames.size());
  res.frames = Matrix(rows, cfg.frame_dim);
  res.alignments = Matrix(rows, n);
  for (int i = 0; i < rows; ++i) {
    res.frames.set_row(i, out_frames[i]);
    res.alignments.set_row(i, out_aligns[i]);
  }
  return res;
}

}  // namespace toy
}  // namespace attnkit

#endif  // ATTNKIT_TOY_INFER_HPP
