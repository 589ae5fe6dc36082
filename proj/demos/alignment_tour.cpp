// A quick tour of the alignment machinery: soft recursions, edge policies,
// the renormalized and mixture mechanisms, hard decoding, an oracle spot
// check, and a miniature end-to-end training run. Runs in a few seconds and
// prints everything it does.

#include <cstdio>
#include <vector>

#include "attnkit/hard_decoder.hpp"
#include "attnkit/kernels.hpp"
#include "attnkit/oracle.hpp"
#include "attnkit/rng.hpp"
#include "attnkit/toy/dataset.hpp"
#include "attnkit/toy/infer.hpp"
#include "attnkit/toy/model.hpp"
#include "attnkit/toy/train.hpp"

using namespace attnkit;

namespace {

void print_row(const char* tag, const Vec& v) {
  std::printf("%-14s[", tag);
  for (size_t j = 0; j < v.size(); ++j) std::printf("%s%.4f", j ? ", " : "", v[j]);
  std::printf("]  mass %.6f\n", mass(v));
}

void section(const char* title) { std::printf("\n== %s ==\n", title); }

}  // namespace

int main() {
  std::printf("alignment tour: every number below is deterministic\n");

  section("stepwise recursion: stay or advance one");
  // worked example: prev [0.5, 0.5, 0] with stay probs [0.2, 0.6, 0.9]
  Vec prev = {0.5, 0.5, 0.0};
  Vec p = {0.2, 0.6, 0.9};
  print_row("prev", prev);
  print_row("p(stay)", p);
  print_row("next", sma_alignment(prev, p, EdgePolicy::Clamp));

  section("edge policies at the last token");
  Vec edge_prev = {0.0, 0.0, 1.0};
  Vec edge_p = {0.5, 0.5, 0.3};
  print_row("clamp", sma_alignment(edge_prev, edge_p, EdgePolicy::Clamp));
  print_row("leak", sma_alignment(edge_prev, edge_p, EdgePolicy::Leak));
  std::printf("clamp keeps the walker parked; leak lets 0.7 of the mass exit\n");

  section("monotonic scan: mass only shrinks");
  Vec ma = one_hot(4, 0);
  Vec ma_p = {0.6, 0.5, 0.4, 0.3};
  for (int step = 0; step < 3; ++step) {
    ma = ma_alignment_recursive(ma, ma_p);
    std::printf("step %d  ", step + 1);
    print_row("", ma);
  }

  section("renormalized spread with a fallback");
  ForwardAttentionState fa;
  fa.prev_alignment = one_hot(2, 0);
  Vec uniform = {0.5, 0.5};
  ForwardStepResult fr = forward_attention_step(fa, uniform, false);
  print_row("spread", fr.row);
  ForwardAttentionState dead;
  dead.prev_alignment = {0.0, 0.0, 1.0, 0.0};
  Vec disjoint = {0.5, 0.5, 0.0, 0.0};
  ForwardStepResult reset = forward_attention_step(dead, disjoint, false);
  std::printf("disjoint support underflows (z=%.3g) and resets to the softmax row:\n", reset.z);
  print_row("reset", reset.row);

  section("mixture attention drifts rightward");
  GmmAttentionState gstate = GmmAttentionState::initial(1);
  std::vector<GmmUpdate> upd = {{0.0, std::log(1.0), std::log(0.4)}};
  for (int step = 0; step < 3; ++step) {
    GmmStepResult gr = gmm_attention_step(gstate, upd, 6, true);
    std::printf("step %d center %.2f  ", step + 1, gr.state.components[0].center);
    print_row("", gr.row);
    gstate = gr.state;
  }

  section("hard decoding commits one entry per frame");
  Matrix mem(4, 2);
  for (int j = 0; j < 4; ++j) {
    mem(j, 0) = j + 1.0;
    mem(j, 1) = -(j + 1.0);
  }
  hard::SamplerConfig sampler;
  sampler.mode = hard::SampleMode::Sampled;
  sampler.seed = 11;
  sampler.max_steps = 8;
  auto feed = [](int /*step*/, int n) {
    hard::StepFeed f;
    f.p_row.assign(n, 0.45);  // modest stay chance everywhere
    return f;
  };
  hard::HardDecodeResult hd =
      hard::decode_hard(mem, feed, sampler, hard::Family::Stepwise, EdgePolicy::Clamp);
  std::printf("sampled stepwise path: ");
  for (int pos : hd.path.positions) std::printf("%d ", pos);
  std::printf("\n");

  section("oracle spot check");
  Rng rng(123);
  Matrix pr(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) pr(i, j) = rng.uniform(0.05, 0.95);
  oracle::ExactAlignment exact = oracle::enumerate_stepwise(pr, EdgePolicy::Clamp);
  Vec walk = one_hot(4, 0);
  double worst = 0.0;
  for (int i = 0; i < 4; ++i) {
    walk = sma_alignment(walk, pr.row(i), EdgePolicy::Clamp);
    for (int j = 0; j < 4; ++j)
      worst = std::max(worst, std::fabs(walk[j] - exact.marginals(i, j)));
  }
  std::printf("recursion vs exact path enumeration, 4x4 instance: max |diff| = %.3g\n", worst);

  section("miniature end-to-end run");
  toy::ToyTaskSpec spec;
  spec.vocab = 3;
  spec.min_train_len = 2;
  spec.max_train_len = 4;
  spec.min_stress_len = 5;
  spec.max_stress_len = 8;
  spec.train_count = 40;
  spec.heldout_count = 6;
  auto data = toy::generate_split(spec, "train", 1);
  auto held = toy::generate_split(spec, "heldout", 1);

  toy::ToyConfig cfg;
  cfg.mechanism = toy::Mechanism::Sma;
  cfg.symbols = spec.symbol_count();
  cfg.frame_dim = spec.frame_dim();
  cfg.emb_dim = 6;
  cfg.enc_hidden = 8;
  cfg.dec_hidden = 16;
  cfg.attn_dim = 8;
  cfg.loc_filters = 2;
  cfg.loc_width = 3;
  cfg.gmm_components = 2;
  cfg.init_bias = 1.0;
  cfg.noise_scale = 0.5;
  toy::ToyModel model = toy::init_model(cfg, 1);

  toy::TrainConfig tc;
  tc.steps = 250;
  tc.batch_size = 8;
  tc.warmup_steps = 25;
  tc.seed = 1;
  toy::TrainResult tr = toy::train(model, data, tc);
  std::printf("trained %d steps: loss %.4f -> %.4f\n", tr.steps_done, tr.loss_curve.front(),
              tr.loss_curve.back());

  toy::InferConfig ic;
  ic.max_frames = 24;
  toy::InferResult res = toy::infer(model, held[0].tokens, ic);
  std::printf("soft inference on a held-out case: %d frames (target %d), accuracy %.2f\n",
              res.frames.rows, held[0].frames.rows - 1,
              toy::frame_accuracy(res.frames, held[0], spec));

  ic.mode = toy::InferMode::HardGreedy;
  toy::InferResult hres = toy::infer(model, held[0].tokens, ic);
  std::printf("hard greedy path: ");
  for (int pos : hres.path) std::printf("%d ", pos);
  std::printf("\n\ntour complete\n");
  return 0;
}
