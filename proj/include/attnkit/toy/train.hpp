#ifndef ATTNKIT_TOY_TRAIN_HPP
#define ATTNKIT_TOY_TRAIN_HPP

#include <cmath>
#include <cstdio>
#include <vector>

#include "attnkit/toy/model.hpp"

// Adam training loop. Deterministic given (model init, data, config): one RNG
// drives batch selection and energy noise in a fixed order, updates are
// applied serially. A non-finite loss or gradient aborts before the update
// lands, so the model keeps its last good parameters.

namespace attnkit {
namespace toy {

struct TrainConfig {
  int steps = 5000;
  int batch_size = 16;
  double lr = 4e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  int warmup_steps = 100;       // linear ramp from 0 to lr
  double final_lr_frac = 0.05;  // cosine decay floor, as a fraction of lr
  uint64_t seed = 0;
  int log_every = 0;  // 0 silences progress lines
};

// Warmup then cosine decay. The energy noise used by the monotonic
// mechanisms keeps gradients loud late in training; decaying the step size
// is what lets the run settle.
inline double lr_at_step(const TrainConfig& tc, int step) {
  if (tc.warmup_steps > 0 && step <= tc.warmup_steps)
    return tc.lr * step / tc.warmup_steps;
  const int hold = tc.warmup_steps;
  const double u = tc.steps > hold
                       ? static_cast<double>(step - hold) / (tc.steps - hold)
                       : 1.0;
  const double floor_lr = tc.lr * tc.final_lr_frac;
  return floor_lr + (tc.lr - floor_lr) * 0.5 * (1.0 + std::cos(u * 3.14159265358979323846));
}

struct TrainResult {
  Vec loss_curve;  // mean batch loss per step
  bool aborted = false;
  int steps_done = 0;
};

inline double global_grad_norm(std::vector<ParamView>& views) {
  double s = 0.0;
  for (const auto& p : views)
    for (size_t t = 0; t < p.len; ++t) s += p.data[t] * p.data[t];
  return std::sqrt(s);
}

inline TrainResult train(ToyModel& model, const std::vector<ToyCase>& data,
                         const TrainConfig& tc) {
  require(!data.empty(), "train: empty dataset");
  require(tc.steps >= 1 && tc.batch_size >= 1, "train: bad step/batch config");
  TrainResult res;
  Rng rng(tc.seed ^ 0x747261696eULL);

  auto model_views = collect_params(model);
  size_t total = 0;
  for (const auto& p : model_views) total += p.len;
  Vec adam_m(total, 0.0), adam_v(total, 0.0);

  ToyModel grads = zeros_like(model);
  auto grad_views = collect_params(grads);

  for (int step = 1; step <= tc.steps; ++step) {
    for (auto& p : grad_views)
      for (size_t t = 0; t < p.len; ++t) p.data[t] = 0.0;

    double batch_loss = 0.0;
    bool bad = false;
    for (int b = 0; b < tc.batch_size; ++b) {
      const ToyCase& c = data[rng.uniform_int(0, static_cast<uint64_t>(data.size()) - 1)];
      ForwardResult f = forward_teacher_forced(model, c, true, &rng);
      if (!f.finite) {
        bad = true;
        break;
      }
      batch_loss += f.loss;
      backward(model, c, f, grads);
    }
    if (!bad) {
      for (const auto& p : grad_views) {
        for (size_t t = 0; t < p.len && !bad; ++t) bad = !std::isfinite(p.data[t]);
        if (bad) break;
      }
    }
    if (bad) {
      res.aborted = true;  // parameters untouched by this step
      return res;
    }

    const double inv_batch = 1.0 / tc.batch_size;
    for (auto& p : grad_views)
      for (size_t t = 0; t < p.len; ++t) p.data[t] *= inv_batch;

    const double gnorm = global_grad_norm(grad_views);
    if (tc.clip_norm > 0.0 && gnorm > tc.clip_norm) {
      const double scale = tc.clip_norm / gnorm;
      for (auto& p : grad_views)
        for (size_t t = 0; t < p.len; ++t) p.data[t] *= scale;
    }

    const double bc1 = 1.0 - std::pow(tc.beta1, step);
    const double bc2 = 1.0 - std::pow(tc.beta2, step);
    const double lr_now = lr_at_step(tc, step);
    size_t off = 0;
    for (size_t i = 0; i < model_views.size(); ++i) {
      double* w = model_views[i].data;
      const double* g = grad_views[i].data;
      for (size_t t = 0; t < model_views[i].len; ++t, ++off) {
        adam_m[off] = tc.beta1 * adam_m[off] + (1.0 - tc.beta1) * g[t];
        adam_v[off] = tc.beta2 * adam_v[off] + (1.0 - tc.beta2) * g[t] * g[t];
        w[t] -= lr_now * (adam_m[off] / bc1) / (std::sqrt(adam_v[off] / bc2) + tc.adam_eps);
        require(std::isfinite(w[t]), "train: parameter went non-finite");
      }
    }

    res.loss_curve.push_back(batch_loss * inv_batch);
    res.steps_done = step;
    if (tc.log_every > 0 && step % tc.log_every == 0) {
      std::fprintf(stderr, "step %d loss %.6f gnorm %.4f\n", step, batch_loss * inv_batch, gnorm);
    }
  }
  return res;
}

// Mean teacher-forced loss without noise; cheap convergence probe.
inline double evaluate_loss(const ToyModel& model, const std::vector<ToyCase>& data) {
  require(!data.empty(), "evaluate_loss: empty dataset");
  double s = 0.0;
  for (const auto& c : data) s += forward_teacher_forced(model, c, false, nullptr).loss;
  return s / data.size();
}

}  // namespace toy
}  // namespace attnkit

#endif  // ATTNKIT_TOY_TRAIN_HPP
