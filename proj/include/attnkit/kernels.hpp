#ifndef ATTNKIT_KERNELS_HPP
#define ATTNKIT_KERNELS_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "attnkit/rng.hpp"
#include "attnkit/types.hpp"

// Alignment kernels for one decoder step.
//
// Conventions used throughout:
//  - memory positions are 0-based in arrays; serialized paths and GMM centers
//    use 1-based token positions (position j in math text = array index j-1).
//  - an alignment row is a (sub)distribution over memory positions. Iterating
//    a mechanism starts from alpha_0 = one-hot at position 0 and applies one
//    kernel step per decoder frame.
//  - p rows are stay/stop probabilities from the sigmoid, clamped strictly
//    inside (0, 1) by selection_probabilities.
//
// All kernels are pure functions of their arguments (plus an explicit Rng
// where noted) and safe to call from any number of threads.

namespace attnkit {

// Clamp applied to sigmoid outputs so recursions and samplers never see an
// exact 0 or 1.
inline constexpr double kSigmoidClamp = 1e-7;

// Floor for the cumprod denominators of the parallel monotonic form.
inline constexpr double kDenomFloor = 1e-10;

// Pre-normalization mass floor for forward attention; below this the row is
// reset to the fresh softmax row.
inline constexpr double kFaMassFloor = 1e-25;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Energy (additive/tanh scoring with weight normalization)
// ---------------------------------------------------------------------------

// Score function: e_j = gain * (v/|v|) . tanh(Wq q + Wk x_j + Wl f_j + b) + bias,
// optionally plus Gaussian noise (training only). The weight-normalized
// projection plus trainable scalar bias follows the standard recipe for
// sigmoid-gated attention; the bias modulates the moving speed and the noise
// pushes the selection probabilities toward binary values.
struct EnergyParams {
  Matrix w_query;   // A x H
  Matrix w_key;     // A x D
  Matrix w_loc;     // A x F, empty when location features are unused
  Vec v;            // A, normalized on use
  Vec hidden_bias;  // A
  double gain = 1.0;
  double bias = 0.0;
  double noise_scale = 0.0;

  int attn_dim() const { return static_cast<int>(v.size()); }
};

struct EnergyCache {
  Matrix tanh_act;  // n x A
  Vec v_hat;        // A
  double v_norm = 0.0;
};

inline Vec compute_energy(const Vec& query, const MemorySequence& memory,
                          const EnergyParams& params, const Matrix* location,
                          bool training, Rng* rng, EnergyCache* cache = nullptr) {
  const int n = memory.rows;
  const int A = params.attn_dim();
  require(static_cast<int>(query.size()) == params.w_query.cols,
          "compute_energy: query dimension does not match params");
  require(memory.cols == params.w_key.cols,
          "compute_energy: memory dimension does not match params");
  if (location != nullptr) {
    require(!params.w_loc.empty(), "compute_energy: location given but w_loc empty");
    require(location->rows == n && location->cols == params.w_loc.cols,
            "compute_energy: location feature shape mismatch");
  }
  const bool noisy = training && params.noise_scale > 0.0;
  require(!noisy || rng != nullptr, "compute_energy: rng required for noisy training");

  Vec vq = matvec(params.w_query, query);  // shared across j
  double vn = norm2(params.v);
  double inv_vn = vn > 0.0 ? 1.0 / vn : 0.0;

  if (cache != nullptr) {
    cache->tanh_act = Matrix(n, A);
    cache->v_hat.assign(A, 0.0);
    for (int k = 0; k < A; ++k) cache->v_hat[k] = params.v[k] * inv_vn;
    cache->v_norm = vn;
  }

  Vec e(n, 0.0);
  Vec pre(A);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < A; ++k) pre[k] = vq[k] + params.hidden_bias[k];
    for (int k = 0; k < A; ++k) {
      const double* wk = &params.w_key.a[static_cast<size_t>(k) * params.w_key.cols];
      const double* xj = &memory.a[static_cast<size_t>(j) * memory.cols];
      double s = 0.0;
      for (int d = 0; d < memory.cols; ++d) s += wk[d] * xj[d];
      pre[k] += s;
    }
    if (location != nullptr) {
      for (int k = 0; k < A; ++k) {
        double s = 0.0;
        for (int f = 0; f < params.w_loc.cols; ++f) s += params.w_loc(k, f) * (*location)(j, f);
        pre[k] += s;
      }
    }
    double proj = 0.0;
    for (int k = 0; k < A; ++k) {
      double t = std::tanh(pre[k]);
      if (cache != nullptr) cache->tanh_act(j, k) = t;
      proj += params.v[k] * inv_vn * t;
    }
    e[j] = params.gain * proj + params.bias;
  }
  if (noisy) {
    for (int j = 0; j < n; ++j) e[j] += params.noise_scale * rng->gaussian();
  }
  return e;
}

// ---------------------------------------------------------------------------
// Softmax alignment / selection probabilities / context
// ---------------------------------------------------------------------------

inline Vec softmax_alignment(const Vec& energies) {
  require(all_finite(energies), "softmax_alignment: non-finite energy");
  double m = *std::max_element(energies.begin(), energies.end());
  Vec out(energies.size());
  double z = 0.0;
  for (size_t j = 0; j < energies.size(); ++j) {
    out[j] = std::exp(energies[j] - m);
    z += out[j];
  }
  for (double& x : out) x /= z;
  return out;
}

inline Vec selection_probabilities(const Vec& energies) {
  require(all_finite(energies), "selection_probabilities: non-finite energy");
  Vec p(energies.size());
  for (size_t j = 0; j < energies.size(); ++j) {
    p[j] = std::clamp(sigmoid(energies[j]), kSigmoidClamp, 1.0 - kSigmoidClamp);
  }
  return p;
}

inline Vec context_vector(const Vec& alignment, const MemorySequence& memory) {
  require(static_cast<int>(alignment.size()) == memory.rows,
          "context_vector: alignment length does not match memory");
  Vec c(memory.cols, 0.0);
  for (int j = 0; j < memory.rows; ++j) {
    const double* xj = &memory.a[static_cast<size_t>(j) * memory.cols];
    for (int d = 0; d < memory.cols; ++d) c[d] += alignment[j] * xj[d];
  }
  return c;
}

// ---------------------------------------------------------------------------
// Monotonic attention expected alignment
// ---------------------------------------------------------------------------

// Recursive form, kept division-free: q_j is the probability the scan
// inspects position j, q_0 = prev_0 and q_j = (1-p_{j-1}) q_{j-1} + prev_j;
// the output is alpha_j = p_j q_j. Mass that scans past the last position
// leaks out, so row mass never grows.
inline Vec ma_alignment_recursive(const Vec& prev, const Vec& p_row, Vec* inspect_cache = nullptr) {
  const size_t n = prev.size();
  require(p_row.size() == n, "ma_alignment_recursive: length mismatch");
  Vec out(n);
  Vec q(n);
  double carry = 0.0;  // (1-p_{j-1}) q_{j-1}
  for (size_t j = 0; j < n; ++j) {
    q[j] = carry + prev[j];
    out[j] = p_row[j] * q[j];
    carry = (1.0 - p_row[j]) * q[j];
  }
  if (inspect_cache != nullptr) *inspect_cache = std::move(q);
  return out;
}

struct MaParallelResult {
  Vec row;
  bool denom_clamped = false;  // stability warning: some cumprod fell below kDenomFloor
};

// Vectorized cumsum/cumprod form. The exclusive cumprod of (1-p) appears in a
// denominator and underflows for long runs of high p; those denominators are
// floored at kDenomFloor and the result flagged. The recursive form is the
// reference semantics.
inline MaParallelResult ma_alignment_parallel(const Vec& prev, const Vec& p_row) {
  const size_t n = prev.size();
  require(p_row.size() == n, "ma_alignment_parallel: length mismatch");
  MaParallelResult res;
  res.row.assign(n, 0.0);
  double cp = 1.0;     // exclusive cumprod of (1-p)
  double csum = 0.0;   // cumsum of prev_k / max(cp_k, floor)
  for (size_t j = 0; j < n; ++j) {
    double denom = cp;
    if (denom < kDenomFloor) {
      denom = kDenomFloor;
      res.denom_clamped = true;
    }
    csum += prev[j] / denom;
    res.row[j] = p_row[j] * cp * csum;
    cp *= (1.0 - p_row[j]);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Stepwise monotonic attention
// ---------------------------------------------------------------------------

// One step of the stepwise recursion: each unit of mass stays at j with
// probability p_j or moves to j+1 with probability 1-p_j, never further.
//   alpha_j = prev_{j-1} (1 - p_{j-1}) + prev_j p_j         (no inflow at j=0)
// Edge handling at the last position:
//   Leak  - mass prev_{n-1} (1 - p_{n-1}) exits past the end (literal form);
//   Clamp - the last position's stay probability is forced to 1, conserving mass.
inline Vec sma_alignment(const Vec& prev, const Vec& p_row, EdgePolicy edge) {
  const size_t n = prev.size();
  require(p_row.size() == n, "sma_alignment: length mismatch");
  Vec out(n);
  for (size_t j = 0; j < n; ++j) {
    double stay = p_row[j];
    if (edge == EdgePolicy::Clamp && j == n - 1) stay = 1.0;
    out[j] = prev[j] * stay;
    if (j > 0) out[j] += prev[j - 1] * (1.0 - p_row[j - 1]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward attention
// ---------------------------------------------------------------------------

struct ForwardAttentionState {
  Vec prev_alignment;
  // transition probability u in (0,1); present iff the transition-agent
  // variant is enabled
  std::optional<double> transition_prob;
};

struct ForwardStepResult {
  Vec row;
  ForwardAttentionState state;
  bool underflow_reset = false;  // stability warning: fell back to the softmax row
  double z = 0.0;                // pre-normalization mass (cached for the adjoint)
};

// Forward-variable reweighting of the fresh softmax row:
//   no TA:   a_j  propto  (prev_j + prev_{j-1}) y_j
//   with TA: a_j  propto  ((1-u) prev_j + u prev_{j-1}) y_j
// then renormalized. When the pre-normalization mass underflows kFaMassFloor
// the row is reset to the softmax row (the supports have become disjoint and
// normalization would amplify noise without bound).
inline ForwardStepResult forward_attention_step(const ForwardAttentionState& state,
                                                const Vec& softmax_row,
                                                bool use_transition_agent) {
  const size_t n = softmax_row.size();
  require(state.prev_alignment.size() == n, "forward_attention_step: length mismatch");
  require(!use_transition_agent || state.transition_prob.has_value(),
          "forward_attention_step: transition agent enabled but u absent");

  const Vec& prev = state.prev_alignment;
  double u = use_transition_agent ? *state.transition_prob : 0.0;

  ForwardStepResult res;
  res.row.assign(n, 0.0);
  double z = 0.0;
  for (size_t j = 0; j < n; ++j) {
    double inflow;
    if (use_transition_agent) {
      inflow = (1.0 - u) * prev[j] + (j > 0 ? u * prev[j - 1] : 0.0);
    } else {
      inflow = prev[j] + (j > 0 ? prev[j - 1] : 0.0);
    }
    res.row[j] = inflow * softmax_row[j];
    z += res.row[j];
  }
  res.z = z;
  if (z < kFaMassFloor) {
    res.underflow_reset = true;
    res.row = softmax_row;
    double m = mass(res.row);
    for (double& x : res.row) x /= m;
  } else {
    for (double& x : res.row) x /= z;
  }
  res.state.prev_alignment = res.row;
  res.state.transition_prob = state.transition_prob;
  return res;
}

// ---------------------------------------------------------------------------
// GMM attention (mixture-of-Gaussians scan over token positions)
// ---------------------------------------------------------------------------

struct GmmComponent {
  double weight = 0.0;  // omega_k >= 0
  double center = 0.0;  // kappa_k, 1-based token position, nondecreasing
  double width = 1.0;   // beta_k > 0 (precision-like)
};

struct GmmAttentionState {
  std::vector<GmmComponent> comps;

  static GmmAttentionState initial(int k) {
    GmmAttentionState s;
    s.comps.assign(k, GmmComponent{});
    return s;
  }
};

// Raw per-component decoder-head outputs; all three go through exp so that
// weights and widths stay positive and centers only ever advance.
struct GmmUpdate {
  double weight_raw = 0.0;
  double advance_raw = 0.0;
  double width_raw = 0.0;
};

struct GmmStepResult {
  Vec row;
  GmmAttentionState state;
  double row_mass = 0.0;  // pre-normalization mass (cached for the adjoint)
};

// alpha_j = sum_k w_k exp(-beta_k (kappa_k - pos_j)^2) at positions 1..n.
// Unnormalized by default (the classic handwriting-synthesis window);
// normalize_row divides by the row mass instead.
inline GmmStepResult gmm_attention_step(const GmmAttentionState& state,
                                        const std::vector<GmmUpdate>& updates, int n,
                                        bool normalize_row = false) {
  require(updates.size() == state.comps.size(), "gmm_attention_step: component count mismatch");
  GmmStepResult res;
  res.state.comps.resize(state.comps.size());
  for (size_t k = 0; k < state.comps.size(); ++k) {
    res.state.comps[k].weight = std::exp(updates[k].weight_raw);
    res.state.comps[k].center = state.comps[k].center + std::exp(updates[k].advance_raw);
    res.state.comps[k].width = std::exp(updates[k].width_raw);
  }
  res.row.assign(n, 0.0);
  for (int j = 0; j < n; ++j) {
    double pos = static_cast<double>(j + 1);
    double s = 0.0;
    for (const auto& c : res.state.comps) {
      double d = c.center - pos;
      s += c.weight * std::exp(-c.width * d * d);
    }
    res.row[j] = s;
  }
  res.row_mass = mass(res.row);
  if (normalize_row) {
    double z = std::max(res.row_mass, 1e-300);
    for (double& x : res.row) x /= z;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Location features
// ---------------------------------------------------------------------------

// Same-padded 1-D convolution of the previous alignment with each filter row;
// filters are F x W with W odd.
inline Matrix location_features(const Vec& prev_alignment, const Matrix& filters) {
  require(filters.cols % 2 == 1, "location_features: filter width must be odd");
  const int n = static_cast<int>(prev_alignment.size());
  const int half = filters.cols / 2;
  Matrix out(n, filters.rows);
  for (int j = 0; j < n; ++j) {
    for (int f = 0; f < filters.rows; ++f) {
      double s = 0.0;
      for (int k = 0; k < filters.cols; ++k) {
        int src = j + k - half;
        if (src >= 0 && src < n) s += filters(f, k) * prev_alignment[src];
      }
      out(j, f) = s;
    }
  }
  return out;
}

}  // namespace attnkit

#endif  // ATTNKIT_KERNELS_HPP
