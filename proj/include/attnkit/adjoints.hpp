#ifndef ATTNKIT_ADJOINTS_HPP
#define ATTNKIT_ADJOINTS_HPP

#include <cmath>
#include <vector>

#include "attnkit/kernels.hpp"
#include "attnkit/types.hpp"

// Exact reverse-mode derivatives, one adjoint per forward kernel. Each takes
// the forward inputs (plus whatever the forward call cached) and the upstream
// gradient, and returns gradients w.r.t. every input. All are verified
// against central finite differences in the test suite.

namespace attnkit {

// dE from d(softmax(E)) given the softmax output y.
inline Vec adjoint_softmax(const Vec& y, const Vec& upstream) {
  double s = dot(upstream, y);
  Vec de(y.size());
  for (size_t j = 0; j < y.size(); ++j) de[j] = y[j] * (upstream[j] - s);
  return de;
}

// dE from dp given the clamped sigmoid output p. Clamped entries have zero
// derivative.
inline Vec adjoint_selection(const Vec& p, const Vec& upstream) {
  Vec de(p.size());
  for (size_t j = 0; j < p.size(); ++j) {
    bool clamped = p[j] <= kSigmoidClamp || p[j] >= 1.0 - kSigmoidClamp;
    de[j] = clamped ? 0.0 : upstream[j] * p[j] * (1.0 - p[j]);
  }
  return de;
}

// d(alignment) from d(context); also accumulates d(memory).
inline Vec adjoint_context(const Vec& alignment, const MemorySequence& memory,
                           const Vec& upstream, Matrix* dmemory = nullptr) {
  Vec dalign(memory.rows, 0.0);
  for (int j = 0; j < memory.rows; ++j) {
    const double* xj = &memory.a[static_cast<size_t>(j) * memory.cols];
    double s = 0.0;
    for (int d = 0; d < memory.cols; ++d) s += upstream[d] * xj[d];
    dalign[j] = s;
    if (dmemory != nullptr) {
      double* gj = &dmemory->a[static_cast<size_t>(j) * dmemory->cols];
      for (int d = 0; d < memory.cols; ++d) gj[d] += alignment[j] * upstream[d];
    }
  }
  return dalign;
}

struct RowGrads {
  Vec dprev;
  Vec dp;
};

// Adjoint of ma_alignment_recursive; `inspect` is the q cache from the
// forward call.
inline RowGrads adjoint_ma_recursive(const Vec& prev, const Vec& p_row, const Vec& inspect,
                                     const Vec& upstream) {
  const int n = static_cast<int>(prev.size());
  RowGrads g;
  g.dprev.assign(n, 0.0);
  g.dp.assign(n, 0.0);
  double dq_carry = 0.0;  // gradient flowing into q_j from q_{j+1}
  for (int j = n - 1; j >= 0; --j) {
    // out_j = p_j q_j ; q_{j+1} = (1-p_j) q_j + prev_{j+1}
    double dq = upstream[j] * p_row[j] + dq_carry * (1.0 - p_row[j]);
    g.dp[j] = upstream[j] * inspect[j] - dq_carry * inspect[j];
    g.dprev[j] = dq;
    dq_carry = dq;
  }
  return g;
}

// Adjoint of ma_alignment_parallel, differentiating through the floored
// denominators (a floored denominator contributes no gradient to cp).
inline RowGrads adjoint_ma_parallel(const Vec& prev, const Vec& p_row, const Vec& upstream) {
  const int n = static_cast<int>(prev.size());
  Vec cp(n), csum(n), denom(n);
  double run_cp = 1.0, run_sum = 0.0;
  for (int j = 0; j < n; ++j) {
    cp[j] = run_cp;
    denom[j] = std::max(run_cp, kDenomFloor);
    run_sum += prev[j] / denom[j];
    csum[j] = run_sum;
    run_cp *= (1.0 - p_row[j]);
  }
  RowGrads g;
  g.dprev.assign(n, 0.0);
  g.dp.assign(n, 0.0);
  double dcsum_carry = 0.0;
  double dcp_carry = 0.0;  // gradient into cp_{j+1}
  for (int j = n - 1; j >= 0; --j) {
    double dcp = dcp_carry * (1.0 - p_row[j]);
    g.dp[j] -= dcp_carry * cp[j];
    // out_j = p_j cp_j csum_j
    g.dp[j] += upstream[j] * cp[j] * csum[j];
    dcp += upstream[j] * p_row[j] * csum[j];
    double dcsum = upstream[j] * p_row[j] * cp[j] + dcsum_carry;
    // csum_j = csum_{j-1} + prev_j / denom_j
    g.dprev[j] += dcsum / denom[j];
    if (cp[j] >= kDenomFloor) {
      dcp -= dcsum * prev[j] / (denom[j] * denom[j]);
    }
    dcsum_carry = dcsum;
    dcp_carry = dcp;
  }
  return g;
}

// Adjoint of sma_alignment.
inline RowGrads adjoint_sma(const Vec& prev, const Vec& p_row, EdgePolicy edge,
                            const Vec& upstream) {
  const int n = static_cast<int>(prev.size());
  RowGrads g;
  g.dprev.assign(n, 0.0);
  g.dp.assign(n, 0.0);
  for (int j = 0; j < n; ++j) {
    double stay = p_row[j];
    bool forced = edge == EdgePolicy::Clamp && j == n - 1;
    if (forced) stay = 1.0;
    g.dprev[j] += upstream[j] * stay;
    if (!forced) g.dp[j] += upstream[j] * prev[j];
    if (j + 1 < n) {
      g.dprev[j] += upstream[j + 1] * (1.0 - p_row[j]);
      g.dp[j] -= upstream[j + 1] * prev[j];
    }
  }
  return g;
}

struct ForwardAttentionGrads {
  Vec dprev;
  Vec dsoftmax;
  double du = 0.0;
};

// Adjoint of forward_attention_step. `res` is the forward result (carries the
// pre-normalization mass and the reset flag). When the underflow reset fired
// the output was the renormalized softmax row, so no gradient reaches prev or u.
inline ForwardAttentionGrads adjoint_forward_attention(const ForwardAttentionState& state,
                                                       const Vec& softmax_row,
                                                       bool use_transition_agent,
                                                       const ForwardStepResult& res,
                                                       const Vec& upstream) {
  const int n = static_cast<int>(softmax_row.size());
  const Vec& prev = state.prev_alignment;
  ForwardAttentionGrads g;
  g.dprev.assign(n, 0.0);
  g.dsoftmax.assign(n, 0.0);

  double s = dot(upstream, res.row);
  if (res.underflow_reset) {
    double m = mass(softmax_row);
    for (int j = 0; j < n; ++j) g.dsoftmax[j] = (upstream[j] - s) / m;
    return g;
  }

  double u = use_transition_agent ? *state.transition_prob : 0.0;
  for (int j = 0; j < n; ++j) {
    double dnum = (upstream[j] - s) / res.z;
    double inflow;
    if (use_transition_agent) {
      inflow = (1.0 - u) * prev[j] + (j > 0 ? u * prev[j - 1] : 0.0);
    } else {
      inflow = prev[j] + (j > 0 ? prev[j - 1] : 0.0);
    }
    g.dsoftmax[j] = dnum * inflow;
    double dinflow = dnum * softmax_row[j];
    if (use_transition_agent) {
      g.dprev[j] += dinflow * (1.0 - u);
      if (j > 0) g.dprev[j - 1] += dinflow * u;
      g.du += dinflow * (-prev[j] + (j > 0 ? prev[j - 1] : 0.0));
    } else {
      g.dprev[j] += dinflow;
      if (j > 0) g.dprev[j - 1] += dinflow;
    }
  }
  return g;
}

struct GmmGrads {
  std::vector<GmmUpdate> dupdates;  // gradients on the raw head outputs
  Vec dcenter_prev;                 // gradient on the previous step's centers
};

// Adjoint of gmm_attention_step. `dcenter_next` carries gradient arriving at
// this step's new centers from later steps (the centers are a recurrent
// state); pass an empty Vec when there is none.
inline GmmGrads adjoint_gmm_step(const GmmAttentionState& state,
                                 const std::vector<GmmUpdate>& updates, int n,
                                 bool normalize_row, const GmmStepResult& res,
                                 const Vec& upstream, const Vec& dcenter_next) {
  const int kn = static_cast<int>(updates.size());
  GmmGrads g;
  g.dupdates.assign(kn, GmmUpdate{});
  g.dcenter_prev.assign(kn, 0.0);

  Vec draw(n);
  if (normalize_row) {
    double z = std::max(res.row_mass, 1e-300);
    double s = dot(upstream, res.row);
    for (int j = 0; j < n; ++j) draw[j] = (upstream[j] - s) / z;
  } else {
    draw = upstream;
  }

  for (int k = 0; k < kn; ++k) {
    const GmmComponent& c = res.state.comps[k];
    double dw = 0.0, dcenter = 0.0, dwidth = 0.0;
    for (int j = 0; j < n; ++j) {
      double pos = static_cast<double>(j + 1);
      double d = c.center - pos;
      double e = std::exp(-c.width * d * d);
      dw += draw[j] * e;
      dcenter += draw[j] * c.weight * e * (-2.0 * c.width * d);
      dwidth += draw[j] * c.weight * e * (-d * d);
    }
    if (!dcenter_next.empty()) dcenter += dcenter_next[k];
    g.dupdates[k].weight_raw = dw * c.weight;
    g.dupdates[k].advance_raw = dcenter * (c.center - state.comps[k].center);
    g.dupdates[k].width_raw = dwidth * c.width;
    g.dcenter_prev[k] = dcenter;
  }
  return g;
}

struct LocationGrads {
  Vec dprev;
  Matrix dfilters;
};

// Adjoint of location_features (transposed convolution).
inline LocationGrads adjoint_location_features(const Vec& prev_alignment, const Matrix& filters,
                                               const Matrix& upstream) {
  const int n = static_cast<int>(prev_alignment.size());
  const int half = filters.cols / 2;
  LocationGrads g;
  g.dprev.assign(n, 0.0);
  g.dfilters = Matrix(filters.rows, filters.cols);
  for (int j = 0; j < n; ++j) {
    for (int f = 0; f < filters.rows; ++f) {
      double up = upstream(j, f);
      if (up == 0.0) continue;
      for (int k = 0; k < filters.cols; ++k) {
        int src = j + k - half;
        if (src >= 0 && src < n) {
          g.dprev[src] += filters(f, k) * up;
          g.dfilters(f, k) += prev_alignment[src] * up;
        }
      }
    }
  }
  return g;
}

struct EnergyGrads {
  Vec dquery;
  Matrix dmemory;
  Matrix dw_query;
  Matrix dw_key;
  Matrix dw_loc;
  Vec dv;
  Vec dhidden_bias;
  double dgain = 0.0;
  double dbias = 0.0;
  Matrix dlocation;  // n x F, only filled when location was given
};

// Adjoint of compute_energy. Additive noise is a constant w.r.t. all inputs,
// so training noise does not appear here.
inline EnergyGrads adjoint_compute_energy(const Vec& query, const MemorySequence& memory,
                                          const EnergyParams& params, const Matrix* location,
                                          const EnergyCache& cache, const Vec& upstream) {
  const int n = memory.rows;
  const int A = params.attn_dim();
  EnergyGrads g;
  g.dquery.assign(query.size(), 0.0);
  g.dmemory = Matrix(memory.rows, memory.cols);
  g.dw_query = Matrix(params.w_query.rows, params.w_query.cols);
  g.dw_key = Matrix(params.w_key.rows, params.w_key.cols);
  g.dw_loc = Matrix(params.w_loc.rows, params.w_loc.cols);
  g.dv.assign(A, 0.0);
  g.dhidden_bias.assign(A, 0.0);
  if (location != nullptr) g.dlocation = Matrix(location->rows, location->cols);

  Vec dvhat(A, 0.0);
  Vec dpre(A);
  for (int j = 0; j < n; ++j) {
    double up = upstream[j];
    double proj = 0.0;
    for (int k = 0; k < A; ++k) proj += cache.v_hat[k] * cache.tanh_act(j, k);
    g.dgain += up * proj;
    g.dbias += up;
    for (int k = 0; k < A; ++k) {
      double t = cache.tanh_act(j, k);
      dvhat[k] += up * params.gain * t;
      dpre[k] = up * params.gain * cache.v_hat[k] * (1.0 - t * t);
      g.dhidden_bias[k] += dpre[k];
    }
    // dpre fans out to the three projections
    for (int k = 0; k < A; ++k) {
      const double* wq = &params.w_query.a[static_cast<size_t>(k) * params.w_query.cols];
      double* gwq = &g.dw_query.a[static_cast<size_t>(k) * g.dw_query.cols];
      for (int d = 0; d < params.w_query.cols; ++d) {
        g.dquery[d] += wq[d] * dpre[k];
        gwq[d] += dpre[k] * query[d];
      }
      const double* wk = &params.w_key.a[static_cast<size_t>(k) * params.w_key.cols];
      double* gwk = &g.dw_key.a[static_cast<size_t>(k) * g.dw_key.cols];
      const double* xj = &memory.a[static_cast<size_t>(j) * memory.cols];
      double* gx = &g.dmemory.a[static_cast<size_t>(j) * memory.cols];
      for (int d = 0; d < memory.cols; ++d) {
        gx[d] += wk[d] * dpre[k];
        gwk[d] += dpre[k] * xj[d];
      }
      if (location != nullptr) {
        for (int f = 0; f < params.w_loc.cols; ++f) {
          g.dlocation(j, f) += params.w_loc(k, f) * dpre[k];
          g.dw_loc(k, f) += dpre[k] * (*location)(j, f);
        }
      }
    }
  }
  // v_hat = v / |v|  =>  dv = (dvhat - v_hat (v_hat . dvhat)) / |v|
  if (cache.v_norm > 0.0) {
    double vdot = dot(cache.v_hat, dvhat);
    for (int k = 0; k < A; ++k) g.dv[k] = (dvhat[k] - cache.v_hat[k] * vdot) / cache.v_norm;
  }
  return g;
}

}  // namespace attnkit

#endif  // ATTNKIT_ADJOINTS_HPP
