#ifndef ATTNKIT_ORACLE_HPP
#define ATTNKIT_ORACLE_HPP

#include <vector>

#include "attnkit/hard_decoder.hpp"
#include "attnkit/kernels.hpp"
#include "attnkit/rng.hpp"
#include "attnkit/types.hpp"

// Exact reference distributions for the hard attention processes, computed by
// direct enumeration over decision sequences. These deliberately share no
// code with the soft kernels: the whole point is an independent derivation of
// the same marginals. Sizes are hard-capped because the costs grow fast; the
// caps are generous for test-sized problems.

namespace attnkit {
namespace oracle {

// Row i (0-based) of `marginals` is the exact attended-index distribution
// after i+1 hard steps, i.e. the distribution of t_{i+2} for the stepwise
// process (t_1 is pinned to the first entry) and of t_{i+1} for the monotonic
// process. `leak[i]` is the cumulative past-end probability by that step;
// row mass + leak == 1 exactly (up to rounding).
struct ExactAlignment {
  Matrix marginals;
  Vec leak;
};

// Forward DP over index marginals for the stay/move-one process. p(i, j) is
// the stay probability at entry j+1 for transition i+1; T = p.rows
// transitions from the pinned start. Under Leak the move out of the last
// entry exits; under Clamp it stays.
inline ExactAlignment enumerate_stepwise(const Matrix& p, EdgePolicy edge) {
  const int T = p.rows, n = p.cols;
  require(T >= 1 && n >= 1, "enumerate_stepwise: empty probability table");
  require(T <= 12 && n <= 12, "enumerate_stepwise: size guard (T, n <= 12) exceeded");
  ExactAlignment out{Matrix(T, n), Vec(T, 0.0)};
  Vec dist(n, 0.0);
  dist[0] = 1.0;
  double dead = 0.0;
  for (int i = 0; i < T; ++i) {
    Vec next(n, 0.0);
    for (int j = 0; j < n; ++j) {
      if (dist[j] == 0.0) continue;
      const double stay = p(i, j);
      next[j] += dist[j] * stay;
      if (j + 1 < n) {
        next[j + 1] += dist[j] * (1.0 - stay);
      } else if (edge == EdgePolicy::Clamp) {
        next[j] += dist[j] * (1.0 - stay);
      } else {
        dead += dist[j] * (1.0 - stay);
      }
    }
    dist = next;
    out.marginals.set_row(i, dist);
    out.leak[i] = dead;
  }
  return out;
}

// O(T n^2) DP for the scan-until-stop process. At output step i+1 the scan
// starts from the previously attended entry and stops at entry k with
// probability p(i,k) * prod_{l<k, l>=start} (1 - p(i,l)); surviving the whole
// suffix exits past the end.
inline ExactAlignment enumerate_monotonic(const Matrix& p) {
  const int T = p.rows, n = p.cols;
  require(T >= 1 && n >= 1, "enumerate_monotonic: empty probability table");
  require(T <= 8 && n <= 8, "enumerate_monotonic: size guard (T, n <= 8) exceeded");
  ExactAlignment out{Matrix(T, n), Vec(T, 0.0)};
  Vec dist(n, 0.0);
  dist[0] = 1.0;  // t_0: the scan for the first output starts at entry 1
  double dead = 0.0;
  for (int i = 0; i < T; ++i) {
    Vec next(n, 0.0);
    for (int j = 0; j < n; ++j) {
      if (dist[j] == 0.0) continue;
      double survive = dist[j];
      for (int k = j; k < n; ++k) {
        next[k] += survive * p(i, k);
        survive *= 1.0 - p(i, k);
      }
      dead += survive;
    }
    dist = next;
    out.marginals.set_row(i, dist);
    out.leak[i] = dead;
  }
  return out;
}

// Literal path listing: every complete decision sequence with its exact
// probability. The oracle's own oracle; exponential, hence the tight caps.
struct EnumeratedPath {
  std::vector<int> positions;  // 1-based, one per step; shorter if past_end
  double prob = 0.0;
  bool past_end = false;
};

struct PathEnumeration {
  std::vector<EnumeratedPath> paths;
  Matrix marginals;  // same convention as ExactAlignment
  Vec leak;
};

namespace detail {

inline void list_stepwise_rec(const Matrix& p, EdgePolicy edge, int step, int pos, double prob,
                              std::vector<int>& stack, PathEnumeration& out) {
  const int T = p.rows, n = p.cols;
  if (step == T) {
    out.paths.push_back({stack, prob, false});
    return;
  }
  const double stay = p(step, pos - 1);
  // stay branch
  stack.push_back(pos);
  out.marginals(step, pos - 1) += prob * stay;
  list_stepwise_rec(p, edge, step + 1, pos, prob * stay, stack, out);
  stack.pop_back();
  // move branch
  const double move = prob * (1.0 - stay);
  int dest = pos < n ? pos + 1 : (edge == EdgePolicy::Clamp ? pos : 0);
  if (dest == 0) {
    for (int i = step; i < T; ++i) out.leak[i] += move;
    out.paths.push_back({stack, move, true});
    return;
  }
  stack.push_back(dest);
  out.marginals(step, dest - 1) += move;
  list_stepwise_rec(p, edge, step + 1, dest, move, stack, out);
  stack.pop_back();
}

inline void list_monotonic_rec(const Matrix& p, int step, int pos, double prob,
                               std::vector<int>& stack, PathEnumeration& out) {
  const int T = p.rows, n = p.cols;
  if (step == T) {
    out.paths.push_back({stack, prob, false});
    return;
  }
  double survive = prob;
  for (int k = pos; k <= n; ++k) {
    const double here = survive * p(step, k - 1);
    stack.push_back(k);
    out.marginals(step, k - 1) += here;
    list_monotonic_rec(p, step + 1, k, here, stack, out);
    stack.pop_back();
    survive *= 1.0 - p(step, k - 1);
  }
  for (int i = step; i < T; ++i) out.leak[i] += survive;
  out.paths.push_back({stack, survive, true});
}

}  // namespace detail

inline PathEnumeration list_stepwise_paths(const Matrix& p, EdgePolicy edge) {
  const int T = p.rows, n = p.cols;
  require(T >= 1 && n >= 1, "list_stepwise_paths: empty probability table");
  require(T <= 6 && n <= 6, "list_stepwise_paths: size guard (T, n <= 6) exceeded");
  PathEnumeration out{{}, Matrix(T, n), Vec(T, 0.0)};
  std::vector<int> stack;
  detail::list_stepwise_rec(p, edge, 0, 1, 1.0, stack, out);
  return out;
}

inline PathEnumeration list_monotonic_paths(const Matrix& p) {
  const int T = p.rows, n = p.cols;
  require(T >= 1 && n >= 1, "list_monotonic_paths: empty probability table");
  require(T <= 6 && n <= 6, "list_monotonic_paths: size guard (T, n <= 6) exceeded");
  PathEnumeration out{{}, Matrix(T, n), Vec(T, 0.0)};
  std::vector<int> stack;
  detail::list_monotonic_rec(p, 0, 1, 1.0, stack, out);
  return out;
}

// Empirical marginals from repeated hard decodes against a frozen p table.
// Row i counts the index attended after i+1 hard steps, so it estimates the
// exact `marginals` row i; mass missing from a row is the empirical leak.
inline Matrix monte_carlo(const Matrix& p, hard::Family family, int samples, uint64_t seed,
                          EdgePolicy edge = EdgePolicy::Leak) {
  const int T = p.rows, n = p.cols;
  require(T >= 1 && n >= 1, "monte_carlo: empty probability table");
  require(samples > 0, "monte_carlo: sample count must be positive");
  Matrix counts(T, n);
  Matrix dummy_memory(n, 1);  // contexts are irrelevant here, only the path is
  const bool stepwise = family == hard::Family::Stepwise;
  hard::StepFn feed = [&](int k, int) {
    require(k <= T, "monte_carlo: decoder requested a step past the table");
    return hard::StepFeed{p.row(k - 1), false};
  };
  for (int s = 0; s < samples; ++s) {
    hard::SamplerConfig cfg;
    cfg.mode = hard::SampleMode::Sampled;
    cfg.seed = seed + 0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(s + 1);
    cfg.max_steps = stepwise ? T + 1 : T;
    hard::HardDecodeResult run = hard::decode_hard(dummy_memory, feed, cfg, family, edge);
    // positions[k] with k >= 1 (stepwise skips the pinned t_1) lands in row k-1
    const auto& pos = run.path.positions;
    const size_t first = stepwise ? 1 : 0;
    for (size_t k = first; k < pos.size(); ++k) {
      counts(static_cast<int>(k - first), pos[k] - 1) += 1.0;
    }
  }
  for (double& c : counts.a) c /= static_cast<double>(samples);
  return counts;
}

// Max over rows of the total variation distance between corresponding rows,
// counting the leaked mass (row-mass deficit) as one extra outcome.
inline double max_row_tv(const Matrix& exact, const Matrix& empirical) {
  require(exact.rows == empirical.rows && exact.cols == empirical.cols,
          "max_row_tv: shape mismatch");
  double worst = 0.0;
  for (int i = 0; i < exact.rows; ++i) {
    double tv = 0.0, em = 0.0, ex = 0.0;
    for (int j = 0; j < exact.cols; ++j) {
      tv += std::fabs(exact(i, j) - empirical(i, j));
      em += empirical(i, j);
      ex += exact(i, j);
    }
    tv += std::fabs((1.0 - ex) - (1.0 - em));
    worst = std::max(worst, 0.5 * tv);
  }
  return worst;
}

}  // namespace oracle
}  // namespace attnkit

#endif  // ATTNKIT_ORACLE_HPP
