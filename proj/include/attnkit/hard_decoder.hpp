#ifndef ATTNKIT_HARD_DECODER_HPP
#define ATTNKIT_HARD_DECODER_HPP

#include <functional>
#include <optional>
#include <vector>

#include "attnkit/kernels.hpp"
#include "attnkit/rng.hpp"
#include "attnkit/types.hpp"

// Hard-attention inference: commit to exactly one memory entry per output
// step, by Bernoulli sampling on the selection probabilities or by the greedy
// 0.5-threshold determinization.
//
// Path conventions (positions are 1-based in paths and serialized output):
//  - Monotonic family: the k-th produced p row drives a scan that yields t_k;
//    the scan at step k starts from t_{k-1} (t_0 = 1). A scan that walks past
//    the end terminates the decode.
//  - Stepwise family: t_1 = 1 always (the decoder starts focused on the first
//    entry), and the k-th produced p row drives the stay/move decision that
//    yields t_{k+1}. This matches iterating the soft recursion from
//    alpha_0 = one-hot at the first entry: the marginal of t_{k+1} equals the
//    k-th soft iterate.

namespace attnkit {
namespace hard {

enum class Family { Monotonic, Stepwise };
enum class SampleMode { Sampled, Greedy };

struct SamplerConfig {
  SampleMode mode = SampleMode::Sampled;
  uint64_t seed = 0;
  int max_steps = 1;
};

struct HardAlignmentPath {
  std::vector<int> positions;  // t_1..t_T, 1-based memory indices
  bool terminated_past_end = false;
};

// Scan j = start..n and stop at the first positive draw (sampled) or the
// first p >= 0.5 (greedy). Returns nullopt when the scan walks past the end.
inline std::optional<int> ma_hard_step(int start_index, const Vec& p_row, SampleMode mode,
                                       Rng& rng) {
  const int n = static_cast<int>(p_row.size());
  require(start_index >= 1 && start_index <= n, "ma_hard_step: start index out of range");
  for (int j = start_index; j <= n; ++j) {
    bool stop = mode == SampleMode::Greedy ? p_row[j - 1] >= 0.5 : rng.bernoulli(p_row[j - 1]);
    if (stop) return j;
  }
  return std::nullopt;
}

// Stay at the current index with probability p (sampled) or iff p >= 0.5
// (greedy); otherwise move one step forward. At the last entry the move
// clamps in place under Clamp and signals past-end under Leak.
inline std::optional<int> sma_hard_step(int current_index, int n, double p_value,
                                        SampleMode mode, Rng& rng,
                                        EdgePolicy edge = EdgePolicy::Clamp) {
  require(current_index >= 1 && current_index <= n, "sma_hard_step: index out of range");
  bool stay = mode == SampleMode::Greedy ? p_value >= 0.5 : rng.bernoulli(p_value);
  if (stay) return current_index;
  if (current_index < n) return current_index + 1;
  return edge == EdgePolicy::Clamp ? std::optional<int>(n) : std::nullopt;
}

// What the per-step closure feeds the decoder: a full p row (the monotonic
// scan may inspect any suffix) and a stop signal for model-driven decoding.
struct StepFeed {
  Vec p_row;
  bool stop = false;
};

// step index (1-based) and previous attended position (1-based) -> feed
using StepFn = std::function<StepFeed(int, int)>;

struct HardDecodeResult {
  HardAlignmentPath path;
  std::vector<Vec> contexts;  // each exactly one memory row
  bool truncated = false;     // hit max_steps without a stop signal
};

inline HardDecodeResult decode_hard(const MemorySequence& memory, const StepFn& step_fn,
                                    const SamplerConfig& sampler, Family family,
                                    EdgePolicy edge = EdgePolicy::Clamp) {
  const int n = memory.rows;
  require(n >= 1, "decode_hard: empty memory");
  require(sampler.max_steps >= 1, "decode_hard: max_steps must be positive");
  HardDecodeResult res;
  Rng rng(sampler.seed);

  auto append = [&](int pos) {
    res.path.positions.push_back(pos);
    res.contexts.push_back(memory.row(pos - 1));
  };

  if (family == Family::Stepwise) append(1);

  for (int k = 1; static_cast<int>(res.path.positions.size()) < sampler.max_steps; ++k) {
    int prev = res.path.positions.empty() ? 1 : res.path.positions.back();
    StepFeed feed = step_fn(k, prev);
    if (feed.stop) return res;
    require(static_cast<int>(feed.p_row.size()) == n, "decode_hard: p row length mismatch");
    std::optional<int> next;
    if (family == Family::Monotonic) {
      next = ma_hard_step(prev, feed.p_row, sampler.mode, rng);
    } else {
      next = sma_hard_step(prev, n, feed.p_row[prev - 1], sampler.mode, rng, edge);
    }
    if (!next.has_value()) {
      res.path.terminated_past_end = true;
      return res;
    }
    append(*next);
  }
  res.truncated = true;
  return res;
}

}  // namespace hard
}  // namespace attnkit

#endif  // ATTNKIT_HARD_DECODER_HPP
