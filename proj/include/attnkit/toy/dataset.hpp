#ifndef ATTNKIT_TOY_DATASET_HPP
#define ATTNKIT_TOY_DATASET_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "attnkit/io.hpp"
#include "attnkit/rng.hpp"
#include "attnkit/types.hpp"

// Synthetic copy-with-durations task. A case is a token sequence over a small
// alphabet plus its target frame sequence: each token emits a fixed number of
// identical frames (one-hot symbol + the token's relative position), then a
// single all-zero stop frame ends the utterance. The duration map is a
// deterministic function of the symbol: content symbol s repeats 1 + (s mod 3)
// times, the trailing boundary symbol once, and the punctuation symbol zero
// times, so it appears in the token stream but never in the frames (the
// attention has to step over it). Durations being predictable from the symbol
// is what makes the stay/move decision learnable at all.
//
// The stress split uses much longer sequences stuffed with repeated-token
// runs and punctuation clusters; content-based attention has nothing to
// disambiguate repeated symbols with, while position-driven mechanisms walk
// through them.

namespace attnkit {
namespace toy {

struct ToyTaskSpec {
  int vocab = 10;  // content symbols 0..vocab-1
  int min_train_len = 4;
  int max_train_len = 12;  // token count before the trailing boundary
  int min_stress_len = 24;
  int max_stress_len = 48;
  int train_count = 200;
  int heldout_count = 50;
  int stress_count = 50;
  // Chance a non-stop frame gets perturbed. Only ever applied to the train
  // split (eval targets must stay exact); off by default because the jitter
  // noise floor costs more convergence than the robustness it buys.
  double jitter_prob = 0.0;
  // Per-interior-position chance of a lone punctuation token in ordinary
  // sequences. Punctuation crossings are the hard part of the task, so this
  // controls how much of the curriculum they occupy.
  double punct_rate = 0.15;

  int boundary_id() const { return vocab; }
  int punct_id() const { return vocab + 1; }
  int symbol_count() const { return vocab + 2; }
  int frame_dim() const { return symbol_count() + 1; }  // one-hot + position

  int duration_map(int token) const {
    if (token == punct_id()) return 0;
    if (token == boundary_id()) return 1;
    return 1 + token % 3;
  }
};

struct ToyCase {
  std::vector<int> tokens;  // includes punct and the trailing boundary
  Matrix frames;            // target frames, last row is the all-zero stop frame
};

inline Matrix frames_for(const ToyTaskSpec& spec, const std::vector<int>& tokens,
                         Rng* jitter_rng = nullptr) {
  const int n = static_cast<int>(tokens.size());
  require(n >= 1, "frames_for: empty token sequence");
  int total = 0;
  for (int t : tokens) {
    require(t >= 0 && t < spec.symbol_count(), "frames_for: token out of range");
    total += spec.duration_map(t);
  }
  require(total >= 1, "frames_for: sequence emits no frames");
  Matrix frames(total + 1, spec.frame_dim());  // +1 stop frame, all zeros
  int row = 0;
  for (int j = 0; j < n; ++j) {
    for (int d = 0; d < spec.duration_map(tokens[j]); ++d) {
      frames(row, tokens[j]) = 1.0;
      frames(row, spec.frame_dim() - 1) = static_cast<double>(j + 1) / n;
      ++row;
    }
  }
  if (jitter_rng != nullptr && spec.jitter_prob > 0.0) {
    for (int i = 0; i + 1 < frames.rows; ++i) {
      if (jitter_rng->uniform() >= spec.jitter_prob) continue;
      for (int j = 0; j < frames.cols; ++j) frames(i, j) += 0.05 * jitter_rng->gaussian();
    }
  }
  return frames;
}

// Ordinary sequences: uniform content symbols, the occasional lone
// punctuation mark, always closed by the boundary symbol.
inline ToyCase make_train_case(const ToyTaskSpec& spec, Rng& rng) {
  const int len = static_cast<int>(rng.uniform_int(spec.min_train_len, spec.max_train_len));
  std::vector<int> tokens;
  for (int j = 0; j < len; ++j) {
    if (j > 0 && j + 1 < len && tokens.back() != spec.punct_id() && rng.uniform() < spec.punct_rate) {
      tokens.push_back(spec.punct_id());
    } else {
      tokens.push_back(static_cast<int>(rng.uniform_int(0, spec.vocab - 1)));
    }
  }
  tokens.push_back(spec.boundary_id());
  ToyCase c;
  c.tokens = std::move(tokens);
  c.frames = frames_for(spec, c.tokens, spec.jitter_prob > 0.0 ? &rng : nullptr);
  return c;
}

// Hazard-dense sequences: long repeated-symbol runs and punctuation clusters.
inline ToyCase make_stress_case(const ToyTaskSpec& spec, Rng& rng) {
  const int len = static_cast<int>(rng.uniform_int(spec.min_stress_len, spec.max_stress_len));
  std::vector<int> tokens;
  while (static_cast<int>(tokens.size()) < len) {
    double pick = rng.uniform();
    if (pick < 0.35) {
      int sym = static_cast<int>(rng.uniform_int(0, spec.vocab - 1));
      int run = static_cast<int>(rng.uniform_int(3, 8));
      for (int r = 0; r < run && static_cast<int>(tokens.size()) < len; ++r)
        tokens.push_back(sym);
    } else if (pick < 0.55 && !tokens.empty() && tokens.back() != spec.punct_id()) {
      int run = static_cast<int>(rng.uniform_int(2, 4));
      for (int r = 0; r < run && static_cast<int>(tokens.size()) < len; ++r)
        tokens.push_back(spec.punct_id());
    } else {
      tokens.push_back(static_cast<int>(rng.uniform_int(0, spec.vocab - 1)));
    }
  }
  // never end on punctuation: the boundary must follow something audible
  while (!tokens.empty() && tokens.back() == spec.punct_id()) tokens.pop_back();
  if (tokens.empty()) tokens.push_back(0);
  tokens.push_back(spec.boundary_id());
  ToyCase c;
  c.tokens = std::move(tokens);
  c.frames = frames_for(spec, c.tokens, spec.jitter_prob > 0.0 ? &rng : nullptr);
  return c;
}

// Split salts keep the three splits disjoint streams of one base seed.
inline std::vector<ToyCase> generate_split(const ToyTaskSpec& spec, const std::string& split,
                                           uint64_t seed) {
  uint64_t salt;
  int count;
  bool stress = false;
  if (split == "train") {
    salt = 0x7261696e;
    count = spec.train_count;
  } else if (split == "heldout") {
    salt = 0x68656c64;
    count = spec.heldout_count;
  } else if (split == "stress") {
    salt = 0x73747273;
    count = spec.stress_count;
    stress = true;
  } else {
    require(false, "generate_split: unknown split '" + split + "'");
    return {};
  }
  Rng rng(seed ^ (salt * 0x9E3779B97F4A7C15ULL));
  ToyTaskSpec gen_spec = spec;
  if (split != "train") gen_spec.jitter_prob = 0.0;  // eval targets stay exact
  std::vector<ToyCase> cases;
  cases.reserve(count);
  for (int i = 0; i < count; ++i)
    cases.push_back(stress ? make_stress_case(gen_spec, rng) : make_train_case(gen_spec, rng));
  return cases;
}

// Tokens that legitimately receive no frames; feeds the skip exemption.
inline std::vector<bool> zero_duration_mask(const ToyTaskSpec& spec,
                                            const std::vector<int>& tokens) {
  std::vector<bool> mask(tokens.size(), false);
  for (size_t j = 0; j < tokens.size(); ++j) mask[j] = tokens[j] == spec.punct_id();
  return mask;
}

// JSONL: one {"tokens": [...], "frames": [[...], ...]} object per line.
inline void write_cases_jsonl(const std::string& path, const std::vector<ToyCase>& cases) {
  std::string text;
  for (const auto& c : cases) {
    io::json obj;
    obj["tokens"] = c.tokens;
    obj["frames"] = io::matrix_to_json(c.frames);
    text += obj.dump();
    text += '\n';
  }
  io::write_text_file(path, text);
}

inline std::vector<ToyCase> read_cases_jsonl(const std::string& path) {
  std::string text = io::read_text_file(path);
  std::vector<ToyCase> cases;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    io::json obj = io::json::parse(line);
    if (!obj.contains("tokens") || !obj.contains("frames"))
      throw std::runtime_error("dataset line missing tokens/frames in " + path);
    ToyCase c;
    c.tokens = obj["tokens"].get<std::vector<int>>();
    c.frames = io::matrix_from_json(obj["frames"]);
    cases.push_back(std::move(c));
  }
  if (cases.empty()) throw std::runtime_error("empty dataset: " + path);
  return cases;
}

// Fraction of target content frames (stop frame excluded) whose predicted
// symbol matches and whose position channel lands within half a token slot.
inline double frame_accuracy(const Matrix& predicted, const ToyCase& target,
                             const ToyTaskSpec& spec) {
  const int content = target.frames.rows - 1;
  if (content <= 0) return 1.0;
  const int syms = spec.symbol_count();
  const double pos_tol = 0.5 / static_cast<double>(target.tokens.size());
  int ok = 0;
  for (int i = 0; i < content; ++i) {
    if (i >= predicted.rows) break;
    int want = 0, got = 0;
    double wmax = target.frames(i, 0), gmax = predicted(i, 0);
    for (int s = 1; s < syms; ++s) {
      if (target.frames(i, s) > wmax) {
        wmax = target.frames(i, s);
        want = s;
      }
      if (predicted(i, s) > gmax) {
        gmax = predicted(i, s);
        got = s;
      }
    }
    double dpos = std::fabs(predicted(i, syms) - target.frames(i, syms));
    if (want == got && dpos <= pos_tol) ++ok;
  }
  return static_cast<double>(ok) / content;
}

}  // namespace toy
}  // namespace attnkit

#endif  // ATTNKIT_TOY_DATASET_HPP
