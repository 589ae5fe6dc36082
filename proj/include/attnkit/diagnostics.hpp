#ifndef ATTNKIT_DIAGNOSTICS_HPP
#define ATTNKIT_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "attnkit/io.hpp"
#include "attnkit/types.hpp"

// Alignment-quality metrics and the collapse/repeat/skip error taxonomy.
// Everything operates on a frames-by-tokens alignment matrix; hard paths are
// scored through their one-hot rows so soft and hard runs share one code
// path and one set of thresholds.

namespace attnkit {
namespace diag {

struct AlignmentMetrics {
  int frames = 0;
  int tokens = 0;
  Vec row_max;                        // peak weight per output frame
  Vec row_entropy;                    // entropy of the normalized row, in [0, ln n]
  std::vector<int> argmax_path;       // 1-based attended token per frame
  Vec coverage;                       // column sums: total weight each token received
  int monotonicity_violations = 0;    // frames whose argmax moved backwards
  std::vector<int> completeness_gaps; // 1-based tokens under-covered within the visited prefix
  double gap_floor = 0.5;
};

inline Matrix path_to_alignment(const std::vector<int>& positions, int tokens) {
  require(tokens >= 1, "path_to_alignment: need at least one token");
  Matrix m(static_cast<int>(positions.size()), tokens);
  for (size_t i = 0; i < positions.size(); ++i) {
    require(positions[i] >= 1 && positions[i] <= tokens, "path_to_alignment: position out of range");
    m(static_cast<int>(i), positions[i] - 1) = 1.0;
  }
  return m;
}

inline AlignmentMetrics compute_metrics(const Matrix& alignment, double gap_floor = 0.5) {
  const int T = alignment.rows, n = alignment.cols;
  require(T >= 1 && n >= 1, "compute_metrics: empty alignment");
  AlignmentMetrics m;
  m.frames = T;
  m.tokens = n;
  m.gap_floor = gap_floor;
  m.row_max.resize(T);
  m.row_entropy.resize(T);
  m.argmax_path.resize(T);
  m.coverage.assign(n, 0.0);
  for (int i = 0; i < T; ++i) {
    double mx = alignment(i, 0);
    int arg = 0;
    double rowmass = 0.0;
    for (int j = 0; j < n; ++j) {
      const double w = alignment(i, j);
      require(w >= 0.0, "compute_metrics: negative weight");
      if (w > mx) {
        mx = w;
        arg = j;
      }
      rowmass += w;
      m.coverage[j] += w;
    }
    m.row_max[i] = mx;
    m.argmax_path[i] = arg + 1;
    double h = 0.0;
    if (rowmass > 0.0) {
      for (int j = 0; j < n; ++j) {
        const double q = alignment(i, j) / rowmass;
        if (q > 0.0) h -= q * std::log(q);
      }
    }
    m.row_entropy[i] = h;
    if (i > 0 && m.argmax_path[i] < m.argmax_path[i - 1]) ++m.monotonicity_violations;
  }
  // Completeness is judged only over the prefix the decode claims to have
  // reached: tokens beyond the furthest attended one are not "skipped", the
  // decode just ended early (a length error, not an alignment one).
  const int prefix = *std::max_element(m.argmax_path.begin(), m.argmax_path.end());
  for (int j = 1; j <= prefix; ++j) {
    if (m.coverage[j - 1] < gap_floor) m.completeness_gaps.push_back(j);
  }
  return m;
}

inline AlignmentMetrics compute_metrics(const std::vector<int>& positions, int tokens,
                                        double gap_floor = 0.5) {
  return compute_metrics(path_to_alignment(positions, tokens), gap_floor);
}

struct ErrorThresholds {
  double locality_floor = 0.5;  // a frame is diffuse when its peak weight is below this
  int collapse_run = 5;         // diffuse frames count once a run reaches this length
  double coverage_floor = 0.5;  // a visited-prefix token is skipped below this coverage
  int collapse_tolerance = 0;   // counts above these mark the case failed
  int repeat_tolerance = 0;
  int skip_tolerance = 0;
};

struct ErrorClassification {
  int collapse_frames = 0;  // frames inside long diffuse runs
  int repeat_events = 0;    // argmax rewinds later followed by re-advance
  int skip_events = 0;      // under-covered tokens within the visited prefix
  bool case_failed = false;
};

// skip_exempt[j] (0-based token index) marks tokens that legitimately receive
// no frames (zero-duration symbols); they never count as skips.
inline ErrorClassification classify_errors(const AlignmentMetrics& m, const ErrorThresholds& th,
                                           const std::vector<bool>& skip_exempt = {}) {
  require(skip_exempt.empty() || static_cast<int>(skip_exempt.size()) == m.tokens,
          "classify_errors: exemption mask length mismatch");
  ErrorClassification out;

  // collapse: frames sitting in a sufficiently long run of diffuse attention
  int run = 0;
  for (int i = 0; i <= m.frames; ++i) {
    const bool diffuse = i < m.frames && m.row_max[i] < th.locality_floor;
    if (diffuse) {
      ++run;
    } else {
      if (run >= th.collapse_run) out.collapse_frames += run;
      run = 0;
    }
  }

  // repeats: each maximal strictly-decreasing argmax segment counts once,
  // provided the path later climbs back above the segment's low point
  // (otherwise it is a trailing stumble, not a re-read).
  for (int i = 1; i < m.frames;) {
    if (m.argmax_path[i] >= m.argmax_path[i - 1]) {
      ++i;
      continue;
    }
    int low = m.argmax_path[i];
    int k = i + 1;
    while (k < m.frames && m.argmax_path[k] < m.argmax_path[k - 1]) {
      low = m.argmax_path[k];
      ++k;
    }
    bool readvanced = false;
    for (int t = k; t < m.frames; ++t) {
      if (m.argmax_path[t] > low) {
        readvanced = true;
        break;
      }
    }
    if (readvanced) ++out.repeat_events;
    i = k;
  }

  // skips: under-covered non-exempt tokens within the visited prefix
  const int prefix = *std::max_element(m.argmax_path.begin(), m.argmax_path.end());
  for (int j = 1; j <= prefix; ++j) {
    if (!skip_exempt.empty() && skip_exempt[j - 1]) continue;
    if (m.coverage[j - 1] < th.coverage_floor) ++out.skip_events;
  }

  out.case_failed = out.collapse_frames > th.collapse_tolerance ||
                    out.repeat_events > th.repeat_tolerance ||
                    out.skip_events > th.skip_tolerance;
  return out;
}

struct CaseResult {
  std::string case_id;
  ErrorClassification cls;
};

struct CorpusReport {
  std::string mechanism;
  int cases = 0;
  int failed_cases = 0;
  double failure_rate = 0.0;
  long collapse_frames = 0;
  long repeat_events = 0;
  long skip_events = 0;
  std::vector<CaseResult> per_case;
};

inline CorpusReport corpus_report(const std::string& mechanism,
                                  std::vector<CaseResult> cases) {
  CorpusReport r;
  r.mechanism = mechanism;
  r.cases = static_cast<int>(cases.size());
  for (const auto& c : cases) {
    if (c.cls.case_failed) ++r.failed_cases;
    r.collapse_frames += c.cls.collapse_frames;
    r.repeat_events += c.cls.repeat_events;
    r.skip_events += c.cls.skip_events;
  }
  r.failure_rate = r.cases ? static_cast<double>(r.failed_cases) / r.cases : 0.0;
  r.per_case = std::move(cases);
  return r;
}

// Writes <prefix>.pgm (8-bit P2, weights scaled so the matrix max maps to
// 255; an all-zero matrix renders all black) and <prefix>.csv with the exact
// weights. The PGM is for eyeballing, the CSV is the record.
inline void render_alignment_heatmap(const Matrix& alignment, const std::string& prefix) {
  require(alignment.rows >= 1 && alignment.cols >= 1, "render_alignment_heatmap: empty matrix");
  double mx = 0.0;
  for (double w : alignment.a) {
    require(w >= 0.0, "render_alignment_heatmap: negative weight");
    mx = std::max(mx, w);
  }
  std::string pgm = "P2\n" + std::to_string(alignment.cols) + " " +
                    std::to_string(alignment.rows) + "\n255\n";
  for (int i = 0; i < alignment.rows; ++i) {
    for (int j = 0; j < alignment.cols; ++j) {
      int v = mx > 0.0 ? static_cast<int>(std::lround(255.0 * alignment(i, j) / mx)) : 0;
      v = std::clamp(v, 0, 255);
      if (j) pgm += ' ';
      pgm += std::to_string(v);
    }
    pgm += '\n';
  }
  io::write_text_file(prefix + ".pgm", pgm);
  io::write_matrix_csv(prefix + ".csv", alignment);
}

}  // namespace diag
}  // namespace attnkit

#endif  // ATTNKIT_DIAGNOSTICS_HPP
