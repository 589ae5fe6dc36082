#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "attnkit/diagnostics.hpp"
#include "attnkit/io.hpp"
#include "attnkit/rng.hpp"

using namespace attnkit;
using diag::AlignmentMetrics;
using diag::ErrorThresholds;

TEST_CASE("a perfect diagonal scores perfectly") {
  int n = 5;
  Matrix a(n, n);
  for (int i = 0; i < n; ++i) a(i, i) = 1.0;
  AlignmentMetrics m = diag::compute_metrics(a);
  for (int i = 0; i < n; ++i) {
    REQUIRE(m.row_max[i] == 1.0);
    REQUIRE(m.row_entropy[i] == 0.0);
    REQUIRE(m.argmax_path[i] == i + 1);
  }
  REQUIRE(m.monotonicity_violations == 0);
  REQUIRE(m.completeness_gaps.empty());
  for (double c : m.coverage) REQUIRE(c == 1.0);
}

TEST_CASE("uniform rows have full entropy and spread coverage") {
  int T = 6, n = 4;
  Matrix a(T, n);
  for (double& x : a.a) x = 1.0 / n;
  AlignmentMetrics m = diag::compute_metrics(a);
  for (int i = 0; i < T; ++i) REQUIRE(std::fabs(m.row_entropy[i] - std::log(double(n))) < 1e-12);
  for (int j = 0; j < n; ++j) REQUIRE(std::fabs(m.coverage[j] - double(T) / n) < 1e-12);
}

TEST_CASE("hard path coverage counts attended frames per token") {
  AlignmentMetrics m = diag::compute_metrics(std::vector<int>{1, 2, 2, 3}, 3);
  REQUIRE(m.coverage == Vec{1.0, 2.0, 1.0});
  REQUIRE(m.monotonicity_violations == 0);
  REQUIRE(m.completeness_gaps.empty());
}

TEST_CASE("a clean alignment classifies clean") {
  Matrix a(4, 4);
  for (int i = 0; i < 4; ++i) a(i, i) = 1.0;
  diag::ErrorClassification cls = diag::classify_errors(diag::compute_metrics(a), {});
  REQUIRE(cls.collapse_frames == 0);
  REQUIRE(cls.repeat_events == 0);
  REQUIRE(cls.skip_events == 0);
  REQUIRE_FALSE(cls.case_failed);
}

TEST_CASE("a sustained diffuse stretch counts as collapse") {
  int n = 4;
  Matrix a(16, n);
  for (int i = 0; i < 3; ++i) a(i, 0) = 1.0;
  for (int i = 3; i < 13; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = 1.0 / n;  // ten diffuse frames
  for (int i = 13; i < 16; ++i) a(i, n - 1) = 1.0;
  diag::ErrorClassification cls = diag::classify_errors(diag::compute_metrics(a), {});
  REQUIRE(cls.collapse_frames >= 10);
  REQUIRE(cls.case_failed);
}

TEST_CASE("short diffuse blips stay under the collapse run threshold") {
  int n = 4;
  Matrix a(8, n);
  for (int i = 0; i < 8; ++i) {
    if (i == 3 || i == 4) {
      for (int j = 0; j < n; ++j) a(i, j) = 1.0 / n;
    } else {
      a(i, std::min(i, n - 1)) = 1.0;
    }
  }
  diag::ErrorClassification cls = diag::classify_errors(diag::compute_metrics(a), {});
  REQUIRE(cls.collapse_frames == 0);
}

TEST_CASE("a jump over tokens counts each under-covered one as a skip") {
  diag::ErrorClassification cls =
      diag::classify_errors(diag::compute_metrics(std::vector<int>{1, 4}, 5), {});
  REQUIRE(cls.skip_events == 2);  // tokens 2 and 3
  REQUIRE(cls.case_failed);
  // token 5 was never reached; an early stop is a length problem, not a skip
}

TEST_CASE("zero-duration tokens are exempt from skip accounting") {
  std::vector<bool> exempt = {false, true, true, false, false};
  diag::ErrorClassification cls =
      diag::classify_errors(diag::compute_metrics(std::vector<int>{1, 4}, 5), {}, exempt);
  REQUIRE(cls.skip_events == 0);
  REQUIRE_FALSE(cls.case_failed);
}

TEST_CASE("a rewind that re-advances is one repeat event") {
  diag::ErrorClassification cls =
      diag::classify_errors(diag::compute_metrics(std::vector<int>{1, 2, 3, 2, 3, 4}, 4), {});
  REQUIRE(cls.repeat_events == 1);
  REQUIRE(cls.case_failed);
}

TEST_CASE("a trailing stumble is not a repeat") {
  AlignmentMetrics m = diag::compute_metrics(std::vector<int>{1, 2, 3, 2}, 4);
  diag::ErrorClassification cls = diag::classify_errors(m, {});
  REQUIRE(cls.repeat_events == 0);
  REQUIRE(m.monotonicity_violations == 1);
}

TEST_CASE("stepwise hard paths never classify as skip or repeat") {
  Rng rng(81);
  for (int trial = 0; trial < 300; ++trial) {
    int n = rng.uniform_int(2, 10);
    int T = rng.uniform_int(1, 25);
    std::vector<int> path = {1};
    for (int i = 1; i < T; ++i)
      path.push_back(std::min(path.back() + (rng.bernoulli(0.5) ? 1 : 0), n));
    for (double floor : {0.5, 1.0}) {
      ErrorThresholds th;
      th.coverage_floor = floor;
      diag::ErrorClassification cls = diag::classify_errors(diag::compute_metrics(path, n), th);
      REQUIRE(cls.repeat_events == 0);
      REQUIRE(cls.skip_events == 0);
    }
  }
}

TEST_CASE("monotonic hard paths never classify as repeat") {
  Rng rng(82);
  for (int trial = 0; trial < 300; ++trial) {
    int n = rng.uniform_int(2, 10);
    int T = rng.uniform_int(1, 15);
    std::vector<int> path;
    int pos = 1;
    for (int i = 0; i < T && pos <= n; ++i) {
      path.push_back(pos);
      pos += rng.uniform_int(0, 3);
    }
    if (path.empty()) continue;
    diag::ErrorClassification cls = diag::classify_errors(diag::compute_metrics(path, n), {});
    REQUIRE(cls.repeat_events == 0);
  }
}

TEST_CASE("paths and their one-hot matrices score identically") {
  std::vector<int> path = {1, 1, 2, 3, 3, 4};
  int n = 5;
  Matrix onehots(6, n);
  for (int i = 0; i < 6; ++i) onehots(i, path[i] - 1) = 1.0;
  AlignmentMetrics a = diag::compute_metrics(path, n);
  AlignmentMetrics b = diag::compute_metrics(onehots);
  REQUIRE(a.argmax_path == b.argmax_path);
  REQUIRE(a.coverage == b.coverage);
  REQUIRE(a.row_max == b.row_max);
  REQUIRE(a.completeness_gaps == b.completeness_gaps);
  REQUIRE(a.monotonicity_violations == b.monotonicity_violations);
}

TEST_CASE("tightening thresholds never lowers the counts") {
  Rng rng(83);
  for (int trial = 0; trial < 50; ++trial) {
    int T = rng.uniform_int(5, 20);
    int n = rng.uniform_int(3, 8);
    Matrix a(T, n);
    for (int i = 0; i < T; ++i) {
      double z = 0.0;
      for (int j = 0; j < n; ++j) {
        a(i, j) = rng.uniform_pos();
        z += a(i, j);
      }
      for (int j = 0; j < n; ++j) a(i, j) /= z;
    }
    AlignmentMetrics m = diag::compute_metrics(a);
    ErrorThresholds loose, tight;
    loose.locality_floor = 0.3;
    loose.coverage_floor = 0.3;
    tight.locality_floor = 0.7;
    tight.coverage_floor = 0.9;
    diag::ErrorClassification cl = diag::classify_errors(m, loose);
    diag::ErrorClassification ct = diag::classify_errors(m, tight);
    REQUIRE(ct.collapse_frames >= cl.collapse_frames);
    REQUIRE(ct.skip_events >= cl.skip_events);
  }
}

TEST_CASE("corpus aggregation is the per-case sum") {
  std::vector<diag::CaseResult> clean(4);
  for (int i = 0; i < 4; ++i) clean[i].case_id = "c" + std::to_string(i);
  diag::CorpusReport r0 = diag::corpus_report("sma", clean);
  REQUIRE(r0.failure_rate == 0.0);
  REQUIRE(r0.failed_cases == 0);

  clean[2].cls.skip_events = 3;
  clean[2].cls.case_failed = true;
  diag::CorpusReport r1 = diag::corpus_report("ma", clean);
  REQUIRE(r1.failure_rate == 0.25);
  REQUIRE(r1.skip_events == 3);

  Rng rng(84);
  std::vector<diag::CaseResult> mixed(20);
  long col = 0, rep = 0, skp = 0;
  int failed = 0;
  for (auto& c : mixed) {
    c.cls.collapse_frames = rng.uniform_int(0, 4);
    c.cls.repeat_events = rng.uniform_int(0, 2);
    c.cls.skip_events = rng.uniform_int(0, 2);
    c.cls.case_failed = c.cls.collapse_frames + c.cls.repeat_events + c.cls.skip_events > 0;
    col += c.cls.collapse_frames;
    rep += c.cls.repeat_events;
    skp += c.cls.skip_events;
    failed += c.cls.case_failed ? 1 : 0;
  }
  diag::CorpusReport r2 = diag::corpus_report("gmm", mixed);
  REQUIRE(r2.collapse_frames == col);
  REQUIRE(r2.repeat_events == rep);
  REQUIRE(r2.skip_events == skp);
  REQUIRE(r2.failed_cases == failed);
  REQUIRE(r2.cases == 20);
}

TEST_CASE("heatmaps scale the matrix max to white") {
  auto dir = std::filesystem::temp_directory_path() / "attnkit_diag_test" / "nested";
  std::filesystem::remove_all(dir.parent_path());
  Matrix a(2, 2);
  a(0, 0) = 1.0;
  a(1, 1) = 1.0;
  std::string prefix = (dir / "ident").string();
  diag::render_alignment_heatmap(a, prefix);  // creates the directory itself
  REQUIRE(io::read_text_file(prefix + ".pgm") == "P2\n2 2\n255\n255 0\n0 255\n");

  Matrix back = io::read_matrix_csv(prefix + ".csv");
  REQUIRE(back.rows == 2);
  REQUIRE(back.a == a.a);

  Matrix zero(2, 3);
  std::string zprefix = (dir / "zero").string();
  diag::render_alignment_heatmap(zero, zprefix);
  REQUIRE(io::read_text_file(zprefix + ".pgm") == "P2\n3 2\n255\n0 0 0\n0 0 0\n");
  std::filesystem::remove_all(dir.parent_path());
}

TEST_CASE("half-intensity pixels round to mid-gray") {
  Matrix a(1, 3);
  a(0, 0) = 0.5;
  a(0, 1) = 1.0;
  a(0, 2) = 0.0;
  auto dir = std::filesystem::temp_directory_path() / "attnkit_diag_test2";
  std::string prefix = (dir / "gray").string();
  diag::render_alignment_heatmap(a, prefix);
  REQUIRE(io::read_text_file(prefix + ".pgm") == "P2\n3 1\n255\n128 255 0\n");
  std::filesystem::remove_all(dir);
}
