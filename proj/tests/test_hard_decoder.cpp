#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "attnkit/hard_decoder.hpp"
#include "attnkit/rng.hpp"

using namespace attnkit;
using namespace attnkit::hard;

TEST_CASE("greedy scan stops immediately when p clears the threshold") {
  Rng rng(1);
  Vec p = {0.9, 0.8, 0.7, 0.6, 0.5};
  REQUIRE(ma_hard_step(3, p, SampleMode::Greedy, rng) == 3);
}

TEST_CASE("greedy scan exhausts when every p is below the threshold") {
  Rng rng(1);
  Vec p = {0.4, 0.3, 0.2};
  REQUIRE_FALSE(ma_hard_step(1, p, SampleMode::Greedy, rng).has_value());
}

TEST_CASE("sampled scan frequencies match the closed form") {
  // start=1, p=[0.5, 0.5]: P(1)=0.5, P(2)=0.25, P(past end)=0.25
  const int N = 100000;
  Rng rng(7);
  Vec p = {0.5, 0.5};
  int hits1 = 0, hits2 = 0, past = 0;
  for (int s = 0; s < N; ++s) {
    auto r = ma_hard_step(1, p, SampleMode::Sampled, rng);
    if (!r.has_value())
      ++past;
    else if (*r == 1)
      ++hits1;
    else
      ++hits2;
  }
  auto sigma3 = [&](double q) { return 3.0 * std::sqrt(q * (1.0 - q) / N); };
  REQUIRE(std::fabs(hits1 / double(N) - 0.5) < sigma3(0.5));
  REQUIRE(std::fabs(hits2 / double(N) - 0.25) < sigma3(0.25));
  REQUIRE(std::fabs(past / double(N) - 0.25) < sigma3(0.25));
}

TEST_CASE("stepwise stay at p=1 is certain") {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) REQUIRE(sma_hard_step(2, 5, 1.0, SampleMode::Sampled, rng) == 2);
}

TEST_CASE("stepwise move at the last entry clamps or leaks by policy") {
  Rng rng(3);
  REQUIRE(sma_hard_step(4, 4, 0.0, SampleMode::Greedy, rng, EdgePolicy::Clamp) == 4);
  REQUIRE_FALSE(sma_hard_step(4, 4, 0.0, SampleMode::Greedy, rng, EdgePolicy::Leak).has_value());
}

TEST_CASE("stepwise sampled stay frequency tracks p") {
  const int N = 100000;
  Rng rng(8);
  int stays = 0;
  for (int s = 0; s < N; ++s)
    if (sma_hard_step(2, 5, 0.3, SampleMode::Sampled, rng) == 2) ++stays;
  REQUIRE(std::fabs(stays / double(N) - 0.3) < 3.0 * std::sqrt(0.3 * 0.7 / N));
}

namespace {

Matrix tiny_memory(int n) {
  Matrix m(n, 2);
  for (int j = 0; j < n; ++j) {
    m(j, 0) = j + 1.0;
    m(j, 1) = -(j + 1.0);
  }
  return m;
}

StepFn const_p(const Vec& row) {
  return [row](int, int) { return StepFeed{row, false}; };
}

}  // namespace

TEST_CASE("stepwise decode with p=1 never leaves the first entry") {
  Matrix mem = tiny_memory(4);
  SamplerConfig cfg{SampleMode::Sampled, 5, 6};
  HardDecodeResult res = decode_hard(mem, const_p(Vec(4, 1.0)), cfg, Family::Stepwise);
  REQUIRE(res.path.positions == std::vector<int>{1, 1, 1, 1, 1, 1});
  for (const Vec& c : res.contexts) REQUIRE(c == mem.row(0));
  REQUIRE(res.truncated);
}

TEST_CASE("stepwise decode with p=0 advances then parks at the end") {
  Matrix mem = tiny_memory(3);
  SamplerConfig cfg{SampleMode::Greedy, 0, 5};
  HardDecodeResult res = decode_hard(mem, const_p(Vec(3, 0.0)), cfg, Family::Stepwise,
                                     EdgePolicy::Clamp);
  REQUIRE(res.path.positions == std::vector<int>{1, 2, 3, 3, 3});
  REQUIRE_FALSE(res.path.terminated_past_end);
}

TEST_CASE("stepwise decode under leak terminates past the end") {
  Matrix mem = tiny_memory(3);
  SamplerConfig cfg{SampleMode::Greedy, 0, 10};
  HardDecodeResult res = decode_hard(mem, const_p(Vec(3, 0.0)), cfg, Family::Stepwise,
                                     EdgePolicy::Leak);
  REQUIRE(res.path.positions == std::vector<int>{1, 2, 3});
  REQUIRE(res.path.terminated_past_end);
  REQUIRE_FALSE(res.truncated);
}

TEST_CASE("contexts are exactly the attended memory rows") {
  Matrix mem = tiny_memory(5);
  SamplerConfig cfg{SampleMode::Sampled, 11, 8};
  HardDecodeResult res = decode_hard(mem, const_p(Vec(5, 0.5)), cfg, Family::Monotonic);
  REQUIRE(res.contexts.size() == res.path.positions.size());
  for (size_t k = 0; k < res.contexts.size(); ++k)
    REQUIRE(res.contexts[k] == mem.row(res.path.positions[k] - 1));
}

TEST_CASE("a stop feed ends the decode cleanly") {
  Matrix mem = tiny_memory(3);
  StepFn fn = [&](int k, int) { return StepFeed{Vec(3, 0.9), k > 2}; };
  SamplerConfig cfg{SampleMode::Greedy, 0, 50};
  HardDecodeResult res = decode_hard(mem, fn, cfg, Family::Monotonic);
  REQUIRE(res.path.positions.size() == 2);
  REQUIRE_FALSE(res.truncated);
  REQUIRE_FALSE(res.path.terminated_past_end);
}

TEST_CASE("sampled decode is reproducible bit-exactly from its seed") {
  Matrix mem = tiny_memory(6);
  SamplerConfig cfg{SampleMode::Sampled, 12345, 10};
  HardDecodeResult a = decode_hard(mem, const_p(Vec(6, 0.4)), cfg, Family::Monotonic);
  HardDecodeResult b = decode_hard(mem, const_p(Vec(6, 0.4)), cfg, Family::Monotonic);
  REQUIRE(a.path.positions == b.path.positions);
  REQUIRE(a.path.terminated_past_end == b.path.terminated_past_end);
  REQUIRE(a.contexts == b.contexts);
}

TEST_CASE("greedy decode ignores the seed") {
  Matrix mem = tiny_memory(4);
  Vec p = {0.6, 0.3, 0.7, 0.2};
  SamplerConfig a{SampleMode::Greedy, 1, 6};
  SamplerConfig b{SampleMode::Greedy, 999, 6};
  REQUIRE(decode_hard(mem, const_p(p), a, Family::Stepwise).path.positions ==
          decode_hard(mem, const_p(p), b, Family::Stepwise).path.positions);
}

TEST_CASE("sampled stepwise paths move by zero or one and cover a prefix") {
  Matrix mem = tiny_memory(8);
  Rng seeds(66);
  for (int trial = 0; trial < 1000; ++trial) {
    Vec p(8);
    for (double& x : p) x = seeds.uniform(0.05, 0.95);
    SamplerConfig cfg{SampleMode::Sampled, seeds.bits(), 20};
    HardDecodeResult res = decode_hard(mem, const_p(p), cfg, Family::Stepwise);
    const auto& pos = res.path.positions;
    REQUIRE(pos.front() == 1);
    std::set<int> visited(pos.begin(), pos.end());
    int peak = *std::max_element(pos.begin(), pos.end());
    for (size_t k = 1; k < pos.size(); ++k) {
      int d = pos[k] - pos[k - 1];
      REQUIRE((d == 0 || d == 1));
    }
    // gap-free prefix coverage
    for (int j = 1; j <= peak; ++j) REQUIRE(visited.count(j) == 1);
  }
}

TEST_CASE("sampled monotonic paths never rewind but may skip") {
  Matrix mem = tiny_memory(8);
  Rng seeds(67);
  bool saw_skip = false;
  for (int trial = 0; trial < 1000; ++trial) {
    Vec p(8);
    for (double& x : p) x = seeds.uniform(0.05, 0.95);
    SamplerConfig cfg{SampleMode::Sampled, seeds.bits(), 12};
    HardDecodeResult res = decode_hard(mem, const_p(p), cfg, Family::Monotonic);
    const auto& pos = res.path.positions;
    for (size_t k = 1; k < pos.size(); ++k) {
      REQUIRE(pos[k] >= pos[k - 1]);
      if (pos[k] > pos[k - 1] + 1) saw_skip = true;
    }
  }
  REQUIRE(saw_skip);
}
