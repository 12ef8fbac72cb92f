#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "hremrg/search.hpp"

using namespace hremrg;

namespace {

MetricWeights bcm(int b, int c, int m) {
  MetricWeights w;
  w[kBleu4] = b;
  w[kCider] = c;
  w[kMeteor] = m;
  return w;
}

// Pre-recorded scores for every BLEU-4:CIDEr:METEOR combination in {1..3}^3.
LookupScorer published_scores() {
  std::map<MetricWeights, double> t;
  t[bcm(1, 1, 1)] = 2.0314;
  t[bcm(2, 1, 1)] = 1.9779;
  t[bcm(3, 1, 1)] = 1.9383;
  t[bcm(1, 2, 1)] = 1.9795;
  t[bcm(2, 2, 1)] = 1.9897;
  t[bcm(3, 2, 1)] = 2.0216;
  t[bcm(1, 3, 1)] = 1.9984;
  t[bcm(2, 3, 1)] = 1.9507;
  t[bcm(3, 3, 1)] = 1.9604;
  t[bcm(1, 1, 2)] = 2.0833;
  t[bcm(2, 1, 2)] = 2.0792;
  t[bcm(3, 1, 2)] = 2.0343;
  t[bcm(1, 2, 2)] = 2.0296;
  t[bcm(2, 2, 2)] = 2.0472;
  t[bcm(3, 2, 2)] = 2.046;
  t[bcm(1, 3, 2)] = 2.0545;
  t[bcm(2, 3, 2)] = 2.0132;
  t[bcm(3, 3, 2)] = 1.9988;
  t[bcm(1, 1, 3)] = 2.0277;
  t[bcm(2, 1, 3)] = 2.0723;
  t[bcm(3, 1, 3)] = 2.0567;
  t[bcm(1, 2, 3)] = 2.0662;
  t[bcm(2, 2, 3)] = 1.9575;
  t[bcm(3, 2, 3)] = 2.047;
  t[bcm(1, 3, 3)] = 2.02;
  t[bcm(2, 3, 3)] = 2.0216;
  t[bcm(3, 3, 3)] = 1.9857;
  return LookupScorer(std::move(t));
}

const std::vector<int> kBcmSlots{kBleu4, kCider, kMeteor};

}  // namespace

TEST_CASE("greedy search reproduces the published three-metric optimum") {
  LookupScorer scorer = published_scores();
  auto [w, trace] = greedy_weight_search(scorer, kBcmSlots, 3);
  CHECK(w.to_string() == "0:0:0:1:1:2:0");
  CHECK(trace.best().second == doctest::Approx(2.0833).epsilon(1e-12));
  CHECK(trace.unique_count() <= 8);
  // Memoization: all evaluated vectors are distinct.
  std::set<std::string> seen;
  for (const auto& [v, s] : trace.evals) CHECK(seen.insert(v.to_string()).second);
  // Untouched slots stay zero.
  CHECK(w[kBleu1] == 0);
  CHECK(w[kRougeL] == 0);
}

TEST_CASE("grid oracle finds the same optimum with exactly 27 evaluations") {
  LookupScorer scorer = published_scores();
  auto [w, trace] = grid_search_oracle(scorer, kBcmSlots, 3);
  CHECK(w.to_string() == "0:0:0:1:1:2:0");
  CHECK(trace.best().second == doctest::Approx(2.0833).epsilon(1e-12));
  CHECK(trace.unique_count() == 27);
}

TEST_CASE("constant scorer fixes everything at the all-ones baseline") {
  FunctionScorer scorer([](const MetricWeights&) { return 1.0; });
  std::vector<int> slots{0, 1, 2, 3, 4, 5, 6};
  auto [w, trace] = greedy_weight_search(scorer, slots, 5);
  CHECK(w == MetricWeights::ones());
  CHECK(trace.unique_count() == slots.size() + 1);  // baseline + one bump each
}

TEST_CASE("separable unimodal scorers: greedy equals the grid oracle") {
  std::mt19937_64 rng(11);
  const int n = 5;
  std::vector<int> slots{0, 1, 2, 3, 4, 5, 6};
  for (int trial = 0; trial < 50; ++trial) {
    std::array<double, kNumMetrics> peak{}, sharp{};
    std::uniform_real_distribution<double> pd(1.0, static_cast<double>(n));
    std::uniform_real_distribution<double> sd(0.1, 2.0);
    for (int i = 0; i < kNumMetrics; ++i) {
      peak[static_cast<std::size_t>(i)] = pd(rng);
      sharp[static_cast<std::size_t>(i)] = sd(rng);
    }
    auto f = [&](const MetricWeights& w) {
      double s = 100;
      for (int i = 0; i < kNumMetrics; ++i) {
        double d = w[i] - peak[static_cast<std::size_t>(i)];
        s -= sharp[static_cast<std::size_t>(i)] * d * d;
      }
      return s;
    };
    FunctionScorer gs(f), hs(f);
    auto [gw, gt] = greedy_weight_search(gs, slots, n);
    auto [ow, ot] = grid_search_oracle(hs, slots, n);
    CHECK(f(gw) == doctest::Approx(f(ow)).epsilon(1e-12));
  }
}

TEST_CASE("unique evaluations never exceed the budget") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    // Arbitrary deterministic mock scorer: hash-like mixing of the weights.
    std::uniform_real_distribution<double> noise(0, 1);
    std::array<double, kNumMetrics * 6> salt{};
    for (double& x : salt) x = noise(rng);
    auto f = [&](const MetricWeights& w) {
      double s = 0;
      for (int i = 0; i < kNumMetrics; ++i)
        s += salt[static_cast<std::size_t>(i * 6 + w[i] % 6)] *
             std::sin(1.7 * i + 0.9 * w[i]);
      return s;
    };
    FunctionScorer scorer(f);
    std::vector<int> slots{0, 1, 2, 3, 4, 5, 6};
    auto [w, trace] = greedy_weight_search(scorer, slots, 5);
    CHECK(trace.unique_count() <= static_cast<std::size_t>(evaluation_budget(7, 5)));
    CHECK(trace.unique_count() <= 56);
    // Best-seen semantics: the returned weights carry the maximal score.
    double best = -1e300;
    for (const auto& [v, s] : trace.evals) best = std::max(best, s);
    CHECK(f(w) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("evaluation_budget closed form") {
  CHECK(evaluation_budget(7, 5) == 56);
  CHECK(evaluation_budget(3, 3) == 12);
  for (int n = 2; n <= 6; ++n) CHECK(evaluation_budget(1, n) == n + 1);
  CHECK_THROWS_AS((void)evaluation_budget(0, 3), ContractError);
  CHECK_THROWS_AS((void)evaluation_budget(3, 1), ContractError);
}

TEST_CASE("grid oracle tie-breaking is lexicographically smallest") {
  FunctionScorer scorer([](const MetricWeights&) { return 3.0; });
  auto [w, trace] = grid_search_oracle(scorer, kBcmSlots, 2);
  CHECK(w == bcm(1, 1, 1));
  CHECK(trace.unique_count() == 8);
}

TEST_CASE("grid oracle refuses oversized budgets") {
  FunctionScorer scorer([](const MetricWeights&) { return 0.0; });
  std::vector<int> slots{0, 1, 2, 3, 4, 5, 6};
  CHECK_THROWS_AS((void)grid_search_oracle(scorer, slots, 8), ContractError);
}

TEST_CASE("m=1 grid oracle is a plain sweep") {
  FunctionScorer scorer([](const MetricWeights& w) {
    return -std::fabs(w[kCider] - 3.0);
  });
  auto [w, trace] = grid_search_oracle(scorer, {kCider}, 5);
  CHECK(w[kCider] == 3);
  CHECK(trace.unique_count() == 5);
}

TEST_CASE("scorer failure aborts with the partial trace") {
  int calls = 0;
  FunctionScorer scorer([&](const MetricWeights&) -> double {
    if (++calls == 3) throw std::runtime_error("backend unavailable");
    return 1.0 + 0.01 * calls;
  });
  try {
    (void)greedy_weight_search(scorer, kBcmSlots, 3);
    FAIL("expected SearchAborted");
  } catch (const SearchAborted& e) {
    CHECK(e.trace.unique_count() == 2);
  }
}

TEST_CASE("slot validation") {
  FunctionScorer scorer([](const MetricWeights&) { return 0.0; });
  CHECK_THROWS_AS((void)greedy_weight_search(scorer, {}, 3), ContractError);
  CHECK_THROWS_AS((void)greedy_weight_search(scorer, {1, 1}, 3), ContractError);
  CHECK_THROWS_AS((void)greedy_weight_search(scorer, {9}, 3), ContractError);
  CHECK_THROWS_AS((void)greedy_weight_search(scorer, {1}, 1), ContractError);
}
