#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hremrg/metrics.hpp"

namespace hremrg {

// Scoring interface for the weight search: given a full seven-slot weight
// vector, return one scalar score. Implementations must be deterministic
// within a search run.
struct WeightScorer {
  virtual ~WeightScorer() = default;
  virtual double score(const MetricWeights& w) = 0;
};

class FunctionScorer : public WeightScorer {
 public:
  explicit FunctionScorer(std::function<double(const MetricWeights&)> f)
      : f_(std::move(f)) {}
  double score(const MetricWeights& w) override { return f_(w); }

 private:
  std::function<double(const MetricWeights&)> f_;
};

// Pre-recorded weight -> score table; unknown vectors are an error.
class LookupScorer : public WeightScorer {
 public:
  explicit LookupScorer(std::map<MetricWeights, double> table)
      : table_(std::move(table)) {}
  double score(const MetricWeights& w) override;

 private:
  std::map<MetricWeights, double> table_;
};

// Append-ordered unique evaluations (memoization means no vector repeats).
struct SearchTrace {
  std::vector<std::pair<MetricWeights, double>> evals;

  std::size_t unique_count() const { return evals.size(); }
  // Highest score, earliest on ties.
  std::pair<MetricWeights, double> best() const;
};

// Scorer failure mid-search; carries the evaluations made so far.
struct SearchAborted : std::runtime_error {
  SearchAborted(const std::string& what, SearchTrace partial)
      : std::runtime_error(what), trace(std::move(partial)) {}
  SearchTrace trace;
};

// Greedy coordinate search over integer weights in {1..n} for the given
// slots (all other slots stay 0): evaluate the all-ones baseline; each round,
// bump every unfixed slot by one and pick the most influential; sweep that
// slot upward while the score strictly improves (capped at n); fix it at its
// best observed value; repeat until every slot is fixed. Returns the
// best-seen vector over the whole trace.
std::pair<MetricWeights, SearchTrace> greedy_weight_search(
    WeightScorer& scorer, const std::vector<int>& slots, int n);

// Exhaustive {1..n}^m enumeration over the given slots; exact optimum with
// lexicographically-smallest tie-breaking. Refuses budgets above 10^6.
std::pair<MetricWeights, SearchTrace> grid_search_oracle(
    WeightScorer& scorer, const std::vector<int>& slots, int n);

// Worst-case unique-evaluation bound of the greedy search, baseline
// included: 1 + m*(n-1) + sum_{r=2..m} r (the m=1 remainder term is 1).
int evaluation_budget(int m, int n);

}  // namespace hremrg
