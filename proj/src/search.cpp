#include "hremrg/search.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace hremrg {

double LookupScorer::score(const MetricWeights& w) {
  auto it = table_.find(w);
  if (it == table_.end())
    throw ContractError("lookup scorer: no entry for " + w.to_string());
  return it->second;
}

std::pair<MetricWeights, double> SearchTrace::best() const {
  if (evals.empty()) throw ContractError("search trace: empty");
  std::size_t bi = 0;
  for (std::size_t i = 1; i < evals.size(); ++i)
    if (evals[i].second > evals[bi].second) bi = i;
  return evals[bi];
}

namespace {

void check_slots(const std::vector<int>& slots, int n) {
  if (slots.empty()) throw ContractError("weight search: need >= 1 slot");
  std::set<int> seen;
  for (int s : slots) {
    if (s < 0 || s >= kNumMetrics)
      throw ContractError("weight search: slot index out of range");
    if (!seen.insert(s).second)
      throw ContractError("weight search: duplicate slot");
  }
  if (n < 2) throw ContractError("weight search: n must be >= 2");
}

// Memoizing evaluator; scorer errors abort with the partial trace.
class Evaluator {
 public:
  Evaluator(WeightScorer& scorer, SearchTrace& trace)
      : scorer_(scorer), trace_(trace) {}

  double operator()(const MetricWeights& w) {
    auto it = memo_.find(w);
    if (it != memo_.end()) return it->second;
    double s;
    try {
      s = scorer_.score(w);
    } catch (const std::exception& e) {
      throw SearchAborted(std::string("weight search: scorer failed at ") +
                              w.to_string() + ": " + e.what(),
                          trace_);
    }
    memo_.emplace(w, s);
    trace_.evals.emplace_back(w, s);
    return s;
  }

 private:
  WeightScorer& scorer_;
  SearchTrace& trace_;
  std::map<MetricWeights, double> memo_;
};

}  // namespace

std::pair<MetricWeights, SearchTrace> greedy_weight_search(
    WeightScorer& scorer, const std::vector<int>& slots, int n) {
  check_slots(slots, n);
  SearchTrace trace;
  Evaluator eval(scorer, trace);

  MetricWeights current;
  for (int s : slots) current[s] = 1;
  double current_score = eval(current);

  std::vector<int> unfixed = slots;
  std::sort(unfixed.begin(), unfixed.end());
  while (!unfixed.empty()) {
    // Bump each unfixed slot by one; the highest-scoring bump is the most
    // influential metric this round (ties to the lowest slot index).
    int chosen = -1;
    double chosen_score = 0;
    for (int s : unfixed) {
      if (current[s] + 1 > n) continue;
      MetricWeights w = current;
      ++w[s];
      double sc = eval(w);
      if (chosen < 0 || sc > chosen_score) {
        chosen = s;
        chosen_score = sc;
      }
    }
    if (chosen < 0) break;  // every unfixed slot is already at the cap

    // Sweep the chosen slot upward while the score strictly improves over
    // the previous value, capped at n; remember the best value observed for
    // this coordinate (possibly its pre-round value).
    int value = current[chosen] + 1;
    double value_score = chosen_score;
    double prev_score = current_score;
    int best_value = current[chosen];
    double best_score = current_score;
    if (value_score > best_score) {
      best_value = value;
      best_score = value_score;
    }
    while (value_score > prev_score && value < n) {
      MetricWeights w = current;
      w[chosen] = value + 1;
      double next_score = eval(w);
      prev_score = value_score;
      ++value;
      value_score = next_score;
      if (value_score > best_score) {
        best_value = value;
        best_score = value_score;
      }
    }

    current[chosen] = best_value;
    current_score = best_score;
    unfixed.erase(std::find(unfixed.begin(), unfixed.end(), chosen));
  }

  auto [best_w, best_s] = trace.best();
  return {best_w, trace};
}

std::pair<MetricWeights, SearchTrace> grid_search_oracle(
    WeightScorer& scorer, const std::vector<int>& slots, int n) {
  check_slots(slots, n);
  const int m = static_cast<int>(slots.size());
  double budget = std::pow(static_cast<double>(n), m);
  if (budget > 1e6)
    throw ContractError("grid search: budget " + std::to_string(budget) +
                        " exceeds the 1e6 guard");
  std::vector<int> sorted = slots;
  std::sort(sorted.begin(), sorted.end());

  SearchTrace trace;
  Evaluator eval(scorer, trace);
  MetricWeights best;
  double best_score = 0;
  bool have_best = false;

  std::vector<int> v(static_cast<std::size_t>(m), 1);
  for (;;) {
    MetricWeights w;
    for (int i = 0; i < m; ++i)
      w[sorted[static_cast<std::size_t>(i)]] = v[static_cast<std::size_t>(i)];
    double s = eval(w);
    // Lexicographic enumeration + strict improvement = smallest tie wins.
    if (!have_best || s > best_score) {
      have_best = true;
      best = w;
      best_score = s;
    }
    int i = m - 1;
    while (i >= 0 && v[static_cast<std::size_t>(i)] == n) {
      v[static_cast<std::size_t>(i)] = 1;
      --i;
    }
    if (i < 0) break;
    ++v[static_cast<std::size_t>(i)];
  }
  return {best, trace};
}

int evaluation_budget(int m, int n) {
  if (m < 1 || n < 2) throw ContractError("evaluation_budget: need m>=1, n>=2");
  int tail = 1;  // m == 1 remainder
  if (m >= 2) {
    tail = 0;
    for (int r = 2; r <= m; ++r) tail += r;
  }
  return 1 + m * (n - 1) + tail;
}

}  // namespace hremrg
