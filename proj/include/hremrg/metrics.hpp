#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "hremrg/model.hpp"

namespace hremrg {

// Fixed slot order used everywhere a metric vector appears.
enum MetricSlot : int {
  kBleu1 = 0,
  kBleu2 = 1,
  kBleu3 = 2,
  kBleu4 = 3,
  kCider = 4,
  kMeteor = 5,
  kRougeL = 6,
  kNumMetrics = 7,
};

extern const std::array<const char*, kNumMetrics> kMetricNames;

struct ScoreVector {
  std::array<double, kNumMetrics> v{};

  double& operator[](int i) { return v[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return v[static_cast<std::size_t>(i)]; }
  double score_sum() const;
};

// Integer per-metric weights for the hybrid reward.
struct MetricWeights {
  std::array<int, kNumMetrics> lambda{};

  static MetricWeights ones();
  int& operator[](int i) { return lambda[static_cast<std::size_t>(i)]; }
  int operator[](int i) const { return lambda[static_cast<std::size_t>(i)]; }
  bool operator==(const MetricWeights&) const = default;
  bool operator<(const MetricWeights& o) const { return lambda < o.lambda; }
  std::string to_string() const;  // "a:b:c:d:e:f:g"
};

// Document frequencies of n-grams (n = 1..4) over a reference corpus of M
// documents; an n-gram counts once per document in which any reference
// contains it.
struct CorpusStats {
  std::array<std::map<std::vector<int>, int>, 4> df;
  int num_docs = 0;

  static CorpusStats build(const std::vector<std::vector<TokenSeq>>& ref_corpus);
};

// Sentence-level BLEU: geometric mean of clipped n-gram precisions for
// n=1..max_n with add-one smoothing for n >= 2, times the brevity penalty
// against the closest-length reference. Empty candidate scores 0.
double bleu(const TokenSeq& candidate, const std::vector<TokenSeq>& refs,
            int max_n);

// Corpus-level BLEU: clipped counts and lengths pooled over the whole corpus,
// no smoothing. Used for evaluation reports, not per-sample rewards.
double corpus_bleu(const std::vector<TokenSeq>& candidates,
                   const std::vector<std::vector<TokenSeq>>& ref_corpus,
                   int max_n);

// LCS-based F-score with beta = 1.2, maximized over references.
double rouge_l(const TokenSeq& candidate, const std::vector<TokenSeq>& refs);

// Exact-match unigram alignment (greedy longest-fragment), harmonic mean
// 10PR/(R+9P), chunk penalty 0.5*(chunks/matches)^3, max over references.
double meteor(const TokenSeq& candidate, const std::vector<TokenSeq>& refs);

// Classic CIDEr scaled by 10: per n = 1..4, cosine similarity of TF-IDF
// n-gram vectors averaged over references, then averaged over n.
std::vector<double> cider(const std::vector<TokenSeq>& candidates,
                          const std::vector<std::vector<TokenSeq>>& refs,
                          const CorpusStats& stats);

ScoreVector score_vector(const TokenSeq& candidate,
                         const std::vector<TokenSeq>& refs,
                         const CorpusStats& stats);

double hybrid_reward(const ScoreVector& s, const MetricWeights& lambda);

}  // namespace hremrg
