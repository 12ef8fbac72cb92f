#include "hremrg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace hremrg {

const std::array<const char*, kNumMetrics> kMetricNames = {
    "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "CIDEr", "METEOR", "ROUGE-L"};

double ScoreVector::score_sum() const {
  double s = 0;
  for (double x : v) s += x;
  return s;
}

MetricWeights MetricWeights::ones() {
  MetricWeights w;
  w.lambda.fill(1);
  return w;
}

std::string MetricWeights::to_string() const {
  std::ostringstream os;
  for (int i = 0; i < kNumMetrics; ++i) {
    if (i) os << ':';
    os << lambda[static_cast<std::size_t>(i)];
  }
  return os.str();
}

namespace {

using Ngram = std::vector<int>;
using NgramCounts = std::map<Ngram, int>;

NgramCounts count_ngrams(const TokenSeq& s, int n) {
  NgramCounts c;
  if (static_cast<int>(s.size()) < n) return c;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i)
    ++c[Ngram(s.begin() + static_cast<std::ptrdiff_t>(i),
              s.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return c;
}

// Total clipped matches of candidate n-grams against the per-reference max.
long clipped_matches(const NgramCounts& cand,
                     const std::vector<TokenSeq>& refs, int n) {
  NgramCounts max_ref;
  for (const TokenSeq& r : refs)
    for (const auto& [g, c] : count_ngrams(r, n)) {
      int& m = max_ref[g];
      m = std::max(m, c);
    }
  long matches = 0;
  for (const auto& [g, c] : cand) {
    auto it = max_ref.find(g);
    if (it != max_ref.end()) matches += std::min(c, it->second);
  }
  return matches;
}

// Reference length closest to c; ties go to the shorter reference.
long closest_ref_len(std::size_t c, const std::vector<TokenSeq>& refs) {
  long best = -1;
  for (const TokenSeq& r : refs) {
    long rl = static_cast<long>(r.size());
    if (best < 0 ||
        std::llabs(rl - static_cast<long>(c)) <
            std::llabs(best - static_cast<long>(c)) ||
        (std::llabs(rl - static_cast<long>(c)) ==
             std::llabs(best - static_cast<long>(c)) &&
         rl < best)) {
      best = rl;
    }
  }
  return best;
}

double brevity_penalty(double c, double r) {
  if (c <= 0) return 0;
  return std::min(1.0, std::exp(1.0 - r / c));
}

int lcs_len(const TokenSeq& a, const TokenSeq& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

// TF-IDF n-gram vector for one sequence.
std::map<Ngram, double> tfidf(const TokenSeq& s, int n,
                              const CorpusStats& stats) {
  std::map<Ngram, double> v;
  for (const auto& [g, c] : count_ngrams(s, n)) {
    const auto& dfn = stats.df[static_cast<std::size_t>(n - 1)];
    auto it = dfn.find(g);
    const int df = it == dfn.end() ? 1 : std::max(1, it->second);
    const double idf =
        std::log(std::max(1.0, static_cast<double>(stats.num_docs) / df));
    v[g] = c * idf;
  }
  return v;
}

double cosine(const std::map<Ngram, double>& a,
              const std::map<Ngram, double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (const auto& [g, x] : a) {
    na += x * x;
    auto it = b.find(g);
    if (it != b.end()) dot += x * it->second;
  }
  for (const auto& [g, x] : b) nb += x * x;
  if (na <= 0 || nb <= 0) return 0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Greedy longest-fragment exact-match alignment: returns (matches, chunks).
// Repeatedly takes the longest common contiguous fragment over still
// unmatched positions; ties broken by leftmost candidate position, then
// leftmost reference position.
std::pair<int, int> align(const TokenSeq& cand, const TokenSeq& ref) {
  std::vector<bool> cused(cand.size(), false), rused(ref.size(), false);
  int matches = 0, chunks = 0;
  for (;;) {
    std::size_t best_len = 0, best_i = 0, best_j = 0;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      for (std::size_t j = 0; j < ref.size(); ++j) {
        std::size_t len = 0;
        while (i + len < cand.size() && j + len < ref.size() &&
               !cused[i + len] && !rused[j + len] &&
               cand[i + len] == ref[j + len])
          ++len;
        if (len > best_len) {
          best_len = len;
          best_i = i;
          best_j = j;
        }
      }
    }
    if (best_len == 0) break;
    for (std::size_t k = 0; k < best_len; ++k) {
      cused[best_i + k] = true;
      rused[best_j + k] = true;
    }
    matches += static_cast<int>(best_len);
    ++chunks;
  }
  return {matches, chunks};
}

}  // namespace

CorpusStats CorpusStats::build(
    const std::vector<std::vector<TokenSeq>>& ref_corpus) {
  CorpusStats s;
  s.num_docs = static_cast<int>(ref_corpus.size());
  for (const auto& doc : ref_corpus) {
    for (int n = 1; n <= 4; ++n) {
      std::map<Ngram, int> seen;
      for (const TokenSeq& r : doc)
        for (const auto& [g, c] : count_ngrams(r, n)) seen[g] = 1;
      for (const auto& [g, one] : seen) ++s.df[static_cast<std::size_t>(n - 1)][g];
    }
  }
  return s;
}

double bleu(const TokenSeq& candidate, const std::vector<TokenSeq>& refs,
            int max_n) {
  if (max_n < 1 || max_n > 4)
    throw ContractError("bleu: max_n must be in 1..4");
  if (refs.empty()) throw ContractError("bleu: need at least one reference");
  if (candidate.empty()) return 0;

  double log_prec = 0;
  for (int n = 1; n <= max_n; ++n) {
    NgramCounts cand = count_ngrams(candidate, n);
    long total = 0;
    for (const auto& [g, c] : cand) total += c;
    long matches = clipped_matches(cand, refs, n);
    double num = static_cast<double>(matches);
    double den = static_cast<double>(total);
    if (n >= 2) {
      num += 1;
      den += 1;
    }
    if (den <= 0 || num <= 0) return 0;
    log_prec += std::log(num / den);
  }
  const double bp =
      brevity_penalty(static_cast<double>(candidate.size()),
                      static_cast<double>(closest_ref_len(candidate.size(), refs)));
  return bp * std::exp(log_prec / max_n);
}

double corpus_bleu(const std::vector<TokenSeq>& candidates,
                   const std::vector<std::vector<TokenSeq>>& ref_corpus,
                   int max_n) {
  if (candidates.size() != ref_corpus.size())
    throw ContractError("corpus_bleu: candidate/reference count mismatch");
  if (max_n < 1 || max_n > 4)
    throw ContractError("corpus_bleu: max_n must be in 1..4");
  double log_prec = 0;
  for (int n = 1; n <= max_n; ++n) {
    long matches = 0, total = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      NgramCounts cand = count_ngrams(candidates[i], n);
      for (const auto& [g, c] : cand) total += c;
      matches += clipped_matches(cand, ref_corpus[i], n);
    }
    if (total <= 0 || matches <= 0) return 0;
    log_prec += std::log(static_cast<double>(matches) / total);
  }
  double c = 0, r = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    c += static_cast<double>(candidates[i].size());
    r += static_cast<double>(
        closest_ref_len(candidates[i].size(), ref_corpus[i]));
  }
  return brevity_penalty(c, r) * std::exp(log_prec / max_n);
}

double rouge_l(const TokenSeq& candidate, const std::vector<TokenSeq>& refs) {
  if (refs.empty()) throw ContractError("rouge_l: need at least one reference");
  constexpr double kBeta = 1.2;
  double best = 0;
  for (const TokenSeq& ref : refs) {
    if (candidate.empty() || ref.empty()) continue;
    const double l = lcs_len(candidate, ref);
    if (l <= 0) continue;
    const double recall = l / static_cast<double>(ref.size());
    const double prec = l / static_cast<double>(candidate.size());
    const double f = ((1 + kBeta * kBeta) * recall * prec) /
                     (recall + kBeta * kBeta * prec);
    best = std::max(best, f);
  }
  return best;
}

double meteor(const TokenSeq& candidate, const std::vector<TokenSeq>& refs) {
  if (refs.empty()) throw ContractError("meteor: need at least one reference");
  double best = 0;
  for (const TokenSeq& ref : refs) {
    if (candidate.empty() || ref.empty()) continue;
    auto [matches, chunks] = align(candidate, ref);
    if (matches == 0) continue;
    const double p = matches / static_cast<double>(candidate.size());
    const double r = matches / static_cast<double>(ref.size());
    const double f_mean = 10 * p * r / (r + 9 * p);
    const double frag = static_cast<double>(chunks) / matches;
    const double penalty = 0.5 * frag * frag * frag;
    best = std::max(best, f_mean * (1 - penalty));
  }
  return best;
}

std::vector<double> cider(const std::vector<TokenSeq>& candidates,
                          const std::vector<std::vector<TokenSeq>>& refs,
                          const CorpusStats& stats) {
  if (stats.num_docs <= 0)
    throw ContractError("cider: corpus statistics are empty");
  if (candidates.size() != refs.size())
    throw ContractError("cider: candidate/reference count mismatch");
  std::vector<double> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (refs[i].empty())
      throw ContractError("cider: candidate without references");
    double mean_over_n = 0;
    for (int n = 1; n <= 4; ++n) {
      auto cv = tfidf(candidates[i], n, stats);
      double sim = 0;
      for (const TokenSeq& r : refs[i]) sim += cosine(cv, tfidf(r, n, stats));
      mean_over_n += sim / static_cast<double>(refs[i].size());
    }
    out.push_back(10.0 * mean_over_n / 4.0);
  }
  return out;
}

ScoreVector score_vector(const TokenSeq& candidate,
                         const std::vector<TokenSeq>& refs,
                         const CorpusStats& stats) {
  ScoreVector s;
  for (int n = 1; n <= 4; ++n) s[kBleu1 + n - 1] = bleu(candidate, refs, n);
  s[kCider] = cider({candidate}, {refs}, stats)[0];
  s[kMeteor] = meteor(candidate, refs);
  s[kRougeL] = rouge_l(candidate, refs);
  return s;
}

double hybrid_reward(const ScoreVector& s, const MetricWeights& lambda) {
  double r = 0;
  for (int i = 0; i < kNumMetrics; ++i) r += lambda[i] * s[i];
  return r;
}

}  // namespace hremrg
