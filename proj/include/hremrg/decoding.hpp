#pragma once

#include <array>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "hremrg/model.hpp"

namespace hremrg {

// Counts of generated trigrams within one decoded sequence, keyed by
// (token_{t-2}, token_{t-1}, emitted token). Reset per sequence; copied per
// beam hypothesis.
struct TrigramPenaltyState {
  std::map<std::array<int, 3>, int> counts;

  int count(int prev2, int prev1, int w) const {
    auto it = counts.find({prev2, prev1, w});
    return it == counts.end() ? 0 : it->second;
  }
  void note(int prev2, int prev1, int w) {
    if (prev2 >= 0 && prev1 >= 0) ++counts[{prev2, prev1, w}];
  }
};

// Subtracts (1 - e^{-n_w}) from every vocabulary entry, where n_w is the
// stored count for the trigram (prev2, prev1, w). Zero-count words are
// unchanged; without a two-token context the input passes through.
std::vector<double> apply_repetition_penalty(const std::vector<double>& log_probs,
                                             int prev2, int prev1,
                                             const TrigramPenaltyState& state);

// Argmax decoding from BOS; stops at EOS or max_len total tokens. With
// `penalty`, selection uses penalized scores and emitted trigram counts grow
// as the sequence is produced.
TokenSeq greedy_decode(const ReportModel& model, const FeatureBundle& features,
                       int max_len, bool penalty);
TokenSeq greedy_decode(const ReportModel& model, const EncodedImage& enc,
                       int max_len, bool penalty);

// Multinomial sample from the unpenalized per-step distribution. Returns the
// sequence (BOS ... EOS) and the true log-prob of each emitted token.
std::pair<TokenSeq, std::vector<double>> sample_decode(
    const ReportModel& model, const FeatureBundle& features, int max_len,
    std::mt19937_64& rng);
std::pair<TokenSeq, std::vector<double>> sample_decode(
    const ReportModel& model, const EncodedImage& enc, int max_len,
    std::mt19937_64& rng);

struct Hypothesis {
  TokenSeq tokens;           // starts with BOS
  double log_prob = 0;       // sum of true per-token log-probs
  double penalized_sum = 0;  // selection score: penalized log-probs summed
  DecoderState state;
  TrigramPenaltyState trigrams;
  bool finished = false;

  // Mean true log-prob per emitted token (excludes BOS).
  double mean_log_prob() const;
};

// Length-wise beam search over cumulative (optionally penalized) scores.
// Each hypothesis carries its own trigram counts; finished hypotheses
// compete by mean per-token true log-prob. beam=1 reproduces greedy_decode.
TokenSeq beam_search(const ReportModel& model, const FeatureBundle& features,
                     int beam, int max_len, bool penalty);

}  // namespace hremrg
