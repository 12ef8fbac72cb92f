#include "hremrg/decoding.hpp"

#include <algorithm>
#include <cmath>

namespace hremrg {

std::vector<double> apply_repetition_penalty(const std::vector<double>& log_probs,
                                             int prev2, int prev1,
                                             const TrigramPenaltyState& state) {
  std::vector<double> out = log_probs;
  if (prev2 < 0 || prev1 < 0) return out;
  for (std::size_t w = 0; w < out.size(); ++w) {
    const int n = state.count(prev2, prev1, static_cast<int>(w));
    if (n > 0) out[w] -= 1.0 - std::exp(-static_cast<double>(n));
  }
  return out;
}

namespace {

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

TokenSeq greedy_decode(const ReportModel& model, const EncodedImage& enc,
                       int max_len, bool penalty) {
  if (max_len < 2) throw ContractError("greedy_decode: max_len must be >= 2");
  TokenSeq seq{kBos};
  DecoderState state = model.initial_state();
  TrigramPenaltyState trigrams;
  while (static_cast<int>(seq.size()) < max_len) {
    auto [lp, next] = model.decoder_step(nullptr, enc, seq.back(), state);
    std::vector<double> scores = lp.data;
    const int prev2 = next.prev2_token, prev1 = next.prev_token;
    if (penalty) scores = apply_repetition_penalty(scores, prev2, prev1, trigrams);
    const int w = static_cast<int>(argmax(scores));
    seq.push_back(w);
    trigrams.note(prev2, prev1, w);
    state = std::move(next);
    if (w == kEos) break;
  }
  return seq;
}

TokenSeq greedy_decode(const ReportModel& model, const FeatureBundle& features,
                       int max_len, bool penalty) {
  return greedy_decode(model, model.encode(nullptr, features), max_len, penalty);
}

std::pair<TokenSeq, std::vector<double>> sample_decode(
    const ReportModel& model, const EncodedImage& enc, int max_len,
    std::mt19937_64& rng) {
  if (max_len < 2) throw ContractError("sample_decode: max_len must be >= 2");
  TokenSeq seq{kBos};
  std::vector<double> step_log_probs;
  DecoderState state = model.initial_state();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (static_cast<int>(seq.size()) < max_len) {
    auto [lp, next] = model.decoder_step(nullptr, enc, seq.back(), state);
    // Inverse-CDF draw so the result depends only on the engine stream.
    const double u = unit(rng);
    double acc = 0;
    int w = static_cast<int>(lp.data.size()) - 1;
    for (std::size_t i = 0; i < lp.data.size(); ++i) {
      acc += std::exp(lp.data[i]);
      if (u < acc) {
        w = static_cast<int>(i);
        break;
      }
    }
    seq.push_back(w);
    step_log_probs.push_back(lp.data[static_cast<std::size_t>(w)]);
    state = std::move(next);
    if (w == kEos) break;
  }
  return {std::move(seq), std::move(step_log_probs)};
}

std::pair<TokenSeq, std::vector<double>> sample_decode(
    const ReportModel& model, const FeatureBundle& features, int max_len,
    std::mt19937_64& rng) {
  return sample_decode(model, model.encode(nullptr, features), max_len, rng);
}

double Hypothesis::mean_log_prob() const {
  const std::size_t emitted = tokens.size() - 1;
  return emitted == 0 ? log_prob : log_prob / static_cast<double>(emitted);
}

TokenSeq beam_search(const ReportModel& model, const FeatureBundle& features,
                     int beam, int max_len, bool penalty) {
  if (beam < 1) throw ContractError("beam_search: beam must be >= 1");
  if (max_len < 2) throw ContractError("beam_search: max_len must be >= 2");
  const EncodedImage enc = model.encode(nullptr, features);

  Hypothesis root;
  root.tokens = {kBos};
  root.state = model.initial_state();
  std::vector<Hypothesis> live{std::move(root)};
  std::vector<Hypothesis> finished;

  while (!live.empty() && static_cast<int>(live.front().tokens.size()) < max_len) {
    // Expand every live hypothesis over the full vocabulary.
    struct Cand {
      double score;  // cumulative penalized selection score
      std::size_t hyp;
      int token;
      double token_log_prob;
    };
    std::vector<Cand> cands;
    std::vector<std::pair<Tensor, DecoderState>> steps;
    steps.reserve(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      auto [lp, next] = model.decoder_step(nullptr, enc, live[h].tokens.back(),
                                           live[h].state);
      std::vector<double> scores = lp.data;
      if (penalty)
        scores = apply_repetition_penalty(scores, next.prev2_token,
                                          next.prev_token, live[h].trigrams);
      for (std::size_t w = 0; w < scores.size(); ++w)
        cands.push_back({live[h].penalized_sum + scores[w], h,
                         static_cast<int>(w), lp.data[w]});
      steps.emplace_back(std::move(lp), std::move(next));
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.score > b.score; });

    std::vector<Hypothesis> next_live;
    int selected = 0;  // finished picks count toward the beam this step
    for (const Cand& c : cands) {
      if (selected >= beam) break;
      Hypothesis h = live[c.hyp];  // copy: tokens, trigrams, sums
      const DecoderState& st = steps[c.hyp].second;
      h.tokens.push_back(c.token);
      h.log_prob += c.token_log_prob;
      h.penalized_sum = c.score;
      h.trigrams.note(st.prev2_token, st.prev_token, c.token);
      h.state = st;
      if (c.token == kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next_live.push_back(std::move(h));
      }
      ++selected;
    }
    live = std::move(next_live);
    // Keep at most `beam` finished hypotheses, best first.
    std::stable_sort(finished.begin(), finished.end(),
                     [](const Hypothesis& a, const Hypothesis& b) {
                       return a.mean_log_prob() > b.mean_log_prob();
                     });
    if (static_cast<int>(finished.size()) > beam)
      finished.resize(static_cast<std::size_t>(beam));
  }

  const Hypothesis* best = nullptr;
  for (const Hypothesis& h : finished)
    if (!best || h.mean_log_prob() > best->mean_log_prob()) best = &h;
  if (!best)
    for (const Hypothesis& h : live)
      if (!best || h.mean_log_prob() > best->mean_log_prob()) best = &h;
  return best->tokens;
}

}  // namespace hremrg
