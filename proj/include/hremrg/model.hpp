#pragma once

#include <cstdint>
#include <vector>

#include "hremrg/attention.hpp"
#include "hremrg/params.hpp"
#include "hremrg/tensor.hpp"

namespace hremrg {

using TokenSeq = std::vector<int>;

// Reserved vocabulary ids.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kNumReserved = 4;

struct VocabError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct LengthError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Per-example visual input: N regional feature vectors (views already
// concatenated along channels) plus the global vector.
struct FeatureBundle {
  Tensor regional;  // N x d_raw
  Tensor global;    // d_raw

  static FeatureBundle from_regional(Tensor regional);  // global = row mean
  int num_regions() const { return regional.shape[0]; }
  int width() const { return regional.shape[1]; }
};

struct ModelConfig {
  int d_raw = 4096;
  int d_model = 1024;
  int d_b = 1024;  // bilinear width
  int depth = 4;   // encoder stack depth
  int vocab_size = 0;
  int max_len = 114;
  int beam_size = 2;
};

struct DecoderState {
  Tensor h;
  Tensor c_cell;
  int prev_token = -1;   // last emitted token, for trigram tracking
  int prev2_token = -1;  // the one before it
};

struct EncodedImage {
  Tensor f_tilde;              // d_model
  std::vector<Tensor> memory;  // N x d_model, the stack's final values
};

// Full encoder-decoder: feature embedding, stacked m-linear encoder, LSTM
// decoder with cross attention and a GLU context head.
class ReportModel {
 public:
  ReportModel(ModelConfig cfg, std::uint64_t seed);
  ReportModel(ModelConfig cfg, ParamStore params);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // One shared projection applied row-wise to regional and to global.
  std::pair<std::vector<Tensor>, Tensor> embed_features(
      GradTape* t, const FeatureBundle& raw) const;

  EncodedImage encode(GradTape* t, const FeatureBundle& raw) const;

  DecoderState initial_state() const;

  // Returns (vocab-sized log-probabilities, next state).
  std::pair<Tensor, DecoderState> decoder_step(GradTape* t,
                                               const EncodedImage& enc,
                                               int token,
                                               const DecoderState& state) const;

  // Teacher-forced sum of per-step gold log-probs. `tokens` must start with
  // BOS, end with EOS, and fit max_len.
  Tensor sequence_logprob(GradTape* t, const FeatureBundle& raw,
                          const TokenSeq& tokens) const;

 private:
  void build_params(std::uint64_t seed);

  ModelConfig cfg_;
  ParamStore params_;
};

}  // namespace hremrg
