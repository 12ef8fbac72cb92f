#include "hremrg/model.hpp"

namespace hremrg {

FeatureBundle FeatureBundle::from_regional(Tensor regional) {
  if (regional.rank() != 2 || regional.shape[0] < 1)
    throw ShapeError("feature bundle: regional must be a non-empty matrix");
  const int n = regional.shape[0];
  const int d = regional.shape[1];
  Tensor global = Tensor::zeros({d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) global.data[j] += regional.at(i, j);
  for (double& v : global.data) v /= n;
  return FeatureBundle{std::move(regional), std::move(global)};
}

ReportModel::ReportModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.vocab_size < kNumReserved)
    throw ContractError("model: vocab must include the reserved tokens");
  if (cfg_.max_len < 2) throw ContractError("model: max_len must be >= 2");
  if (cfg_.beam_size < 1) throw ContractError("model: beam size must be >= 1");
  build_params(seed);
}

ReportModel::ReportModel(ModelConfig cfg, ParamStore params)
    : cfg_(cfg), params_(std::move(params)) {}

void ReportModel::build_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int d = cfg_.d_model;
  params_.add_matrix("embed.W", d, cfg_.d_raw, rng);
  add_encoder_stack_params(params_, "enc.", cfg_.depth, d, cfg_.d_b, rng);
  params_.add_matrix("enc.W_f", d, (cfg_.depth + 1) * d, rng);

  params_.add_matrix("dec.embed", cfg_.vocab_size, d, rng);
  params_.add_matrix("dec.lstm.W_ih", 4 * d, 2 * d, rng);
  params_.add_matrix("dec.lstm.W_hh", 4 * d, d, rng);
  params_.add_zeros("dec.lstm.b", {4 * d});
  add_attention_params(params_, "dec.att.", {d, d, cfg_.d_b, d}, rng);
  params_.add_matrix("dec.W_L", d, d, rng);
  params_.add_matrix("dec.glu.Wa", d, d, rng);
  params_.add_matrix("dec.glu.Wb", d, d, rng);
  params_.add_matrix("dec.W_c", d, d, rng);
  params_.add_matrix("dec.out.W", cfg_.vocab_size, d, rng);
  params_.add_zeros("dec.out.b", {cfg_.vocab_size});
}

std::pair<std::vector<Tensor>, Tensor> ReportModel::embed_features(
    GradTape* t, const FeatureBundle& raw) const {
  if (raw.width() != cfg_.d_raw)
    throw ShapeError("embed_features: raw width " + std::to_string(raw.width()) +
                     " does not match configured d_raw " +
                     std::to_string(cfg_.d_raw));
  Tensor w = param(t, params_, "embed.W");
  std::vector<Tensor> regional;
  regional.reserve(static_cast<std::size_t>(raw.num_regions()));
  for (int i = 0; i < raw.num_regions(); ++i) {
    Tensor row = Tensor::zeros({raw.width()});
    std::copy(raw.regional.data.begin() +
                  static_cast<std::size_t>(i) * raw.width(),
              raw.regional.data.begin() +
                  static_cast<std::size_t>(i + 1) * raw.width(),
              row.data.begin());
    regional.push_back(linear(t, row, w));
  }
  Tensor global = linear(t, raw.global, w);
  return {std::move(regional), std::move(global)};
}

EncodedImage ReportModel::encode(GradTape* t, const FeatureBundle& raw) const {
  auto [regional, global] = embed_features(t, raw);
  EncoderStackOut stack =
      encode_stack(t, params_, "enc.", regional, global, cfg_.depth);

  std::vector<Tensor> cat;
  cat.push_back(global);  // f-hat(0)
  for (const Tensor& a : stack.attended) cat.push_back(a);
  Tensor f_tilde = linear(t, concat(t, cat), param(t, params_, "enc.W_f"));
  return EncodedImage{std::move(f_tilde), std::move(stack.values)};
}

DecoderState ReportModel::initial_state() const {
  return DecoderState{Tensor::zeros({cfg_.d_model}),
                      Tensor::zeros({cfg_.d_model}), -1, -1};
}

std::pair<Tensor, DecoderState> ReportModel::decoder_step(
    GradTape* t, const EncodedImage& enc, int token,
    const DecoderState& state) const {
  if (token < 0 || token >= cfg_.vocab_size)
    throw VocabError("decoder_step: token id " + std::to_string(token) +
                     " outside vocabulary of size " +
                     std::to_string(cfg_.vocab_size));

  Tensor wemb = row_lookup(t, param(t, params_, "dec.embed"), token);
  std::vector<Tensor> xin{wemb, enc.f_tilde};
  Tensor x = concat(t, xin);
  LstmParams lstm{param(t, params_, "dec.lstm.W_ih"),
                  param(t, params_, "dec.lstm.W_hh"),
                  param(t, params_, "dec.lstm.b")};
  auto [h, c_cell] = lstm_cell(t, x, state.h, state.c_cell, lstm);

  AttentionParamsView att = bind_attention(t, params_, "dec.att.");
  Tensor f_d = attention_block(t, enc.memory, enc.memory, h, att).attended;

  Tensor inner = add(t, h, linear(t, add(t, h, f_d), param(t, params_, "dec.W_L")));
  Tensor gated = glu(t, inner, param(t, params_, "dec.glu.Wa"),
                     param(t, params_, "dec.glu.Wb"));
  Tensor c_t = linear(t, gated, param(t, params_, "dec.W_c"));
  Tensor logits = linear(t, c_t, param(t, params_, "dec.out.W"),
                         param(t, params_, "dec.out.b"));
  Tensor log_probs = log_softmax(t, logits);

  DecoderState next{std::move(h), std::move(c_cell), token, state.prev_token};
  return {std::move(log_probs), std::move(next)};
}

Tensor ReportModel::sequence_logprob(GradTape* t, const FeatureBundle& raw,
                                     const TokenSeq& tokens) const {
  if (tokens.size() < 2 || tokens.front() != kBos || tokens.back() != kEos)
    throw ContractError("sequence_logprob: sequence must be BOS ... EOS");
  if (static_cast<int>(tokens.size()) > cfg_.max_len)
    throw LengthError("sequence_logprob: sequence of length " +
                      std::to_string(tokens.size()) + " exceeds max length " +
                      std::to_string(cfg_.max_len));

  EncodedImage enc = encode(t, raw);
  DecoderState state = initial_state();
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    auto [lp, next] = decoder_step(t, enc, tokens[i], state);
    total = add(t, total, pick(t, lp, tokens[i + 1]));
    state = std::move(next);
  }
  return total;
}

}  // namespace hremrg
