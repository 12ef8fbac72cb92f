#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "hremrg/params.hpp"
#include "hremrg/tensor.hpp"

namespace hremrg {

struct AttentionDims {
  int d_q;    // query width
  int d_kv;   // key/value width
  int d_b;    // bilinear width
  int d_out;  // width after the output projection
};

// Bilinear-pooling attention block: spatial softmax branch plus a
// squeeze-excitation channel gate, concatenated and projected to d_out.
// Parameter names under `prefix`: W_k, W_v, W_qk, W_qv, W_m, W_s, W_e,
// W_c, W_o.
void add_attention_params(ParamStore& store, const std::string& prefix,
                          const AttentionDims& dims, std::mt19937_64& rng);

struct AttentionParamsView {
  Tensor W_k, W_v, W_qk, W_qv, W_m, W_s, W_e, W_c, W_o;
};

AttentionParamsView bind_attention(GradTape* t, const ParamStore& store,
                                   const std::string& prefix);

// M^k_i = ELU(W_k k_i) (.) ELU(W_qk Q);  M^v_i = ELU(W_v v_i) (.) ELU(W_qv Q)
std::pair<Tensor, Tensor> bilinear_pool(GradTape* t, const Tensor& q,
                                        const Tensor& k_i, const Tensor& v_i,
                                        const AttentionParamsView& p);

struct AttentionOut {
  Tensor attended;         // d_out
  Tensor spatial_weights;  // N, sums to 1
  Tensor channel_gate;     // d_b, each in (0,1)
};

AttentionOut attention_block(GradTape* t, std::span<const Tensor> keys,
                             std::span<const Tensor> values, const Tensor& q,
                             const AttentionParamsView& p);

// Stacked encoder: per-layer attention plus residual layer-normed key/value
// updates. Layer parameters live under `prefix.l<n>.`.
void add_encoder_stack_params(ParamStore& store, const std::string& prefix,
                              int depth, int d_model, int d_b,
                              std::mt19937_64& rng);

struct EncoderStackOut {
  std::vector<Tensor> attended;  // one f-hat per layer
  std::vector<Tensor> keys;      // N x d_model after the last update
  std::vector<Tensor> values;
};

EncoderStackOut encode_stack(GradTape* t, const ParamStore& store,
                             const std::string& prefix,
                             std::span<const Tensor> regional,
                             const Tensor& global, int depth);

}  // namespace hremrg
