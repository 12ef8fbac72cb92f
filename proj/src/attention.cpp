#include "hremrg/attention.hpp"

namespace hremrg {

void add_attention_params(ParamStore& store, const std::string& prefix,
                          const AttentionDims& dims, std::mt19937_64& rng) {
  store.add_matrix(prefix + "W_k", dims.d_b, dims.d_kv, rng);
  store.add_matrix(prefix + "W_v", dims.d_b, dims.d_kv, rng);
  store.add_matrix(prefix + "W_qk", dims.d_b, dims.d_q, rng);
  store.add_matrix(prefix + "W_qv", dims.d_b, dims.d_q, rng);
  store.add_matrix(prefix + "W_m", dims.d_b, dims.d_b, rng);
  store.add_matrix(prefix + "W_s", 1, dims.d_b, rng);
  store.add_matrix(prefix + "W_e", dims.d_b, dims.d_b, rng);
  store.add_matrix(prefix + "W_c", dims.d_b, dims.d_b, rng);
  store.add_matrix(prefix + "W_o", dims.d_out, 2 * dims.d_b, rng);
}

AttentionParamsView bind_attention(GradTape* t, const ParamStore& store,
                                   const std::string& prefix) {
  return AttentionParamsView{
      param(t, store, prefix + "W_k"),  param(t, store, prefix + "W_v"),
      param(t, store, prefix + "W_qk"), param(t, store, prefix + "W_qv"),
      param(t, store, prefix + "W_m"),  param(t, store, prefix + "W_s"),
      param(t, store, prefix + "W_e"),  param(t, store, prefix + "W_c"),
      param(t, store, prefix + "W_o")};
}

std::pair<Tensor, Tensor> bilinear_pool(GradTape* t, const Tensor& q,
                                        const Tensor& k_i, const Tensor& v_i,
                                        const AttentionParamsView& p) {
  Tensor qk = activate(t, Act::Elu, linear(t, q, p.W_qk));
  Tensor qv = activate(t, Act::Elu, linear(t, q, p.W_qv));
  Tensor mk = mul(t, activate(t, Act::Elu, linear(t, k_i, p.W_k)), qk);
  Tensor mv = mul(t, activate(t, Act::Elu, linear(t, v_i, p.W_v)), qv);
  return {mk, mv};
}

AttentionOut attention_block(GradTape* t, std::span<const Tensor> keys,
                             std::span<const Tensor> values, const Tensor& q,
                             const AttentionParamsView& p) {
  const std::size_t n = keys.size();
  if (n == 0) throw ShapeError("attention_block: no regions");
  if (values.size() != n)
    throw ShapeError("attention_block: key/value counts differ");

  // query projections are shared across regions
  Tensor qk = activate(t, Act::Elu, linear(t, q, p.W_qk));
  Tensor qv = activate(t, Act::Elu, linear(t, q, p.W_qv));

  std::vector<Tensor> m_primed;  // ReLU(W_m M^k_i)
  std::vector<Tensor> m_v;
  std::vector<Tensor> spatial_scores;
  m_primed.reserve(n);
  m_v.reserve(n);
  spatial_scores.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor mk = mul(t, activate(t, Act::Elu, linear(t, keys[i], p.W_k)), qk);
    Tensor mv = mul(t, activate(t, Act::Elu, linear(t, values[i], p.W_v)), qv);
    Tensor mp = activate(t, Act::Relu, linear(t, mk, p.W_m));
    spatial_scores.push_back(linear(t, mp, p.W_s));
    m_primed.push_back(std::move(mp));
    m_v.push_back(std::move(mv));
  }

  Tensor a_s = softmax(t, concat(t, spatial_scores));
  Tensor m_bar = mean_vecs(t, m_primed);
  Tensor a_c = activate(t, Act::Sigmoid, linear(t, m_bar, p.W_e));

  Tensor mv_bar = mean_vecs(t, m_v);
  Tensor channel = linear(t, mul(t, a_c, mv_bar), p.W_c);
  Tensor spatial = weighted_sum_vecs(t, a_s, m_v);
  std::vector<Tensor> both{std::move(channel), std::move(spatial)};
  Tensor out = linear(t, concat(t, both), p.W_o);
  return {std::move(out), std::move(a_s), std::move(a_c)};
}

void add_encoder_stack_params(ParamStore& store, const std::string& prefix,
                              int depth, int d_model, int d_b,
                              std::mt19937_64& rng) {
  const AttentionDims dims{d_model, d_model, d_b, d_model};
  for (int l = 0; l < depth; ++l) {
    const std::string lp = prefix + "l" + std::to_string(l) + ".";
    add_attention_params(store, lp + "att.", dims, rng);
    store.add_matrix(lp + "W_upd_k", d_model, 2 * d_model, rng);
    store.add_matrix(lp + "W_upd_v", d_model, 2 * d_model, rng);
    store.add_ones(lp + "ln_k.gain", {d_model});
    store.add_zeros(lp + "ln_k.bias", {d_model});
    store.add_ones(lp + "ln_v.gain", {d_model});
    store.add_zeros(lp + "ln_v.bias", {d_model});
  }
}

EncoderStackOut encode_stack(GradTape* t, const ParamStore& store,
                             const std::string& prefix,
                             std::span<const Tensor> regional,
                             const Tensor& global, int depth) {
  if (depth < 1) throw ContractError("encode_stack: depth must be >= 1");
  EncoderStackOut out;
  out.keys.assign(regional.begin(), regional.end());
  out.values.assign(regional.begin(), regional.end());
  Tensor query = global;

  for (int l = 0; l < depth; ++l) {
    const std::string lp = prefix + "l" + std::to_string(l) + ".";
    AttentionParamsView att = bind_attention(t, store, lp + "att.");
    AttentionOut blk = attention_block(t, out.keys, out.values, query, att);
    query = blk.attended;
    out.attended.push_back(blk.attended);

    Tensor w_k = param(t, store, lp + "W_upd_k");
    Tensor w_v = param(t, store, lp + "W_upd_v");
    Tensor gk = param(t, store, lp + "ln_k.gain");
    Tensor bk = param(t, store, lp + "ln_k.bias");
    Tensor gv = param(t, store, lp + "ln_v.gain");
    Tensor bv = param(t, store, lp + "ln_v.bias");
    for (std::size_t i = 0; i < out.keys.size(); ++i) {
      std::vector<Tensor> ck{blk.attended, out.keys[i]};
      Tensor upd_k =
          activate(t, Act::Relu, linear(t, concat(t, ck), w_k));
      out.keys[i] = layer_norm(t, add(t, upd_k, out.keys[i]), gk, bk);
      std::vector<Tensor> cv{blk.attended, out.values[i]};
      Tensor upd_v =
          activate(t, Act::Relu, linear(t, concat(t, cv), w_v));
      out.values[i] = layer_norm(t, add(t, upd_v, out.values[i]), gv, bv);
    }
  }
  return out;
}

}  // namespace hremrg
