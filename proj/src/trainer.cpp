#include "hremrg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace hremrg {

TrainConfig TrainConfig::xent_defaults() {
  TrainConfig c;
  c.phase = Phase::kXent;
  c.base_lr = 1e-4;
  c.batch_size = 8;
  return c;
}

TrainConfig TrainConfig::scst_defaults() {
  TrainConfig c;
  c.phase = Phase::kScst;
  c.base_lr = 1e-5;
  c.batch_size = 3;
  return c;
}

void TrainConfig::validate() const {
  if (base_lr <= 0 || cosine_min_lr <= 0)
    throw ContractError("train config: learning rates must be positive");
  if (warmup_steps < 1) throw ContractError("train config: warmup must be >= 1");
  if (epochs < 0) throw ContractError("train config: epochs must be >= 0");
  if (batch_size < 1) throw ContractError("train config: batch size must be >= 1");
  if (cosine_period < 1)
    throw ContractError("train config: cosine period must be >= 1");
}

void AdamState::update(ParamStore& params,
                       const std::map<std::string, Tensor>& grads, double lr) {
  ++step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    if (g.shape != p.shape)
      throw ContractError("adam: gradient shape mismatch for " + name);
    Tensor& m = m1.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    Tensor& v = m2.try_emplace(name, Tensor::zeros(p.shape)).first->second;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      m.data[i] = beta1 * m.data[i] + (1 - beta1) * g.data[i];
      v.data[i] = beta2 * v.data[i] + (1 - beta2) * g.data[i] * g.data[i];
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

double lr_schedule(const TrainConfig& cfg, long step, int epoch) {
  if (cfg.phase == TrainConfig::Phase::kXent) {
    if (step < 1) throw ContractError("lr_schedule: step must be >= 1");
    const double s = static_cast<double>(step);
    const double w = static_cast<double>(cfg.warmup_steps);
    return cfg.base_lr * std::min(std::sqrt(w / s), s / w);
  }
  const double t = static_cast<double>(epoch % cfg.cosine_period) /
                   static_cast<double>(cfg.cosine_period);
  return cfg.cosine_min_lr + (cfg.base_lr - cfg.cosine_min_lr) *
                                 (1 + std::cos(t * 3.14159265358979323846)) / 2;
}

namespace {

// Teacher-forced sum of emitted-token log-probs; unlike sequence_logprob the
// sequence need not end in EOS (Monte-Carlo samples can be truncated).
Tensor taped_logprob(GradTape* t, const ReportModel& model,
                     const EncodedImage& enc, const TokenSeq& seq) {
  if (seq.size() < 2 || seq.front() != kBos)
    throw ContractError("taped_logprob: sequence must start with BOS");
  DecoderState state = model.initial_state();
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    auto [lp, next] = model.decoder_step(t, enc, seq[i], state);
    total = add(t, total, pick(t, lp, seq[i + 1]));
    state = std::move(next);
  }
  return total;
}

}  // namespace

double xent_step(ReportModel& model, const std::vector<TrainExample>& batch,
                 AdamState& opt, double lr) {
  if (batch.empty()) throw ContractError("xent_step: empty batch");
  GradTape tape;
  Tensor loss = Tensor::scalar(0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const TrainExample& ex : batch) {
    Tensor lp = model.sequence_logprob(&tape, ex.features, ex.report);
    const double tokens = static_cast<double>(ex.report.size() - 1);
    loss = add(&tape, loss, scale(&tape, lp, -inv_b / tokens));
  }
  auto grads = tape.backward(loss);
  if (lr != 0.0) opt.update(model.params(), grads, lr);
  return loss.item();
}

ScstStepResult scst_step(ReportModel& model,
                         const std::vector<TrainExample>& batch,
                         const MetricWeights& lambda, const CorpusStats& stats,
                         AdamState& opt, double lr, std::mt19937_64& rng) {
  if (batch.empty()) throw ContractError("scst_step: empty batch");
  if (stats.num_docs <= 0)
    throw ContractError("scst_step: corpus statistics are empty");
  bool any_lambda = false;
  for (int i = 0; i < kNumMetrics; ++i) any_lambda |= lambda[i] > 0;
  if (!any_lambda)
    throw ContractError("scst_step: reward weights are all zero");

  const int max_len = model.config().max_len;
  GradTape tape;
  Tensor loss = Tensor::scalar(0.0);
  ScstStepResult res;
  bool any_advantage = false;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const TrainExample& ex : batch) {
    const EncodedImage enc = model.encode(nullptr, ex.features);
    auto [sample, step_lps] = sample_decode(model, enc, max_len, rng);
    TokenSeq baseline = greedy_decode(model, enc, max_len, /*penalty=*/true);

    const std::vector<TokenSeq> refs{strip_specials(ex.report)};
    const double r_sample =
        hybrid_reward(score_vector(strip_specials(sample), refs, stats), lambda);
    const double r_base = hybrid_reward(
        score_vector(strip_specials(baseline), refs, stats), lambda);
    const double advantage = r_sample - r_base;
    res.mean_advantage += advantage * inv_b;
    res.mean_sample_reward += r_sample * inv_b;
    if (advantage == 0.0) continue;
    any_advantage = true;
    Tensor lp = taped_logprob(&tape, model, model.encode(&tape, ex.features),
                              sample);
    loss = add(&tape, loss, scale(&tape, lp, -advantage * inv_b));
  }
  // All-zero advantages: the gradient is identically zero; skip the update so
  // parameters (and optimizer moments) stay bit-identical.
  if (any_advantage && lr != 0.0)
    opt.update(model.params(), tape.backward(loss), lr);
  return res;
}

TokenSeq strip_specials(const TokenSeq& s) {
  TokenSeq out;
  for (int t : s)
    if (t != kBos && t != kEos && t != kPad) out.push_back(t);
  return out;
}

ScoreVector evaluate(const ReportModel& model,
                     const std::vector<TrainExample>& val,
                     const CorpusStats& stats, int max_len) {
  ScoreVector mean;
  if (val.empty()) return mean;
  for (const TrainExample& ex : val) {
    TokenSeq hyp = greedy_decode(model, ex.features, max_len, /*penalty=*/true);
    ScoreVector s = score_vector(strip_specials(hyp),
                                 {strip_specials(ex.report)}, stats);
    for (int i = 0; i < kNumMetrics; ++i)
      mean[i] += s[i] / static_cast<double>(val.size());
  }
  return mean;
}

TrainResult train(ReportModel& model, const TrainData& data,
                  const TrainConfig& cfg, const CorpusStats& stats,
                  const std::filesystem::path& out_dir) {
  cfg.validate();
  if (data.train.empty()) throw ContractError("train: empty training split");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  TrainResult result;
  result.best_checkpoint = out_dir / "best.ckpt";
  result.log_path = out_dir / "train_log.jsonl";
  std::ofstream log(result.log_path);
  if (!log)
    throw IoError("train: cannot open log file " + result.log_path.string());

  const std::string phase_name =
      cfg.phase == TrainConfig::Phase::kXent ? "xent" : "scst";
  AdamState opt;
  std::mt19937_64 order_rng(cfg.seed);
  std::mt19937_64 sample_rng(cfg.seed + 1);
  long step = 0;
  result.best_score_sum = -1;

  std::vector<std::size_t> idx(data.train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), order_rng);
    for (std::size_t start = 0; start < idx.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<TrainExample> batch;
      for (std::size_t k = start;
           k < idx.size() && k < start + static_cast<std::size_t>(cfg.batch_size);
           ++k)
        batch.push_back(data.train[idx[k]]);
      ++step;
      const double lr = lr_schedule(cfg, step, epoch);
      if (cfg.phase == TrainConfig::Phase::kXent) {
        xent_step(model, batch, opt, lr);
      } else {
        scst_step(model, batch, cfg.lambda, stats, opt, lr, sample_rng);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = phase_name;
    rec.lr = lr_schedule(cfg, std::max(step, 1L), epoch);
    rec.metrics = evaluate(model, data.val, stats, model.config().max_len);
    rec.score_sum = rec.metrics.score_sum();
    result.log.push_back(rec);

    nlohmann::json j;
    j["epoch"] = rec.epoch;
    j["phase"] = rec.phase;
    j["lr"] = rec.lr;
    nlohmann::json jm;
    for (int i = 0; i < kNumMetrics; ++i) jm[kMetricNames[static_cast<std::size_t>(i)]] = rec.metrics[i];
    j["metrics"] = jm;
    j["score_sum"] = rec.score_sum;
    log << j.dump() << '\n';
    log.flush();

    if (rec.score_sum > result.best_score_sum) {
      result.best_score_sum = rec.score_sum;
      model.params().save(result.best_checkpoint);
    }
  }
  // Zero epochs (or an empty validation split): persist the current
  // parameters so the checkpoint always exists.
  if (result.best_score_sum < 0) {
    result.best_score_sum = 0;
    model.params().save(result.best_checkpoint);
  }
  return result;
}

}  // namespace hremrg
