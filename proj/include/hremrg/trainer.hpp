#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "hremrg/decoding.hpp"
#include "hremrg/metrics.hpp"
#include "hremrg/model.hpp"

namespace hremrg {

struct TrainExample {
  FeatureBundle features;
  TokenSeq report;  // BOS ... EOS
};

struct TrainData {
  std::vector<TrainExample> train;
  std::vector<TrainExample> val;
};

struct TrainConfig {
  enum class Phase { kXent, kScst };

  Phase phase = Phase::kXent;
  double base_lr = 1e-4;
  int warmup_steps = 10000;   // Noam warmup (cross-entropy phase)
  int cosine_period = 15;     // epochs per cosine cycle (SCST phase)
  double cosine_min_lr = 4e-8;
  int epochs = 60;
  int batch_size = 8;
  std::uint64_t seed = 0;
  MetricWeights lambda = MetricWeights::ones();

  static TrainConfig xent_defaults();
  static TrainConfig scst_defaults();
  void validate() const;  // throws ContractError
};

// Adam with bias correction; moments allocated lazily per parameter.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::map<std::string, Tensor> m1;
  std::map<std::string, Tensor> m2;

  void update(ParamStore& params, const std::map<std::string, Tensor>& grads,
              double lr);
};

// Noam (step-based, cross-entropy phase) or cosine annealing (epoch-based,
// SCST phase). Noam is normalized to peak exactly at the warmup step.
double lr_schedule(const TrainConfig& cfg, long step, int epoch);

// Teacher-forced mean per-token negative log-likelihood over the batch, one
// Adam update. Returns the mean loss.
double xent_step(ReportModel& model, const std::vector<TrainExample>& batch,
                 AdamState& opt, double lr);

struct ScstStepResult {
  double mean_advantage = 0;
  double mean_sample_reward = 0;
};

// Self-critical step: per example, advantage = hybrid reward of a Monte-Carlo
// sample minus that of the penalized greedy baseline; loss is
// -advantage * sum of sampled-token log-probs, averaged over the batch.
// When every advantage is zero the update is skipped so parameters stay
// bit-identical.
ScstStepResult scst_step(ReportModel& model,
                         const std::vector<TrainExample>& batch,
                         const MetricWeights& lambda, const CorpusStats& stats,
                         AdamState& opt, double lr, std::mt19937_64& rng);

struct EpochRecord {
  int epoch = 0;
  std::string phase;
  double lr = 0;
  ScoreVector metrics;
  double score_sum = 0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  double best_score_sum = 0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path log_path;
};

// Runs the configured phase; evaluates greedy (penalized) decoding on the
// validation split each epoch; keeps the best-by-score_sum checkpoint under
// out_dir and appends one JSON line per epoch to out_dir/train_log.jsonl.
TrainResult train(ReportModel& model, const TrainData& data,
                  const TrainConfig& cfg, const CorpusStats& stats,
                  const std::filesystem::path& out_dir);

// Strips BOS/EOS/PAD so metrics see only content tokens.
TokenSeq strip_specials(const TokenSeq& s);

// Mean validation metrics of penalized greedy decoding.
ScoreVector evaluate(const ReportModel& model,
                     const std::vector<TrainExample>& val,
                     const CorpusStats& stats, int max_len);

}  // namespace hremrg
