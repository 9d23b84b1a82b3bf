#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prpo/chainsum.hpp"
#include "prpo/entropy_seg.hpp"
#include "prpo/policy.hpp"
#include "prpo/reward_fusion.hpp"
#include "prpo/types.hpp"

namespace prpo {

enum class OptimizerKind { SGD, Adam };

// Desk-scale training knobs. Large-model values where they differ:
// lr 1e-6, batch 128 prompts, 2048 new tokens; k_spikes 5 and min_gap 10
// in FusionConfig.
struct TrainConfig {
  int rollout_n = 8;
  int batch_groups = 16;
  double lr = 1e-2;
  double kl_coeff = 0.001;
  double clip_ratio = 0.2;
  int epochs = 10;
  int updates_per_epoch = 20;
  int early_stop_patience = 3;  // <= 0 disables early stopping
  Method method = Method::PRPO;
  std::uint64_t seed = 0;
  std::size_t max_len = 24;
  SplitStrategy split = SplitStrategy::Entropy;
  OptimizerKind optimizer = OptimizerKind::SGD;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int ppo_epochs = 1;
  int warmup_steps = 0;  // supervised steps on reference solutions before RL
  double warmup_lr = 0.5;
  int warmup_batch = 16;
  std::uint64_t warmup_seed = 7;
  int eval_tasks = 200;
  std::uint64_t eval_seed = 42;
  int min_digits = chainsum::kMinDigits;
  int max_digits = chainsum::kMaxDigits;
  int window = 3;

  void validate() const;
};

struct ExperimentConfig {
  FusionConfig fusion;
  TrainConfig train;
  chainsum::OracleConfig oracle;
  // Split arms for an ablation suite; empty means just train.split.
  std::vector<SplitStrategy> splits;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  Method method = Method::PRPO;
  double train_accuracy = 0.0;
  double mean_gen_length = 0.0;
  double mean_entropy = 0.0;
  double collapse_rate = 0.0;
  double loss = 0.0;
};

struct EvalResult {
  double mean_accuracy = 0.0;  // mean@n over samples (greedy: fraction correct)
  double pass_at_n = 0.0;      // fraction of tasks with at least one correct sample
};

struct GreedyEval {};
struct SampledEval {
  int n = 32;
  double temperature = 0.7;
  double top_p = 0.9;
  std::uint64_t seed = 42;
};

EvalResult eval_accuracy(const Policy& policy, std::span<const chainsum::Task> tasks,
                         std::size_t max_len, const GreedyEval& mode);
EvalResult eval_accuracy(const Policy& policy, std::span<const chainsum::Task> tasks,
                         std::size_t max_len, const SampledEval& mode);

// True once train_accuracy has failed to improve on its best value for
// `patience` consecutive epochs.
bool early_stop(std::span<const EpochMetrics> history, int patience);

// Mixes a seed with a path of indices into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

// Fixed held-out tasks used for greedy evaluation.
std::vector<chainsum::Task> eval_tasks(const TrainConfig& cfg);

// The policy every run starts from: zero weights plus cfg.warmup_steps of
// maximum-likelihood updates on reference solutions (seeded by warmup_seed,
// so identical across training seeds).
Policy initial_policy(const TrainConfig& cfg);

class Trainer {
 public:
  explicit Trainer(ExperimentConfig cfg);
  Trainer(ExperimentConfig cfg, Policy start);

  // One epoch: refresh the reference, then updates_per_epoch batches of
  // (sample, segment, score, advantage, clipped-surrogate + KL step).
  EpochMetrics run_epoch();

  // Runs until cfg.train.epochs or early stop; returns the history.
  const std::vector<EpochMetrics>& run();

  const Policy& policy() const { return policy_; }
  const std::vector<EpochMetrics>& history() const { return history_; }
  const ExperimentConfig& config() const { return cfg_; }
  int epoch() const { return static_cast<int>(history_.size()); }

  double greedy_accuracy() const;

 private:
  struct BatchStats {
    int correct = 0;
    int trajectories = 0;
    double gen_tokens = 0.0;
    double entropy_sum = 0.0;
    double entropy_count = 0.0;
    int collapsed = 0;
    double loss = 0.0;
  };

  void update(int epoch, int batch, BatchStats& stats);
  void step(const Weights& grad);

  ExperimentConfig cfg_;
  Policy policy_;
  Policy ref_;
  std::vector<EpochMetrics> history_;
  std::vector<chainsum::Task> eval_tasks_;
  Weights adam_m_;
  Weights adam_v_;
  long adam_t_ = 0;
};

// Segments a generated span with the configured strategy.
SegmentSet split_span(const Trajectory& tr, SplitStrategy strategy, const FusionConfig& fusion,
                      std::uint64_t seed);

}  // namespace prpo
