#include "prpo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>

#include "prpo/collapse.hpp"

namespace prpo {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Salts separating the independent random streams of one run.
enum Stream : std::uint64_t {
  kTaskStream = 1,
  kRolloutStream,
  kSplitStream,
  kNoiseStream,
  kWarmupStream,
  kEvalStream,
};

Trajectory demonstration_trajectory(const chainsum::Task& task) {
  Trajectory tr;
  tr.tokens = chainsum::prompt_tokens(task);
  tr.gen_start = tr.tokens.size();
  const auto demo = chainsum::demonstration(task);
  tr.tokens.insert(tr.tokens.end(), demo.begin(), demo.end());
  tr.entropies.assign(tr.tokens.size(), 0.0);
  return tr;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632BE59BD9B4E019ULL));
  return h;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::Config, what); };
  if (rollout_n < 2) fail("train.rollout_n: must be >= 2");
  if (batch_groups < 1) fail("train.batch_groups: must be >= 1");
  if (!(lr >= 0.0)) fail("train.lr: must be >= 0");
  if (!(kl_coeff >= 0.0)) fail("train.kl_coeff: must be >= 0");
  if (!(clip_ratio >= 0.0)) fail("train.clip_ratio: must be >= 0");
  if (epochs < 0) fail("train.epochs: must be >= 0");
  if (updates_per_epoch < 1) fail("train.updates_per_epoch: must be >= 1");
  if (max_len < 1) fail("train.max_len: must be >= 1");
  if (ppo_epochs < 1) fail("train.ppo_epochs: must be >= 1");
  if (warmup_steps < 0) fail("train.warmup_steps: must be >= 0");
  if (warmup_batch < 1) fail("train.warmup_batch: must be >= 1");
  if (eval_tasks < 1) fail("train.eval_tasks: must be >= 1");
  if (min_digits < 1 || max_digits < min_digits) {
    fail("train.min_digits/max_digits: need 1 <= min_digits <= max_digits");
  }
  if (window < 0) fail("train.window: must be >= 0");
}

void ExperimentConfig::validate() const {
  fusion.validate();
  train.validate();
  oracle.validate();
}

SegmentSet split_span(const Trajectory& tr, SplitStrategy strategy, const FusionConfig& fusion,
                      std::uint64_t seed) {
  switch (strategy) {
    case SplitStrategy::Entropy:
      return segment_by_entropy(tr.entropies, tr.gen_start, tr.size(), fusion.k_spikes,
                                fusion.min_gap);
    case SplitStrategy::Random:
      return segment_random(tr.size(), tr.gen_start, fusion.k_spikes, fusion.min_gap, seed);
    case SplitStrategy::Uniform:
      return segment_uniform(tr.size(), tr.gen_start, fusion.k_spikes);
  }
  return SegmentSet::whole(tr.gen_start, tr.size());
}

EvalResult eval_accuracy(const Policy& policy, std::span<const chainsum::Task> tasks,
                         std::size_t max_len, const GreedyEval&) {
  if (tasks.empty()) throw Error(ErrorCode::Config, "evaluation needs at least one task");
  int correct = 0;
  for (const auto& task : tasks) {
    const auto gen = decode_greedy(policy, chainsum::prompt_tokens(task), max_len);
    if (chainsum::outcome_reward(task, gen) > 0.0) ++correct;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(tasks.size());
  return {acc, acc};
}

EvalResult eval_accuracy(const Policy& policy, std::span<const chainsum::Task> tasks,
                         std::size_t max_len, const SampledEval& mode) {
  if (tasks.empty()) throw Error(ErrorCode::Config, "evaluation needs at least one task");
  if (mode.n < 1) throw Error(ErrorCode::Config, "evaluation needs n >= 1 samples");
  const SamplingOptions opts{mode.temperature, mode.top_p};
  long correct = 0;
  int solved = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto prompt = chainsum::prompt_tokens(tasks[i]);
    bool any = false;
    for (int s = 0; s < mode.n; ++s) {
      const auto tr = sample_trajectory(policy, prompt, max_len,
                                        derive_seed(mode.seed, {kEvalStream, i,
                                                                static_cast<std::uint64_t>(s)}),
                                        opts);
      const std::span<const int> gen(tr.tokens.data() + tr.gen_start, tr.gen_length());
      if (chainsum::outcome_reward(tasks[i], gen) > 0.0) {
        ++correct;
        any = true;
      }
    }
    if (any) ++solved;
  }
  const double n = static_cast<double>(tasks.size());
  return {static_cast<double>(correct) / (n * mode.n), solved / n};
}

bool early_stop(std::span<const EpochMetrics> history, int patience) {
  if (patience <= 0 || history.empty()) return false;
  double best = -1.0;
  int since = 0;
  for (const auto& m : history) {
    if (m.train_accuracy > best) {
      best = m.train_accuracy;
      since = 0;
    } else {
      ++since;
    }
  }
  return since >= patience;
}

std::vector<chainsum::Task> eval_tasks(const TrainConfig& cfg) {
  std::vector<chainsum::Task> tasks;
  tasks.reserve(static_cast<std::size_t>(cfg.eval_tasks));
  for (int i = 0; i < cfg.eval_tasks; ++i) {
    tasks.push_back(chainsum::sample_task(
        derive_seed(cfg.eval_seed, {kEvalStream, static_cast<std::uint64_t>(i)}), cfg.min_digits,
        cfg.max_digits));
  }
  return tasks;
}

Policy initial_policy(const TrainConfig& cfg) {
  Policy policy(EncoderSpec{chainsum::kVocab, cfg.window, true, chainsum::kEos});
  for (int s = 0; s < cfg.warmup_steps; ++s) {
    Weights grad(policy.weights().rows, policy.weights().cols);
    for (int b = 0; b < cfg.warmup_batch; ++b) {
      const auto task = chainsum::sample_task(
          derive_seed(cfg.warmup_seed, {kWarmupStream, static_cast<std::uint64_t>(s),
                                        static_cast<std::uint64_t>(b)}),
          cfg.min_digits, cfg.max_digits);
      const Trajectory tr = demonstration_trajectory(task);
      const AdvantageVector ones{std::vector<double>(tr.gen_length(), 1.0)};
      grad.axpy(1.0 / cfg.warmup_batch, grad_weighted_logratio(policy, policy, tr, ones).grad);
    }
    policy.weights().axpy(cfg.warmup_lr, grad);
  }
  return policy;
}

Trainer::Trainer(ExperimentConfig cfg) : Trainer(cfg, initial_policy(cfg.train)) {}

Trainer::Trainer(ExperimentConfig cfg, Policy start)
    : cfg_(std::move(cfg)), policy_(std::move(start)), ref_(policy_) {
  cfg_.validate();
  eval_tasks_ = eval_tasks(cfg_.train);
}

double Trainer::greedy_accuracy() const {
  return eval_accuracy(policy_, eval_tasks_, cfg_.train.max_len, GreedyEval{}).mean_accuracy;
}

void Trainer::step(const Weights& grad) {
  const TrainConfig& tc = cfg_.train;
  if (tc.optimizer == OptimizerKind::SGD) {
    policy_.weights().axpy(tc.lr, grad);
    return;
  }
  if (adam_m_.data.empty()) {
    adam_m_ = Weights(grad.rows, grad.cols);
    adam_v_ = Weights(grad.rows, grad.cols);
  }
  ++adam_t_;
  const double c1 = 1.0 - std::pow(tc.adam_beta1, static_cast<double>(adam_t_));
  const double c2 = 1.0 - std::pow(tc.adam_beta2, static_cast<double>(adam_t_));
  auto& w = policy_.weights().data;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double g = grad.data[i];
    adam_m_.data[i] = tc.adam_beta1 * adam_m_.data[i] + (1.0 - tc.adam_beta1) * g;
    adam_v_.data[i] = tc.adam_beta2 * adam_v_.data[i] + (1.0 - tc.adam_beta2) * g * g;
    w[i] += tc.lr * (adam_m_.data[i] / c1) / (std::sqrt(adam_v_.data[i] / c2) + tc.adam_eps);
  }
}

void Trainer::update(int epoch, int batch, BatchStats& stats) {
  const TrainConfig& tc = cfg_.train;
  const auto e = static_cast<std::uint64_t>(epoch);
  const auto u = static_cast<std::uint64_t>(batch);

  std::vector<Trajectory> trajectories;
  std::vector<AdvantageVector> advantages;
  for (int g = 0; g < tc.batch_groups; ++g) {
    const auto gi = static_cast<std::uint64_t>(g);
    const auto task = chainsum::sample_task(derive_seed(tc.seed, {kTaskStream, e, u, gi}),
                                            tc.min_digits, tc.max_digits);
    const auto prompt = chainsum::prompt_tokens(task);

    RolloutGroup group;
    group.group_id = std::to_string(epoch) + ":" + std::to_string(batch) + ":" + std::to_string(g);
    std::vector<SegmentSet> segments;
    std::vector<ProcessScores> scores;
    for (int r = 0; r < tc.rollout_n; ++r) {
      const auto ri = static_cast<std::uint64_t>(r);
      Trajectory tr = sample_trajectory(policy_, prompt, tc.max_len,
                                        derive_seed(tc.seed, {kRolloutStream, e, u, gi, ri}));
      tr.prompt_id = group.group_id;
      const std::span<const int> gen(tr.tokens.data() + tr.gen_start, tr.gen_length());
      const double raw = chainsum::outcome_reward(task, gen);
      tr.outcome_reward = raw - length_penalty(gen.size(), cfg_.fusion.length_threshold);

      segments.push_back(split_span(tr, tc.split, cfg_.fusion,
                                    derive_seed(tc.seed, {kSplitStream, e, u, gi, ri})));
      scores.push_back(chainsum::score_segments(task, tr.tokens, tr.gen_start, segments.back(),
                                                cfg_.oracle,
                                                derive_seed(tc.seed, {kNoiseStream, e, u, gi, ri})));

      stats.trajectories += 1;
      stats.correct += raw > 0.0 ? 1 : 0;
      stats.gen_tokens += static_cast<double>(gen.size());
      for (std::size_t t = tr.gen_start; t < tr.size(); ++t) stats.entropy_sum += tr.entropies[t];
      stats.entropy_count += static_cast<double>(gen.size());
      group.trajectories.push_back(std::move(tr));
    }

    auto adv = compute_advantages(group, tc.method, cfg_.fusion, segments, scores);
    for (std::size_t j = 0; j < adv.size(); ++j) {
      const auto reports = detect_collapse(adv[j].values);
      if (std::any_of(reports.begin(), reports.end(),
                      [](const CollapseReport& r) { return r.condition_holds; })) {
        stats.collapsed += 1;
      }
      advantages.push_back(std::move(adv[j].values));
      trajectories.push_back(std::move(group.trajectories[j]));
    }
  }

  const double inv_n = 1.0 / static_cast<double>(trajectories.size());
  std::vector<std::vector<double>> old_logprobs;
  old_logprobs.reserve(trajectories.size());
  for (const auto& tr : trajectories) {
    old_logprobs.push_back(policy_.token_logprobs(tr.tokens, tr.gen_start));
  }
  for (int inner = 0; inner < tc.ppo_epochs; ++inner) {
    Weights grad(policy_.weights().rows, policy_.weights().cols);
    double objective = 0.0;
    for (std::size_t j = 0; j < trajectories.size(); ++j) {
      const Objective s =
          clipped_surrogate(policy_, old_logprobs[j], trajectories[j], advantages[j], tc.clip_ratio);
      grad.axpy(inv_n, s.grad);
      objective += inv_n * s.value;
      if (tc.kl_coeff > 0.0) {
        const Objective kl = kl_to_ref_with_grad(policy_, ref_, trajectories[j]);
        grad.axpy(-tc.kl_coeff * inv_n, kl.grad);
        objective -= tc.kl_coeff * inv_n * kl.value;
      }
    }
    if (inner == 0) stats.loss += -objective;
    step(grad);
  }
}

EpochMetrics Trainer::run_epoch() {
  const int epoch = static_cast<int>(history_.size()) + 1;
  ref_ = policy_;
  BatchStats stats;
  for (int b = 0; b < cfg_.train.updates_per_epoch; ++b) update(epoch, b, stats);

  EpochMetrics m;
  m.epoch = epoch;
  m.method = cfg_.train.method;
  const double n = static_cast<double>(stats.trajectories);
  m.train_accuracy = stats.correct / n;
  m.mean_gen_length = stats.gen_tokens / n;
  m.mean_entropy = stats.entropy_count > 0.0 ? stats.entropy_sum / stats.entropy_count : 0.0;
  m.collapse_rate = stats.collapsed / n;
  m.loss = stats.loss / cfg_.train.updates_per_epoch;
  history_.push_back(m);
  return m;
}

const std::vector<EpochMetrics>& Trainer::run() {
  while (epoch() < cfg_.train.epochs) {
    run_epoch();
    if (early_stop(history_, cfg_.train.early_stop_patience)) break;
  }
  return history_;
}

}  // namespace prpo
