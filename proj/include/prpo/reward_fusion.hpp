#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "prpo/types.hpp"

namespace prpo {

// One PRM score per segment.
struct ProcessScores {
  std::vector<double> scores;

  std::size_t size() const { return scores.size(); }
  bool empty() const { return scores.empty(); }
};

// Location/scale used to standardize process scores. `degenerate` marks a
// Relative-mode group whose scores have (numerically) no spread; every z is
// then 0.
struct ProcessPrior {
  double mean = 0.5;
  double std = 0.289;
  bool degenerate = false;
};

inline constexpr double kDegenerateStd = 1e-8;

// Predefined: cfg.prior_mean / cfg.prior_std. Relative: sample mean and
// Bessel-corrected sample std over every segment score in the group.
ProcessPrior process_prior(const FusionConfig& cfg, std::span<const ProcessScores> group);

// Expands segment scores to tokens: z_t = (score_i - mean) / std for t in
// segment i. Output covers [segs.start(), segs.end()).
// Throws Error{ScoreCountMismatch}, Error{ScoreOutOfRange} (Predefined mode).
AdvantageVector normalize_process(const ProcessScores& scores, const SegmentSet& segs,
                                  const FusionConfig& cfg, const ProcessPrior& prior);

// beta_j = R_j - mean(R). No scale normalization. Throws Error{GroupTooSmall}.
std::vector<double> center_outcome(std::span<const double> rewards);
std::vector<double> center_outcome(const RolloutGroup& group);

AdvantageVector fuse(const AdvantageVector& z, double beta);

// (R_j - mean) / (population std + eps). Throws Error{GroupTooSmall}.
std::vector<double> grpo_advantage(std::span<const double> rewards, double eps);
std::vector<double> grpo_advantage(const RolloutGroup& group, double eps);

AdvantageVector broadcast(double value, std::size_t length);

// outcome + mean(scores). Throws Error{EmptyScores}.
double prm_avg_reward(double outcome, const ProcessScores& scores);

struct PureCredit {
  std::vector<double> weights;  // softmin over scores, sums to 1
  double credit = 0.0;          // sum_i weights_i * scores_i
};

// temperature == 0 selects the hard minimum (lowest index on ties).
// Throws Error{EmptyScores}.
PureCredit pure_credit(const ProcessScores& scores, double temperature);

// 0 up to the threshold, length / threshold beyond it.
double length_penalty(std::size_t length, int threshold);

enum class Method { GRPO, PRMAvg, PURE, PRPO, PRMAvgPRPO, ProcessOnly };

Method parse_method(std::string_view name);
const char* to_string(Method m);
bool needs_process_scores(Method m);

// Advantages for one trajectory: process component z, scalar component beta
// and their per-token sum.
struct TrajectoryAdvantage {
  AdvantageVector z;
  double beta = 0.0;
  AdvantageVector values;
};

// Dispatches one rollout group to the chosen method. `segments`/`scores`
// hold one entry per trajectory and are required for every method except
// GRPO. Outcome rewards are read from Trajectory::outcome_reward as given.
// Throws Error{MissingProcessScores}, Error{GroupTooSmall}.
std::vector<TrajectoryAdvantage> compute_advantages(const RolloutGroup& group, Method method,
                                                    const FusionConfig& cfg,
                                                    std::span<const SegmentSet> segments,
                                                    std::span<const ProcessScores> scores);

}  // namespace prpo
