#include "prpo/reward_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace prpo {
namespace {

void require_group(std::size_t n) {
  if (n < 2) {
    throw Error(ErrorCode::GroupTooSmall,
                "relative advantages need at least 2 trajectories, got " + std::to_string(n));
  }
}

double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

std::vector<double> outcomes(const RolloutGroup& group) {
  std::vector<double> r;
  r.reserve(group.size());
  for (const auto& t : group.trajectories) r.push_back(t.outcome_reward);
  return r;
}

// Min-form credit: segment i carries w_i * s_i, tokens in segment i receive
// the credit still to come from i onwards.
std::vector<double> pure_credit_to_go(const ProcessScores& scores, double temperature) {
  const PureCredit pc = pure_credit(scores, temperature);
  std::vector<double> to_go(scores.size());
  double acc = 0.0;
  for (std::size_t i = scores.size(); i-- > 0;) {
    acc += pc.weights[i] * scores.scores[i];
    to_go[i] = acc;
  }
  return to_go;
}

}  // namespace

ProcessPrior process_prior(const FusionConfig& cfg, std::span<const ProcessScores> group) {
  if (cfg.prior_mode == PriorMode::Predefined) {
    return {cfg.prior_mean, cfg.prior_std, false};
  }
  std::vector<double> all;
  for (const auto& s : group) all.insert(all.end(), s.scores.begin(), s.scores.end());
  if (all.size() < 2) return {all.empty() ? 0.0 : all.front(), 0.0, true};
  const double mean = mean_of(all);
  double ss = 0.0;
  for (double x : all) ss += (x - mean) * (x - mean);
  const double std = std::sqrt(ss / static_cast<double>(all.size() - 1));
  return {mean, std, std < kDegenerateStd};
}

AdvantageVector normalize_process(const ProcessScores& scores, const SegmentSet& segs,
                                  const FusionConfig& cfg, const ProcessPrior& prior) {
  if (scores.size() != segs.size()) {
    throw Error(ErrorCode::ScoreCountMismatch,
                std::to_string(scores.size()) + " scores for " + std::to_string(segs.size()) +
                    " segments");
  }
  if (cfg.prior_mode == PriorMode::Predefined) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double s = scores.scores[i];
      if (!(s >= 0.0 && s <= 1.0)) {
        throw Error(ErrorCode::ScoreOutOfRange,
                    "score " + std::to_string(s) + " outside [0, 1]", i);
      }
    }
  }
  AdvantageVector z;
  z.values.assign(segs.end() - segs.start(), 0.0);
  if (prior.degenerate) return z;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const double zi = (scores.scores[i] - prior.mean) / prior.std;
    for (std::size_t t = segs[i].start; t < segs[i].end; ++t) z.values[t - segs.start()] = zi;
  }
  return z;
}

std::vector<double> center_outcome(std::span<const double> rewards) {
  require_group(rewards.size());
  std::vector<double> adv(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) {
    return adv;
  }
  const double mu = mean_of(rewards);
  std::vector<double> beta(rewards.size());
  for (std::size_t j = 0; j < rewards.size(); ++j) beta[j] = rewards[j] - mu;
  return beta;
}

std::vector<double> center_outcome(const RolloutGroup& group) {
  return center_outcome(outcomes(group));
}

AdvantageVector fuse(const AdvantageVector& z, double beta) {
  AdvantageVector af;
  af.values.reserve(z.size());
  for (double v : z.values) af.values.push_back(v + beta);
  return af;
}

std::vector<double> grpo_advantage(std::span<const double> rewards, double eps) {
  require_group(rewards.size());
  std::vector<double> adv(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) {
    return adv;
  }
  const double mu = mean_of(rewards);
  double ss = 0.0;
  for (double r : rewards) ss += (r - mu) * (r - mu);
  const double sigma = std::sqrt(ss / static_cast<double>(rewards.size()));
  for (std::size_t j = 0; j < rewards.size(); ++j) adv[j] = (rewards[j] - mu) / (sigma + eps);
  return adv;
}

std::vector<double> grpo_advantage(const RolloutGroup& group, double eps) {
  return grpo_advantage(outcomes(group), eps);
}

AdvantageVector broadcast(double value, std::size_t length) {
  return AdvantageVector{std::vector<double>(length, value)};
}

double prm_avg_reward(double outcome, const ProcessScores& scores) {
  if (scores.empty()) throw Error(ErrorCode::EmptyScores, "no process scores to average");
  return outcome + mean_of(scores.scores);
}

PureCredit pure_credit(const ProcessScores& scores, double temperature) {
  if (scores.empty()) throw Error(ErrorCode::EmptyScores, "no process scores");
  PureCredit out;
  out.weights.assign(scores.size(), 0.0);
  const auto lo = std::min_element(scores.scores.begin(), scores.scores.end());
  if (temperature <= 0.0) {
    out.weights[static_cast<std::size_t>(lo - scores.scores.begin())] = 1.0;
    out.credit = *lo;
    return out;
  }
  // Shift by the minimum so the largest exponent is 0.
  double norm = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out.weights[i] = std::exp(-(scores.scores[i] - *lo) / temperature);
    norm += out.weights[i];
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out.weights[i] /= norm;
    out.credit += out.weights[i] * scores.scores[i];
  }
  return out;
}

double length_penalty(std::size_t length, int threshold) {
  const auto thr = static_cast<std::size_t>(threshold);
  if (length <= thr) return 0.0;
  return static_cast<double>(length) / static_cast<double>(threshold);
}

Method parse_method(std::string_view name) {
  if (name == "GRPO") return Method::GRPO;
  if (name == "PRMAvg" || name == "PRM-Avg") return Method::PRMAvg;
  if (name == "PURE") return Method::PURE;
  if (name == "PRPO" || name == "GRPO+PRPO") return Method::PRPO;
  if (name == "PRMAvgPRPO" || name == "PRM-Avg+PRPO") return Method::PRMAvgPRPO;
  if (name == "ProcessOnly") return Method::ProcessOnly;
  throw Error(ErrorCode::Config, "unknown method '" + std::string(name) + "'");
}

const char* to_string(Method m) {
  switch (m) {
    case Method::GRPO: return "GRPO";
    case Method::PRMAvg: return "PRMAvg";
    case Method::PURE: return "PURE";
    case Method::PRPO: return "PRPO";
    case Method::PRMAvgPRPO: return "PRMAvgPRPO";
    case Method::ProcessOnly: return "ProcessOnly";
  }
  return "?";
}

bool needs_process_scores(Method m) { return m != Method::GRPO; }

std::vector<TrajectoryAdvantage> compute_advantages(const RolloutGroup& group, Method method,
                                                    const FusionConfig& cfg,
                                                    std::span<const SegmentSet> segments,
                                                    std::span<const ProcessScores> scores) {
  const std::size_t n = group.size();
  require_group(n);
  if (needs_process_scores(method) && (scores.size() != n || segments.size() != n)) {
    throw Error(ErrorCode::MissingProcessScores,
                std::string(to_string(method)) + " needs segments and process scores for all " +
                    std::to_string(n) + " trajectories");
  }

  std::vector<TrajectoryAdvantage> out(n);
  auto gen_len = [&](std::size_t j) { return group.trajectories[j].gen_length(); };

  switch (method) {
    case Method::GRPO:
    case Method::PRMAvg: {
      std::vector<double> r = outcomes(group);
      if (method == Method::PRMAvg) {
        for (std::size_t j = 0; j < n; ++j) r[j] = prm_avg_reward(r[j], scores[j]);
      }
      const auto adv = grpo_advantage(r, cfg.grpo_eps);
      for (std::size_t j = 0; j < n; ++j) {
        out[j].z = broadcast(0.0, gen_len(j));
        out[j].beta = adv[j];
        out[j].values = broadcast(adv[j], gen_len(j));
      }
      return out;
    }
    case Method::PURE: {
      std::vector<std::vector<double>> to_go(n);
      double baseline = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        to_go[j] = pure_credit_to_go(scores[j], cfg.pure_temperature);
        baseline += to_go[j].front();
      }
      baseline /= static_cast<double>(n);
      // Verifiable reward enters as 0/1, centered over the group.
      std::vector<double> binary(n);
      for (std::size_t j = 0; j < n; ++j) {
        binary[j] = group.trajectories[j].outcome_reward > 0.0 ? 1.0 : 0.0;
      }
      const auto beta = center_outcome(binary);
      for (std::size_t j = 0; j < n; ++j) {
        const SegmentSet& segs = segments[j];
        out[j].z.values.assign(gen_len(j), 0.0);
        for (std::size_t i = 0; i < segs.size(); ++i) {
          for (std::size_t t = segs[i].start; t < segs[i].end; ++t) {
            out[j].z.values[t - segs.start()] = to_go[j][i] - baseline;
          }
        }
        out[j].beta = beta[j];
        out[j].values = fuse(out[j].z, beta[j]);
      }
      return out;
    }
    case Method::PRPO:
    case Method::PRMAvgPRPO:
    case Method::ProcessOnly: {
      const ProcessPrior prior = process_prior(cfg, scores);
      std::vector<double> beta(n, 0.0);
      if (method != Method::ProcessOnly) {
        std::vector<double> r = outcomes(group);
        if (method == Method::PRMAvgPRPO) {
          for (std::size_t j = 0; j < n; ++j) r[j] = prm_avg_reward(r[j], scores[j]);
        }
        beta = center_outcome(r);
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (segments[j].end() - segments[j].start() != gen_len(j)) {
          throw Error(ErrorCode::InvalidSegments,
                      "segments do not cover the generated span of trajectory " +
                          std::to_string(j),
                      j);
        }
        out[j].z = normalize_process(scores[j], segments[j], cfg, prior);
        out[j].beta = beta[j];
        out[j].values = method == Method::ProcessOnly ? out[j].z : fuse(out[j].z, beta[j]);
      }
      return out;
    }
  }
  return out;
}

}  // namespace prpo
