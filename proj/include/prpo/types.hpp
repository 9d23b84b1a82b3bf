#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "prpo/error.hpp"

namespace prpo {

inline constexpr double kProbabilitySumTolerance = 1e-9;

// One sampled sequence. Positions [0, gen_start) are the prompt; only the
// generated span [gen_start, size()) is segmented and receives advantages.
// `dists` may be empty when a trajectory is ingested offline with entropies
// only.
struct Trajectory {
  std::string prompt_id;
  std::vector<int> tokens;
  std::vector<std::vector<double>> dists;
  std::vector<double> entropies;
  double outcome_reward = 0.0;
  std::size_t gen_start = 0;

  std::size_t size() const { return entropies.size(); }
  std::size_t gen_length() const { return size() - gen_start; }
};

// Throws Error{LengthMismatch | NonNormalizedDistribution | NegativeEntropy}
// naming the first offending position.
void validate_trajectory(const Trajectory& t);

struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive

  std::size_t length() const { return end - start; }
  bool contains(std::size_t pos) const { return pos >= start && pos < end; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

// Ordered, contiguous, non-empty half-open ranges tiling [front.start, back.end).
class SegmentSet {
 public:
  SegmentSet() = default;

  // Takes ranges as-is after checking the tiling invariants.
  explicit SegmentSet(std::vector<Segment> ranges);

  static SegmentSet whole(std::size_t start, std::size_t end);

  // Cuts outside (start, end) and duplicates are ignored.
  static SegmentSet from_cuts(std::size_t start, std::size_t end,
                              std::vector<std::size_t> cuts);

  const std::vector<Segment>& ranges() const { return ranges_; }
  std::size_t size() const { return ranges_.size(); }
  bool empty() const { return ranges_.empty(); }
  std::size_t start() const { return ranges_.front().start; }
  std::size_t end() const { return ranges_.back().end; }
  const Segment& operator[](std::size_t i) const { return ranges_[i]; }

  // Index of the segment containing `pos`.
  std::size_t segment_of(std::size_t pos) const;

  friend bool operator==(const SegmentSet&, const SegmentSet&) = default;

 private:
  std::vector<Segment> ranges_;
};

struct RolloutGroup {
  std::string group_id;
  std::vector<Trajectory> trajectories;

  std::size_t size() const { return trajectories.size(); }
};

// Per-token values over a trajectory's generated span.
struct AdvantageVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  friend bool operator==(const AdvantageVector&, const AdvantageVector&) = default;
};

enum class PriorMode { Predefined, Relative };

struct FusionConfig {
  int k_spikes = 5;
  int min_gap = 10;
  double prior_mean = 0.5;
  double prior_std = 0.289;  // rounded std of U(0, 1)
  double grpo_eps = 1e-6;
  int length_threshold = 1024;
  double pure_temperature = 0.1;  // 0 selects the hard minimum
  PriorMode prior_mode = PriorMode::Predefined;

  // Throws Error{Config}.
  void validate() const;
};

}  // namespace prpo
