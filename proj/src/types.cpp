#include "prpo/types.hpp"

#include <algorithm>
#include <cmath>

namespace prpo {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonNormalizedDistribution: return "NonNormalizedDistribution";
    case ErrorCode::NegativeEntropy: return "NegativeEntropy";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::EmptySpan: return "EmptySpan";
    case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::GroupTooSmall: return "GroupTooSmall";
    case ErrorCode::EmptyScores: return "EmptyScores";
    case ErrorCode::MissingProcessScores: return "MissingProcessScores";
    case ErrorCode::MisalignedAdvantage: return "MisalignedAdvantage";
    case ErrorCode::IncompleteGroup: return "IncompleteGroup";
    case ErrorCode::ScoreCountMismatch: return "ScoreCountMismatch";
    case ErrorCode::InvalidSegments: return "InvalidSegments";
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Io: return "IoError";
  }
  return "Unknown";
}

void validate_trajectory(const Trajectory& t) {
  const std::size_t n = t.tokens.size();
  if (t.entropies.size() != n) {
    throw Error(ErrorCode::LengthMismatch,
                "entropies has " + std::to_string(t.entropies.size()) +
                    " entries, tokens has " + std::to_string(n),
                std::min(n, t.entropies.size()));
  }
  if (!t.dists.empty() && t.dists.size() != n) {
    throw Error(ErrorCode::LengthMismatch,
                "dists has " + std::to_string(t.dists.size()) +
                    " entries, tokens has " + std::to_string(n),
                std::min(n, t.dists.size()));
  }
  if (t.gen_start > n) {
    throw Error(ErrorCode::LengthMismatch, "gen_start beyond sequence end", t.gen_start);
  }
  for (std::size_t i = 0; i < t.dists.size(); ++i) {
    double sum = 0.0;
    for (double p : t.dists[i]) {
      if (!(p >= 0.0)) {
        throw Error(ErrorCode::NonNormalizedDistribution,
                    "negative probability at position " + std::to_string(i), i);
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kProbabilitySumTolerance) {
      throw Error(ErrorCode::NonNormalizedDistribution,
                  "distribution at position " + std::to_string(i) + " sums to " +
                      std::to_string(sum),
                  i);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(t.entropies[i] >= 0.0)) {
      throw Error(ErrorCode::NegativeEntropy,
                  "negative entropy at position " + std::to_string(i), i);
    }
  }
}

SegmentSet::SegmentSet(std::vector<Segment> ranges) : ranges_(std::move(ranges)) {
  if (ranges_.empty()) {
    throw Error(ErrorCode::InvalidSegments, "segment set is empty");
  }
  for (std::size_t i = 0; i < ranges_.size(); ++i) {
    if (ranges_[i].end <= ranges_[i].start) {
      throw Error(ErrorCode::InvalidSegments, "empty segment " + std::to_string(i), i);
    }
    if (i > 0 && ranges_[i].start != ranges_[i - 1].end) {
      throw Error(ErrorCode::InvalidSegments,
                  "segment " + std::to_string(i) + " does not continue its predecessor", i);
    }
  }
}

SegmentSet SegmentSet::whole(std::size_t start, std::size_t end) {
  return SegmentSet({Segment{start, end}});
}

SegmentSet SegmentSet::from_cuts(std::size_t start, std::size_t end,
                                 std::vector<std::size_t> cuts) {
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<Segment> out;
  std::size_t prev = start;
  for (std::size_t c : cuts) {
    if (c <= start || c >= end) continue;
    out.push_back({prev, c});
    prev = c;
  }
  out.push_back({prev, end});
  return SegmentSet(std::move(out));
}

std::size_t SegmentSet::segment_of(std::size_t pos) const {
  auto it = std::upper_bound(ranges_.begin(), ranges_.end(), pos,
                             [](std::size_t p, const Segment& s) { return p < s.end; });
  if (it == ranges_.end() || pos < ranges_.front().start) {
    throw Error(ErrorCode::InvalidSegments, "position outside segment set", pos);
  }
  return static_cast<std::size_t>(it - ranges_.begin());
}

void FusionConfig::validate() const {
  if (k_spikes < 1) throw Error(ErrorCode::Config, "fusion.k_spikes: must be >= 1");
  if (min_gap < 1) throw Error(ErrorCode::Config, "fusion.min_gap: must be >= 1");
  if (!(prior_std > 0.0)) throw Error(ErrorCode::Config, "fusion.prior_std: must be > 0");
  if (!(grpo_eps >= 0.0)) throw Error(ErrorCode::Config, "fusion.grpo_eps: must be >= 0");
  if (length_threshold < 1) {
    throw Error(ErrorCode::Config, "fusion.length_threshold: must be >= 1");
  }
  if (!(pure_temperature >= 0.0)) {
    throw Error(ErrorCode::Config, "fusion.pure_temperature: must be >= 0");
  }
}

}  // namespace prpo
