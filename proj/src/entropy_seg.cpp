#include "prpo/entropy_seg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace prpo {
namespace {

void require_span(std::size_t start, std::size_t out_len) {
  if (start >= out_len) {
    throw Error(ErrorCode::EmptySpan,
                "empty span [" + std::to_string(start) + ", " + std::to_string(out_len) + ")",
                start);
  }
}

bool short_span(std::size_t start, std::size_t out_len, int k) {
  return out_len - start < static_cast<std::size_t>(k) + 1;
}

// Clamp to bounds, drop empty ranges, fill holes, extend to out_len.
SegmentSet sanitize(const std::vector<Segment>& segments, std::size_t start,
                    std::size_t out_len) {
  std::vector<Segment> out;
  std::size_t cur = start;
  for (Segment seg : segments) {
    seg.start = std::max(start, std::min(out_len, seg.start));
    seg.end = std::max(start, std::min(out_len, seg.end));
    if (seg.end <= seg.start) continue;
    if (seg.start > cur) out.push_back({cur, seg.start});
    out.push_back(seg);
    cur = seg.end;
  }
  if (cur < out_len) out.push_back({cur, out_len});
  if (out.empty()) return SegmentSet::whole(start, out_len);
  return SegmentSet(std::move(out));
}

std::vector<Segment> segments_from_cuts(const std::vector<std::size_t>& cuts,
                                        std::size_t start, std::size_t out_len) {
  std::vector<Segment> segments;
  segments.reserve(cuts.size() + 1);
  std::size_t prev = start;
  for (std::size_t c : cuts) {
    segments.push_back({prev, c});
    prev = c;
  }
  segments.push_back({prev, out_len});
  return segments;
}

}  // namespace

double token_entropy(std::span<const double> dist) {
  double sum = 0.0;
  double h = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const double p = dist[i];
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(ErrorCode::InvalidDistribution,
                  "invalid probability at index " + std::to_string(i), i);
    }
    sum += p;
    if (p > 0.0) h -= p * std::log(p);
  }
  if (std::abs(sum - 1.0) > kProbabilitySumTolerance) {
    throw Error(ErrorCode::InvalidDistribution,
                "distribution sums to " + std::to_string(sum));
  }
  return std::max(h, 0.0);
}

SegmentSet segment_by_entropy(std::span<const double> entropies, std::size_t start,
                              std::size_t out_len, int k, int min_gap) {
  require_span(start, out_len);
  if (entropies.size() < out_len) {
    throw Error(ErrorCode::LengthMismatch, "entropies do not cover the span",
                entropies.size());
  }
  if (short_span(start, out_len, k)) return SegmentSet::whole(start, out_len);

  std::vector<std::size_t> anchors(out_len - start);
  std::iota(anchors.begin(), anchors.end(), start);
  const auto k_eff = std::min(anchors.size(), static_cast<std::size_t>(k));
  std::partial_sort(anchors.begin(), anchors.begin() + static_cast<std::ptrdiff_t>(k_eff),
                    anchors.end(), [&](std::size_t a, std::size_t b) {
                      if (entropies[a] != entropies[b]) return entropies[a] > entropies[b];
                      return a < b;
                    });
  anchors.resize(k_eff);
  std::sort(anchors.begin(), anchors.end());

  const auto gap = static_cast<std::size_t>(min_gap);
  std::vector<std::size_t> filtered;
  for (std::size_t a : anchors) {
    if (filtered.empty() || a - filtered.back() >= gap) filtered.push_back(a);
  }

  std::vector<std::size_t> cuts;
  std::size_t last_cut = start;
  for (std::size_t a : filtered) {
    if (a >= last_cut && a - last_cut >= gap) {
      cuts.push_back(a);
      last_cut = a;
    }
  }
  return sanitize(segments_from_cuts(cuts, start, out_len), start, out_len);
}

SegmentSet segment_random(std::size_t out_len, std::size_t start, int k, int min_gap,
                          std::uint64_t seed) {
  require_span(start, out_len);
  if (short_span(start, out_len, k)) return SegmentSet::whole(start, out_len);

  std::vector<std::size_t> pool(out_len - start - 1);
  std::iota(pool.begin(), pool.end(), start + 1);
  std::mt19937_64 rng(seed);
  const auto gap = static_cast<std::size_t>(min_gap);
  std::vector<std::size_t> picked;
  // Partial Fisher-Yates: draw without replacement until k cuts are placed.
  for (std::size_t i = 0; i < pool.size() && picked.size() < static_cast<std::size_t>(k);
       ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
    const std::size_t c = pool[i];
    const bool clear = std::all_of(picked.begin(), picked.end(), [&](std::size_t p) {
      return (c > p ? c - p : p - c) >= gap;
    });
    if (clear) picked.push_back(c);
  }
  std::sort(picked.begin(), picked.end());
  return sanitize(segments_from_cuts(picked, start, out_len), start, out_len);
}

SegmentSet segment_uniform(std::size_t out_len, std::size_t start, int k) {
  require_span(start, out_len);
  if (short_span(start, out_len, k)) return SegmentSet::whole(start, out_len);
  const std::size_t parts = static_cast<std::size_t>(k) + 1;
  const std::size_t len = out_len - start;
  const std::size_t base = len / parts;
  const std::size_t extra = len % parts;
  std::vector<Segment> out;
  std::size_t cur = start;
  for (std::size_t i = 0; i < parts; ++i) {
    const std::size_t size = base + (i < extra ? 1 : 0);
    out.push_back({cur, cur + size});
    cur += size;
  }
  return SegmentSet(std::move(out));
}

SplitStrategy parse_split_strategy(std::string_view name) {
  if (name == "entropy") return SplitStrategy::Entropy;
  if (name == "random") return SplitStrategy::Random;
  if (name == "uniform") return SplitStrategy::Uniform;
  throw Error(ErrorCode::Config, "unknown split strategy '" + std::string(name) + "'");
}

const char* to_string(SplitStrategy s) {
  switch (s) {
    case SplitStrategy::Entropy: return "entropy";
    case SplitStrategy::Random: return "random";
    case SplitStrategy::Uniform: return "uniform";
  }
  return "?";
}

}  // namespace prpo
