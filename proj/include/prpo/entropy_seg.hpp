#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "prpo/types.hpp"

namespace prpo {

// Shannon entropy in nats, 0 * ln(0) = 0. Throws Error{InvalidDistribution}.
double token_entropy(std::span<const double> dist);

// Entropy-spike segmentation of [start, out_len).
//
// The k highest-entropy positions (ties -> lower index) become anchors.
// Anchors closer than min_gap to the previously kept anchor are dropped,
// then anchors closer than min_gap to the last accepted cut (initially
// `start`) are dropped. Spans shorter than k + 1 tokens come back whole.
// `entropies` is indexed by absolute position and must cover out_len.
// Throws Error{EmptySpan} when start >= out_len.
SegmentSet segment_by_entropy(std::span<const double> entropies, std::size_t start,
                              std::size_t out_len, int k, int min_gap);

// k random cut points, pairwise at least min_gap apart, drawn without
// replacement from (start, out_len). Deterministic in `seed`.
SegmentSet segment_random(std::size_t out_len, std::size_t start, int k, int min_gap,
                          std::uint64_t seed);

// k + 1 near-equal parts; leading parts absorb the remainder.
SegmentSet segment_uniform(std::size_t out_len, std::size_t start, int k);

enum class SplitStrategy { Entropy, Random, Uniform };

SplitStrategy parse_split_strategy(std::string_view name);
const char* to_string(SplitStrategy s);

}  // namespace prpo
