#pragma once

// ChainSum: a synthetic multi-step task. The prompt lists 2-6 digits; the
// solver writes the running sum after each digit, then the final sum after
// an answer marker:
//
//   prompt     d1 d2 ... dn SEP
//   generated  w1 SEP w2 SEP ... w(n-1) SEP ANS wn EOS
//
// where wi is the decimal form of (running sum mod 10 before step i) + di,
// i.e. one digit, or "1 x" when a carry occurs. The final token before EOS
// is the answer (total mod 10).

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "prpo/reward_fusion.hpp"
#include "prpo/types.hpp"

namespace prpo::chainsum {

inline constexpr int kVocab = 13;
inline constexpr int kSep = 10;
inline constexpr int kAns = 11;
inline constexpr int kEos = 12;
inline constexpr int kMinDigits = 2;
inline constexpr int kMaxDigits = 6;

inline bool is_digit(int tok) { return tok >= 0 && tok <= 9; }

struct Task {
  std::vector<int> digits;
  std::vector<int> target;  // running sum mod 10 after each digit
  int answer = 0;
};

Task make_task(std::vector<int> digits);
Task sample_task(std::uint64_t seed, int min_digits = kMinDigits, int max_digits = kMaxDigits);

std::vector<int> prompt_tokens(const Task& task);
// The reference solution (generated span only).
std::vector<int> demonstration(const Task& task);

// Decimal digits written for step `step` (0-based): one or two tokens.
std::vector<int> step_digits(const Task& task, std::size_t step);

// Parser state after consuming a generated prefix.
struct ParseState {
  std::size_t step = 0;       // SEP tokens seen
  std::size_t digit_pos = 0;  // digits since the last SEP/ANS
  bool answer_phase = false;  // ANS seen
  bool finished = false;      // EOS seen
};

ParseState advance(ParseState s, int token);

// +1 iff the span ends in EOS, contains ANS, and the token before EOS is a
// digit equal to the answer; -1 otherwise (truncated runs included).
double outcome_reward(const Task& task, std::span<const int> generated);

struct OracleConfig {
  double noise_std = 0.0;
  bool hard_prefix = false;
  double hard_prefix_factor = 0.3;

  void validate() const;
};

// For each generated position: -1 for connector tokens (SEP, ANS, EOS),
// else 1/0 for a digit that matches / misses the running sum of its step.
// Digits after ANS are checked against the final running sum.
std::vector<int> step_token_marks(const Task& task, std::span<const int> generated);

// Segment score in [0, 1]: fraction of step digits inside `seg` that match,
// 0.5 when the segment holds none (connectors only), plus clipped Gaussian noise.
// With hard_prefix, segments lying entirely in the first third of the span
// are scaled by hard_prefix_factor. `seg` is relative to the generated span.
double oracle_prm(const Task& task, std::span<const int> generated, Segment seg,
                  const OracleConfig& cfg, std::mt19937_64& noise);

// Scores every segment of a trajectory; `segs` uses absolute positions.
ProcessScores score_segments(const Task& task, std::span<const int> tokens,
                             std::size_t gen_start, const SegmentSet& segs,
                             const OracleConfig& cfg, std::uint64_t noise_seed);

}  // namespace prpo::chainsum
