#include "prpo/chainsum.hpp"

#include <algorithm>
#include <string>

namespace prpo::chainsum {

Task make_task(std::vector<int> digits) {
  Task task;
  int sum = 0;
  for (int d : digits) {
    sum = (sum + d) % 10;
    task.target.push_back(sum);
  }
  task.answer = sum;
  task.digits = std::move(digits);
  return task;
}

Task sample_task(std::uint64_t seed, int min_digits, int max_digits) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(min_digits, max_digits);
  std::uniform_int_distribution<int> digit(0, 9);
  std::vector<int> digits(static_cast<std::size_t>(count(rng)));
  for (int& d : digits) d = digit(rng);
  return make_task(std::move(digits));
}

std::vector<int> prompt_tokens(const Task& task) {
  std::vector<int> p = task.digits;
  p.push_back(kSep);
  return p;
}

std::vector<int> step_digits(const Task& task, std::size_t step) {
  const int before = step == 0 ? 0 : task.target[step - 1];
  const int sum = before + task.digits[step];
  if (sum >= 10) return {1, sum - 10};
  return {sum};
}

std::vector<int> demonstration(const Task& task) {
  std::vector<int> out;
  const std::size_t n = task.digits.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 == n) out.push_back(kAns);
    for (int d : step_digits(task, i)) out.push_back(d);
    out.push_back(i + 1 == n ? kEos : kSep);
  }
  return out;
}

ParseState advance(ParseState s, int token) {
  if (is_digit(token)) {
    ++s.digit_pos;
  } else if (token == kSep) {
    ++s.step;
    s.digit_pos = 0;
  } else if (token == kAns) {
    s.answer_phase = true;
    s.digit_pos = 0;
  } else if (token == kEos) {
    s.finished = true;
  }
  return s;
}

double outcome_reward(const Task& task, std::span<const int> generated) {
  const std::size_t n = generated.size();
  if (n < 3 || generated[n - 1] != kEos) return -1.0;
  const int last = generated[n - 2];
  if (!is_digit(last) || last != task.answer) return -1.0;
  const auto ans = std::find(generated.begin(), generated.end() - 2, kAns);
  return ans != generated.end() - 2 ? 1.0 : -1.0;
}

void OracleConfig::validate() const {
  if (!(noise_std >= 0.0)) throw Error(ErrorCode::Config, "oracle.noise_std: must be >= 0");
  if (!(hard_prefix_factor >= 0.0 && hard_prefix_factor <= 1.0)) {
    throw Error(ErrorCode::Config, "oracle.hard_prefix_factor: must be in [0, 1]");
  }
}

std::vector<int> step_token_marks(const Task& task, std::span<const int> generated) {
  std::vector<int> marks(generated.size(), -1);
  ParseState s;
  for (std::size_t t = 0; t < generated.size(); ++t) {
    const int tok = generated[t];
    if (is_digit(tok)) {
      bool ok = false;
      // The answer is the final running sum, wherever ANS appears.
      const std::size_t step = s.answer_phase ? task.digits.size() - 1 : s.step;
      if (step < task.digits.size()) {
        const auto expected = step_digits(task, step);
        ok = s.digit_pos < expected.size() && expected[s.digit_pos] == tok;
      }
      marks[t] = ok ? 1 : 0;
    }
    s = advance(s, tok);
  }
  return marks;
}

double oracle_prm(const Task& task, std::span<const int> generated, Segment seg,
                  const OracleConfig& cfg, std::mt19937_64& noise) {
  if (seg.end > generated.size() || seg.end <= seg.start) {
    throw Error(ErrorCode::InvalidSegments, "segment outside the generated span", seg.start);
  }
  const auto marks = step_token_marks(task, generated);
  int steps = 0;
  int hits = 0;
  for (std::size_t t = seg.start; t < seg.end; ++t) {
    if (marks[t] < 0) continue;
    ++steps;
    hits += marks[t];
  }
  double score = steps == 0 ? 0.5 : static_cast<double>(hits) / steps;
  if (cfg.noise_std > 0.0) {
    std::normal_distribution<double> gauss(0.0, cfg.noise_std);
    score = std::clamp(score + gauss(noise), 0.0, 1.0);
  }
  if (cfg.hard_prefix && 3 * seg.end <= generated.size()) score *= cfg.hard_prefix_factor;
  return score;
}

ProcessScores score_segments(const Task& task, std::span<const int> tokens,
                             std::size_t gen_start, const SegmentSet& segs,
                             const OracleConfig& cfg, std::uint64_t noise_seed) {
  const auto generated = tokens.subspan(gen_start);
  std::mt19937_64 noise(noise_seed);
  ProcessScores out;
  out.scores.reserve(segs.size());
  for (const Segment& s : segs.ranges()) {
    out.scores.push_back(
        oracle_prm(task, generated, Segment{s.start - gen_start, s.end - gen_start}, cfg, noise));
  }
  return out;
}

}  // namespace prpo::chainsum
