#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "prpo/types.hpp"

namespace prpo {

// Fixed, non-learned map from a token prefix to a set of active binary
// features. Always present: a bias and one-hot slots for the last `window`
// tokens (left-padded with nothing). With `chainsum_features`, the encoder
// also parses the prompt digits and the generated prefix and lights one
// arithmetic-table cell (running sum, next digit, digit position) and one
// control cell (answer phase, last step, digit position).
struct EncoderSpec {
  int vocab = 13;
  int window = 3;
  bool chainsum_features = true;
  int eos = 12;

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

class ContextEncoder {
 public:
  explicit ContextEncoder(EncoderSpec spec);

  const EncoderSpec& spec() const { return spec_; }
  int vocab() const { return spec_.vocab; }
  std::size_t feature_dim() const { return dim_; }

  // Active features for predicting tokens[pos] from tokens[0, pos).
  void active(std::span<const int> tokens, std::size_t gen_start, std::size_t pos,
              std::vector<std::uint32_t>& out) const;

 private:
  EncoderSpec spec_;
  std::size_t slot_base_ = 1;
  std::size_t table_base_ = 0;
  std::size_t overflow_ = 0;
  std::size_t control_base_ = 0;
  std::size_t dim_ = 0;
};

// Dense (features x vocab) matrix, row-major.
struct Weights {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Weights() = default;
  Weights(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  void axpy(double a, const Weights& x);
  double squared_norm() const;
  friend bool operator==(const Weights&, const Weights&) = default;
};

class Policy {
 public:
  explicit Policy(EncoderSpec spec = {});
  Policy(EncoderSpec spec, Weights weights);

  const ContextEncoder& encoder() const { return encoder_; }
  int vocab() const { return encoder_.vocab(); }
  int eos() const { return encoder_.spec().eos; }
  Weights& weights() { return weights_; }
  const Weights& weights() const { return weights_; }

  std::vector<double> logits(std::span<const int> tokens, std::size_t gen_start,
                             std::size_t pos) const;
  // Next-token distribution at `pos` given tokens[0, pos).
  std::vector<double> step_dist(std::span<const int> tokens, std::size_t gen_start,
                                std::size_t pos) const;

  // log pi(tokens[t] | tokens[<t]) for t in [gen_start, tokens.size()).
  std::vector<double> token_logprobs(std::span<const int> tokens, std::size_t gen_start) const;

 private:
  ContextEncoder encoder_;
  Weights weights_;
};

struct SamplingOptions {
  double temperature = 1.0;
  double top_p = 1.0;
};

// Samples until EOS or max_len generated tokens. Records the untempered
// policy distribution and its entropy at every position (prompt positions
// get a point mass on the observed token and zero entropy).
Trajectory sample_trajectory(const Policy& policy, std::span<const int> prompt,
                             std::size_t max_len, std::uint64_t seed,
                             const SamplingOptions& opts = {});

// Argmax decoding, lowest index on ties.
std::vector<int> decode_greedy(const Policy& policy, std::span<const int> prompt,
                               std::size_t max_len);

struct Objective {
  double value = 0.0;
  Weights grad;
};

// value = (1/T) sum_t adv_t * log(pi(x_t) / ref(x_t)) over the generated
// span, with its exact gradient in pi's weights.
// Throws Error{MisalignedAdvantage}.
Objective grad_weighted_logratio(const Policy& pi, const Policy& ref, const Trajectory& tr,
                                 const AdvantageVector& adv);

// value = (1/T) sum_t min(r_t A_t, clip(r_t, 1 - eps, 1 + eps) A_t),
// r_t = pi(x_t) / pi_old(x_t), pi_old given as per-token log-probabilities.
Objective clipped_surrogate(const Policy& pi, std::span<const double> old_logprobs,
                            const Trajectory& tr, const AdvantageVector& adv,
                            double clip_ratio);

// Mean over generated positions of KL(pi(.|x<t) || ref(.|x<t)).
double kl_to_ref(const Policy& pi, const Policy& ref, const Trajectory& tr);
Objective kl_to_ref_with_grad(const Policy& pi, const Policy& ref, const Trajectory& tr);

// log p(tokens[gen_start, end)) under pi.
double prefix_logprob(const Policy& pi, std::span<const int> tokens, std::size_t gen_start,
                      std::size_t end);

// Versioned flat-array checkpoint. Throws Error{Io}.
void save_checkpoint(const Policy& policy, const std::filesystem::path& path);
Policy load_checkpoint(const std::filesystem::path& path);

}  // namespace prpo
