#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>

#include "oracles.hpp"
#include "prpo/chainsum.hpp"
#include "prpo/entropy_seg.hpp"
#include "prpo/policy.hpp"

using namespace prpo;

namespace {

Trajectory fixed_trajectory(std::vector<int> tokens, std::size_t gen_start) {
  Trajectory tr;
  tr.tokens = std::move(tokens);
  tr.entropies.assign(tr.tokens.size(), 0.0);
  tr.gen_start = gen_start;
  return tr;
}

double max_rel_error(const Weights& analytic, const std::vector<double>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double a = analytic.data[i];
    const double n = numeric[i];
    const double scale = std::max(std::abs(a), std::abs(n));
    if (scale < 1e-6) {
      worst = std::max(worst, std::abs(a - n) / 1e-6);
      continue;
    }
    worst = std::max(worst, std::abs(a - n) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("step_dist basics") {
  Policy p(EncoderSpec{6, 2, false, 5});
  const std::vector<int> ctx{1, 2, 3};
  const auto d = p.step_dist(ctx, 1, 3);
  for (double x : d) CHECK(x == doctest::Approx(1.0 / 6.0).epsilon(1e-12));

  p.weights()(0, 2) = 40.0;
  const auto s = p.step_dist(ctx, 1, 3);
  CHECK(s[2] >= 1.0 - 1e-6);
  CHECK(p.step_dist(ctx, 1, 3) == s);
}

TEST_CASE("sampling: stop on EOS, truncate at max_len, reproducible") {
  Policy eos(EncoderSpec{6, 2, false, 5});
  eos.weights()(0, 5) = 50.0;
  const std::vector<int> prompt{1, 2};
  const auto one = sample_trajectory(eos, prompt, 10, 1);
  CHECK(one.gen_length() == 1);
  CHECK(one.tokens.back() == 5);

  Policy never(EncoderSpec{6, 2, false, 5});
  never.weights()(0, 5) = -50.0;
  const auto five = sample_trajectory(never, prompt, 5, 1);
  CHECK(five.gen_length() == 5);
  CHECK_NOTHROW(validate_trajectory(five));

  std::mt19937_64 rng(1);
  Policy p(EncoderSpec{6, 3, false, 5});
  oracle::randomize(p, rng, 0.7);
  const auto a = sample_trajectory(p, prompt, 12, 99);
  const auto b = sample_trajectory(p, prompt, 12, 99);
  CHECK(a.tokens == b.tokens);
  CHECK(a.entropies == b.entropies);
  CHECK_NOTHROW(validate_trajectory(a));
  for (std::size_t t = a.gen_start; t < a.size(); ++t) {
    CHECK(a.entropies[t] == doctest::Approx(token_entropy(a.dists[t])).epsilon(1e-12));
  }
}

TEST_CASE("log-ratio objective: identities") {
  std::mt19937_64 rng(2);
  Policy p(EncoderSpec{5, 2, false, 4});
  oracle::randomize(p, rng, 0.5);
  const auto tr = fixed_trajectory({1, 0, 3, 2, 2, 4}, 2);
  const auto same = grad_weighted_logratio(p, p, tr, AdvantageVector{{1, -2, 0.5, 3}});
  CHECK(same.value == 0.0);
  const auto zero = grad_weighted_logratio(p, p, tr, AdvantageVector{{0, 0, 0, 0}});
  for (double g : zero.grad.data) CHECK(g == 0.0);
  CHECK_THROWS_AS(grad_weighted_logratio(p, p, tr, AdvantageVector{{1, 2}}), Error);
}

TEST_CASE("gradients match central finite differences") {
  std::mt19937_64 rng(12345);
  for (int trial = 0; trial < 40; ++trial) {
    const bool chainsum = trial % 4 == 0;
    const int vocab = chainsum ? 13 : 2 + static_cast<int>(rng() % 12);
    EncoderSpec spec{vocab, 1 + static_cast<int>(rng() % 3), chainsum, vocab - 1};
    Policy pi(spec), ref(spec);
    oracle::randomize(pi, rng, 0.5);
    oracle::randomize(ref, rng, 0.5);
    const std::size_t gen_start = 1 + rng() % 4;
    const std::size_t T = 1 + rng() % 12;
    std::vector<int> tokens(gen_start + T);
    for (int& x : tokens) x = static_cast<int>(rng() % static_cast<std::uint64_t>(vocab));
    const auto tr = fixed_trajectory(tokens, gen_start);
    AdvantageVector adv;
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t i = 0; i < T; ++i) adv.values.push_back(n(rng));

    const auto obj = grad_weighted_logratio(pi, ref, tr, adv);
    const auto fd = oracle::finite_difference(
        pi, [&](const Policy& q) { return grad_weighted_logratio(q, ref, tr, adv).value; }, 1e-5);
    CHECK(max_rel_error(obj.grad, fd) < 1e-4);

    const auto kl = kl_to_ref_with_grad(pi, ref, tr);
    const auto fd_kl = oracle::finite_difference(
        pi, [&](const Policy& q) { return kl_to_ref(q, ref, tr); }, 1e-5);
    CHECK(max_rel_error(kl.grad, fd_kl) < 1e-4);

    // Old policy = ref, so ratios sit away from the clip boundary only by chance;
    // use a wide clip to test the smooth branch.
    const auto old = ref.token_logprobs(tr.tokens, tr.gen_start);
    const auto sur = clipped_surrogate(pi, old, tr, adv, 1e6);
    const auto fd_sur = oracle::finite_difference(
        pi, [&](const Policy& q) { return clipped_surrogate(q, old, tr, adv, 1e6).value; }, 1e-5);
    CHECK(max_rel_error(sur.grad, fd_sur) < 1e-4);
  }
}

TEST_CASE("clipped surrogate: clipped tokens carry no gradient") {
  std::mt19937_64 rng(3);
  Policy pi(EncoderSpec{4, 1, false, 3});
  oracle::randomize(pi, rng, 1.0);
  const auto tr = fixed_trajectory({0, 1, 2}, 1);
  auto old = pi.token_logprobs(tr.tokens, tr.gen_start);
  for (double& l : old) l -= 1.0;  // ratio e > 1 + eps
  const auto pos = clipped_surrogate(pi, old, tr, AdvantageVector{{1.0, 1.0}}, 0.2);
  for (double g : pos.grad.data) CHECK(g == 0.0);
  CHECK(pos.value == doctest::Approx(1.2));
  const auto neg = clipped_surrogate(pi, old, tr, AdvantageVector{{-1.0, -1.0}}, 0.2);
  CHECK(neg.value == doctest::Approx(-std::exp(1.0)));
}

TEST_CASE("KL matches direct summation and is positive off the reference") {
  std::mt19937_64 rng(21);
  Policy pi(EncoderSpec{5, 2, false, 4}), ref(EncoderSpec{5, 2, false, 4});
  oracle::randomize(pi, rng, 0.6);
  oracle::randomize(ref, rng, 0.6);
  const auto tr = fixed_trajectory({1, 3, 0, 2, 2, 1, 4}, 2);
  double expected = 0.0;
  for (std::size_t t = 2; t < tr.tokens.size(); ++t) {
    const auto lp = oracle::log_probs(pi, tr.tokens, 2, t);
    const auto lq = oracle::log_probs(ref, tr.tokens, 2, t);
    for (std::size_t v = 0; v < lp.size(); ++v) expected += std::exp(lp[v]) * (lp[v] - lq[v]);
  }
  expected /= 5.0;
  CHECK(kl_to_ref(pi, ref, tr) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(kl_to_ref(pi, ref, tr) > 0.0);
  CHECK(kl_to_ref(pi, pi, tr) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("one ascent step with positive advantage raises the trajectory log-probability") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    Policy p(EncoderSpec{6, 2, false, 5});
    oracle::randomize(p, rng, 0.5);
    const auto tr = sample_trajectory(p, std::vector<int>{1, 2}, 8, rng());
    const double before = prefix_logprob(p, tr.tokens, tr.gen_start, tr.tokens.size());
    const auto obj = grad_weighted_logratio(
        p, p, tr, AdvantageVector{std::vector<double>(tr.gen_length(), 1.0)});
    Policy q = p;
    q.weights().axpy(0.05, obj.grad);
    CHECK(prefix_logprob(q, tr.tokens, tr.gen_start, tr.tokens.size()) > before);
  }
}

TEST_CASE("Monte Carlo objective matches exhaustive enumeration") {
  // vocab 4 (token 3 = EOS), max_len 5: every sequence enumerated exactly.
  std::mt19937_64 rng(77);
  const EncoderSpec spec{4, 2, false, 3};
  Policy pi(spec), ref(spec);
  oracle::randomize(pi, rng, 0.6);
  oracle::randomize(ref, rng, 0.6);
  const std::vector<int> prompt{1, 0};
  const std::size_t max_len = 5;
  auto af = [](std::size_t t, int tok) { return 0.5 * static_cast<double>(tok) - 0.3 * t + 0.2; };
  auto objective = [&](const std::vector<int>& tokens) {
    const auto tr = fixed_trajectory(tokens, prompt.size());
    AdvantageVector a;
    for (std::size_t t = prompt.size(); t < tokens.size(); ++t) {
      a.values.push_back(af(t - prompt.size(), tokens[t]));
    }
    return grad_weighted_logratio(pi, ref, tr, a).value;
  };

  double exact = 0.0;
  double total_prob = 0.0;
  std::function<void(std::vector<int>&, double)> walk = [&](std::vector<int>& seq, double prob) {
    const std::size_t gen = seq.size() - prompt.size();
    if (gen > 0 && (seq.back() == spec.eos || gen == max_len)) {
      exact += prob * objective(seq);
      total_prob += prob;
      return;
    }
    const auto lp = oracle::log_probs(pi, seq, prompt.size(), seq.size());
    for (int v = 0; v < spec.vocab; ++v) {
      seq.push_back(v);
      walk(seq, prob * std::exp(lp[static_cast<std::size_t>(v)]));
      seq.pop_back();
    }
  };
  std::vector<int> seq = prompt;
  walk(seq, 1.0);
  CHECK(total_prob == doctest::Approx(1.0).epsilon(1e-12));

  const int samples = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < samples; ++i) {
    const auto tr = sample_trajectory(pi, prompt, max_len, static_cast<std::uint64_t>(i) + 1000);
    const double f = objective(tr.tokens);
    sum += f;
    sq += f * f;
  }
  const double mean = sum / samples;
  const double se = std::sqrt((sq / samples - mean * mean) / samples);
  CHECK(std::abs(mean - exact) < 3.0 * se);
}

TEST_CASE("greedy decoding follows the argmax") {
  Policy p(EncoderSpec{5, 1, false, 4});
  p.weights()(0, 2) = 1.0;
  // After emitting 2, the slot for "last token = 2" pushes toward EOS.
  const auto& enc = p.encoder();
  std::vector<std::uint32_t> feats;
  const std::vector<int> ctx{0, 2};
  enc.active(ctx, 1, 2, feats);
  for (auto f : feats) {
    if (f != 0) p.weights()(f, 4) = 5.0;
  }
  CHECK(decode_greedy(p, std::vector<int>{0}, 6) == std::vector<int>{2, 4});
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(8);
  Policy p(EncoderSpec{13, 3, true, 12});
  oracle::randomize(p, rng, 0.3);
  const auto path = std::filesystem::temp_directory_path() / "prpo_policy_test.ckpt";
  save_checkpoint(p, path);
  const Policy q = load_checkpoint(path);
  CHECK(q.encoder().spec() == p.encoder().spec());
  CHECK(q.weights() == p.weights());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
}
