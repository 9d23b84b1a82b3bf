#include <doctest.h>

#include <cmath>

#include "prpo/config.hpp"
#include "prpo/trainer.hpp"

using namespace prpo;

namespace {

std::vector<EpochMetrics> history_of(const std::vector<double>& acc) {
  std::vector<EpochMetrics> h;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    EpochMetrics m;
    m.epoch = static_cast<int>(i + 1);
    m.train_accuracy = acc[i];
    h.push_back(m);
  }
  return h;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.train.batch_groups = 4;
  cfg.train.rollout_n = 4;
  cfg.train.updates_per_epoch = 3;
  cfg.train.epochs = 2;
  cfg.train.eval_tasks = 20;
  cfg.train.warmup_steps = 20;
  cfg.train.warmup_lr = 2.0;
  cfg.fusion.min_gap = 2;
  cfg.train.seed = 5;
  return cfg;
}

// ANS, then a uniformly random digit, then EOS, whatever the prompt.
Policy random_answer_policy() {
  Policy p(EncoderSpec{13, 1, false, chainsum::kEos});
  std::vector<std::uint32_t> feats;
  auto slot = [&](int last) {
    const std::vector<int> ctx{last, 0};
    p.encoder().active(ctx, 1, 1, feats);
    for (auto f : feats) {
      if (f != 0) return f;
    }
    return feats.front();
  };
  const auto after_sep = slot(chainsum::kSep);
  const auto after_ans = slot(chainsum::kAns);
  p.weights()(after_sep, chainsum::kAns) = 40.0;
  for (int d = 0; d <= 9; ++d) p.weights()(after_ans, d) = 40.0;
  for (int d = 0; d <= 9; ++d) p.weights()(slot(d), chainsum::kEos) = 40.0;
  return p;
}

ExperimentConfig strong_base() {
  return parse_config(R"(
[fusion]
min_gap = 2
[train]
lr = 2
early_stop_patience = 0
warmup_steps = 400
warmup_lr = 5
)");
}

}  // namespace

TEST_CASE("early_stop examples") {
  CHECK_FALSE(early_stop(history_of({0.1, 0.2, 0.3, 0.4, 0.5}), 3));
  CHECK(early_stop(history_of({0.4, 0.4, 0.4, 0.4}), 3));
  CHECK_FALSE(early_stop(history_of({0.5, 0.4, 0.4, 0.6}), 3));
  CHECK_FALSE(early_stop(history_of({0.4, 0.4, 0.4}), 3));
  CHECK_FALSE(early_stop({}, 3));
  CHECK_FALSE(early_stop(history_of({0.4, 0.4, 0.4, 0.4}), 0));
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
  CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
  CHECK(derive_seed(1, {2, 3}) != derive_seed(2, {2, 3}));
  CHECK(derive_seed(1, {}) != derive_seed(1, {0}));
}

TEST_CASE("config validation reports field paths") {
  TrainConfig t;
  t.rollout_n = 1;
  try {
    t.validate();
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
    CHECK(std::string(e.what()).rfind("train.rollout_n", 0) == 0);
  }
  FusionConfig f;
  f.prior_std = 0.0;
  CHECK_THROWS_AS(f.validate(), Error);
}

TEST_CASE("eval_accuracy: perfect and random-answer policies") {
  TrainConfig tc;
  tc.warmup_steps = 400;
  tc.warmup_lr = 5.0;
  const Policy perfect = initial_policy(tc);
  const auto tasks = eval_tasks(tc);
  CHECK(eval_accuracy(perfect, tasks, tc.max_len, GreedyEval{}).mean_accuracy == 1.0);

  const Policy coin = random_answer_policy();
  std::vector<chainsum::Task> many;
  for (std::uint64_t s = 0; s < 1000; ++s) many.push_back(chainsum::sample_task(s + 100000));
  SampledEval mode;
  mode.n = 4;
  mode.temperature = 1.0;
  mode.top_p = 1.0;
  const auto r = eval_accuracy(coin, many, tc.max_len, mode);
  const double se = std::sqrt(0.1 * 0.9 / 4000.0);
  CHECK(std::abs(r.mean_accuracy - 0.1) < 4.0 * se);
  CHECK(r.pass_at_n >= r.mean_accuracy);

  SampledEval cold;
  cold.n = 1;
  cold.temperature = 1e-6;
  cold.top_p = 1.0;
  CHECK(eval_accuracy(perfect, tasks, tc.max_len, cold).mean_accuracy ==
        eval_accuracy(perfect, tasks, tc.max_len, GreedyEval{}).mean_accuracy);
}

TEST_CASE("training is bit-for-bit reproducible") {
  const auto cfg = small_config();
  Trainer a(cfg), b(cfg);
  a.run();
  b.run();
  REQUIRE(a.history().size() == b.history().size());
  for (std::size_t i = 0; i < a.history().size(); ++i) {
    CHECK(a.history()[i].train_accuracy == b.history()[i].train_accuracy);
    CHECK(a.history()[i].mean_gen_length == b.history()[i].mean_gen_length);
    CHECK(a.history()[i].mean_entropy == b.history()[i].mean_entropy);
    CHECK(a.history()[i].loss == b.history()[i].loss);
  }
  CHECK(a.policy().weights() == b.policy().weights());
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto cfg = small_config();
  cfg.train.lr = 0.0;
  const Policy start = initial_policy(cfg.train);
  Trainer t(cfg, start);
  const auto m = t.run_epoch();
  CHECK(t.policy().weights() == start.weights());
  CHECK(m.epoch == 1);
  CHECK(m.mean_gen_length > 0.0);
  CHECK(m.mean_entropy > 0.0);
  CHECK(m.train_accuracy >= 0.0);
  CHECK(m.train_accuracy <= 1.0);
  CHECK(m.collapse_rate >= 0.0);
  CHECK(m.collapse_rate <= 1.0);
}

TEST_CASE("the advantage method does not change the first rollouts") {
  auto cfg = small_config();
  cfg.train.updates_per_epoch = 1;
  cfg.train.method = Method::GRPO;
  Trainer g(cfg);
  cfg.train.method = Method::PRPO;
  Trainer p(cfg);
  const auto mg = g.run_epoch();
  const auto mp = p.run_epoch();
  CHECK(mg.train_accuracy == mp.train_accuracy);
  CHECK(mg.mean_gen_length == mp.mean_gen_length);
  CHECK(mg.mean_entropy == mp.mean_entropy);
}

TEST_CASE("outcome-anchored methods keep response length on the clean oracle") {
  auto cfg = strong_base();
  const Policy base = initial_policy(cfg.train);
  for (Method m : {Method::GRPO, Method::PRPO, Method::PRMAvg}) {
    cfg.train.method = m;
    cfg.train.seed = 3;
    Trainer t(cfg, base);
    t.run();
    REQUIRE(t.history().size() == 10);
    const double first = t.history().front().mean_gen_length;
    for (const auto& e : t.history()) {
      CHECK(e.mean_gen_length >= 0.5 * first);
      CHECK(e.mean_gen_length <= 2.0 * first);
    }
  }
}

TEST_CASE("process-only training on the prefix-biased oracle shortens responses") {
  auto cfg = strong_base();
  cfg.oracle.hard_prefix = true;
  cfg.train.method = Method::ProcessOnly;
  cfg.train.seed = 1;
  Trainer t(cfg);
  t.run();
  const auto& h = t.history();
  REQUIRE(h.size() == 10);
  CHECK(h.back().mean_gen_length < h.front().mean_gen_length);
  CHECK(h.back().mean_gen_length < 0.5 * h.front().mean_gen_length);
}

TEST_CASE("group-relative scoring triggers the collapse condition more often") {
  auto cfg = strong_base();
  cfg.oracle.hard_prefix = true;
  cfg.train.method = Method::ProcessOnly;
  cfg.train.seed = 2;
  const Policy base = initial_policy(cfg.train);
  cfg.fusion.prior_mode = PriorMode::Relative;
  Trainer rel(cfg, base);
  cfg.fusion.prior_mode = PriorMode::Predefined;
  Trainer pre(cfg, base);
  const auto mr = rel.run_epoch();
  const auto mp = pre.run_epoch();
  CHECK(mr.collapse_rate > mp.collapse_rate);
}
