#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "prpo/commands.hpp"
#include "prpo/config.hpp"

using namespace prpo;

namespace {

std::string run(CommandReport (*cmd)(std::istream&, std::ostream&, const ExperimentConfig&),
                const std::string& input, const ExperimentConfig& cfg, CommandReport* rep = nullptr) {
  std::istringstream in(input);
  std::ostringstream out;
  const auto r = cmd(in, out, cfg);
  if (rep) *rep = r;
  return out.str();
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string spike_record() {
  std::string e;
  for (int i = 0; i < 40; ++i) {
    if (i) e += ",";
    e += i == 5 ? "3.0" : i == 17 ? "2.0" : i == 29 ? "1.0" : "0";
  }
  return R"({"prompt_id":"p1","group_id":"g","entropies":[)" + e +
         R"(],"gen_start":0,"outcome_reward":1})";
}

}  // namespace

TEST_CASE("config: parse, override and dump round trip") {
  const auto cfg = parse_config(R"(
; comment
[fusion]
k_spikes = 3
prior_mode = relative
[train]
method = PRM-Avg+PRPO
lr = 0.5
splits = entropy, uniform
optimizer = adam
[oracle]
hard_prefix = true
noise_std = 0.1
)");
  CHECK(cfg.fusion.k_spikes == 3);
  CHECK(cfg.fusion.prior_mode == PriorMode::Relative);
  CHECK(cfg.train.method == Method::PRMAvgPRPO);
  CHECK(cfg.train.lr == 0.5);
  CHECK(cfg.train.optimizer == OptimizerKind::Adam);
  CHECK(cfg.splits == std::vector<SplitStrategy>{SplitStrategy::Entropy, SplitStrategy::Uniform});
  CHECK(cfg.oracle.hard_prefix);
  CHECK(cfg.oracle.noise_std == 0.1);
  // Untouched keys keep their defaults.
  CHECK(cfg.train.rollout_n == 8);
  CHECK(cfg.train.kl_coeff == 0.001);
  CHECK(cfg.train.clip_ratio == 0.2);

  const auto again = parse_config(dump_config(cfg));
  CHECK(dump_config(again) == dump_config(cfg));
}

TEST_CASE("config: errors name the field") {
  auto expect = [](const char* text, const char* prefix) {
    try {
      parse_config(text);
      FAIL("expected a config error for: " << text);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Config);
      CHECK(std::string(e.what()).find(prefix) != std::string::npos);
    }
  };
  expect("[train]\nlr = abc\n", "train.lr");
  expect("[train]\nrollout_n = 1\n", "train.rollout_n");
  expect("[train]\nbogus = 1\n", "train.bogus");
  expect("[nowhere]\nx = 1\n", "nowhere");
  expect("[train]\nmethod = PPO\n", "train.method");
  expect("[fusion]\nprior_std = 0\n", "fusion.prior_std");
  expect("[oracle]\nhard_prefix = maybe\n", "oracle.hard_prefix");
  CHECK_THROWS_AS(load_config("/nonexistent/prpo.ini"), Error);
}

TEST_CASE("shipped configs load") {
  for (const char* name : {"default.ini", "collapse.ini", "split_ablation.ini", "prior_ablation.ini"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_config(std::filesystem::path(PRPO_SOURCE_DIR) / "configs" / name));
  }
}

TEST_CASE("segment: short record comes back whole") {
  ExperimentConfig cfg;
  const auto out = run(cmd_segment,
                       R"({"prompt_id":"a","entropies":[0.1,0.5,0.2,0.3],"gen_start":0,"outcome_reward":1})"
                       "\n",
                       cfg);
  CHECK(out ==
        R"({"prompt_id":"a","entropies":[0.1,0.5,0.2,0.3],"gen_start":0,"outcome_reward":1,"segments":[[0,4]]})"
        "\n");
}

TEST_CASE("segment: spike example") {
  ExperimentConfig cfg;
  cfg.fusion.k_spikes = 3;
  cfg.fusion.min_gap = 10;
  const auto out = run(cmd_segment, spike_record() + "\n", cfg);
  CHECK(out.find(R"("segments":[[0,17],[17,29],[29,40]])") != std::string::npos);
}

TEST_CASE("segment: empty input and idempotence") {
  ExperimentConfig cfg;
  CommandReport rep;
  CHECK(run(cmd_segment, "", cfg, &rep).empty());
  CHECK(rep.ok());

  cfg.fusion.k_spikes = 3;
  cfg.train.split = SplitStrategy::Random;
  const auto once = run(cmd_segment, spike_record() + "\n" + spike_record() + "\n", cfg);
  CHECK(run(cmd_segment, once, cfg) == once);
}

TEST_CASE("segment: bad records are reported by line and skipped") {
  ExperimentConfig cfg;
  CommandReport rep;
  const std::string input =
      R"({"prompt_id":"a","entropies":[0.1,0.2],"gen_start":0,"outcome_reward":1})" "\n"
      "not json\n"
      R"({"prompt_id":"b","entropies":[],"gen_start":0,"outcome_reward":1})" "\n"
      R"({"prompt_id":"c","entropies":[0.1,-1],"gen_start":0,"outcome_reward":1})" "\n";
  const auto out = run(cmd_segment, input, cfg, &rep);
  REQUIRE(rep.diagnostics.size() == 3);
  CHECK(rep.diagnostics[0].rfind("line 2:", 0) == 0);
  CHECK(rep.diagnostics[1].rfind("line 3:", 0) == 0);
  CHECK(rep.diagnostics[2].rfind("line 4:", 0) == 0);
  CHECK(std::count(out.begin(), out.end(), '\n') == 1);
}

TEST_CASE("fuse: composed example and neutral scores") {
  ExperimentConfig cfg;
  const std::string input =
      R"({"prompt_id":"a","group_id":"g","entropies":[0.1,0.2,0.3],"gen_start":1,"outcome_reward":1,"segment_scores":[1.0]})" "\n"
      R"({"prompt_id":"b","group_id":"g","entropies":[0.1,0.2],"gen_start":0,"outcome_reward":-1,"segment_scores":[0.0]})" "\n";
  CommandReport rep;
  const auto out = run(cmd_fuse, input, cfg, &rep);
  CHECK(rep.ok());
  std::istringstream lines(out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "prompt_id,position,z,beta,AF");
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].rfind("a,1,", 0) == 0);
  CHECK(rows[1].rfind("a,2,", 0) == 0);
  CHECK(rows[2].rfind("b,0,", 0) == 0);
  for (const auto& r : rows) {
    const double af = std::stod(r.substr(r.rfind(',') + 1));
    CHECK(std::abs(af) == doctest::Approx(2.7301).epsilon(1e-4));
  }

  const std::string neutral =
      R"({"prompt_id":"a","group_id":"g","entropies":[0.1,0.2,0.3],"gen_start":0,"outcome_reward":1,"segment_scores":[0.5]})" "\n"
      R"({"prompt_id":"b","group_id":"g","entropies":[0.1,0.2],"gen_start":0,"outcome_reward":1,"segment_scores":[0.5]})" "\n";
  const auto zero = run(cmd_fuse, neutral, cfg);
  CHECK(zero == "prompt_id,position,z,beta,AF\na,0,0,0,0\na,1,0,0,0\na,2,0,0,0\nb,0,0,0,0\nb,1,0,0,0\n");
  CHECK(run(cmd_fuse, input, cfg) == out);
}

TEST_CASE("fuse: group and score errors") {
  ExperimentConfig cfg;
  CommandReport rep;
  run(cmd_fuse,
      R"({"prompt_id":"a","group_id":"solo","entropies":[0.1],"gen_start":0,"outcome_reward":1,"segment_scores":[0.5]})"
      "\n",
      cfg, &rep);
  REQUIRE(rep.diagnostics.size() == 1);
  CHECK(rep.diagnostics[0].find("IncompleteGroup") != std::string::npos);

  run(cmd_fuse,
      R"({"prompt_id":"a","group_id":"g","entropies":[0.1],"gen_start":0,"outcome_reward":1,"segment_scores":[0.5,0.2]})" "\n"
      R"({"prompt_id":"b","group_id":"g","entropies":[0.1],"gen_start":0,"outcome_reward":1,"segment_scores":[0.5]})" "\n",
      cfg, &rep);
  REQUIRE(rep.diagnostics.size() == 1);
  CHECK(rep.diagnostics[0].find("ScoreCountMismatch") != std::string::npos);
  CHECK(rep.diagnostics[0].rfind("line 1:", 0) == 0);
}

TEST_CASE("fuse: quoting of awkward prompt ids") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
}

TEST_CASE("analyze: trajectory records") {
  ExperimentConfig cfg;
  const std::string input =
      R"({"prompt_id":"x","entropies":[0,0,0,0],"gen_start":0,"outcome_reward":0,"advantages":[-1,-1,-1,2]})" "\n"
      R"({"prompt_id":"y","entropies":[0,0,0],"gen_start":0,"outcome_reward":0,"advantages":[1,2,3]})" "\n";
  const auto out = run(cmd_analyze, input, cfg);
  CHECK(out ==
        "prompt_id,reports,t_star,a,b,condition_holds,delta_p_sign\n"
        "x,1,3,1,2,true,Negative\n"
        "y,0,,,,false,\n"
        "# collapse_rate=0.5 trajectories=2\n");

  const std::string positive =
      R"({"prompt_id":"y","entropies":[0,0],"gen_start":0,"outcome_reward":0,"advantages":[1,2]})" "\n";
  CHECK(run(cmd_analyze, positive, cfg).find("# collapse_rate=0 ") != std::string::npos);
  CHECK(run(cmd_analyze, "", cfg) ==
        "prompt_id,reports,t_star,a,b,condition_holds,delta_p_sign\n# collapse_rate=0 trajectories=0\n");
}

TEST_CASE("analyze: metrics csv") {
  ExperimentConfig cfg;
  const std::string csv = std::string(kMetricsHeader) +
                          "\n1,PRPO,0.5,10,1.2,0.1,0.3\n2,PRPO,0.6,5,1.1,0.3,0.2\n";
  CHECK(run(cmd_analyze, csv, cfg) ==
        "epoch,method,collapse_rate,mean_gen_length,length_ratio\n"
        "1,PRPO,0.1,10,1\n2,PRPO,0.3,5,0.5\n# collapse_rate=0.2 epochs=2\n");
  CommandReport rep;
  run(cmd_analyze, std::string(kMetricsHeader) + "\n1,PRPO,x,10,1.2,0.1,0.3\n", cfg, &rep);
  REQUIRE(rep.diagnostics.size() == 1);
  CHECK(rep.diagnostics[0].rfind("line 2:", 0) == 0);
}

TEST_CASE("train: header-only CSV for zero epochs, reproducible metrics otherwise") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "prpo_train_test";
  fs::remove_all(dir);
  ExperimentConfig cfg;
  cfg.train.epochs = 0;
  cmd_train(cfg, dir / "empty");
  CHECK(read_file(dir / "empty" / "metrics.csv") == std::string(kMetricsHeader) + "\n");

  cfg.train.epochs = 2;
  cfg.train.updates_per_epoch = 2;
  cfg.train.batch_groups = 4;
  cfg.train.eval_tasks = 10;
  cfg.train.seed = 9;
  cmd_train(cfg, dir / "a");
  cmd_train(cfg, dir / "b");
  const auto a = read_file(dir / "a" / "metrics.csv");
  CHECK(a == read_file(dir / "b" / "metrics.csv"));
  CHECK(std::count(a.begin(), a.end(), '\n') == 3);
  CHECK(fs::exists(dir / "a" / "checkpoints" / "entropy" / "epoch_2.ckpt"));
  CHECK(parse_config(read_file(dir / "a" / "config.ini")).train.seed == 9);

  cfg.splits = {SplitStrategy::Entropy, SplitStrategy::Random, SplitStrategy::Uniform};
  cfg.train.epochs = 1;
  cmd_train(cfg, dir / "suite");
  for (const char* arm : {"entropy", "random", "uniform"}) {
    CHECK(fs::exists(dir / "suite" / (std::string("metrics_") + arm + ".csv")));
  }
  fs::remove_all(dir);
}
