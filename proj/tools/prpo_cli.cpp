#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prpo/prpo.h"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string method;
  std::string out;
  std::string input;
  std::vector<std::string> sets;
};

int exit_code(prpo_status s) {
  if (s == PRPO_OK) return 0;
  return s == PRPO_ERR_CONFIG ? 2 : 1;
}

int report(prpo_status s) {
  if (s != PRPO_OK) std::fprintf(stderr, "prpo: %s\n", prpo_last_error());
  return exit_code(s);
}

// Builds the configuration from --config, --set, --seed and --method, in that order.
prpo_status make_config(const Options& o, prpo_config** cfg) {
  prpo_status s = o.config.empty() ? prpo_config_new(cfg) : prpo_config_load(o.config.c_str(), cfg);
  if (s != PRPO_OK) return s;
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      prpo_config_set(*cfg, kv.c_str(), "");
      return PRPO_ERR_CONFIG;
    }
    s = prpo_config_set(*cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (s != PRPO_OK) return s == PRPO_ERR_INVALID_ARGUMENT ? PRPO_ERR_CONFIG : s;
  }
  if (o.seed) prpo_config_set_seed(*cfg, *o.seed);
  if (!o.method.empty()) {
    s = prpo_config_set_method(*cfg, o.method.c_str());
    if (s != PRPO_OK) return s;
  }
  return PRPO_OK;
}

using StreamCmd = prpo_status (*)(const prpo_config*, const char*, const char*);

int run_stream(const Options& o, StreamCmd cmd, const char* out_name) {
  prpo_config* cfg = nullptr;
  prpo_status s = make_config(o, &cfg);
  if (s != PRPO_OK) {
    prpo_config_free(cfg);
    return report(s);
  }
  std::string out_path;
  if (!o.out.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(o.out, ec);
    out_path = (std::filesystem::path(o.out) / out_name).string();
  }
  s = cmd(cfg, o.input.empty() ? nullptr : o.input.c_str(),
          out_path.empty() ? nullptr : out_path.c_str());
  prpo_config_free(cfg);
  return report(s);
}

int run_train(const Options& o) {
  prpo_config* cfg = nullptr;
  prpo_status s = make_config(o, &cfg);
  if (s == PRPO_OK) s = prpo_cmd_train(cfg, o.out.empty() ? "runs" : o.out.c_str());
  prpo_config_free(cfg);
  return report(s);
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "INI configuration file")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "Override train.seed");
  sub->add_option("--method", o.method,
                  "Advantage method: GRPO, PRM-Avg, PURE, PRPO, PRM-Avg+PRPO, ProcessOnly");
  sub->add_option("--set", o.sets, "Override a config entry, e.g. --set fusion.k_spikes=3");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy-segmented process/outcome advantage fusion toolkit"};
  app.set_version_flag("--version", std::string(prpo_version()));
  app.require_subcommand(1);

  Options o;
  auto* seg = app.add_subcommand("segment", "Append entropy-spike segments to JSONL records");
  auto* fuse = app.add_subcommand("fuse", "Per-token fused advantages from scored JSONL records");
  auto* train = app.add_subcommand("train", "Train on the ChainSum toy task");
  auto* analyze = app.add_subcommand("analyze", "Collapse report for trajectories or metrics");
  for (auto* sub : {seg, fuse, analyze}) {
    add_common(sub, o);
    sub->add_option("--out", o.out, "Write the result into this directory instead of stdout");
    sub->add_option("input", o.input, "Input file (default: stdin)");
  }
  add_common(train, o);
  train->add_option("--out", o.out, "Output directory for metrics and checkpoints")
      ->default_str("runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (seg->parsed()) return run_stream(o, prpo_cmd_segment, "segments.jsonl");
  if (fuse->parsed()) return run_stream(o, prpo_cmd_fuse, "advantages.csv");
  if (analyze->parsed()) return run_stream(o, prpo_cmd_analyze, "collapse.csv");
  return run_train(o);
}
