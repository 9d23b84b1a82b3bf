#include "prpo/prpo.h"

#include <cstring>
#include <fstream>
#include <iostream>
#include <memory>
#include <new>

#include "prpo/collapse.hpp"
#include "prpo/commands.hpp"
#include "prpo/config.hpp"
#include "prpo/entropy_seg.hpp"
#include "prpo/reward_fusion.hpp"
#include "prpo/trainer.hpp"

struct prpo_config {
  prpo::ExperimentConfig cfg;
};

struct prpo_trainer {
  std::unique_ptr<prpo::Trainer> trainer;
};

namespace {

thread_local std::string g_last_error;

prpo_status fail(prpo_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

prpo_status ok() {
  g_last_error.clear();
  return PRPO_OK;
}

prpo_status from_error(const prpo::Error& e) {
  switch (e.code()) {
    case prpo::ErrorCode::Config: return fail(PRPO_ERR_CONFIG, e.what());
    case prpo::ErrorCode::Io: return fail(PRPO_ERR_IO, e.what());
    default:
      return fail(PRPO_ERR_VALIDATION, std::string(prpo::to_string(e.code())) + ": " + e.what());
  }
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
prpo_status guarded(F&& body) {
  try {
    return body();
  } catch (const prpo::Error& e) {
    return from_error(e);
  } catch (const std::bad_alloc&) {
    return fail(PRPO_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(PRPO_ERR_INTERNAL, e.what());
  }
}

prpo_status report(const prpo::CommandReport& rep) {
  if (rep.ok()) return ok();
  std::string msg;
  for (const auto& d : rep.diagnostics) {
    if (!msg.empty()) msg += '\n';
    msg += d;
  }
  return fail(PRPO_ERR_VALIDATION, msg);
}

template <typename Cmd>
prpo_status run_stream_command(const prpo_config* cfg, const char* in_path, const char* out_path,
                               Cmd cmd) {
  if (!cfg) return fail(PRPO_ERR_INVALID_ARGUMENT, "config is NULL");
  return guarded([&] {
    cfg->cfg.validate();
    std::ifstream fin;
    if (in_path) {
      fin.open(in_path, std::ios::binary);
      if (!fin) return fail(PRPO_ERR_IO, std::string(in_path) + ": cannot open for reading");
    }
    std::ofstream fout;
    if (out_path) {
      fout.open(out_path, std::ios::binary);
      if (!fout) return fail(PRPO_ERR_IO, std::string(out_path) + ": cannot open for writing");
    }
    std::istream& in = in_path ? static_cast<std::istream&>(fin) : std::cin;
    std::ostream& out = out_path ? static_cast<std::ostream&>(fout) : std::cout;
    const prpo::CommandReport rep = cmd(in, out, cfg->cfg);
    out.flush();
    if (!out) return fail(PRPO_ERR_IO, "write failed");
    return report(rep);
  });
}

}  // namespace

extern "C" {

const char* prpo_last_error(void) { return g_last_error.c_str(); }

const char* prpo_version(void) { return "0.1.0"; }

prpo_status prpo_config_new(prpo_config** out) {
  if (!out) return fail(PRPO_ERR_INVALID_ARGUMENT, "out is NULL");
  return guarded([&] {
    *out = new prpo_config{};
    return ok();
  });
}

prpo_status prpo_config_load(const char* path, prpo_config** out) {
  if (!path || !out) return fail(PRPO_ERR_INVALID_ARGUMENT, "path or out is NULL");
  return guarded([&] {
    *out = new prpo_config{prpo::load_config(path)};
    return ok();
  });
}

prpo_status prpo_config_parse(const char* text, prpo_config** out) {
  if (!text || !out) return fail(PRPO_ERR_INVALID_ARGUMENT, "text or out is NULL");
  return guarded([&] {
    *out = new prpo_config{prpo::parse_config(text)};
    return ok();
  });
}

void prpo_config_free(prpo_config* cfg) { delete cfg; }

prpo_status prpo_config_set(prpo_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return fail(PRPO_ERR_INVALID_ARGUMENT, "NULL argument");
  return guarded([&] {
    prpo::set_config_value(cfg->cfg, key, value);
    return ok();
  });
}

prpo_status prpo_config_set_seed(prpo_config* cfg, uint64_t seed) {
  if (!cfg) return fail(PRPO_ERR_INVALID_ARGUMENT, "config is NULL");
  cfg->cfg.train.seed = seed;
  return ok();
}

prpo_status prpo_config_set_method(prpo_config* cfg, const char* method) {
  if (!cfg || !method) return fail(PRPO_ERR_INVALID_ARGUMENT, "NULL argument");
  return prpo_config_set(cfg, "train.method", method);
}

prpo_status prpo_config_dump(const prpo_config* cfg, char** out) {
  if (!cfg || !out) return fail(PRPO_ERR_INVALID_ARGUMENT, "NULL argument");
  return guarded([&] {
    const std::string text = prpo::dump_config(cfg->cfg);
    char* buf = new char[text.size() + 1];
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *out = buf;
    return ok();
  });
}

void prpo_string_free(char* s) { delete[] s; }

prpo_status prpo_trainer_new(const prpo_config* cfg, prpo_trainer** out) {
  if (!cfg || !out) return fail(PRPO_ERR_INVALID_ARGUMENT, "NULL argument");
  return guarded([&] {
    *out = new prpo_trainer{std::make_unique<prpo::Trainer>(cfg->cfg)};
    return ok();
  });
}

void prpo_trainer_free(prpo_trainer* t) { delete t; }

prpo_status prpo_trainer_run_epoch(prpo_trainer* t, prpo_epoch_metrics* out) {
  if (!t || !out) return fail(PRPO_ERR_INVALID_ARGUMENT, "NULL argument");
  return guarded([&] {
    const prpo::EpochMetrics m = t->trainer->run_epoch();
    *out = {m.epoch, m.train_accuracy, m.mean_gen_length, m.mean_entropy, m.collapse_rate, m.loss};
    return ok();
  });
}

prpo_status prpo_trainer_greedy_accuracy(const prpo_trainer* t, double* out) {
  if (!t || !out) return fail(PRPO_ERR_INVALID_ARGUMENT, "NULL argument");
  return guarded([&] {
    *out = t->trainer->greedy_accuracy();
    return ok();
  });
}

prpo_status prpo_trainer_save(const prpo_trainer* t, const char* path) {
  if (!t || !path) return fail(PRPO_ERR_INVALID_ARGUMENT, "NULL argument");
  return guarded([&] {
    prpo::save_checkpoint(t->trainer->policy(), path);
    return ok();
  });
}

prpo_status prpo_cmd_segment(const prpo_config* cfg, const char* in_path, const char* out_path) {
  return run_stream_command(cfg, in_path, out_path, prpo::cmd_segment);
}

prpo_status prpo_cmd_fuse(const prpo_config* cfg, const char* in_path, const char* out_path) {
  return run_stream_command(cfg, in_path, out_path, prpo::cmd_fuse);
}

prpo_status prpo_cmd_analyze(const prpo_config* cfg, const char* in_path, const char* out_path) {
  return run_stream_command(cfg, in_path, out_path, prpo::cmd_analyze);
}

prpo_status prpo_cmd_train(const prpo_config* cfg, const char* out_dir) {
  if (!cfg || !out_dir) return fail(PRPO_ERR_INVALID_ARGUMENT, "NULL argument");
  return guarded([&] {
    prpo::cmd_train(cfg->cfg, out_dir);
    return ok();
  });
}

prpo_status prpo_segment_entropy(const double* entropies, size_t n, size_t start, int k,
                                 int min_gap, size_t* bounds, size_t capacity, size_t* count) {
  if (!entropies || !count || (capacity > 0 && !bounds)) {
    return fail(PRPO_ERR_INVALID_ARGUMENT, "NULL argument");
  }
  return guarded([&] {
    const auto segs = prpo::segment_by_entropy({entropies, n}, start, n, k, min_gap);
    *count = segs.size();
    if (segs.size() > capacity) {
      return fail(PRPO_ERR_INVALID_ARGUMENT, "bounds buffer holds " + std::to_string(capacity) +
                                                 " segments, need " + std::to_string(segs.size()));
    }
    for (std::size_t i = 0; i < segs.size(); ++i) {
      bounds[2 * i] = segs[i].start;
      bounds[2 * i + 1] = segs[i].end;
    }
    return ok();
  });
}

prpo_status prpo_grpo_advantage(const double* rewards, size_t n, double eps, double* out) {
  if (!rewards || !out) return fail(PRPO_ERR_INVALID_ARGUMENT, "NULL argument");
  return guarded([&] {
    const auto adv = prpo::grpo_advantage(std::span<const double>(rewards, n), eps);
    std::copy(adv.begin(), adv.end(), out);
    return ok();
  });
}

prpo_status prpo_detect_collapse(const double* adv, size_t n, int* holds, size_t* t_star) {
  if ((!adv && n > 0) || !holds || !t_star) return fail(PRPO_ERR_INVALID_ARGUMENT, "NULL argument");
  return guarded([&] {
    prpo::AdvantageVector v{std::vector<double>(adv, adv + n)};
    *holds = 0;
    *t_star = n;
    for (const auto& r : prpo::detect_collapse(v)) {
      if (r.condition_holds) {
        *holds = 1;
        *t_star = r.t_star;
        break;
      }
    }
    return ok();
  });
}

}  // extern "C"
