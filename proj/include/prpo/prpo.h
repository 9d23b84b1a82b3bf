#ifndef PRPO_PRPO_H
#define PRPO_PRPO_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PRPO_API __declspec(dllexport)
#else
#define PRPO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum prpo_status {
  PRPO_OK = 0,
  PRPO_ERR_VALIDATION = 1,  // bad record, score, segment or numeric input
  PRPO_ERR_CONFIG = 2,      // unreadable or invalid configuration
  PRPO_ERR_IO = 3,
  PRPO_ERR_INVALID_ARGUMENT = 4,  // NULL handle, bad buffer size, unknown name
  PRPO_ERR_INTERNAL = 5,
} prpo_status;

typedef struct prpo_config prpo_config;
typedef struct prpo_trainer prpo_trainer;

typedef struct prpo_epoch_metrics {
  int epoch;
  double train_accuracy;
  double mean_gen_length;
  double mean_entropy;
  double collapse_rate;
  double loss;
} prpo_epoch_metrics;

// Message for the last failing call on this thread; "" after success.
// Record-level diagnostics are joined with newlines.
PRPO_API const char* prpo_last_error(void);
PRPO_API const char* prpo_version(void);

// Configuration. Every setter validates its value; whole-config checks
// run when a trainer is created or a command runs.
PRPO_API prpo_status prpo_config_new(prpo_config** out);
PRPO_API prpo_status prpo_config_load(const char* path, prpo_config** out);
PRPO_API prpo_status prpo_config_parse(const char* text, prpo_config** out);
PRPO_API void prpo_config_free(prpo_config* cfg);
PRPO_API prpo_status prpo_config_set(prpo_config* cfg, const char* key, const char* value);
PRPO_API prpo_status prpo_config_set_seed(prpo_config* cfg, uint64_t seed);
PRPO_API prpo_status prpo_config_set_method(prpo_config* cfg, const char* method);
// INI text of the full configuration; *out is owned by the caller and
// released with prpo_string_free.
PRPO_API prpo_status prpo_config_dump(const prpo_config* cfg, char** out);
PRPO_API void prpo_string_free(char* s);

// Training.
PRPO_API prpo_status prpo_trainer_new(const prpo_config* cfg, prpo_trainer** out);
PRPO_API void prpo_trainer_free(prpo_trainer* t);
PRPO_API prpo_status prpo_trainer_run_epoch(prpo_trainer* t, prpo_epoch_metrics* out);
PRPO_API prpo_status prpo_trainer_greedy_accuracy(const prpo_trainer* t, double* out);
PRPO_API prpo_status prpo_trainer_save(const prpo_trainer* t, const char* path);

// File-level commands. A NULL input reads stdin, a NULL output writes stdout.
// VALIDATION means some records failed; the rest were still written.
PRPO_API prpo_status prpo_cmd_segment(const prpo_config* cfg, const char* in_path,
                                      const char* out_path);
PRPO_API prpo_status prpo_cmd_fuse(const prpo_config* cfg, const char* in_path,
                                   const char* out_path);
PRPO_API prpo_status prpo_cmd_analyze(const prpo_config* cfg, const char* in_path,
                                      const char* out_path);
PRPO_API prpo_status prpo_cmd_train(const prpo_config* cfg, const char* out_dir);

// Buffer-level helpers.

// Entropy-spike segmentation of [start, n). Writes up to `capacity` pairs
// into bounds as start0, end0, start1, end1, ...; *count receives the
// segment count (also when it exceeds capacity, with INVALID_ARGUMENT).
PRPO_API prpo_status prpo_segment_entropy(const double* entropies, size_t n, size_t start,
                                          int k, int min_gap, size_t* bounds, size_t capacity,
                                          size_t* count);

// GRPO advantages over n rewards.
PRPO_API prpo_status prpo_grpo_advantage(const double* rewards, size_t n, double eps,
                                         double* out);

// Collapse condition for one advantage vector: *holds is 1 when some
// position satisfies it, and *t_star is that position (or n when none).
PRPO_API prpo_status prpo_detect_collapse(const double* adv, size_t n, int* holds,
                                          size_t* t_star);

#ifdef __cplusplus
}
#endif

#endif
