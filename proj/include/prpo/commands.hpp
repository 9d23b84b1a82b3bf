#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "prpo/config.hpp"

namespace prpo {

// Outcome of a record-oriented command. Records that fail validation are
// left out of the output and described in `diagnostics` ("line N: ...").
struct CommandReport {
  std::size_t records = 0;
  std::vector<std::string> diagnostics;

  bool ok() const { return diagnostics.empty(); }
};

// JSONL in, JSONL out: every record gains (or has replaced) a "segments"
// array of [start, end) pairs over its generated span. The random split
// draws from derive_seed(train.seed, {line}).
CommandReport cmd_segment(std::istream& in, std::ostream& out, const ExperimentConfig& cfg);

// JSONL with segment_scores in, CSV out with header
// prompt_id,position,z,beta,AF and one row per generated token. Records
// sharing group_id form one rollout group; rows follow input order.
// Records without "segments" are segmented as cmd_segment would.
CommandReport cmd_fuse(std::istream& in, std::ostream& out, const ExperimentConfig& cfg);

// Collapse table. Trajectory JSONL gives one row per record, using its
// "advantages" array when present and the process z from segment_scores
// otherwise. A metrics CSV gives one row per epoch. Both end with a
// "# collapse_rate=..." summary line.
CommandReport cmd_analyze(std::istream& in, std::ostream& out, const ExperimentConfig& cfg);

// Trains one run per split arm (train.splits, or train.split alone) and
// writes metrics.csv (single arm) or metrics_<split>.csv, config.ini and
// checkpoints/<split>/epoch_N.ckpt under out_dir.
void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

inline constexpr const char* kMetricsHeader =
    "epoch,method,accuracy,mean_gen_length,mean_entropy,collapse_rate,loss";

std::string metrics_row(const EpochMetrics& m);

// RFC 4180 field quoting: quoted only when it holds a comma, quote or newline.
std::string csv_field(const std::string& s);

}  // namespace prpo
