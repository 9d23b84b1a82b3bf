#include "prpo/commands.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "prpo/collapse.hpp"
#include "prpo/format.hpp"

namespace prpo {
namespace {

using Json = nlohmann::ordered_json;

struct Line {
  std::size_t number = 0;
  std::string text;
};

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

std::vector<Line> read_lines(std::istream& in) {
  std::vector<Line> out;
  std::string text;
  std::size_t n = 0;
  while (std::getline(in, text)) {
    ++n;
    if (!blank(text)) out.push_back({n, text});
  }
  return out;
}

std::string diagnostic(std::size_t line, const Error& e) {
  return "line " + std::to_string(line) + ": " + to_string(e.code()) + ": " + e.what();
}

[[noreturn]] void parse_error(const std::string& what) { throw Error(ErrorCode::Parse, what); }

double real_field(const Json& v, const char* name) {
  if (!v.is_number()) parse_error(std::string(name) + " must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) parse_error(std::string(name) + " must be finite");
  return x;
}

std::vector<double> real_array(const Json& v, const char* name) {
  if (!v.is_array()) parse_error(std::string(name) + " must be an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(real_field(x, name));
  return out;
}

// One parsed TrajectoryRecord.
struct Record {
  std::size_t line = 0;
  Json json;
  std::string group_id;
  Trajectory tr;
  std::optional<SegmentSet> segments;
  std::optional<ProcessScores> scores;
  std::optional<AdvantageVector> advantages;
};

Record parse_record(const Line& line) {
  Record r;
  r.line = line.number;
  try {
    r.json = Json::parse(line.text);
  } catch (const Json::parse_error& e) {
    parse_error(std::string("invalid JSON: ") + e.what());
  }
  const Json& j = r.json;
  if (!j.is_object()) parse_error("record must be a JSON object");

  auto require = [&](const char* key) -> const Json& {
    auto it = j.find(key);
    if (it == j.end()) parse_error(std::string("missing field ") + key);
    return *it;
  };

  const Json& pid = require("prompt_id");
  if (!pid.is_string()) parse_error("prompt_id must be a string");
  r.tr.prompt_id = pid.get<std::string>();

  if (auto it = j.find("group_id"); it != j.end()) {
    if (!it->is_string()) parse_error("group_id must be a string");
    r.group_id = it->get<std::string>();
  } else {
    r.group_id = r.tr.prompt_id;
  }

  r.tr.entropies = real_array(require("entropies"), "entropies");
  if (r.tr.entropies.empty()) throw Error(ErrorCode::EmptySpan, "entropies is empty");

  const Json& gs = require("gen_start");
  if (!gs.is_number_integer() || gs.get<long long>() < 0) {
    parse_error("gen_start must be a non-negative integer");
  }
  r.tr.gen_start = gs.get<std::size_t>();
  if (r.tr.gen_start >= r.tr.entropies.size()) {
    throw Error(ErrorCode::EmptySpan, "gen_start leaves no generated tokens");
  }

  r.tr.outcome_reward = real_field(require("outcome_reward"), "outcome_reward");

  if (auto it = j.find("tokens"); it != j.end()) {
    if (!it->is_array()) parse_error("tokens must be an array of integers");
    for (const auto& t : *it) {
      if (!t.is_number_integer()) parse_error("tokens must be an array of integers");
      r.tr.tokens.push_back(t.get<int>());
    }
  }
  if (r.tr.tokens.empty()) {
    // Offline records may carry entropies only.
    r.tr.tokens.assign(r.tr.entropies.size(), 0);
  }
  validate_trajectory(r.tr);

  if (auto it = j.find("segments"); it != j.end()) {
    if (!it->is_array()) parse_error("segments must be an array of [start, end] pairs");
    std::vector<Segment> ranges;
    for (const auto& p : *it) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() ||
          !p[1].is_number_integer() || p[0].get<long long>() < 0) {
        parse_error("segments must be an array of [start, end] pairs");
      }
      ranges.push_back({p[0].get<std::size_t>(), p[1].get<std::size_t>()});
    }
    SegmentSet segs(std::move(ranges));
    if (segs.empty() || segs.start() != r.tr.gen_start || segs.end() != r.tr.size()) {
      throw Error(ErrorCode::InvalidSegments, "segments must tile the generated span");
    }
    r.segments = std::move(segs);
  }

  if (auto it = j.find("segment_scores"); it != j.end()) {
    r.scores = ProcessScores{real_array(*it, "segment_scores")};
  }
  if (auto it = j.find("advantages"); it != j.end()) {
    r.advantages = AdvantageVector{real_array(*it, "advantages")};
  }
  return r;
}

SegmentSet derive_segments(const Record& r, const ExperimentConfig& cfg) {
  if (r.segments) return *r.segments;
  return split_span(r.tr, cfg.train.split, cfg.fusion, derive_seed(cfg.train.seed, {r.line}));
}

SegmentSet checked_segments(const Record& r, const ExperimentConfig& cfg) {
  SegmentSet segs = derive_segments(r, cfg);
  if (r.scores && r.scores->size() != segs.size()) {
    throw Error(ErrorCode::ScoreCountMismatch,
                std::to_string(r.scores->size()) + " segment_scores for " +
                    std::to_string(segs.size()) + " segments");
  }
  return segs;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double parse_real(const std::string& s, std::size_t line, const char* column) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(ErrorCode::Parse, std::string(column) + " is not a number: '" + s + "'", line);
  }
  return v;
}

CommandReport analyze_metrics(const std::vector<Line>& lines, std::ostream& out) {
  CommandReport rep;
  const auto header = split_csv_line(lines.front().text);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"epoch", "method", "mean_gen_length", "collapse_rate"}) {
    if (!col.count(need)) {
      throw Error(ErrorCode::Parse,
                  "line " + std::to_string(lines.front().number) + ": missing column " + need,
                  lines.front().number);
    }
  }
  out << "epoch,method,collapse_rate,mean_gen_length,length_ratio\n";
  double first_len = 0.0;
  double rate_sum = 0.0;
  std::size_t epochs = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const Line& l = lines[i];
    const auto f = split_csv_line(l.text);
    if (f.size() != header.size()) {
      rep.diagnostics.push_back("line " + std::to_string(l.number) + ": Parse: expected " +
                                std::to_string(header.size()) + " fields, got " +
                                std::to_string(f.size()));
      continue;
    }
    try {
      for (const char* name : {"epoch", "accuracy", "mean_entropy", "loss"}) {
        if (col.count(name)) parse_real(f[col[name]], l.number, name);
      }
      const double rate = parse_real(f[col["collapse_rate"]], l.number, "collapse_rate");
      const double len = parse_real(f[col["mean_gen_length"]], l.number, "mean_gen_length");
      if (epochs == 0) first_len = len;
      const double ratio = first_len > 0.0 ? len / first_len : 0.0;
      out << csv_field(f[col["epoch"]]) << ',' << csv_field(f[col["method"]]) << ','
          << format_double(rate) << ',' << format_double(len) << ',' << format_double(ratio)
          << '\n';
      rate_sum += rate;
      ++epochs;
    } catch (const Error& e) {
      rep.diagnostics.push_back(diagnostic(l.number, e));
    }
  }
  rep.records = epochs;
  out << "# collapse_rate=" << format_double(epochs ? rate_sum / static_cast<double>(epochs) : 0.0)
      << " epochs=" << epochs << '\n';
  return rep;
}

AdvantageVector analysis_advantages(const Record& r, const ExperimentConfig& cfg) {
  if (r.advantages) {
    if (r.advantages->size() != r.tr.gen_length()) {
      throw Error(ErrorCode::MisalignedAdvantage,
                  std::to_string(r.advantages->size()) + " advantages for " +
                      std::to_string(r.tr.gen_length()) + " generated tokens");
    }
    return *r.advantages;
  }
  if (!r.scores) {
    throw Error(ErrorCode::MissingProcessScores, "record has neither advantages nor segment_scores");
  }
  const SegmentSet segs = checked_segments(r, cfg);
  const ProcessScores scores[] = {*r.scores};
  return normalize_process(*r.scores, segs, cfg.fusion, process_prior(cfg.fusion, scores));
}

}  // namespace

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string metrics_row(const EpochMetrics& m) {
  std::string s = std::to_string(m.epoch);
  s += ',';
  s += to_string(m.method);
  for (double v : {m.train_accuracy, m.mean_gen_length, m.mean_entropy, m.collapse_rate, m.loss}) {
    s += ',';
    s += format_double(v);
  }
  return s;
}

CommandReport cmd_segment(std::istream& in, std::ostream& out, const ExperimentConfig& cfg) {
  CommandReport rep;
  for (const Line& line : read_lines(in)) {
    ++rep.records;
    try {
      Record r = parse_record(line);
      // Existing segments are recomputed, which keeps the command idempotent.
      r.segments.reset();
      const SegmentSet segs = derive_segments(r, cfg);
      Json arr = Json::array();
      for (const Segment& s : segs.ranges()) arr.push_back({s.start, s.end});
      r.json["segments"] = std::move(arr);
      out << r.json.dump() << '\n';
    } catch (const Error& e) {
      rep.diagnostics.push_back(diagnostic(line.number, e));
    }
  }
  return rep;
}

CommandReport cmd_fuse(std::istream& in, std::ostream& out, const ExperimentConfig& cfg) {
  CommandReport rep;
  std::vector<Record> records;
  for (const Line& line : read_lines(in)) {
    ++rep.records;
    try {
      records.push_back(parse_record(line));
    } catch (const Error& e) {
      rep.diagnostics.push_back(diagnostic(line.number, e));
    }
  }

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, fresh] = groups.try_emplace(records[i].group_id);
    if (fresh) order.push_back(records[i].group_id);
    it->second.push_back(i);
  }

  // Per-record output rows, filled group by group, emitted in input order.
  std::vector<std::string> rows(records.size());
  for (const std::string& gid : order) {
    const auto& members = groups[gid];
    try {
      if (members.size() < 2) {
        throw Error(ErrorCode::IncompleteGroup,
                    "group '" + gid + "' has " + std::to_string(members.size()) + " record");
      }
      RolloutGroup group{gid, {}};
      std::vector<SegmentSet> segs;
      std::vector<ProcessScores> scores;
      for (std::size_t i : members) {
        const Record& r = records[i];
        try {
          group.trajectories.push_back(r.tr);
          segs.push_back(checked_segments(r, cfg));
          if (r.scores) {
            scores.push_back(*r.scores);
          } else if (needs_process_scores(cfg.train.method)) {
            throw Error(ErrorCode::MissingProcessScores, "record has no segment_scores");
          }
        } catch (const Error& e) {
          throw Error(e.code(), e.what(), r.line);
        }
      }
      const auto adv = compute_advantages(group, cfg.train.method, cfg.fusion, segs, scores);
      for (std::size_t j = 0; j < members.size(); ++j) {
        const Record& r = records[members[j]];
        const std::string pid = csv_field(r.tr.prompt_id);
        std::string& text = rows[members[j]];
        const std::string beta = format_double(adv[j].beta);
        for (std::size_t t = 0; t < adv[j].values.size(); ++t) {
          text += pid;
          text += ',';
          text += std::to_string(r.tr.gen_start + t);
          text += ',';
          text += format_double(adv[j].z[t]);
          text += ',';
          text += beta;
          text += ',';
          text += format_double(adv[j].values[t]);
          text += '\n';
        }
      }
    } catch (const Error& e) {
      const std::size_t line = e.index() != kNoIndex ? e.index() : records[members.front()].line;
      rep.diagnostics.push_back(diagnostic(line, e));
    }
  }

  out << "prompt_id,position,z,beta,AF\n";
  for (const std::string& text : rows) out << text;
  return rep;
}

CommandReport cmd_analyze(std::istream& in, std::ostream& out, const ExperimentConfig& cfg) {
  const std::vector<Line> lines = read_lines(in);
  if (!lines.empty() && lines.front().text.find_first_not_of(" \t") != std::string::npos &&
      lines.front().text[lines.front().text.find_first_not_of(" \t")] != '{') {
    return analyze_metrics(lines, out);
  }

  CommandReport rep;
  out << "prompt_id,reports,t_star,a,b,condition_holds,delta_p_sign\n";
  std::size_t analyzed = 0;
  std::size_t collapsed = 0;
  for (const Line& line : lines) {
    ++rep.records;
    try {
      const Record r = parse_record(line);
      const auto reports = detect_collapse(analysis_advantages(r, cfg));
      const CollapseReport* pick = nullptr;
      for (const auto& c : reports) {
        if (c.condition_holds) {
          pick = &c;
          break;
        }
      }
      if (!pick && !reports.empty()) pick = &reports.front();
      out << csv_field(r.tr.prompt_id) << ',' << reports.size() << ',';
      if (pick) {
        out << pick->t_star << ',' << format_double(pick->a) << ',' << format_double(pick->b)
            << ',' << (pick->condition_holds ? "true" : "false") << ','
            << to_string(pick->delta_p_sign) << '\n';
      } else {
        out << ",,,false,\n";
      }
      ++analyzed;
      if (pick && pick->condition_holds) ++collapsed;
    } catch (const Error& e) {
      rep.diagnostics.push_back(diagnostic(line.number, e));
    }
  }
  const double rate = analyzed ? static_cast<double>(collapsed) / static_cast<double>(analyzed) : 0.0;
  out << "# collapse_rate=" << format_double(rate) << " trajectories=" << analyzed << '\n';
  return rep;
}

void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, out_dir.string() + ": " + ec.message());

  {
    std::ofstream ini(out_dir / "config.ini", std::ios::binary);
    if (!ini) throw Error(ErrorCode::Io, (out_dir / "config.ini").string() + ": cannot write");
    ini << dump_config(cfg);
  }

  const bool suite = !cfg.splits.empty();
  const std::vector<SplitStrategy> arms = suite ? cfg.splits : std::vector{cfg.train.split};
  for (SplitStrategy arm : arms) {
    ExperimentConfig arm_cfg = cfg;
    arm_cfg.train.split = arm;
    arm_cfg.splits.clear();

    const fs::path csv_path =
        out_dir / (suite ? std::string("metrics_") + to_string(arm) + ".csv" : "metrics.csv");
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw Error(ErrorCode::Io, csv_path.string() + ": cannot write");
    csv << kMetricsHeader << '\n';
    csv.flush();
    if (arm_cfg.train.epochs == 0) continue;

    const fs::path ckpt_dir = out_dir / "checkpoints" / to_string(arm);
    fs::create_directories(ckpt_dir, ec);
    if (ec) throw Error(ErrorCode::Io, ckpt_dir.string() + ": " + ec.message());

    Trainer trainer(arm_cfg);
    while (trainer.epoch() < arm_cfg.train.epochs) {
      const EpochMetrics m = trainer.run_epoch();
      csv << metrics_row(m) << '\n';
      csv.flush();
      save_checkpoint(trainer.policy(),
                      ckpt_dir / ("epoch_" + std::to_string(m.epoch) + ".ckpt"));
      if (early_stop(trainer.history(), arm_cfg.train.early_stop_patience)) break;
    }
    if (!csv) throw Error(ErrorCode::Io, csv_path.string() + ": write failed");
  }
}

}  // namespace prpo
