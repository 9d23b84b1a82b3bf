#include "prpo/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "prpo/format.hpp"

namespace prpo {
namespace {

[[noreturn]] void bad(const std::string& path, const std::string& why) {
  throw Error(ErrorCode::Config, path + ": " + why);
}

template <typename T>
T parse_number(const std::string& path, std::string_view text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) {
    bad(path, "expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(const std::string& path, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  bad(path, "expected true/false, got '" + std::string(text) + "'");
}

int parse_int(const std::string& path, std::string_view text) {
  return parse_number<int>(path, text);
}

std::vector<SplitStrategy> parse_splits(const std::string& path, std::string_view text) {
  std::vector<SplitStrategy> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    std::string_view item = text.substr(pos, comma - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) {
      try {
        out.push_back(parse_split_strategy(item));
      } catch (const Error& e) {
        bad(path, e.what());
      }
    }
    pos = comma + 1;
  }
  return out;
}

std::string join_splits(const std::vector<SplitStrategy>& splits) {
  std::string s;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (i) s += ',';
    s += to_string(splits[i]);
  }
  return s;
}

struct Key {
  const char* path;
  std::function<void(ExperimentConfig&, const std::string&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define PRPO_INT(PATH, FIELD)                                                          \
  Key {                                                                                \
    PATH,                                                                              \
        [](ExperimentConfig& c, const std::string& p, std::string_view v) {            \
          c.FIELD = parse_int(p, v);                                                   \
        },                                                                             \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }              \
  }
#define PRPO_REAL(PATH, FIELD)                                                         \
  Key {                                                                                \
    PATH,                                                                              \
        [](ExperimentConfig& c, const std::string& p, std::string_view v) {            \
          c.FIELD = parse_number<double>(p, v);                                        \
        },                                                                             \
        [](const ExperimentConfig& c) { return format_double(c.FIELD); }               \
  }
#define PRPO_U64(PATH, FIELD)                                                          \
  Key {                                                                                \
    PATH,                                                                              \
        [](ExperimentConfig& c, const std::string& p, std::string_view v) {            \
          c.FIELD = parse_number<std::uint64_t>(p, v);                                 \
        },                                                                             \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }              \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      PRPO_INT("fusion.k_spikes", fusion.k_spikes),
      PRPO_INT("fusion.min_gap", fusion.min_gap),
      PRPO_REAL("fusion.prior_mean", fusion.prior_mean),
      PRPO_REAL("fusion.prior_std", fusion.prior_std),
      Key{"fusion.prior_mode",
          [](ExperimentConfig& c, const std::string& p, std::string_view v) {
            if (v == "predefined") {
              c.fusion.prior_mode = PriorMode::Predefined;
            } else if (v == "relative") {
              c.fusion.prior_mode = PriorMode::Relative;
            } else {
              bad(p, "expected predefined or relative, got '" + std::string(v) + "'");
            }
          },
          [](const ExperimentConfig& c) {
            return std::string(c.fusion.prior_mode == PriorMode::Relative ? "relative"
                                                                           : "predefined");
          }},
      PRPO_REAL("fusion.grpo_eps", fusion.grpo_eps),
      PRPO_INT("fusion.length_threshold", fusion.length_threshold),
      PRPO_REAL("fusion.pure_temperature", fusion.pure_temperature),

      Key{"train.method",
          [](ExperimentConfig& c, const std::string& p, std::string_view v) {
            try {
              c.train.method = parse_method(v);
            } catch (const Error& e) {
              bad(p, e.what());
            }
          },
          [](const ExperimentConfig& c) { return std::string(to_string(c.train.method)); }},
      PRPO_INT("train.rollout_n", train.rollout_n),
      PRPO_INT("train.batch_groups", train.batch_groups),
      PRPO_REAL("train.lr", train.lr),
      PRPO_REAL("train.kl_coeff", train.kl_coeff),
      PRPO_REAL("train.clip_ratio", train.clip_ratio),
      PRPO_INT("train.epochs", train.epochs),
      PRPO_INT("train.updates_per_epoch", train.updates_per_epoch),
      PRPO_INT("train.early_stop_patience", train.early_stop_patience),
      PRPO_U64("train.seed", train.seed),
      Key{"train.max_len",
          [](ExperimentConfig& c, const std::string& p, std::string_view v) {
            c.train.max_len = parse_number<std::size_t>(p, v);
          },
          [](const ExperimentConfig& c) { return std::to_string(c.train.max_len); }},
      Key{"train.split",
          [](ExperimentConfig& c, const std::string& p, std::string_view v) {
            try {
              c.train.split = parse_split_strategy(v);
            } catch (const Error& e) {
              bad(p, e.what());
            }
          },
          [](const ExperimentConfig& c) { return std::string(to_string(c.train.split)); }},
      Key{"train.splits",
          [](ExperimentConfig& c, const std::string& p, std::string_view v) {
            c.splits = parse_splits(p, v);
          },
          [](const ExperimentConfig& c) { return join_splits(c.splits); }},
      Key{"train.optimizer",
          [](ExperimentConfig& c, const std::string& p, std::string_view v) {
            if (v == "sgd") {
              c.train.optimizer = OptimizerKind::SGD;
            } else if (v == "adam") {
              c.train.optimizer = OptimizerKind::Adam;
            } else {
              bad(p, "expected sgd or adam, got '" + std::string(v) + "'");
            }
          },
          [](const ExperimentConfig& c) {
            return std::string(c.train.optimizer == OptimizerKind::Adam ? "adam" : "sgd");
          }},
      PRPO_REAL("train.adam_beta1", train.adam_beta1),
      PRPO_REAL("train.adam_beta2", train.adam_beta2),
      PRPO_REAL("train.adam_eps", train.adam_eps),
      PRPO_INT("train.ppo_epochs", train.ppo_epochs),
      PRPO_INT("train.warmup_steps", train.warmup_steps),
      PRPO_REAL("train.warmup_lr", train.warmup_lr),
      PRPO_INT("train.warmup_batch", train.warmup_batch),
      PRPO_U64("train.warmup_seed", train.warmup_seed),
      PRPO_INT("train.eval_tasks", train.eval_tasks),
      PRPO_U64("train.eval_seed", train.eval_seed),
      PRPO_INT("train.min_digits", train.min_digits),
      PRPO_INT("train.max_digits", train.max_digits),
      PRPO_INT("train.window", train.window),

      PRPO_REAL("oracle.noise_std", oracle.noise_std),
      Key{"oracle.hard_prefix",
          [](ExperimentConfig& c, const std::string& p, std::string_view v) {
            c.oracle.hard_prefix = parse_bool(p, v);
          },
          [](const ExperimentConfig& c) {
            return std::string(c.oracle.hard_prefix ? "true" : "false");
          }},
      PRPO_REAL("oracle.hard_prefix_factor", oracle.hard_prefix_factor),
  };
  return table;
}

#undef PRPO_INT
#undef PRPO_REAL
#undef PRPO_U64

const Key* find_key(std::string_view path) {
  for (const Key& k : keys()) {
    if (path == k.path) return &k;
  }
  return nullptr;
}

}  // namespace

void set_config_value(ExperimentConfig& cfg, std::string_view dotted_key, std::string_view value) {
  const Key* k = find_key(dotted_key);
  if (!k) bad(std::string(dotted_key), "unknown key");
  k->set(cfg, std::string(dotted_key), value);
}

ExperimentConfig parse_config(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::Config, "line " + std::to_string(e.line()) + ": " + e.message(),
                e.line());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) bad(section, "key outside a section");
    if (section != "fusion" && section != "train" && section != "oracle") {
      bad(section, "unknown section");
    }
    for (const auto& [key, node] : body) {
      set_config_value(cfg, section + "." + key, node.data());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Config, path.string() + ": cannot open config file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string dump_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const Key& k : keys()) {
    const std::string_view path = k.path;
    const auto dot = path.find('.');
    const std::string sec(path.substr(0, dot));
    if (sec != section) {
      if (!section.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += std::string(path.substr(dot + 1)) + " = " + k.get(cfg) + "\n";
  }
  return out;
}

}  // namespace prpo
