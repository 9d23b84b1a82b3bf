#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "prpo/trainer.hpp"

namespace prpo {

// INI-style experiment configuration with [fusion], [train] and [oracle]
// sections. Unknown sections or keys, malformed values and out-of-range
// values all throw Error{Config} with a "section.key: reason" message.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Sets one "section.key" entry from its textual value, with the same checks
// as the file parser. Does not re-run whole-config validation.
void set_config_value(ExperimentConfig& cfg, std::string_view dotted_key, std::string_view value);

// Every key with its current value, parseable by parse_config.
std::string dump_config(const ExperimentConfig& cfg);

}  // namespace prpo
