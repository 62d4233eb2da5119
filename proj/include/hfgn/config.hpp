#pragma once

#include "hfgn/dataset.hpp"
#include "hfgn/eval.hpp"
#include "hfgn/model.hpp"
#include "hfgn/training.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hfgn {

/// Unknown key or unparsable value. The CLI maps this to exit code 1.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Every tunable the command line understands, with one master seed.
struct RunConfig {
    std::uint64_t seed = 2020;
    std::string data_dir = "data";
    ModelConfig model;
    TrainConfig train;
    SplitSpec split;
    SyntheticSpec synth;
    std::size_t min_user = 1;
    std::size_t min_outfit = 1;
    std::size_t fitb_count = 0;
    bool fitb_category_matched = false;

    /// Copies the master seed into every component, each on its own stream.
    void derive_seeds();
};

/// Names of all recognized keys, in a stable order.
const std::vector<std::string>& config_keys();

/// Sets one key; throws ConfigError on an unknown key or malformed value.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses `key = value` lines; '#' starts a comment. Throws ConfigError with path:line.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Current value of a key, formatted as it would be written in a config file.
std::string get_config_value(const RunConfig& cfg, const std::string& key);

std::string config_text(const RunConfig& cfg);

/// splitmix64 of seed and stream: independent sub-seeds from one master seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace hfgn
