#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "herln/model.hpp"
#include "herln/training.hpp"

namespace herln {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a command needs. Defaults here, then the config file, then
/// command-line flags.
struct RunConfig {
  std::filesystem::path dataset_path;
  std::string dataset_name;  // optional subdirectory of dataset_path
  double dataset_fraction = 1.0;

  ModelConfig model;
  TrainConfig train;

  std::filesystem::path out = "runs";
  std::vector<std::uint64_t> seeds;  // multi-seed train; empty = train.seed only
  std::string mode = "filtered";     // raw | filtered
  std::string split = "test";        // train | valid | test
  std::filesystem::path checkpoint;
  std::filesystem::path partition;  // cached community file; empty = detect

  std::filesystem::path dataset_dir() const {
    return dataset_name.empty() ? dataset_path : dataset_path / dataset_name;
  }
};

/// `section.key` / value pairs in file order. Lines are `[section]`,
/// `key = value`, blank, or comments starting with '#' or ';'.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;
ConfigEntries parse_config_text(std::string_view text, const std::string& source = "config");

/// Sets one `section.key`. Throws ConfigError on unknown keys or bad values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
void apply_config(RunConfig& cfg, const ConfigEntries& entries);

RunConfig load_run_config(const std::filesystem::path& path);
/// Fully resolved configuration; feeding it back reproduces `cfg`.
std::string write_config(const RunConfig& cfg);

/// Every accepted `section.key`, in output order.
std::vector<std::string> config_keys();

std::vector<std::uint64_t> parse_seed_list(std::string_view text);

}  // namespace herln
