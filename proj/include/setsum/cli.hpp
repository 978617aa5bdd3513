#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "setsum/data.hpp"
#include "setsum/regressor.hpp"
#include "setsum/trainer.hpp"

namespace setsum {

// Process exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitUnexpected = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitDivergence = 4,
};

struct ConfigEntry {
  std::string value;
  std::size_t line = 0;
};

// key=value lines, '#' starts a comment, keys may carry dotted section
// prefixes. Duplicate keys and lines without '=' are rejected with the line number.
std::map<std::string, ConfigEntry> parse_key_values(const std::string& text);

// Every setting a command can use, fully resolved (defaults filled in,
// relative paths made absolute against the config file's directory).
struct RunConfig {
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  bool record_timing = false;

  std::filesystem::path data_dir;
  std::filesystem::path manifest;
  SyntheticConfig synthetic;
  DatasetSizes sizes;
  LabelKind label_kind = LabelKind::count;
  PreprocessConfig preprocess;

  ArchitectureConfig architecture;  // input_shape derived from the preprocessed image
  TrainConfig train;
  std::optional<std::filesystem::path> init_model;

  Split eval_split = Split::test;
  CurveSettings curve;
};

// Throws ConfigError naming the offending key (and line when known).
RunConfig resolve_run_config(const std::string& text, const std::filesystem::path& base_dir,
                             std::optional<std::uint64_t> seed_override = std::nullopt);
RunConfig load_run_config(const std::filesystem::path& path,
                          std::optional<std::uint64_t> seed_override = std::nullopt);

// The resolved config as key=value text; feeding it back resolves to the same RunConfig.
std::string render_run_config(const RunConfig& config);

struct CommandOptions {
  std::filesystem::path config_path;
  std::optional<std::filesystem::path> model_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
};

// Each command reports progress on `out`, diagnostics on `err`, and returns an ExitCode.
int cmd_generate(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_train(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_eval(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_curve(const CommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace setsum
