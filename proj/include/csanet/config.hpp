#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "csanet/model.hpp"
#include "csanet/synth.hpp"

namespace csanet {

/// Raised for invalid configurations; the message lists every violation.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

struct OptimConfig {
  double lr = 1e-3;
  std::vector<int> milestones{20, 26};
  double decay = 0.1;
  int batch_size = 8;
  int epochs = 30;
  /// Stop after this many optimizer steps; 0 means no limit.
  long max_steps = 0;
};

struct DataConfig {
  int train_size = 200;
  int val_size = 50;
  std::uint64_t seed = 0;
  Difficulty difficulty = Difficulty::easy;
  bool augment = true;
  /// Optional dataset directories; generated in memory when empty.
  std::string train_dir;
  std::string val_dir;
};

struct EvalConfig {
  bool flip_test = false;
  /// Validate every this many epochs; 0 validates only at the end.
  int interval = 5;
};

struct IoConfig {
  std::string out_dir = "runs/default";
  /// Checkpoint every this many steps; 0 writes only the final checkpoint.
  long checkpoint_interval = 0;
  long log_interval = 10;
};

struct RunConfig {
  ModelConfig model;
  OptimConfig optim;
  DataConfig data;
  EvalConfig eval;
  IoConfig io;
  std::uint64_t seed = 0;

  std::vector<std::string> violations() const;
  void validate() const;
};

/// Parses key=value lines with dotted section prefixes; '#' starts a
/// comment. Unknown keys and malformed values are errors, reported together.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Applies one key=value assignment on top of `cfg`.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Canonical text of the model section; stored in checkpoints.
std::string model_echo(const ModelConfig& m);
/// Canonical text of the whole configuration; parse_config reads it back.
std::string config_echo(const RunConfig& c);

/// Parsed key=value pairs of a canonical echo.
std::map<std::string, std::string> parse_echo(const std::string& text);

}  // namespace csanet
