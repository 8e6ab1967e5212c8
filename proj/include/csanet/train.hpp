#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "csanet/config.hpp"
#include "csanet/eval.hpp"
#include "csanet/loss.hpp"
#include "csanet/model.hpp"
#include "csanet/random.hpp"
#include "csanet/synth.hpp"

namespace csanet {

/// Raised when training produces a non-finite loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

struct TrainState {
  int epoch = 0;
  long step = 0;
  double lr = 0.0;
  /// Negative until the first validation.
  double best_val_ap = -1.0;
  Rng rng;
  std::vector<int> order;
  std::size_t cursor = 0;
};

/// Network inputs and targets of one batch.
struct Batch {
  Tensor images;   // [N, 3, H, W]
  Tensor targets;  // [N, 17, H/4, W/4]
  Tensor mask;     // [N, 17, 1, 1]
};

Batch make_batch(std::span<const SampleRecord> samples, double sigma);

/// Training split and validation split as configured: read from the
/// configured directory, or generated in memory.
Dataset load_split(const RunConfig& cfg, Split split);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     const RunConfig& cfg, const TrainState& state);
/// Restores parameters, optimizer moments, buffers and training state into
/// a store built from `cfg.model`. Fails with a description of every config
/// and shape difference if the checkpoint does not fit.
TrainState load_checkpoint(const std::filesystem::path& path, ParameterStore& store,
                           const ModelConfig& model);
/// Full configuration stored in a checkpoint.
RunConfig checkpoint_config(const std::filesystem::path& path);

std::string format_log_line(long step, const LossBreakdown& loss, double lr);

class Trainer {
 public:
  Trainer(const RunConfig& cfg, Dataset train, Dataset val = {});

  const RunConfig& config() const { return cfg_; }
  PoseModel& model() { return *model_; }
  const PoseModel& model() const { return *model_; }
  ParameterStore& store() { return store_; }
  const TrainState& state() const { return state_; }
  const Dataset& train_set() const { return train_; }
  const Dataset& val_set() const { return val_; }

  bool finished() const;
  double lr_for_epoch(int epoch) const;

  /// One optimizer step on the next batch of the shuffled epoch order.
  LossBreakdown step();
  EvalResult evaluate(std::span<const SampleRecord> samples, bool flip_test) const;

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

  /// The full loop: steps, logging, periodic validation and checkpoints in
  /// cfg.io.out_dir, and the final report. Log lines go to `log` and to
  /// out_dir/train.log.
  void run(std::ostream& log);

 private:
  RunConfig cfg_;
  Dataset train_;
  Dataset val_;
  ParameterStore store_;
  std::unique_ptr<PoseModel> model_;
  TrainState state_;
};

}  // namespace csanet
