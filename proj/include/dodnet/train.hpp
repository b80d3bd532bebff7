#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dodnet/checkpoint.hpp"
#include "dodnet/model.hpp"
#include "dodnet/optim.hpp"
#include "dodnet/synth.hpp"

namespace dodnet {

struct Dataset {
  std::vector<VolumeCase> train;
  std::vector<VolumeCase> val;
};

/// Reads every volume listed in a manifest; paths are relative to the manifest.
Dataset load_dataset(const std::string& manifest_path);

/// Generates cases in memory; seeds are derived from `seed`, task and index.
Dataset synthetic_dataset(const std::vector<std::size_t>& tasks, std::size_t train_per_task,
                          std::size_t val_per_task, const Extent3& shape, std::uint64_t seed);

/// Seed used for the i-th case of a task in a split (shared with `gen`).
std::uint64_t case_seed(std::uint64_t seed, std::size_t task, std::size_t index, bool val);

struct StepRecord {
  std::size_t step = 0;
  std::size_t task = 0;
  double loss_dice = 0.0;
  double loss_ce = 0.0;
  double lr = 0.0;
  double total() const { return loss_dice + loss_ce; }
};

struct EpochRow {
  std::size_t epoch = 0;
  std::size_t task = 0;
  double loss_dice = 0.0;
  double loss_ce = 0.0;
  double val_dice_organ = 0.0;  // NaN when not evaluated or not labeled
  double val_dice_tumor = 0.0;
};

struct TaskDice {
  std::size_t task = 0;
  double organ = 0.0;  // mean over cases; NaN when the task has no organ labels
  double tumor = 0.0;
};

/// Mean Dice per task on `cases` with sliding-window inference (stride window/2).
std::vector<TaskDice> evaluate(const TransDoDNet<float>& model, const std::vector<VolumeCase>& cases,
                               const Extent3& window);

/// Mean of organ and tumor Dice over every labeled (task, channel) pair.
double mean_dice(const std::vector<TaskDice>& d);

class Trainer {
 public:
  Trainer(TransDoDNet<float>& model, const TrainConfig& cfg, Dataset data);

  /// One optimiser step on a batch of one task (round-robin over tasks).
  StepRecord step();
  bool done() const { return state_.step >= cfg_.max_steps; }

  /// Runs to max_steps; calls `on_epoch` with the rows of each finished epoch.
  void run(const std::function<void(const std::vector<EpochRow>&)>& on_epoch = {});

  const TrainState& state() const { return state_; }
  void set_state(const TrainState& s);
  AdamW<float>& optimizer() { return opt_; }
  const std::vector<StepRecord>& history() const { return history_; }
  const std::vector<std::size_t>& tasks() const { return tasks_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  std::vector<EpochRow> epoch_rows(std::size_t epoch, std::size_t first_step, bool validate);

  TransDoDNet<float>& model_;
  TrainConfig cfg_;
  Dataset data_;
  AdamW<float> opt_;
  Rng rng_;
  TrainState state_;
  std::vector<std::size_t> tasks_;
  std::vector<std::vector<std::size_t>> cases_by_task_;
  std::vector<StepRecord> history_;
};

void write_metrics_csv(const std::string& path, const std::vector<EpochRow>& rows);

}  // namespace dodnet
