#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kegat/checkpoint.hpp"
#include "kegat/model.hpp"
#include "kegat/optim.hpp"

namespace kegat::trainkit {

struct TrainConfig {
  Schedule schedule = Schedule::desk();
  int batch_size = 2;
  std::uint64_t seed = 7;
  double adam_eps = 1e-6;
  double grad_clip = 0.0;     // global-norm clip; 0 disables
  double weight_decay = 0.0;  // L2 added to gradients
  int threads = 0;            // 0 keeps the OpenMP default

  // Keys lr_phase1, lr_phase2, epochs_phase1, epochs_phase2, batch_size,
  // seed, adam_eps, grad_clip, weight_decay, threads. Missing keys keep
  // defaults; unknown keys and bad values are a UsageError.
  static TrainConfig from_json(const std::string& text);
  std::string to_json() const;
};

struct EpochRecord {
  int phase = 0;
  int epoch = 0;
  std::int64_t steps = 0;  // optimizer steps so far, both phases
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
};
std::string to_json_line(const EpochRecord& r);

struct BatchStats {
  double loss = 0.0;
  double l1 = 0.0;  // batch mean reconstruction loss
  double l2 = 0.0;  // batch mean classification loss
};

// Loss of the batch: mean classification loss, or the uncertainty-weighted
// combination of the batch means when the reconstruction loss is enabled.
// Gradients of unfrozen tensors land in the store; frozen ones stay zero.
// Instances run in parallel; per-instance gradients are summed in index
// order, so the result does not depend on the thread count.
BatchStats compute_batch_gradients(model::Model& model, std::span<const model::PreparedInstance* const> batch,
                                   std::uint64_t dropout_seed = 0, double dropout_rate = 0.0);
// Same loss without dropout or gradients.
double batch_loss(const model::Model& model, std::span<const model::PreparedInstance* const> batch);

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> log;
  bool diverged = false;
  std::string failure;
};

// Phase 1 trains the head alone; the best dev checkpoint so far is loaded
// before phase 2 trains everything. Returns the best dev checkpoint overall.
// A non-finite loss or gradient stops training and returns the last good
// checkpoint with diverged = true.
TrainResult two_phase_train(model::Model& model, std::span<const model::PreparedInstance> train,
                            std::span<const model::PreparedInstance> dev, const TrainConfig& config,
                            const std::function<void(const EpochRecord&)>& on_epoch = {});

// Rebuilds a model from the metadata and parameters inside a checkpoint.
model::Model model_from_checkpoint(const Checkpoint& ckpt);
// Parameters plus model metadata, ready to save.
Checkpoint model_snapshot(const model::Model& model, const OptimizerState* opt = nullptr);

}  // namespace kegat::trainkit
