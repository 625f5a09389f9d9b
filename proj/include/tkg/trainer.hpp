#pragma once
// Chronological training loop: per-timestamp batches in time order, one
// adaptive-moment step per timestamp, memory bank rebuilt from scratch at
// every epoch start, early stopping on validation MRR.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "tkg/evaluator.hpp"
#include "tkg/model.hpp"

namespace tkg {

// Adam with bias correction; moments keyed by parameter position and kept
// across epochs.
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  uint64_t t = 0;
  std::vector<Tensor> m1, m2;

  void step(std::vector<Param>& params, const std::vector<Tensor>& grads);
};

struct TrainConfig {
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  double lr = 1e-3;
  std::string early_metric = "all"; // or "emerging"
  std::ostream* log = nullptr;      // optional per-epoch progress lines
};

struct EpochRow {
  std::size_t epoch = 0; // 1-based
  double train_loss = 0.0;
  double valid_mrr_emerging = 0.0;
  double valid_mrr_all = 0.0;
  double seconds = 0.0; // training pass only
  std::size_t param_count = 0;
};

struct FitResult {
  std::vector<EpochRow> curve;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  double best_valid_mrr_all = 0.0;
  double best_valid_mrr_emerging = 0.0;
  std::size_t epochs_run = 0;
};

// One pass over the training split with gradient steps; the caller resets
// state first. Returns the mean per-timestamp loss.
double train_epoch(Model& model, Adam& opt, std::size_t epoch_index);

// Full protocol: train, validate with a fresh no-grad replay each epoch, keep
// the best parameters (restored into the model before returning).
FitResult fit(Model& model, const TrainConfig& tc);

void write_curve_csv(const std::vector<EpochRow>& curve, const std::string& path);

} // namespace tkg
