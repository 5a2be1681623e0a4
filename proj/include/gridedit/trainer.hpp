#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "gridedit/rng.hpp"
#include "gridedit/synth.hpp"
#include "gridedit/tiny_flow_net.hpp"

namespace gridedit {

enum class OptimizerKind { kSgd, kAdam };

std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);

/// An epoch is `steps_per_epoch` optimizer steps, each on a freshly
/// sampled batch. Records are drawn with replacement, so an epoch is a
/// reporting interval rather than a pass over the data.
struct TrainConfig {
  int epochs = 500;
  int batch_size = 16;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;
  int steps_per_epoch = 1;
  /// Records in the fixed held-aside batch used for initial/final loss.
  int eval_records = 64;

  void validate() const;
};

/// (grid, own condition view) pairs: every source and every edited scene.
struct TrainingPair {
  const MvGrid* grid;
  const ViewImage* cond;
};

std::vector<TrainingPair> training_pairs(const Dataset& dataset);

std::vector<TrainingRecord> sample_training_batch(std::span<const TrainingPair> pairs,
                                                  NoiseStream& rng, int batch_size);

struct TrainResult {
  std::vector<double> epoch_loss;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct TrainCallbacks {
  std::function<void(int epoch, double mean_loss)> on_epoch;
  std::function<void(int epoch, const TinyFlowNet& model)> on_checkpoint;
};

/// Fits `model` in place by conditional flow matching. Throws
/// NumericalError (step = epoch) on a non-finite loss or gradient.
TrainResult train(TinyFlowNet& model, const Dataset& dataset, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks = {});

/// The fixed batch train() reports initial/final loss on.
std::vector<TrainingRecord> evaluation_batch(const Dataset& dataset, const TrainConfig& cfg);

}  // namespace gridedit
