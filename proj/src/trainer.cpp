#include "gridedit/trainer.hpp"

#include <cmath>
#include <string>

#include "gridedit/errors.hpp"

namespace gridedit {
namespace {

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, std::size_t n)
      : kind_(kind), lr_(lr), m_(kind == OptimizerKind::kAdam ? n : 0, 0.0),
        v_(kind == OptimizerKind::kAdam ? n : 0, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    if (kind_ == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grad[i];
      return;
    }
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, t_);
    const double c2 = 1.0 - std::pow(beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1 * m_[i] + (1.0 - beta1) * grad[i];
      v_[i] = beta2 * v_[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    }
  }

 private:
  OptimizerKind kind_;
  double lr_;
  std::vector<double> m_;
  std::vector<double> v_;
  int t_ = 0;
};

}  // namespace

std::string_view optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint interval must be non-negative");
  if (steps_per_epoch < 1) throw ConfigError("steps per epoch must be positive");
  if (eval_records < 1) throw ConfigError("evaluation batch must be non-empty");
}

std::vector<TrainingPair> training_pairs(const Dataset& dataset) {
  std::vector<TrainingPair> pairs;
  pairs.reserve(2 * dataset.records.size());
  for (const auto& r : dataset.records) {
    pairs.push_back({&r.src_grid, &r.src_cond});
    pairs.push_back({&r.tar_grid, &r.tar_cond});
  }
  return pairs;
}

std::vector<TrainingRecord> sample_training_batch(std::span<const TrainingPair> pairs,
                                                  NoiseStream& rng, int batch_size) {
  if (pairs.empty()) throw DataError("cannot sample from an empty dataset");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  std::vector<TrainingRecord> batch;
  batch.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const TrainingPair& p = pairs[rng.index(pairs.size())];
    const double t = rng.uniform();
    MvGrid noise = rng.normal_like(*p.grid);
    ViewImage cond_noise = rng.normal_like(*p.cond);
    batch.push_back({*p.grid, *p.cond, t, std::move(noise), std::move(cond_noise)});
  }
  return batch;
}

std::vector<TrainingRecord> evaluation_batch(const Dataset& dataset, const TrainConfig& cfg) {
  const auto pairs = training_pairs(dataset);
  NoiseStream rng(cfg.seed, StreamTag::kEval);
  return sample_training_batch(pairs, rng, cfg.eval_records);
}

TrainResult train(TinyFlowNet& model, const Dataset& dataset, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks) {
  cfg.validate();
  if (dataset.tile_size != model.tile_size()) {
    throw ConfigError("dataset tile size " + std::to_string(dataset.tile_size) +
                      " does not match model tile size " + std::to_string(model.tile_size()));
  }
  const auto pairs = training_pairs(dataset);
  if (pairs.empty()) throw DataError("training dataset is empty");

  const auto eval = evaluation_batch(dataset, cfg);
  TrainResult result;
  result.initial_loss = flow_matching_loss(model, eval);

  NoiseStream rng(cfg.seed, StreamTag::kTraining);
  Optimizer opt(cfg.optimizer, cfg.learning_rate, model.parameter_count());
  std::vector<double> grad(model.parameter_count());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double sum = 0.0;
    for (int s = 0; s < cfg.steps_per_epoch; ++s) {
      const auto batch = sample_training_batch(pairs, rng, cfg.batch_size);
      const double loss = model.loss_and_gradient(batch, grad);
      bool finite = std::isfinite(loss);
      for (double g : grad) finite = finite && std::isfinite(g);
      if (!finite) {
        throw NumericalError("non-finite loss or gradient at epoch " + std::to_string(epoch) +
                                 " step " + std::to_string(s) + " (loss " +
                                 std::to_string(loss) + ")",
                             epoch);
      }
      sum += loss;
      opt.step(model.parameters(), grad);
    }
    const double mean = sum / cfg.steps_per_epoch;
    result.epoch_loss.push_back(mean);
    if (callbacks.on_epoch) callbacks.on_epoch(epoch, mean);
    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && callbacks.on_checkpoint) {
      callbacks.on_checkpoint(epoch, model);
    }
  }
  result.final_loss = flow_matching_loss(model, eval);
  return result;
}

}  // namespace gridedit
