#include <doctest.h>

#include <algorithm>
#include <set>

#include "gridedit/errors.hpp"
#include "gridedit/trainer.hpp"
#include "test_support.hpp"

using namespace gridedit;

namespace {

TinyFlowNetConfig net_config(int tile) {
  TinyFlowNetConfig c;
  c.tile_size = tile;
  return c;
}

TinyFlowNetConfig small_net(int tile) {
  TinyFlowNetConfig c;
  c.tile_size = tile;
  c.channels = 8;
  c.layers = 3;
  c.time_embed_dim = 4;
  return c;
}

}  // namespace

TEST_CASE("config validation and optimizer names") {
  CHECK_NOTHROW(TrainConfig{}.validate());
  TrainConfig c;
  CHECK(c.epochs == 500);
  CHECK(c.batch_size == 16);
  CHECK(c.learning_rate == 1e-3);
  CHECK(c.optimizer == OptimizerKind::kAdam);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epochs = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_optimizer("sgd") == OptimizerKind::kSgd);
  CHECK(parse_optimizer(optimizer_name(OptimizerKind::kAdam)) == OptimizerKind::kAdam);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), ConfigError);
}

TEST_CASE("training pairs keep each grid with its own condition") {
  const Dataset ds = generate_dataset(3, 1, 8);
  const auto pairs = training_pairs(ds);
  REQUIRE(pairs.size() == 6);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(pairs[2 * i].grid == &ds.records[i].src_grid);
    CHECK(pairs[2 * i].cond == &ds.records[i].src_cond);
    CHECK(pairs[2 * i + 1].grid == &ds.records[i].tar_grid);
    CHECK(pairs[2 * i + 1].cond == &ds.records[i].tar_cond);
  }
}

TEST_CASE("batch sampling") {
  const Dataset ds = generate_dataset(4, 2, 8);
  const auto pairs = training_pairs(ds);
  NoiseStream rng(5, StreamTag::kTraining);
  const auto batch = sample_training_batch(pairs, rng, 8);
  REQUIRE(batch.size() == 8);
  std::set<double> ts;
  for (const auto& r : batch) {
    ts.insert(r.t);
    CHECK(r.t >= 0.0);
    CHECK(r.t < 1.0);
    CHECK(r.noise.tile_size() == 8);
    // The grid comes with its own condition view.
    const auto it = std::find_if(pairs.begin(), pairs.end(),
                                 [&](const TrainingPair& p) { return *p.grid == r.x0; });
    REQUIRE(it != pairs.end());
    CHECK(*it->cond == r.cond);
  }
  CHECK(ts.size() == 8);
  CHECK(batch[0].noise != batch[1].noise);

  NoiseStream again(5, StreamTag::kTraining);
  const auto batch2 = sample_training_batch(pairs, again, 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(batch[i].t == batch2[i].t);
    CHECK(batch[i].noise == batch2[i].noise);
    CHECK(batch[i].cond_noise == batch2[i].cond_noise);
    CHECK(batch[i].x0 == batch2[i].x0);
  }

  CHECK_THROWS_AS(sample_training_batch({}, rng, 4), DataError);
}

TEST_CASE("sampled times are uniform on average") {
  const Dataset ds = generate_dataset(1, 3, 8);
  const auto pairs = training_pairs(ds);
  NoiseStream rng(9, StreamTag::kTraining);
  double sum = 0.0;
  int n = 0;
  while (n < 10000) {
    for (const auto& r : sample_training_batch(pairs, rng, 100)) {
      sum += r.t;
      ++n;
    }
  }
  const double mean = sum / n;
  CHECK(mean >= 0.49);
  CHECK(mean <= 0.51);
}

TEST_CASE("zero learning rate keeps the parameters") {
  const Dataset ds = generate_dataset(2, 4, 8);
  TinyFlowNet net(small_net(8));
  const std::vector<double> before(net.parameters().begin(), net.parameters().end());
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 0.0;
  cfg.batch_size = 2;
  cfg.eval_records = 4;
  for (OptimizerKind k : {OptimizerKind::kAdam, OptimizerKind::kSgd}) {
    cfg.optimizer = k;
    const TrainResult r = train(net, ds, cfg);
    CHECK(std::equal(before.begin(), before.end(), net.parameters().begin()));
    CHECK(r.final_loss == r.initial_loss);
    CHECK(r.epoch_loss.size() == 5);
  }
}

TEST_CASE("training is deterministic") {
  const Dataset ds = generate_dataset(3, 5, 8);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 3;
  cfg.eval_records = 4;
  cfg.seed = 11;
  TinyFlowNet a(small_net(8));
  TinyFlowNet b(small_net(8));
  const TrainResult ra = train(a, ds, cfg);
  const TrainResult rb = train(b, ds, cfg);
  CHECK(ra.epoch_loss == rb.epoch_loss);
  CHECK(ra.final_loss == rb.final_loss);
  CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  for (double l : ra.epoch_loss) CHECK(l >= 0.0);

  cfg.seed = 12;
  TinyFlowNet c(small_net(8));
  CHECK(train(c, ds, cfg).epoch_loss != ra.epoch_loss);
}

TEST_CASE("callbacks fire per epoch and per checkpoint interval") {
  const Dataset ds = generate_dataset(2, 6, 8);
  TinyFlowNet net(small_net(8));
  TrainConfig cfg;
  cfg.epochs = 7;
  cfg.batch_size = 2;
  cfg.eval_records = 2;
  cfg.checkpoint_every = 3;
  std::vector<int> epochs;
  std::vector<int> checkpoints;
  train(net, ds, cfg,
        {[&](int e, double) { epochs.push_back(e); },
         [&](int e, const TinyFlowNet&) { checkpoints.push_back(e); }});
  CHECK(epochs == std::vector<int>{1, 2, 3, 4, 5, 6, 7});
  CHECK(checkpoints == std::vector<int>{3, 6});
}

TEST_CASE("tile size mismatch and divergence are reported") {
  const Dataset ds = generate_dataset(1, 7, 8);
  TinyFlowNet wrong(small_net(16));
  CHECK_THROWS_AS(train(wrong, ds, TrainConfig{}), ConfigError);

  TinyFlowNet net(small_net(8));
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.learning_rate = 1e12;
  cfg.batch_size = 2;
  cfg.eval_records = 2;
  CHECK_THROWS_AS(train(net, ds, cfg), NumericalError);
}

TEST_CASE("one-scene dataset: 200 epochs cut the loss below a quarter") {
  // Reference tile size and default architecture; about three minutes.
  const Dataset ds = generate_dataset(1, 2026, 32);
  TinyFlowNet net(net_config(32));
  TrainConfig cfg;
  cfg.epochs = 200;
  const TrainResult r = train(net, ds, cfg);
  INFO("initial " << r.initial_loss << " final " << r.final_loss);
  CHECK(r.final_loss < 0.25 * r.initial_loss);
}
