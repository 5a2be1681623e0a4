#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "gridedit/errors.hpp"
#include "gridedit/schedule.hpp"
#include "gridedit/tiny_flow_net.hpp"
#include "test_support.hpp"

using namespace gridedit;
using gridedit::testing::normal_grid;
using gridedit::testing::random_grid;
using gridedit::testing::random_view;
using gridedit::testing::scratch_dir;

namespace {

TinyFlowNetConfig small_config(std::uint64_t seed = 3) {
  TinyFlowNetConfig c;
  c.tile_size = 8;
  c.layers = 3;
  c.channels = 6;
  c.time_embed_dim = 4;
  c.seed = seed;
  return c;
}

std::vector<TrainingRecord> fixed_batch(int tile, int n, std::uint64_t seed) {
  std::vector<TrainingRecord> batch;
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t s = seed * 100 + static_cast<std::uint64_t>(i) * 7;
    ViewImage cn = random_view(tile, s + 4, -2.0, 2.0);
    batch.push_back({random_grid(tile, s + 1), random_view(tile, s + 2), u(eng),
                     normal_grid(tile, s + 3), cn});
  }
  return batch;
}

// Returns a fixed grid regardless of input.
class ConstantModel final : public VelocityModel {
 public:
  explicit ConstantModel(MvGrid out) : out_(std::move(out)) {}
  MvGrid predict_raw(const MvGrid&, const ViewImage&, double) const override { return out_; }
  int tile_size() const override { return out_.tile_size(); }

 private:
  MvGrid out_;
};

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(TinyFlowNetConfig{}.validate());
  auto c = small_config();
  c.kernel = 4;
  CHECK_THROWS_AS(TinyFlowNet{c}, ConfigError);
  c = small_config();
  c.time_embed_dim = 3;
  CHECK_THROWS_AS(TinyFlowNet{c}, ConfigError);
  c = small_config();
  c.layers = 0;
  CHECK_THROWS_AS(TinyFlowNet{c}, ConfigError);
  c = small_config();
  c.tile_size = 4;
  CHECK_THROWS_AS(TinyFlowNet{c}, ConfigError);
}

TEST_CASE("parameter count follows the architecture") {
  const auto c = small_config();
  const TinyFlowNet net(c);
  const std::size_t k2 = 9;
  const std::size_t in = 6 + 4;
  const std::size_t expected = (6 * in * k2 + 6) + (6 * 6 * k2 + 6) + (3 * 6 * k2 + 3);
  CHECK(net.parameter_count() == expected);
}

TEST_CASE("initialisation is seeded") {
  const TinyFlowNet a(small_config(1));
  const TinyFlowNet b(small_config(1));
  const TinyFlowNet c(small_config(2));
  CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  CHECK_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));
}

TEST_CASE("time embedding is sin/cos pairs") {
  const TinyFlowNet net(small_config());
  const auto e = net.time_embedding(0.3);
  REQUIRE(e.size() == 4);
  CHECK(e[0] == doctest::Approx(std::sin(0.3)));
  CHECK(e[1] == doctest::Approx(std::cos(0.3)));
  CHECK(e[2] == doctest::Approx(std::sin(30.0)));
  CHECK(e[3] == doctest::Approx(std::cos(30.0)));
}

TEST_CASE("prediction has grid shape and rejects the wrong tile") {
  const TinyFlowNet net(small_config());
  const MvGrid v = net.predict_raw(random_grid(8, 1), random_view(8, 2), 0.5);
  CHECK(v.tile_size() == 8);
  CHECK(v.all_finite());
  CHECK_THROWS_AS(net.predict_raw(random_grid(16, 1), random_view(16, 2), 0.5), ShapeError);
}

TEST_CASE("flow matching loss examples") {
  const int tile = 8;
  SUBCASE("oracle output gives zero loss") {
    TrainingRecord r{random_grid(tile, 1), random_view(tile, 2), 0.4, normal_grid(tile, 3),
                     random_view(tile, 4)};
    const ConstantModel oracle(r.noise - r.x0);
    CHECK(flow_matching_loss(oracle, std::span(&r, 1)) == 0.0);
  }
  SUBCASE("zero output gives mean squared target") {
    auto batch = fixed_batch(tile, 3, 9);
    const ConstantModel zero{MvGrid(tile)};
    double expected = 0.0;
    for (const auto& r : batch) {
      const auto d = r.noise - r.x0;
      double sq = 0.0;
      for (double x : d.values()) sq += x * x;
      expected += sq / static_cast<double>(d.size());
    }
    expected /= 3.0;
    CHECK(flow_matching_loss(zero, batch) == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("prediction 1 against target 3 gives 4") {
    TrainingRecord r{MvGrid(tile), ViewImage(tile), 0.5, MvGrid::filled(tile, 3.0), ViewImage(tile)};
    const ConstantModel one(MvGrid::filled(tile, 1.0));
    CHECK(flow_matching_loss(one, std::span(&r, 1)) == 4.0);
  }
  SUBCASE("empty batch is rejected") {
    const ConstantModel zero{MvGrid(tile)};
    CHECK_THROWS_AS(flow_matching_loss(zero, std::span<const TrainingRecord>{}), ConfigError);
  }
}

TEST_CASE("loss_and_gradient loss agrees with flow_matching_loss") {
  const TinyFlowNet net(small_config());
  const auto batch = fixed_batch(8, 4, 5);
  std::vector<double> grad(net.parameter_count());
  const double l = net.loss_and_gradient(batch, grad);
  CHECK(l >= 0.0);
  CHECK(l == doctest::Approx(flow_matching_loss(net, batch)).epsilon(1e-12));
  std::vector<double> wrong(3);
  CHECK_THROWS_AS(net.loss_and_gradient(batch, wrong), ShapeError);
  CHECK_THROWS_AS(net.loss_and_gradient(std::span<const TrainingRecord>{}, grad), ConfigError);
}

TEST_CASE("analytic gradient matches central finite differences") {
  TinyFlowNet net(small_config(11));
  // Larger weights so the hidden activations are not all near-linear.
  for (double& p : net.parameters()) p *= 2.0;
  for (std::size_t i = net.parameter_count() - 3; i < net.parameter_count(); ++i) {
    net.parameters()[i] = 0.1;
  }
  const auto batch = fixed_batch(8, 2, 21);
  std::vector<double> grad(net.parameter_count());
  net.loss_and_gradient(batch, grad);

  std::vector<std::size_t> idx;
  std::mt19937_64 eng(4);
  std::uniform_int_distribution<std::size_t> pick(0, net.parameter_count() - 1);
  for (int i = 0; i < 60; ++i) idx.push_back(pick(eng));
  // Always include the output biases and a first-layer bias.
  for (std::size_t i = net.parameter_count() - 3; i < net.parameter_count(); ++i) idx.push_back(i);

  const double h = 1e-3;
  double diff_sq = 0.0;
  double ref_sq = 0.0;
  double worst = 0.0;
  for (std::size_t i : idx) {
    const double p0 = net.parameters()[i];
    net.parameters()[i] = p0 + h;
    const double up = flow_matching_loss(net, batch);
    net.parameters()[i] = p0 - h;
    const double down = flow_matching_loss(net, batch);
    net.parameters()[i] = p0;
    const double fd = (up - down) / (2.0 * h);
    diff_sq += (fd - grad[i]) * (fd - grad[i]);
    ref_sq += fd * fd;
    const double scale = std::max(std::abs(fd), std::abs(grad[i]));
    if (scale > 1e-6) worst = std::max(worst, std::abs(fd - grad[i]) / scale);
  }
  INFO("worst per-parameter relative error " << worst);
  CHECK(std::sqrt(diff_sq / ref_sq) < 1e-4);
  CHECK(worst < 1e-4);
}

TEST_CASE("gradient is deterministic") {
  const TinyFlowNet net(small_config());
  const auto batch = fixed_batch(8, 3, 8);
  std::vector<double> g1(net.parameter_count());
  std::vector<double> g2(net.parameter_count());
  const double l1 = net.loss_and_gradient(batch, g1);
  const double l2 = net.loss_and_gradient(batch, g2);
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("checkpoint round trip reproduces predictions bit-exactly") {
  const auto dir = scratch_dir("tfn_roundtrip");
  TinyFlowNet net(small_config(5));
  for (double& p : net.parameters()) p += 0.01;
  net.save(dir / "m.bin");
  const TinyFlowNet back = TinyFlowNet::load(dir / "m.bin");
  CHECK(back.config().seed == 5);
  CHECK(back.config().channels == 6);
  CHECK(std::equal(net.parameters().begin(), net.parameters().end(), back.parameters().begin()));
  const MvGrid z = random_grid(8, 1);
  const ViewImage c = random_view(8, 2);
  CHECK(net.predict_raw(z, c, 0.7) == back.predict_raw(z, c, 0.7));

  // Saving the loaded model gives the same bytes.
  back.save(dir / "again.bin");
  CHECK(slurp(dir / "m.bin") == slurp(dir / "again.bin"));
}

TEST_CASE("checkpoint loading validates the file") {
  const auto dir = scratch_dir("tfn_corrupt");
  TinyFlowNet(small_config()).save(dir / "m.bin");
  const auto good = slurp(dir / "m.bin");

  CHECK_THROWS_AS(TinyFlowNet::load(dir / "missing.bin"), DataError);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  dump(dir / "magic.bin", bad_magic);
  CHECK_THROWS_AS(TinyFlowNet::load(dir / "magic.bin"), DataError);

  auto bad_version = good;
  bad_version[8] = 9;
  dump(dir / "version.bin", bad_version);
  CHECK_THROWS_AS(TinyFlowNet::load(dir / "version.bin"), DataError);

  auto truncated = good;
  truncated.resize(good.size() - 8);
  dump(dir / "trunc.bin", truncated);
  CHECK_THROWS_AS(TinyFlowNet::load(dir / "trunc.bin"), DataError);

  auto trailing = good;
  trailing.push_back('x');
  dump(dir / "trail.bin", trailing);
  CHECK_THROWS_AS(TinyFlowNet::load(dir / "trail.bin"), DataError);

  // Same-length header edit that changes the architecture.
  std::string text(good.begin(), good.end());
  const auto pos = text.find("\"channels\":6");
  REQUIRE(pos != std::string::npos);
  text[pos + 11] = '7';
  dump(dir / "arch.bin", std::vector<char>(text.begin(), text.end()));
  CHECK_THROWS_AS(TinyFlowNet::load(dir / "arch.bin"), DataError);
}
