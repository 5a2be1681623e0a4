#include <doctest.h>

#include <cmath>
#include <random>

#include "gridedit/schedule.hpp"
#include "gridedit/velocity.hpp"
#include "test_support.hpp"

using namespace gridedit;
using gridedit::testing::normal_grid;
using gridedit::testing::random_grid;
using gridedit::testing::random_view;

namespace {

class ConditionalOnly final : public VelocityModel {
 public:
  MvGrid predict_raw(const MvGrid& z, const ViewImage&, double) const override { return z; }
  bool has_unconditional() const override { return false; }
  int tile_size() const override { return 8; }
};

LinearFlowModel make_linear(int tile, std::uint64_t seed) {
  return LinearFlowModel(GridLinearMap::random(seed), ViewToGridMap::random(seed + 1),
                         random_grid(tile, seed + 2, -0.5, 0.5));
}

struct McEstimate {
  double mean;
  double std_error;
};

// Self-normalised importance sampling of E[n - x | z_t = z] for scalar
// x ~ N(mu, s^2), n ~ N(0, 1): draw x from its prior, weight by the
// density of the implied noise n = (z - (1 - t) x) / t.
McEstimate monte_carlo_velocity(double z, double t, double mu, double s, int samples,
                                std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> prior(mu, s);
  const double a = 1.0 - t;
  std::vector<double> w(samples);
  std::vector<double> f(samples);
  double sw = 0.0;
  double swf = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double x = prior(eng);
    const double n = (z - a * x) / t;
    w[i] = std::exp(-0.5 * n * n);
    f[i] = n - x;
    sw += w[i];
    swf += w[i] * f[i];
  }
  const double est = swf / sw;
  double var = 0.0;
  for (int i = 0; i < samples; ++i) var += w[i] * w[i] * (f[i] - est) * (f[i] - est);
  return {est, std::sqrt(var) / sw};
}

}  // namespace

TEST_CASE("guidance weight 1 is exactly the raw prediction") {
  const LinearFlowModel m = make_linear(8, 1);
  const MvGrid z = random_grid(8, 5);
  const ViewImage c = random_view(8, 6);
  CHECK(predict(m, z, c, 0.4, 1.0) == m.predict_raw(z, c, 0.4));
}

TEST_CASE("guidance weight 0 is the null-condition prediction") {
  const LinearFlowModel m = make_linear(8, 2);
  const MvGrid z = random_grid(8, 7);
  const ViewImage c = random_view(8, 8);
  CHECK(predict(m, z, c, 0.4, 0.0) == m.predict_raw(z, null_view(8), 0.4));
}

TEST_CASE("linear model with w = 2 gives A z + b + 2 B cond") {
  const LinearFlowModel m = make_linear(8, 3);
  const MvGrid z = random_grid(8, 9);
  const ViewImage c = random_view(8, 10);
  const MvGrid expected = m.grid_map().apply(z) + m.offset() + 2.0 * m.cond_map().apply(c);
  const MvGrid got = predict(m, z, c, 0.3, 2.0);
  CHECK(max_abs_diff(got.values(), expected.values()) < 1e-12);
}

TEST_CASE("guided prediction is affine in w") {
  const GaussianFlowModel m(ViewToGridMap::random(4), 0.3, 8);
  const MvGrid z = random_grid(8, 11);
  const ViewImage c = random_view(8, 12);
  for (auto [w1, w2] : {std::pair{0.0, 2.0}, std::pair{1.5, 7.5}, std::pair{3.0, 3.5}}) {
    const MvGrid mid = predict(m, z, c, 0.6, 0.5 * (w1 + w2));
    const MvGrid avg = 0.5 * (predict(m, z, c, 0.6, w1) + predict(m, z, c, 0.6, w2));
    CHECK(max_abs_diff(mid.values(), avg.values()) < 1e-12);
  }
}

TEST_CASE("guidance needs an unconditional branch") {
  const ConditionalOnly m;
  const MvGrid z = random_grid(8, 1);
  const ViewImage c = random_view(8, 2);
  CHECK(predict(m, z, c, 0.5, 1.0) == z);
  CHECK_THROWS_AS(predict(m, z, c, 0.5, 2.0), ConfigError);
  CHECK_THROWS_AS(predict(m, z, c, 1.5, 1.0), ConfigError);
  CHECK_THROWS_AS(predict(m, z, c, 0.5, -1.0), ConfigError);
}

TEST_CASE("gaussian velocity endpoints") {
  const ViewToGridMap map = ViewToGridMap::random(21);
  const MvGrid z = random_grid(8, 13, -2.0, 2.0);
  const ViewImage c = random_view(8, 14);
  const MvGrid mean = map.apply(c);

  const MvGrid at_one = gaussian_velocity(z, c, 1.0, map, 0.2);
  CHECK(max_abs_diff(at_one.values(), (z - mean).values()) < 1e-14);

  const MvGrid at_zero = gaussian_velocity(z, c, 0.0, map, 0.2);
  CHECK(max_abs_diff(at_zero.values(), (-1.0 * z).values()) < 1e-14);

  CHECK_THROWS_AS(gaussian_velocity(z, c, 0.0, map, 0.0), ConfigError);
  CHECK_NOTHROW(gaussian_velocity(z, c, 0.5, map, 0.0));
  CHECK_THROWS_AS(GaussianFlowModel(map, 0.0, 8), ConfigError);
}

TEST_CASE("gaussian velocity: scalar mid-point example is zero and agrees with Monte Carlo") {
  const MvGrid z = MvGrid::filled(8, 1.0);
  const MvGrid v = gaussian_velocity(z, ViewImage(8), 0.5, ViewToGridMap::copy(), 1.0);
  for (double x : v.values()) CHECK(std::abs(x) < 1e-15);

  const McEstimate mc = monte_carlo_velocity(1.0, 0.5, 0.0, 1.0, 1'000'000, 99);
  CHECK(std::abs(mc.mean - 0.0) < 3.0 * mc.std_error);
}

TEST_CASE("gaussian velocity matches Monte Carlo for t in 0.1..0.9") {
  const double mu = 0.3;
  const double s = 0.5;
  const double zval = 0.2;
  const MvGrid z = MvGrid::filled(8, zval);
  const ViewImage cond = ViewImage::filled(8, mu);
  for (int k = 1; k <= 9; ++k) {
    const double t = 0.1 * k;
    const double closed = gaussian_velocity(z, cond, t, ViewToGridMap::copy(), s).values()[0];
    const McEstimate mc = monte_carlo_velocity(zval, t, mu, s, 1'000'000, 1000 + k);
    INFO("t = " << t << " closed " << closed << " mc " << mc.mean << " +- " << mc.std_error);
    CHECK(std::abs(closed - mc.mean) < 3.0 * mc.std_error);
  }
}

TEST_CASE("Euler integration of the oracle flow reproduces N(M cond, s^2)") {
  // Exact flow map of this Gaussian pair: n -> M cond + s n.
  const int tile = 8;
  const double s = 0.05;
  const int steps = 500;
  const int runs = 1000;
  const ViewToGridMap map = ViewToGridMap::random(7);
  const ViewImage cond = random_view(tile, 8);
  const MvGrid mean = map.apply(cond);
  const TimeGrid sched = make_schedule(steps, steps);

  std::vector<double> sum(mean.size(), 0.0);
  std::vector<double> sum_sq(mean.size(), 0.0);
  double worst_rel = 0.0;
  for (int r = 0; r < runs; ++r) {
    const MvGrid n = normal_grid(tile, 5000 + r);
    MvGrid x = n;
    for (double t : sched.times) x = euler_update(x, gaussian_velocity(x, cond, t, map, s), sched.dt);
    const MvGrid exact = mean + s * n;
    worst_rel = std::max(worst_rel, l2_norm((x - exact).values()) / l2_norm(exact.values()));
    auto xv = x.values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      sum[i] += xv[i];
      sum_sq[i] += xv[i] * xv[i];
    }
  }
  CHECK(worst_rel < 0.02);

  // Per-element mean within 3 standard errors; pooled variance near s^2.
  auto mv = mean.values();
  std::size_t outside = 0;
  double pooled_var = 0.0;
  for (std::size_t i = 0; i < mv.size(); ++i) {
    const double m = sum[i] / runs;
    const double var = sum_sq[i] / runs - m * m;
    pooled_var += var / static_cast<double>(mv.size());
    if (std::abs(m - mv[i]) > 3.0 * s / std::sqrt(static_cast<double>(runs))) ++outside;
  }
  // ~0.27% of elements fall outside 3 SE by chance.
  CHECK(outside <= mv.size() / 100);
  CHECK(std::sqrt(pooled_var) == doctest::Approx(s).epsilon(0.05));
}

TEST_CASE("linear model is time independent and affine") {
  const LinearFlowModel m = make_linear(8, 30);
  const MvGrid z = random_grid(8, 31);
  const ViewImage c = random_view(8, 32);
  CHECK(m.predict_raw(z, c, 0.1) == m.predict_raw(z, c, 0.9));
  const LinearFlowModel zero(GridLinearMap::zero(), ViewToGridMap::zero(), MvGrid(8));
  CHECK(zero.predict_raw(z, c, 0.5) == MvGrid(8));
}
