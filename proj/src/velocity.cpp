#include "gridedit/velocity.hpp"

#include <cmath>
#include <random>
#include <string>

#include "gridedit/errors.hpp"

namespace gridedit {

void GuidanceConfig::validate() const {
  if (!std::isfinite(cfg_tar) || !std::isfinite(cfg_src) || cfg_tar < 0.0 || cfg_src < 0.0) {
    throw ConfigError("guidance weights must be finite and non-negative");
  }
}

MvGrid predict(const VelocityModel& model, const MvGrid& z, const ViewImage& cond, double t,
               double w) {
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("predict: t must lie in [0, 1]");
  if (!std::isfinite(w) || w < 0.0) throw ConfigError("predict: invalid guidance weight");
  if (cond.tile_size() != z.tile_size()) throw ShapeError("predict: condition/grid tile mismatch");
  if (w == 1.0) return model.predict_raw(z, cond, t);
  if (!model.has_unconditional()) {
    throw ConfigError("guidance weight " + std::to_string(w) +
                      " needs an unconditional prediction the model does not provide");
  }
  MvGrid v_cond = model.predict_raw(z, cond, t);
  MvGrid out = model.predict_raw(z, null_view(cond.tile_size()), t);
  auto o = out.values();
  auto c = v_cond.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += w * (c[i] - o[i]);
  return out;
}

namespace {

Mat3 jittered_identity(std::mt19937_64& eng, double diag, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  Mat3 m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m[i][j] = (i == j ? diag : 0.0) + u(eng);
  }
  return m;
}

}  // namespace

ViewToGridMap ViewToGridMap::copy() {
  ViewToGridMap m;
  m.mix.fill(kIdentity3);
  return m;
}

ViewToGridMap ViewToGridMap::zero() { return ViewToGridMap{}; }

ViewToGridMap ViewToGridMap::random(std::uint64_t seed, double spread) {
  std::mt19937_64 eng(seed);
  ViewToGridMap m;
  for (int k = 0; k < kNumViews; ++k) {
    m.mix[k] = jittered_identity(eng, 0.8, spread);
    m.mirror[k] = (k % 2) == 1;
  }
  return m;
}

MvGrid ViewToGridMap::apply(const ViewImage& view) const {
  const int ts = view.tile_size();
  MvGrid out(ts);
  for (int k = 0; k < kNumViews; ++k) {
    const auto [r, c] = tile_block(k);
    const Mat3& m = mix[k];
    for (int y = 0; y < ts; ++y) {
      for (int x = 0; x < ts; ++x) {
        const int sx = mirror[k] ? ts - 1 - x : x;
        for (int ch = 0; ch < 3; ++ch) {
          out(r * ts + y, c * ts + x, ch) =
              m[ch][0] * view(y, sx, 0) + m[ch][1] * view(y, sx, 1) + m[ch][2] * view(y, sx, 2);
        }
      }
    }
  }
  return out;
}

GridLinearMap GridLinearMap::zero() { return GridLinearMap{}; }

GridLinearMap GridLinearMap::random(std::uint64_t seed, double scale) {
  std::mt19937_64 eng(seed);
  GridLinearMap m;
  for (auto& mix : m.mix) {
    mix = jittered_identity(eng, -scale, 0.5 * scale);
  }
  m.neighbour = 0.25 * scale;
  return m;
}

MvGrid GridLinearMap::apply(const MvGrid& grid) const {
  const int ts = grid.tile_size();
  MvGrid out(ts);
  for (int k = 0; k < kNumViews; ++k) {
    const auto [r, c] = tile_block(k);
    const Mat3& m = mix[k];
    for (int y = r * ts; y < (r + 1) * ts; ++y) {
      for (int x = c * ts; x < (c + 1) * ts; ++x) {
        for (int ch = 0; ch < 3; ++ch) {
          double v = m[ch][0] * grid(y, x, 0) + m[ch][1] * grid(y, x, 1) +
                     m[ch][2] * grid(y, x, 2);
          if (neighbour != 0.0) {
            if (x > c * ts) v += neighbour * grid(y, x - 1, ch);
            if (x + 1 < (c + 1) * ts) v += neighbour * grid(y, x + 1, ch);
          }
          out(y, x, ch) = v;
        }
      }
    }
  }
  return out;
}

MvGrid gaussian_velocity(const MvGrid& z, const ViewImage& cond, double t,
                         const ViewToGridMap& mean_map, double data_std) {
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("gaussian_velocity: t must lie in [0, 1]");
  if (!(data_std >= 0.0)) throw ConfigError("gaussian_velocity: data_std must be non-negative");
  if (t == 0.0 && data_std == 0.0) {
    throw ConfigError("gaussian_velocity: posterior undefined for t = 0 and s = 0");
  }
  if (cond.tile_size() != z.tile_size()) {
    throw ShapeError("gaussian_velocity: condition/grid tile mismatch");
  }
  const MvGrid mean = mean_map.apply(cond);
  const double a = 1.0 - t;
  const double s2 = data_std * data_std;
  const double denom = a * a * s2 + t * t;
  // E[x|z] = mu + a s^2 r / D, E[n|z] = t r / D with r = z - a mu.
  const double gain_n = t / denom;
  const double gain_x = a * s2 / denom;
  MvGrid out(z.tile_size());
  auto o = out.values();
  auto zv = z.values();
  auto mv = mean.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double resid = zv[i] - a * mv[i];
    o[i] = gain_n * resid - (mv[i] + gain_x * resid);
  }
  return out;
}

GaussianFlowModel::GaussianFlowModel(ViewToGridMap mean_map, double data_std, int tile_size)
    : mean_map_(mean_map), data_std_(data_std), tile_size_(tile_size) {
  if (!(data_std > 0.0) || !std::isfinite(data_std)) {
    throw ConfigError("GaussianFlowModel: data_std must be positive");
  }
  if (tile_size < kMinTileSize) throw ShapeError("GaussianFlowModel: tile size too small");
}

MvGrid GaussianFlowModel::predict_raw(const MvGrid& z, const ViewImage& cond, double t) const {
  return gaussian_velocity(z, cond, t, mean_map_, data_std_);
}

LinearFlowModel::LinearFlowModel(GridLinearMap grid_map, ViewToGridMap cond_map, MvGrid offset)
    : grid_map_(grid_map), cond_map_(cond_map), offset_(std::move(offset)) {}

MvGrid LinearFlowModel::predict_raw(const MvGrid& z, const ViewImage& cond, double) const {
  if (z.tile_size() != offset_.tile_size() || cond.tile_size() != offset_.tile_size()) {
    throw ShapeError("LinearFlowModel: input tile size mismatch");
  }
  MvGrid out = grid_map_.apply(z);
  const MvGrid bc = cond_map_.apply(cond);
  auto o = out.values();
  auto b = bc.values();
  auto off = offset_.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = o[i] + b[i] + off[i];
  return out;
}

}  // namespace gridedit
