#pragma once

#include <array>
#include <cstdint>

#include "gridedit/mvgrid.hpp"

namespace gridedit {

/// v(z, cond, t): maps a noised grid, a (noised) condition view and a time
/// to a velocity grid. Implementations must be deterministic and
/// side-effect free so that concurrent calls on a shared model are safe.
class VelocityModel {
 public:
  virtual ~VelocityModel() = default;

  virtual MvGrid predict_raw(const MvGrid& z, const ViewImage& cond, double t) const = 0;

  /// Whether the null condition (an all-zero view) is meaningful input.
  virtual bool has_unconditional() const { return true; }

  virtual int tile_size() const = 0;
};

/// Guidance weights for the two branches of an edit.
struct GuidanceConfig {
  double cfg_tar = 1.0;
  double cfg_src = 1.0;

  void validate() const;
};

/// The null condition used for the unconditional branch.
inline ViewImage null_view(int tile_size) { return ViewImage(tile_size); }

/// Classifier-free guided prediction v_u + w (v_c - v_u). With w == 1
/// this is exactly predict_raw and the unconditional pass is skipped.
MvGrid predict(const VelocityModel& model, const MvGrid& z, const ViewImage& cond, double t,
               double w);

using Mat3 = std::array<std::array<double, 3>, 3>;

inline constexpr Mat3 kIdentity3{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

/// Linear operator from a view to a grid: tile k is the (optionally
/// mirrored) view with its colours mixed by `mix[k]`.
struct ViewToGridMap {
  std::array<Mat3, kNumViews> mix{};
  std::array<bool, kNumViews> mirror{};

  static ViewToGridMap copy();
  static ViewToGridMap zero();
  /// Colour mixes near a scaled identity, alternating mirrors.
  static ViewToGridMap random(std::uint64_t seed, double spread = 0.2);

  MvGrid apply(const ViewImage& view) const;
};

/// Linear operator on grids: per-tile colour mix plus a symmetric
/// horizontal coupling to the neighbouring pixels of the same tile.
struct GridLinearMap {
  std::array<Mat3, kNumViews> mix{};
  double neighbour = 0.0;

  static GridLinearMap zero();
  static GridLinearMap random(std::uint64_t seed, double scale = 0.3);

  MvGrid apply(const MvGrid& grid) const;
};

/// Closed-form marginal velocity E[n - x | z_t = z] for
/// x ~ N(M cond, s^2 I), n ~ N(0, I), z_t = (1 - t) x + t n.
MvGrid gaussian_velocity(const MvGrid& z, const ViewImage& cond, double t,
                         const ViewToGridMap& mean_map, double data_std);

/// Analytic oracle model standing in for a pretrained backbone.
class GaussianFlowModel final : public VelocityModel {
 public:
  GaussianFlowModel(ViewToGridMap mean_map, double data_std, int tile_size);

  MvGrid predict_raw(const MvGrid& z, const ViewImage& cond, double t) const override;
  int tile_size() const override { return tile_size_; }

  const ViewToGridMap& mean_map() const noexcept { return mean_map_; }
  double data_std() const noexcept { return data_std_; }

 private:
  ViewToGridMap mean_map_;
  double data_std_;
  int tile_size_;
};

/// Time-independent affine field A z + B cond + b.
class LinearFlowModel final : public VelocityModel {
 public:
  LinearFlowModel(GridLinearMap grid_map, ViewToGridMap cond_map, MvGrid offset);

  MvGrid predict_raw(const MvGrid& z, const ViewImage& cond, double t) const override;
  int tile_size() const override { return offset_.tile_size(); }

  const GridLinearMap& grid_map() const noexcept { return grid_map_; }
  const ViewToGridMap& cond_map() const noexcept { return cond_map_; }
  const MvGrid& offset() const noexcept { return offset_; }

 private:
  GridLinearMap grid_map_;
  ViewToGridMap cond_map_;
  MvGrid offset_;
};

}  // namespace gridedit
