#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridedit/mvgrid.hpp"

namespace gridedit {

using Vec3 = std::array<double, 3>;

enum class PrimitiveKind { kSphere, kBox };

/// `size` is the radius of a sphere or the half-extent of an axis-aligned
/// cube.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kSphere;
  Vec3 center{};
  double size = 0.5;
  Vec3 color{};

  friend bool operator==(const Primitive&, const Primitive&) = default;
};

inline constexpr int kMaxPrimitives = 5;

struct Scene {
  std::vector<Primitive> primitives;
  std::uint64_t seed = 0;

  /// 1-5 primitives, all inside [-1, 1]^3, colours in [-1, 1].
  void validate() const;

  friend bool operator==(const Scene&, const Scene&) = default;
};

struct Camera {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
};

/// Six orthographic grid cameras (tile order) plus the frontal condition
/// camera.
struct CameraSet {
  std::array<Camera, kNumViews> grid;
  Camera condition;

  static CameraSet standard();
};

struct RenderedViews {
  MvGrid grid;
  ViewImage condition;
};

/// Orthographic ray cast over the [-1, 1]^2 view window. Background is -1;
/// surfaces are flat-coloured with a Lambert term for a light along
/// (1, 1, 1).
ViewImage render_view(const Scene& scene, const Camera& camera, int tile_size);
RenderedViews render_views(const Scene& scene, const CameraSet& cams, int tile_size);

/// Index of the primitive hit by each pixel ray, -1 for background.
std::vector<int> render_ids(const Scene& scene, const Camera& camera, int tile_size);

enum class EditKind { kRecolor, kAddPrimitive, kRemovePrimitive, kRescale };

struct SceneEdit {
  EditKind kind = EditKind::kRecolor;
  int target = 0;
  Vec3 color{};
  Primitive primitive{};
  double scale = 1.0;
};

Scene apply_scene_edit(const Scene& scene, const SceneEdit& edit);

Scene sample_scene(std::uint64_t seed, int min_primitives = 1);
SceneEdit sample_edit(const Scene& scene, EditKind kind, std::uint64_t seed);

std::string_view edit_kind_name(EditKind k);

nlohmann::json to_json(const Scene& scene);
nlohmann::json to_json(const SceneEdit& edit);
Scene scene_from_json(const nlohmann::json& j);
SceneEdit edit_from_json(const nlohmann::json& j);

struct DatasetRecord {
  std::string id;
  Scene scene;
  SceneEdit edit;
  MvGrid src_grid;
  ViewImage src_cond;
  MvGrid tar_grid;
  ViewImage tar_cond;
};

struct Dataset {
  std::uint64_t seed = 0;
  int tile_size = kDefaultTileSize;
  std::vector<DatasetRecord> records;
};

/// In-memory dataset: one sampled scene and one sampled edit per record.
/// Edit kinds are drawn in shuffled blocks of four so that every kind
/// appears once per block.
Dataset generate_dataset(int n_scenes, std::uint64_t seed, int tile_size);

/// Writes `scenes/<id>/{src_grid,src_cond,tar_grid,tar_cond}.png` and
/// `manifest.json` under `out_dir`; returns the manifest.
nlohmann::json make_dataset(int n_scenes, std::uint64_t seed, int tile_size,
                            const std::filesystem::path& out_dir);

void write_dataset(const Dataset& dataset, const std::filesystem::path& out_dir);

/// Loads a dataset directory written by make_dataset (images quantised).
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace gridedit
