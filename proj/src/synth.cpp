#include "gridedit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include "gridedit/errors.hpp"
#include "gridedit/image_io.hpp"
#include "gridedit/rng.hpp"

namespace gridedit {
namespace {

constexpr int kManifestVersion = 1;

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 normalized(const Vec3& a) { return (1.0 / std::sqrt(dot(a, a))) * a; }

struct CameraBasis {
  Vec3 eye;
  Vec3 right;
  Vec3 up;
};

CameraBasis basis(const Camera& cam) {
  if (!std::isfinite(cam.azimuth_deg) || !std::isfinite(cam.elevation_deg) ||
      std::abs(cam.elevation_deg) >= 90.0) {
    throw ConfigError("degenerate camera: elevation must lie in (-90, 90) degrees");
  }
  const double az = cam.azimuth_deg * std::numbers::pi / 180.0;
  const double el = cam.elevation_deg * std::numbers::pi / 180.0;
  CameraBasis b;
  b.eye = {std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az)};
  b.right = {std::cos(az), 0.0, -std::sin(az)};
  b.up = cross(b.eye, b.right);
  return b;
}

struct Hit {
  double distance = std::numeric_limits<double>::infinity();
  int index = -1;
  Vec3 normal{};
};

bool intersect(const Primitive& p, const Vec3& origin, const Vec3& dir, double& dist,
               Vec3& normal) {
  if (p.kind == PrimitiveKind::kSphere) {
    const Vec3 oc = origin - p.center;
    const double b = dot(oc, dir);
    const double c = dot(oc, oc) - p.size * p.size;
    const double disc = b * b - c;
    if (disc < 0.0) return false;
    dist = -b - std::sqrt(disc);
    if (dist < 0.0) return false;
    normal = (1.0 / p.size) * (origin + dist * dir - p.center);
    return true;
  }
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int axis = -1;
  double sign = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double lo = p.center[a] - p.size;
    const double hi = p.center[a] + p.size;
    if (dir[a] == 0.0) {
      if (origin[a] < lo || origin[a] > hi) return false;
      continue;
    }
    double t0 = (lo - origin[a]) / dir[a];
    double t1 = (hi - origin[a]) / dir[a];
    double face = -1.0;
    if (t0 > t1) {
      std::swap(t0, t1);
      face = 1.0;
    }
    if (t0 > t_near) {
      t_near = t0;
      axis = a;
      sign = face;
    }
    t_far = std::min(t_far, t1);
  }
  if (axis < 0 || t_near > t_far || t_near < 0.0) return false;
  dist = t_near;
  normal = {0.0, 0.0, 0.0};
  normal[axis] = sign;
  return true;
}

template <class PixelFn>
void cast(const Scene& scene, const Camera& camera, int tile_size, PixelFn&& fn) {
  const CameraBasis b = basis(camera);
  const Vec3 dir = -1.0 * b.eye;
  for (int py = 0; py < tile_size; ++py) {
    const double v = 1.0 - 2.0 * (py + 0.5) / tile_size;
    for (int px = 0; px < tile_size; ++px) {
      const double u = 2.0 * (px + 0.5) / tile_size - 1.0;
      const Vec3 origin = 4.0 * b.eye + u * b.right + v * b.up;
      Hit hit;
      for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        double dist = 0.0;
        Vec3 normal{};
        if (intersect(scene.primitives[i], origin, dir, dist, normal) && dist < hit.distance) {
          hit = {dist, static_cast<int>(i), normal};
        }
      }
      fn(py, px, hit);
    }
  }
}

Vec3 random_color(std::mt19937_64& eng) {
  std::uniform_real_distribution<double> u(-0.6, 1.0);
  return {u(eng), u(eng), u(eng)};
}

Primitive random_primitive(std::mt19937_64& eng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Primitive p;
  p.kind = unit(eng) < 0.5 ? PrimitiveKind::kSphere : PrimitiveKind::kBox;
  p.size = 0.2 + 0.25 * unit(eng);
  const double reach = 0.8 * (1.0 - p.size);
  for (double& c : p.center) c = reach * (2.0 * unit(eng) - 1.0);
  p.color = random_color(eng);
  return p;
}

bool fits(const Primitive& p) {
  for (double c : p.center) {
    if (c - p.size < -1.0 || c + p.size > 1.0) return false;
  }
  return true;
}

std::string record_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i);
  return buf;
}

}  // namespace

void Scene::validate() const {
  if (primitives.empty() || primitives.size() > kMaxPrimitives) {
    throw ConfigError("scene must hold 1-5 primitives");
  }
  for (const auto& p : primitives) {
    if (!(p.size > 0.0) || !fits(p)) throw ConfigError("primitive does not fit the unit cube");
    for (double c : p.color) {
      if (!(c >= -1.0 && c <= 1.0)) throw ConfigError("primitive colour outside [-1, 1]");
    }
  }
}

CameraSet CameraSet::standard() {
  CameraSet cams;
  for (int k = 0; k < kNumViews; ++k) {
    cams.grid[k] = {30.0 + 60.0 * k, k % 2 == 0 ? 20.0 : -10.0};
  }
  cams.condition = {0.0, 0.0};
  return cams;
}

ViewImage render_view(const Scene& scene, const Camera& camera, int tile_size) {
  scene.validate();
  ViewImage img = ViewImage::filled(tile_size, -1.0);
  const Vec3 light = normalized({1.0, 1.0, 1.0});
  cast(scene, camera, tile_size, [&](int py, int px, const Hit& hit) {
    if (hit.index < 0) return;
    const auto& p = scene.primitives[hit.index];
    const double shade = 0.35 + 0.65 * std::max(0.0, dot(hit.normal, light));
    for (int c = 0; c < 3; ++c) img(py, px, c) = (p.color[c] + 1.0) * shade - 1.0;
  });
  return img;
}

std::vector<int> render_ids(const Scene& scene, const Camera& camera, int tile_size) {
  scene.validate();
  std::vector<int> ids(static_cast<std::size_t>(tile_size) * tile_size, -1);
  cast(scene, camera, tile_size, [&](int py, int px, const Hit& hit) {
    ids[static_cast<std::size_t>(py) * tile_size + px] = hit.index;
  });
  return ids;
}

RenderedViews render_views(const Scene& scene, const CameraSet& cams, int tile_size) {
  std::vector<ViewImage> tiles;
  tiles.reserve(kNumViews);
  for (const auto& cam : cams.grid) tiles.push_back(render_view(scene, cam, tile_size));
  return {assemble(tiles), render_view(scene, cams.condition, tile_size)};
}

Scene apply_scene_edit(const Scene& scene, const SceneEdit& edit) {
  Scene out = scene;
  const auto n = static_cast<int>(scene.primitives.size());
  const bool needs_target = edit.kind != EditKind::kAddPrimitive;
  if (needs_target && (edit.target < 0 || edit.target >= n)) {
    throw ConfigError("scene edit: target primitive " + std::to_string(edit.target) +
                      " does not exist");
  }
  switch (edit.kind) {
    case EditKind::kRecolor:
      out.primitives[edit.target].color = edit.color;
      break;
    case EditKind::kRescale:
      out.primitives[edit.target].size *= edit.scale;
      break;
    case EditKind::kAddPrimitive:
      if (n >= kMaxPrimitives) throw ConfigError("scene edit: primitive capacity exceeded");
      out.primitives.push_back(edit.primitive);
      break;
    case EditKind::kRemovePrimitive:
      out.primitives.erase(out.primitives.begin() + edit.target);
      break;
  }
  out.validate();
  return out;
}

Scene sample_scene(std::uint64_t seed, int min_primitives) {
  NoiseStream stream(seed, StreamTag::kScene);
  auto& eng = stream.engine();
  const int lo = std::clamp(min_primitives, 1, kMaxPrimitives - 1);
  std::uniform_int_distribution<int> count(lo, kMaxPrimitives - 1);
  Scene scene;
  scene.seed = seed;
  const int n = count(eng);
  for (int i = 0; i < n; ++i) scene.primitives.push_back(random_primitive(eng));
  scene.validate();
  return scene;
}

SceneEdit sample_edit(const Scene& scene, EditKind kind, std::uint64_t seed) {
  NoiseStream stream(seed, StreamTag::kScene);
  auto& eng = stream.engine();
  std::uniform_int_distribution<int> pick(0, static_cast<int>(scene.primitives.size()) - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SceneEdit edit;
  edit.kind = kind;
  switch (kind) {
    case EditKind::kRecolor: {
      edit.target = pick(eng);
      const Vec3 old = scene.primitives[edit.target].color;
      do {
        edit.color = random_color(eng);
      } while (std::abs(edit.color[0] - old[0]) + std::abs(edit.color[1] - old[1]) +
                   std::abs(edit.color[2] - old[2]) <
               0.6);
      break;
    }
    case EditKind::kAddPrimitive:
      edit.primitive = random_primitive(eng);
      break;
    case EditKind::kRemovePrimitive:
      edit.target = pick(eng);
      break;
    case EditKind::kRescale: {
      edit.target = pick(eng);
      Primitive p = scene.primitives[edit.target];
      const bool grow = unit(eng) < 0.5;
      edit.scale = grow ? 1.2 + 0.2 * unit(eng) : 0.6 + 0.2 * unit(eng);
      p.size *= edit.scale;
      if (!fits(p)) edit.scale = 1.0 / edit.scale;
      break;
    }
  }
  apply_scene_edit(scene, edit);
  return edit;
}

std::string_view edit_kind_name(EditKind k) {
  switch (k) {
    case EditKind::kRecolor: return "recolor";
    case EditKind::kAddPrimitive: return "add_primitive";
    case EditKind::kRemovePrimitive: return "remove_primitive";
    case EditKind::kRescale: return "rescale";
  }
  return "unknown";
}

namespace {

EditKind parse_edit_kind(const std::string& s) {
  for (EditKind k : {EditKind::kRecolor, EditKind::kAddPrimitive, EditKind::kRemovePrimitive,
                     EditKind::kRescale}) {
    if (edit_kind_name(k) == s) return k;
  }
  throw DataError("unknown edit kind '" + s + "'");
}

nlohmann::json primitive_json(const Primitive& p) {
  return {{"kind", p.kind == PrimitiveKind::kSphere ? "sphere" : "box"},
          {"center", p.center},
          {"size", p.size},
          {"color", p.color}};
}

Primitive primitive_from_json(const nlohmann::json& j) {
  Primitive p;
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "sphere" && kind != "box") throw DataError("unknown primitive kind " + kind);
  p.kind = kind == "sphere" ? PrimitiveKind::kSphere : PrimitiveKind::kBox;
  p.center = j.at("center").get<Vec3>();
  p.size = j.at("size").get<double>();
  p.color = j.at("color").get<Vec3>();
  return p;
}

}  // namespace

nlohmann::json to_json(const Scene& scene) {
  nlohmann::json prims = nlohmann::json::array();
  for (const auto& p : scene.primitives) prims.push_back(primitive_json(p));
  return {{"seed", scene.seed}, {"primitives", prims}};
}

nlohmann::json to_json(const SceneEdit& edit) {
  nlohmann::json j = {{"kind", edit_kind_name(edit.kind)}};
  switch (edit.kind) {
    case EditKind::kRecolor:
      j["target"] = edit.target;
      j["color"] = edit.color;
      break;
    case EditKind::kAddPrimitive:
      j["primitive"] = primitive_json(edit.primitive);
      break;
    case EditKind::kRemovePrimitive:
      j["target"] = edit.target;
      break;
    case EditKind::kRescale:
      j["target"] = edit.target;
      j["scale"] = edit.scale;
      break;
  }
  return j;
}

Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& p : j.at("primitives")) s.primitives.push_back(primitive_from_json(p));
  return s;
}

SceneEdit edit_from_json(const nlohmann::json& j) {
  SceneEdit e;
  e.kind = parse_edit_kind(j.at("kind").get<std::string>());
  if (j.contains("target")) e.target = j.at("target").get<int>();
  if (j.contains("color")) e.color = j.at("color").get<Vec3>();
  if (j.contains("primitive")) e.primitive = primitive_from_json(j.at("primitive"));
  if (j.contains("scale")) e.scale = j.at("scale").get<double>();
  return e;
}

Dataset generate_dataset(int n_scenes, std::uint64_t seed, int tile_size) {
  if (n_scenes < 1) throw ConfigError("dataset needs at least one scene");
  Dataset ds;
  ds.seed = seed;
  ds.tile_size = tile_size;
  const CameraSet cams = CameraSet::standard();
  NoiseStream stream(seed, StreamTag::kScene);
  auto& eng = stream.engine();
  std::array<EditKind, 4> block{EditKind::kRecolor, EditKind::kAddPrimitive,
                                EditKind::kRemovePrimitive, EditKind::kRescale};
  for (int i = 0; i < n_scenes; ++i) {
    if (i % 4 == 0) std::shuffle(block.begin(), block.end(), eng);
    const EditKind kind = block[i % 4];
    const std::uint64_t scene_seed = eng();
    const std::uint64_t edit_seed = eng();
    Scene scene = sample_scene(scene_seed, kind == EditKind::kRemovePrimitive ? 2 : 1);
    SceneEdit edit = sample_edit(scene, kind, edit_seed);
    Scene edited = apply_scene_edit(scene, edit);
    RenderedViews src = render_views(scene, cams, tile_size);
    RenderedViews tar = render_views(edited, cams, tile_size);
    ds.records.push_back({record_id(i), std::move(scene), edit, std::move(src.grid),
                          std::move(src.condition), std::move(tar.grid),
                          std::move(tar.condition)});
  }
  return ds;
}

namespace {

nlohmann::json manifest_for(const Dataset& ds) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : ds.records) {
    const std::string dir = "scenes/" + r.id + "/";
    records.push_back({{"id", r.id},
                       {"scene", to_json(r.scene)},
                       {"edit", to_json(r.edit)},
                       {"files",
                        {{"src_grid", dir + "src_grid.png"},
                         {"src_cond", dir + "src_cond.png"},
                         {"tar_grid", dir + "tar_grid.png"},
                         {"tar_cond", dir + "tar_cond.png"}}}});
  }
  return {{"version", kManifestVersion},
          {"seed", ds.seed},
          {"tile_size", ds.tile_size},
          {"records", records}};
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "scenes", ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
  for (const auto& r : ds.records) {
    const fs::path dir = out_dir / "scenes" / r.id;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    write_png(dir / "src_grid.png", r.src_grid);
    write_png(dir / "src_cond.png", r.src_cond);
    write_png(dir / "tar_grid.png", r.tar_grid);
    write_png(dir / "tar_cond.png", r.tar_cond);
  }
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw DataError("cannot write manifest in " + out_dir.string());
  out << manifest_for(ds).dump(2) << '\n';
  if (!out) throw DataError("writing manifest failed");
}

nlohmann::json make_dataset(int n_scenes, std::uint64_t seed, int tile_size,
                            const std::filesystem::path& out_dir) {
  const Dataset ds = generate_dataset(n_scenes, seed, tile_size);
  write_dataset(ds, out_dir);
  return manifest_for(ds);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("no manifest.json in " + dir.string());
  Dataset ds;
  try {
    const auto manifest = nlohmann::json::parse(in);
    if (manifest.at("version").get<int>() != kManifestVersion) {
      throw DataError("unsupported manifest version");
    }
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    ds.tile_size = manifest.at("tile_size").get<int>();
    for (const auto& r : manifest.at("records")) {
      const auto& files = r.at("files");
      auto file = [&](const char* key) { return dir / files.at(key).get<std::string>(); };
      ds.records.push_back({r.at("id").get<std::string>(), scene_from_json(r.at("scene")),
                            edit_from_json(r.at("edit")),
                            read_grid(file("src_grid"), ds.tile_size),
                            read_view(file("src_cond"), ds.tile_size),
                            read_grid(file("tar_grid"), ds.tile_size),
                            read_view(file("tar_cond"), ds.tile_size)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  if (ds.records.empty()) throw DataError("dataset " + dir.string() + " has no records");
  return ds;
}

}  // namespace gridedit
