#include "gridedit/editor.hpp"

#include <array>
#include <cmath>
#include <string>

#include "gridedit/errors.hpp"
#include "gridedit/rng.hpp"
#include "gridedit/schedule.hpp"

namespace gridedit {
namespace {

constexpr std::array<Preset, 4> kPresets{{
    {"mild-texture", 20, 2.0},
    {"appearance", 27, 3.5},
    {"local-geometry", 33, 5.5},
    {"large-geometry", 45, 7.5},
}};

constexpr std::array<EditMethod, 4> kMethods{EditMethod::kPropagate, EditMethod::kSdedit,
                                             EditMethod::kFlowEditCoupling, EditMethod::kNaive};

void require_finite(const MvGrid& v, int step, const char* branch) {
  if (!v.all_finite()) {
    throw NumericalError(std::string("non-finite ") + branch + " velocity at step " +
                             std::to_string(step),
                         step);
  }
}

void check_model(const VelocityModel& model, int tile_size) {
  if (model.tile_size() != tile_size) {
    throw ShapeError("model tile size " + std::to_string(model.tile_size()) +
                     " does not match request tile size " + std::to_string(tile_size));
  }
}

// Per-step noise for both branch pairs, from two independent streams.
class StepNoise {
 public:
  StepNoise(const EditConfig& cfg, int tile_size)
      : grid_stream_(cfg.seed_grid, StreamTag::kGridNoise),
        cond_stream_(cfg.seed_cond, StreamTag::kCondNoise),
        grid(tile_size),
        cond(tile_size) {}

  void draw() {
    grid_stream_.fill_normal(grid.values());
    cond_stream_.fill_normal(cond.values());
  }

  NoiseStream grid_stream_;
  NoiseStream cond_stream_;
  MvGrid grid;
  ViewImage cond;
};

ViewImage noised_condition(const ViewImage& view, const ViewImage& noise, double t,
                           const EditConfig& cfg) {
  return cfg.noise_condition ? add_noise(view, noise, t) : view;
}

enum class Coupling { kDirect, kDisplacement };

// Shared loop for the delta update and its two ablations. Without the
// source term the step is x_edit += v_tar dt, everything else unchanged.
EditResult delta_loop(const VelocityModel& model, const EditRequest& req, const EditConfig& cfg,
                      const EditOptions& opts, Coupling coupling, bool subtract_source) {
  req.validate();
  cfg.validate();
  const int ts = req.source_grid.tile_size();
  check_model(model, ts);
  const TimeGrid schedule = make_schedule(cfg.total_steps, cfg.n_max);
  StepNoise noise(cfg, ts);

  EditResult result{req.source_grid, {}};
  MvGrid& x_edit = result.grid;
  result.trace.steps.reserve(schedule.times.size());
  for (std::size_t i = 0; i < schedule.times.size(); ++i) {
    const int step = static_cast<int>(i);
    const double t = schedule.times[i];
    noise.draw();
    const MvGrid z_src = add_noise(req.source_grid, noise.grid, t);
    const MvGrid z_edit = coupling == Coupling::kDirect
                              ? add_noise(x_edit, noise.grid, t)
                              : z_src + (x_edit - req.source_grid);
    const ViewImage cond_src = noised_condition(req.source_view, noise.cond, t, cfg);
    const ViewImage cond_tar = noised_condition(req.target_view, noise.cond, t, cfg);
    if (opts.on_step) {
      opts.on_step({step, t, noise.grid, noise.cond, z_src, z_edit, cond_src, cond_tar, x_edit});
    }

    MvGrid delta = predict(model, z_edit, cond_tar, t, cfg.cfg_tar);
    require_finite(delta, step, "target");
    if (subtract_source) {
      const MvGrid v_src = predict(model, z_src, cond_src, t, cfg.cfg_src);
      require_finite(v_src, step, "source");
      delta = delta - v_src;
    }
    x_edit = euler_update(x_edit, delta, schedule.dt);

    StepRecord rec{t, l2_norm(delta.values()), std::nullopt};
    if (opts.keep_snapshots) rec.snapshot = x_edit;
    result.trace.steps.push_back(std::move(rec));
  }
  return result;
}

}  // namespace

void EditConfig::validate() const {
  if (total_steps < 1) throw ConfigError("total_steps must be positive");
  if (n_max < 1 || n_max > total_steps) {
    throw ConfigError("n_max must lie in [1, total_steps]");
  }
  GuidanceConfig{cfg_tar, cfg_src}.validate();
}

std::span<const Preset> presets() { return kPresets; }

const Preset& find_preset(std::string_view name) {
  for (const auto& p : kPresets) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

EditConfig with_preset(EditConfig cfg, const Preset& preset) {
  cfg.total_steps = kPresetTotalSteps;
  cfg.n_max = preset.n_max;
  cfg.cfg_tar = preset.cfg_tar;
  cfg.preset_name = std::string(preset.name);
  return cfg;
}

void EditRequest::validate() const {
  const int ts = source_grid.tile_size();
  if (source_view.tile_size() != ts || target_view.tile_size() != ts) {
    throw ShapeError("edit request: condition views must match the grid tile size");
  }
}

EditResult propagate_edit(const VelocityModel& model, const EditRequest& req,
                          const EditConfig& cfg, const EditOptions& opts) {
  return delta_loop(model, req, cfg, opts, Coupling::kDirect, true);
}

EditResult ablate_flowedit_coupling(const VelocityModel& model, const EditRequest& req,
                                    const EditConfig& cfg, const EditOptions& opts) {
  return delta_loop(model, req, cfg, opts, Coupling::kDisplacement, true);
}

EditResult ablate_sdedit(const VelocityModel& model, const EditRequest& req,
                         const EditConfig& cfg, const EditOptions& opts) {
  return delta_loop(model, req, cfg, opts, Coupling::kDirect, false);
}

EditResult naive_baseline(const VelocityModel& model, const ViewImage& target_view,
                          const EditConfig& cfg, const EditOptions& opts) {
  cfg.validate();
  const int ts = target_view.tile_size();
  check_model(model, ts);
  const TimeGrid schedule = make_schedule(cfg.total_steps, cfg.total_steps);
  StepNoise noise(cfg, ts);
  noise.draw();
  EditResult result{noise.grid, {}};
  MvGrid& x = result.grid;
  result.trace.steps.reserve(schedule.times.size());
  for (std::size_t i = 0; i < schedule.times.size(); ++i) {
    const int step = static_cast<int>(i);
    const double t = schedule.times[i];
    // The first draw doubles as the starting sample.
    if (i > 0) noise.draw();
    const ViewImage cond_tar = noised_condition(target_view, noise.cond, t, cfg);
    if (opts.on_step) {
      opts.on_step({step, t, noise.grid, noise.cond, x, x, cond_tar, cond_tar, x});
    }
    const MvGrid v = predict(model, x, cond_tar, t, cfg.cfg_tar);
    require_finite(v, step, "target");
    x = euler_update(x, v, schedule.dt);

    StepRecord rec{t, l2_norm(v.values()), std::nullopt};
    if (opts.keep_snapshots) rec.snapshot = x;
    result.trace.steps.push_back(std::move(rec));
  }
  return result;
}

std::string_view method_name(EditMethod m) {
  switch (m) {
    case EditMethod::kPropagate: return "propagate";
    case EditMethod::kSdedit: return "sdedit";
    case EditMethod::kFlowEditCoupling: return "flowedit_coupling";
    case EditMethod::kNaive: return "naive";
  }
  return "unknown";
}

EditMethod parse_method(std::string_view name) {
  for (EditMethod m : kMethods) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

std::span<const EditMethod> all_methods() { return kMethods; }

EditResult run_method(EditMethod m, const VelocityModel& model, const EditRequest& req,
                      const EditConfig& cfg, const EditOptions& opts) {
  switch (m) {
    case EditMethod::kPropagate: return propagate_edit(model, req, cfg, opts);
    case EditMethod::kSdedit: return ablate_sdedit(model, req, cfg, opts);
    case EditMethod::kFlowEditCoupling: return ablate_flowedit_coupling(model, req, cfg, opts);
    case EditMethod::kNaive: return naive_baseline(model, req.target_view, cfg, opts);
  }
  throw ConfigError("unknown method");
}

}  // namespace gridedit
