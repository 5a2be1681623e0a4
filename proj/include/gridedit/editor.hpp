#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gridedit/mvgrid.hpp"
#include "gridedit/velocity.hpp"

namespace gridedit {

struct EditConfig {
  int total_steps = 50;
  int n_max = 33;
  double cfg_tar = 3.5;
  double cfg_src = 1.0;
  std::uint64_t seed_grid = 0;
  std::uint64_t seed_cond = 0;
  std::optional<std::string> preset_name;
  /// Noise the condition views with the shared per-step realization. Off
  /// only for oracle checks that need clean conditioning.
  bool noise_condition = true;

  void validate() const;
};

/// Named (n_max, cfg_tar) pairs over T = 50 steps.
struct Preset {
  std::string_view name;
  int n_max;
  double cfg_tar;
};

inline constexpr int kPresetTotalSteps = 50;

std::span<const Preset> presets();
const Preset& find_preset(std::string_view name);
/// Applies a preset's values onto `cfg` (and records its name).
EditConfig with_preset(EditConfig cfg, const Preset& preset);

struct EditRequest {
  MvGrid source_grid;
  ViewImage source_view;
  ViewImage target_view;

  void validate() const;
};

struct StepRecord {
  double t = 0.0;
  double delta_norm = 0.0;
  std::optional<MvGrid> snapshot;
};

struct EditTrace {
  std::vector<StepRecord> steps;
};

struct EditResult {
  MvGrid grid;
  EditTrace trace;
};

/// Everything a step fed to the model, for instrumentation.
struct StepInputs {
  int step;
  double t;
  const MvGrid& grid_noise;
  const ViewImage& cond_noise;
  const MvGrid& z_src;
  const MvGrid& z_edit;
  const ViewImage& cond_src;
  const ViewImage& cond_tar;
  const MvGrid& x_edit;
};

struct EditOptions {
  bool keep_snapshots = false;
  std::function<void(const StepInputs&)> on_step;
};

/// Edit-aware denoising: propagates the change between source and target
/// views to the whole grid.
///
/// Starting from x_edit = x_src, each step t_i draws one grid noise and one
/// condition noise, noises (x_src, x_edit) with the shared grid noise and
/// (I_src, I_tar) with the shared condition noise, and moves x_edit by
/// (v_tar - v_src) dt. Throws NumericalError carrying the step index if
/// the model returns non-finite values.
EditResult propagate_edit(const VelocityModel& model, const EditRequest& req,
                          const EditConfig& cfg, const EditOptions& opts = {});

/// Ablation: the same loop with v_src dropped, so x_edit += v_tar dt.
EditResult ablate_sdedit(const VelocityModel& model, const EditRequest& req,
                         const EditConfig& cfg, const EditOptions& opts = {});

/// Ablation: z_edit = x_edit + (z_src - x_src) instead of noising x_edit
/// directly.
EditResult ablate_flowedit_coupling(const VelocityModel& model, const EditRequest& req,
                                    const EditConfig& cfg, const EditOptions& opts = {});

/// Plain conditional generation from N(0, I) at t = 1 over all T steps,
/// conditioned on the target view only.
EditResult naive_baseline(const VelocityModel& model, const ViewImage& target_view,
                          const EditConfig& cfg, const EditOptions& opts = {});

enum class EditMethod { kPropagate, kSdedit, kFlowEditCoupling, kNaive };

std::string_view method_name(EditMethod m);
EditMethod parse_method(std::string_view name);
std::span<const EditMethod> all_methods();

EditResult run_method(EditMethod m, const VelocityModel& model, const EditRequest& req,
                      const EditConfig& cfg, const EditOptions& opts = {});

}  // namespace gridedit
