#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gridedit/velocity.hpp"

namespace gridedit {

struct TinyFlowNetConfig {
  int tile_size = kDefaultTileSize;
  int layers = 4;
  int channels = 32;
  int kernel = 3;
  int time_embed_dim = 16;
  std::uint64_t seed = 0;

  void validate() const;
  int input_channels() const { return 2 * kChannels + time_embed_dim; }
};

/// One flow-matching example: the model sees add_noise(x0, noise, t) and
/// add_noise(cond, cond_noise, t), and is regressed onto noise - x0.
struct TrainingRecord {
  MvGrid x0;
  ViewImage cond;
  double t = 0.0;
  MvGrid noise;
  ViewImage cond_noise;
};

/// Small fully convolutional velocity network. Input channels are the
/// noised grid, the condition view repeated into every tile, and a
/// sinusoidal embedding of t held constant over the image. Hidden layers
/// use SiLU; the output layer is linear.
class TinyFlowNet final : public VelocityModel {
 public:
  explicit TinyFlowNet(const TinyFlowNetConfig& config);

  MvGrid predict_raw(const MvGrid& z, const ViewImage& cond, double t) const override;
  int tile_size() const override { return config_.tile_size; }

  const TinyFlowNetConfig& config() const noexcept { return config_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  /// Mean flow-matching loss over `batch`; writes d loss / d params into
  /// `grad` (overwritten). Examples are reduced in order.
  double loss_and_gradient(std::span<const TrainingRecord> batch, std::span<double> grad) const;

  void save(const std::filesystem::path& path) const;
  static TinyFlowNet load(const std::filesystem::path& path);

  /// Sinusoidal time features, exposed for tests.
  std::vector<double> time_embedding(double t) const;

 private:
  struct LayerShape {
    int in_channels;
    int out_channels;
    std::size_t weight_offset;
    std::size_t bias_offset;
  };
  struct Workspace;

  // Runs the network on a channel-major input; optionally keeps per-layer
  // im2col buffers and pre-activations for backprop.
  void forward(std::vector<double> input, Workspace& ws, bool keep) const;
  std::vector<double> make_input(const MvGrid& z, const ViewImage& cond, double t) const;

  TinyFlowNetConfig config_;
  std::vector<LayerShape> layers_;
  std::vector<double> params_;
};

/// Mean over the batch of the per-element squared error between the model
/// velocity and noise - x0. Works with any velocity model.
double flow_matching_loss(const VelocityModel& model, std::span<const TrainingRecord> batch);

}  // namespace gridedit
