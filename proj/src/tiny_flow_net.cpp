#include "gridedit/tiny_flow_net.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "gridedit/errors.hpp"
#include "gridedit/schedule.hpp"

namespace gridedit {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

constexpr char kMagic[8] = {'G', 'E', 'T', 'F', 'N', 'E', 'T', '\n'};
constexpr std::uint32_t kFormatVersion = 1;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Channel-major image -> (channels * k * k) x (h * w) patch matrix, zero
// padded to keep the spatial size.
void im2col(const std::vector<double>& in, int channels, int h, int w, int k, RowMat& cols) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  cols.resize(static_cast<Eigen::Index>(channels) * k * k, static_cast<Eigen::Index>(hw));
  for (int c = 0; c < channels; ++c) {
    const double* plane = in.data() + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const int dx = kx - pad;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          double* dst = row + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(sy) * w;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          std::fill(dst, dst + x0, 0.0);
          std::copy(src + x0 + dx, src + x1 + dx, dst + x0);
          std::fill(dst + x1, dst + w, 0.0);
        }
      }
    }
  }
}

// Adjoint of im2col.
void col2im(const RowMat& cols, int channels, int h, int w, int k, std::vector<double>& out) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  out.assign(channels * hw, 0.0);
  for (int c = 0; c < channels; ++c) {
    double* plane = out.data() + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const int dx = kx - pad;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const double* src = row + static_cast<std::size_t>(y) * w;
          double* dst = plane + static_cast<std::size_t>(sy) * w;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          for (int x = x0; x < x1; ++x) dst[x + dx] += src[x];
        }
      }
    }
  }
}

}  // namespace

struct TinyFlowNet::Workspace {
  std::vector<RowMat> cols;
  std::vector<std::vector<double>> preact;
  std::vector<double> output;
};

void TinyFlowNetConfig::validate() const {
  if (tile_size < kMinTileSize) throw ConfigError("TinyFlowNet: tile size too small");
  if (layers < 1) throw ConfigError("TinyFlowNet: need at least one layer");
  if (channels < 1) throw ConfigError("TinyFlowNet: channels must be positive");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("TinyFlowNet: kernel must be odd");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) {
    throw ConfigError("TinyFlowNet: time embedding dimension must be even and >= 2");
  }
}

TinyFlowNet::TinyFlowNet(const TinyFlowNetConfig& config) : config_(config) {
  config_.validate();
  const int k2 = config_.kernel * config_.kernel;
  std::size_t offset = 0;
  for (int l = 0; l < config_.layers; ++l) {
    const int cin = l == 0 ? config_.input_channels() : config_.channels;
    const int cout = l + 1 == config_.layers ? kChannels : config_.channels;
    LayerShape shape{cin, cout, offset, offset + static_cast<std::size_t>(cout) * cin * k2};
    offset = shape.bias_offset + cout;
    layers_.push_back(shape);
  }
  params_.assign(offset, 0.0);

  std::mt19937_64 eng(config_.seed);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& s = layers_[l];
    const double fan_in = static_cast<double>(s.in_channels) * k2;
    double bound = std::sqrt(3.0 / fan_in);
    if (l + 1 == layers_.size()) bound *= 0.1;
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = s.weight_offset; i < s.bias_offset; ++i) params_[i] = u(eng);
  }
}

std::vector<double> TinyFlowNet::time_embedding(double t) const {
  const int half = config_.time_embed_dim / 2;
  std::vector<double> emb(config_.time_embed_dim);
  for (int i = 0; i < half; ++i) {
    const double freq = half == 1 ? 1.0 : std::pow(100.0, static_cast<double>(i) / (half - 1));
    emb[2 * i] = std::sin(freq * t);
    emb[2 * i + 1] = std::cos(freq * t);
  }
  return emb;
}

std::vector<double> TinyFlowNet::make_input(const MvGrid& z, const ViewImage& cond,
                                            double t) const {
  const int ts = config_.tile_size;
  if (z.tile_size() != ts || cond.tile_size() != ts) {
    throw ShapeError("TinyFlowNet: expected tile size " + std::to_string(ts));
  }
  const int h = z.height();
  const int w = z.width();
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<double> in(config_.input_channels() * hw);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      for (int c = 0; c < kChannels; ++c) {
        in[c * hw + p] = z(y, x, c);
        in[(kChannels + c) * hw + p] = cond(y % ts, x % ts, c);
      }
    }
  }
  const auto emb = time_embedding(t);
  for (std::size_t e = 0; e < emb.size(); ++e) {
    std::fill_n(in.begin() + static_cast<std::ptrdiff_t>((2 * kChannels + e) * hw), hw, emb[e]);
  }
  return in;
}

void TinyFlowNet::forward(std::vector<double> act, Workspace& ws, bool keep) const {
  const int h = kGridRows * config_.tile_size;
  const int w = kGridCols * config_.tile_size;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const int k = config_.kernel;
  ws.cols.resize(keep ? layers_.size() : 1);
  ws.preact.resize(keep ? layers_.size() : 0);

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& s = layers_[l];
    RowMat& cols = ws.cols[keep ? l : 0];
    im2col(act, s.in_channels, h, w, k, cols);
    ConstRowMap weight(params_.data() + s.weight_offset, s.out_channels,
                       static_cast<Eigen::Index>(s.in_channels) * k * k);
    std::vector<double> out(s.out_channels * hw);
    RowMap out_map(out.data(), s.out_channels, static_cast<Eigen::Index>(hw));
    out_map.noalias() = weight * cols;
    for (int c = 0; c < s.out_channels; ++c) {
      const double b = params_[s.bias_offset + c];
      double* row = out.data() + c * hw;
      for (std::size_t p = 0; p < hw; ++p) row[p] += b;
    }
    if (l + 1 == layers_.size()) {
      ws.output = std::move(out);
      break;
    }
    act.resize(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) act[i] = out[i] * sigmoid(out[i]);
    if (keep) ws.preact[l] = std::move(out);
  }
}

MvGrid TinyFlowNet::predict_raw(const MvGrid& z, const ViewImage& cond, double t) const {
  Workspace ws;
  forward(make_input(z, cond, t), ws, false);
  const int h = z.height();
  const int w = z.width();
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<double> values(hw * kChannels);
  for (std::size_t p = 0; p < hw; ++p) {
    for (int c = 0; c < kChannels; ++c) values[p * kChannels + c] = ws.output[c * hw + p];
  }
  MvGrid out(config_.tile_size);
  std::copy(values.begin(), values.end(), out.values().begin());
  return out;
}

double TinyFlowNet::loss_and_gradient(std::span<const TrainingRecord> batch,
                                      std::span<double> grad) const {
  if (batch.empty()) throw ConfigError("loss_and_gradient: empty batch");
  if (grad.size() != params_.size()) throw ShapeError("loss_and_gradient: gradient size");
  std::fill(grad.begin(), grad.end(), 0.0);

  const int h = kGridRows * config_.tile_size;
  const int w = kGridCols * config_.tile_size;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const int k = config_.kernel;
  const double n_elem = static_cast<double>(hw * kChannels);
  const double scale = 2.0 / (n_elem * static_cast<double>(batch.size()));

  Workspace ws;
  double total = 0.0;
  std::vector<double> dout;
  std::vector<double> dact;
  RowMat dcols;

  for (const auto& rec : batch) {
    const MvGrid z = add_noise(rec.x0, rec.noise, rec.t);
    const ViewImage c = add_noise(rec.cond, rec.cond_noise, rec.t);
    forward(make_input(z, c, rec.t), ws, true);

    // d loss / d output, channel-major.
    dout.assign(kChannels * hw, 0.0);
    double sq = 0.0;
    auto x0 = rec.x0.values();
    auto nz = rec.noise.values();
    for (std::size_t p = 0; p < hw; ++p) {
      for (int ch = 0; ch < kChannels; ++ch) {
        const std::size_t i = p * kChannels + ch;
        const double r = ws.output[ch * hw + p] - (nz[i] - x0[i]);
        sq += r * r;
        dout[ch * hw + p] = scale * r;
      }
    }
    total += sq / n_elem;

    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& s = layers_[li];
      if (li + 1 != layers_.size()) {
        const auto& pre = ws.preact[li];
        for (std::size_t i = 0; i < dout.size(); ++i) {
          const double sg = sigmoid(pre[i]);
          dout[i] = dact[i] * sg * (1.0 + pre[i] * (1.0 - sg));
        }
      }
      const auto patch = static_cast<Eigen::Index>(s.in_channels) * k * k;
      ConstRowMap dout_map(dout.data(), s.out_channels, static_cast<Eigen::Index>(hw));
      RowMap dweight(grad.data() + s.weight_offset, s.out_channels, patch);
      dweight.noalias() += dout_map * ws.cols[li].transpose();
      for (int c = 0; c < s.out_channels; ++c) {
        const double* row = dout.data() + c * hw;
        double acc = 0.0;
        for (std::size_t p = 0; p < hw; ++p) acc += row[p];
        grad[s.bias_offset + c] += acc;
      }
      if (li == 0) break;
      ConstRowMap weight(params_.data() + s.weight_offset, s.out_channels, patch);
      dcols.resize(patch, static_cast<Eigen::Index>(hw));
      dcols.noalias() = weight.transpose() * dout_map;
      col2im(dcols, s.in_channels, h, w, k, dact);
      dout.resize(dact.size());
    }
  }
  return total / static_cast<double>(batch.size());
}

void TinyFlowNet::save(const std::filesystem::path& path) const {
  nlohmann::json header = {
      {"format", "tinyflownet"},
      {"version", kFormatVersion},
      {"architecture",
       {{"layers", config_.layers},
        {"channels", config_.channels},
        {"kernel", config_.kernel},
        {"time_embed_dim", config_.time_embed_dim},
        {"activation", "silu"}}},
      {"tile_size", config_.tile_size},
      {"seed", config_.seed},
      {"parameter_count", params_.size()},
  };
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  const std::uint32_t version = kFormatVersion;
  const std::uint64_t header_len = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(params_.size() * sizeof(double)));
  if (!out) throw DataError("writing " + path.string() + " failed");
}

TinyFlowNet TinyFlowNet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError(path.string() + " is not a TinyFlowNet checkpoint");
  }
  if (version != kFormatVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  if (header_len > (1u << 20)) throw DataError(path.string() + ": corrupt header length");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError(path.string() + ": truncated header");

  TinyFlowNetConfig cfg;
  std::size_t count = 0;
  try {
    const auto header = nlohmann::json::parse(text);
    if (header.at("format") != "tinyflownet" || header.at("version") != kFormatVersion) {
      throw DataError(path.string() + ": header format mismatch");
    }
    const auto& arch = header.at("architecture");
    if (arch.at("activation") != "silu") throw DataError(path.string() + ": unknown activation");
    cfg.layers = arch.at("layers").get<int>();
    cfg.channels = arch.at("channels").get<int>();
    cfg.kernel = arch.at("kernel").get<int>();
    cfg.time_embed_dim = arch.at("time_embed_dim").get<int>();
    cfg.tile_size = header.at("tile_size").get<int>();
    cfg.seed = header.at("seed").get<std::uint64_t>();
    count = header.at("parameter_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed header: " + e.what());
  }

  TinyFlowNet net = [&] {
    try {
      return TinyFlowNet(cfg);
    } catch (const ConfigError& e) {
      throw DataError(path.string() + ": incompatible architecture: " + e.what());
    }
  }();
  if (count != net.params_.size()) {
    throw DataError(path.string() + ": parameter count does not match architecture");
  }
  in.read(reinterpret_cast<char*>(net.params_.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw DataError(path.string() + ": truncated parameters");
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError(path.string() + ": trailing bytes after parameters");
  }
  return net;
}

double flow_matching_loss(const VelocityModel& model, std::span<const TrainingRecord> batch) {
  if (batch.empty()) throw ConfigError("flow_matching_loss: empty batch");
  double total = 0.0;
  for (const auto& rec : batch) {
    const MvGrid z = add_noise(rec.x0, rec.noise, rec.t);
    const ViewImage c = add_noise(rec.cond, rec.cond_noise, rec.t);
    const MvGrid v = model.predict_raw(z, c, rec.t);
    require_same_shape(v, rec.x0, "flow_matching_loss");
    auto vv = v.values();
    auto x0 = rec.x0.values();
    auto nz = rec.noise.values();
    double sq = 0.0;
    for (std::size_t i = 0; i < vv.size(); ++i) {
      const double r = vv[i] - (nz[i] - x0[i]);
      sq += r * r;
    }
    total += sq / static_cast<double>(vv.size());
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace gridedit
