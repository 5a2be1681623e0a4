#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridedit/editor.hpp"
#include "gridedit/synth.hpp"

namespace gridedit {

inline constexpr double kPsnrPeak = 2.0;
inline constexpr double kPsnrCap = 100.0;
inline constexpr double kMaskEpsilon = 2.0 / 255.0;

/// Per-pixel flags over a grid; true marks the ground-truth edit footprint.
struct RegionMask {
  int width = 0;
  int height = 0;
  std::vector<bool> edited;

  std::size_t count() const;
};

/// Pixels where any channel of tar - src exceeds `eps` in magnitude.
RegionMask edit_mask(const MvGrid& src, const MvGrid& tar, double eps = kMaskEpsilon);

double mse(const MvGrid& a, const MvGrid& b);
/// 10 log10(peak^2 / mse), capped at 100 dB when mse < 1e-10.
double psnr(const MvGrid& a, const MvGrid& b);
double psnr_from_mse(double mse);

/// MSE over pixels outside the mask; nullopt when the mask covers the
/// whole grid.
std::optional<double> preservation_error(const MvGrid& pred, const MvGrid& src,
                                         const RegionMask& mask);

/// Cosine between pred - src and gt - src. Zero when pred == src; nullopt
/// when gt == src.
std::optional<double> edit_direction_cosine(const MvGrid& pred, const MvGrid& src,
                                            const MvGrid& gt_tar);

struct BenchmarkRow {
  std::string scene_id;
  std::string method;
  double mse = 0.0;
  double psnr = 0.0;
  std::optional<double> preservation;
  std::optional<double> cosine;
};

struct MethodAggregate {
  double mean_mse = 0.0;
  double mean_psnr = 0.0;
  std::optional<double> mean_preservation;
  std::optional<double> mean_cosine;
  /// Fraction of scenes on which this method has the lowest MSE.
  double mse_best_rate = 0.0;
};

struct PairwiseWinRate {
  std::string method;
  std::string baseline;
  double mse_win_rate = 0.0;
  double preservation_win_rate = 0.0;
};

struct BenchmarkReport {
  EditConfig config;
  std::vector<std::string> methods;
  std::vector<BenchmarkRow> rows;
  std::map<std::string, MethodAggregate> aggregates;
  std::vector<PairwiseWinRate> pairwise;
};

/// A named grid producer; lets callers add reference methods (for example
/// an oracle returning the ground truth).
struct BenchmarkMethod {
  std::string name;
  std::function<MvGrid(const DatasetRecord&)> run;
};

BenchmarkMethod editor_method(EditMethod m, const VelocityModel& model, const EditConfig& cfg);

BenchmarkReport evaluate_benchmark(const Dataset& dataset,
                                   const std::vector<BenchmarkMethod>& methods,
                                   const EditConfig& cfg);

BenchmarkReport evaluate_benchmark(const VelocityModel& model, const Dataset& dataset,
                                   const std::vector<EditMethod>& methods,
                                   const EditConfig& cfg);

nlohmann::json report_json(const BenchmarkReport& report);
std::string report_csv(const BenchmarkReport& report);

}  // namespace gridedit
