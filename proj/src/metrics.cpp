#include "gridedit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "gridedit/errors.hpp"

namespace gridedit {
namespace {

constexpr int kReportSchemaVersion = 1;

void check_shapes(const MvGrid& a, const MvGrid& b, const char* what) {
  require_same_shape(a, b, what);
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& xs) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& x : xs) {
    if (x) {
      sum += *x;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

std::size_t RegionMask::count() const {
  return static_cast<std::size_t>(std::count(edited.begin(), edited.end(), true));
}

RegionMask edit_mask(const MvGrid& src, const MvGrid& tar, double eps) {
  check_shapes(src, tar, "edit_mask");
  RegionMask mask{src.width(), src.height(),
                  std::vector<bool>(static_cast<std::size_t>(src.width()) * src.height())};
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      bool diff = false;
      for (int c = 0; c < kChannels; ++c) diff = diff || std::abs(tar(y, x, c) - src(y, x, c)) > eps;
      mask.edited[static_cast<std::size_t>(y) * src.width() + x] = diff;
    }
  }
  return mask;
}

double mse(const MvGrid& a, const MvGrid& b) {
  check_shapes(a, b, "mse");
  auto av = a.values();
  auto bv = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    acc += d * d;
  }
  return acc / static_cast<double>(av.size());
}

double psnr_from_mse(double m) {
  if (m < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(kPsnrPeak * kPsnrPeak / m));
}

double psnr(const MvGrid& a, const MvGrid& b) { return psnr_from_mse(mse(a, b)); }

std::optional<double> preservation_error(const MvGrid& pred, const MvGrid& src,
                                         const RegionMask& mask) {
  check_shapes(pred, src, "preservation_error");
  if (mask.width != src.width() || mask.height != src.height()) {
    throw ShapeError("preservation_error: mask shape mismatch");
  }
  double acc = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      if (mask.edited[static_cast<std::size_t>(y) * src.width() + x]) continue;
      for (int c = 0; c < kChannels; ++c) {
        const double d = pred(y, x, c) - src(y, x, c);
        acc += d * d;
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return acc / static_cast<double>(n);
}

std::optional<double> edit_direction_cosine(const MvGrid& pred, const MvGrid& src,
                                            const MvGrid& gt_tar) {
  check_shapes(pred, src, "edit_direction_cosine");
  check_shapes(gt_tar, src, "edit_direction_cosine");
  auto p = pred.values();
  auto s = src.values();
  auto g = gt_tar.values();
  double dot = 0.0;
  double np = 0.0;
  double ng = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double dp = p[i] - s[i];
    const double dg = g[i] - s[i];
    dot += dp * dg;
    np += dp * dp;
    ng += dg * dg;
  }
  if (ng == 0.0) return std::nullopt;
  if (np == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(np) * std::sqrt(ng)), -1.0, 1.0);
}

BenchmarkMethod editor_method(EditMethod m, const VelocityModel& model, const EditConfig& cfg) {
  return {std::string(method_name(m)), [m, &model, cfg](const DatasetRecord& r) {
            const EditRequest req{r.src_grid, r.src_cond, r.tar_cond};
            return run_method(m, model, req, cfg).grid;
          }};
}

BenchmarkReport evaluate_benchmark(const Dataset& dataset,
                                   const std::vector<BenchmarkMethod>& methods,
                                   const EditConfig& cfg) {
  if (methods.empty()) throw ConfigError("benchmark needs at least one method");
  BenchmarkReport report;
  report.config = cfg;
  for (const auto& m : methods) report.methods.push_back(m.name);

  std::vector<const DatasetRecord*> records;
  for (const auto& r : dataset.records) records.push_back(&r);
  std::sort(records.begin(), records.end(),
            [](const auto* a, const auto* b) { return a->id < b->id; });

  const std::size_t n_methods = methods.size();
  // per scene, per method
  std::vector<std::vector<BenchmarkRow>> table;
  for (const DatasetRecord* r : records) {
    const RegionMask mask = edit_mask(r->src_grid, r->tar_grid);
    auto& scene_rows = table.emplace_back();
    for (const auto& m : methods) {
      const MvGrid pred = m.run(*r);
      BenchmarkRow row;
      row.scene_id = r->id;
      row.method = m.name;
      row.mse = mse(pred, r->tar_grid);
      row.psnr = psnr_from_mse(row.mse);
      row.preservation = preservation_error(pred, r->src_grid, mask);
      row.cosine = edit_direction_cosine(pred, r->src_grid, r->tar_grid);
      scene_rows.push_back(row);
      report.rows.push_back(std::move(row));
    }
  }

  const double n_scenes = static_cast<double>(table.size());
  for (std::size_t mi = 0; mi < n_methods; ++mi) {
    MethodAggregate agg;
    std::vector<std::optional<double>> pres;
    std::vector<std::optional<double>> cos;
    double best = 0.0;
    for (const auto& scene_rows : table) {
      const auto& row = scene_rows[mi];
      agg.mean_mse += row.mse / n_scenes;
      agg.mean_psnr += row.psnr / n_scenes;
      pres.push_back(row.preservation);
      cos.push_back(row.cosine);
      bool is_best = true;
      for (std::size_t other = 0; other < n_methods; ++other) {
        if (other != mi && scene_rows[other].mse < row.mse) is_best = false;
      }
      if (is_best) best += 1.0;
    }
    agg.mean_preservation = mean_of(pres);
    agg.mean_cosine = mean_of(cos);
    agg.mse_best_rate = best / n_scenes;
    report.aggregates[methods[mi].name] = agg;
  }

  // Win rates of the first method against every other one (strictly lower).
  for (std::size_t other = 1; other < n_methods; ++other) {
    PairwiseWinRate w{methods[0].name, methods[other].name, 0.0, 0.0};
    double pres_scenes = 0.0;
    for (const auto& scene_rows : table) {
      const auto& a = scene_rows[0];
      const auto& b = scene_rows[other];
      if (a.mse < b.mse) w.mse_win_rate += 1.0;
      if (a.preservation && b.preservation) {
        pres_scenes += 1.0;
        if (*a.preservation < *b.preservation) w.preservation_win_rate += 1.0;
      }
    }
    w.mse_win_rate /= n_scenes;
    w.preservation_win_rate = pres_scenes > 0.0 ? w.preservation_win_rate / pres_scenes : 0.0;
    report.pairwise.push_back(w);
  }
  return report;
}

BenchmarkReport evaluate_benchmark(const VelocityModel& model, const Dataset& dataset,
                                   const std::vector<EditMethod>& methods,
                                   const EditConfig& cfg) {
  std::vector<BenchmarkMethod> runners;
  for (EditMethod m : methods) runners.push_back(editor_method(m, model, cfg));
  return evaluate_benchmark(dataset, runners, cfg);
}

nlohmann::json report_json(const BenchmarkReport& report) {
  const auto& c = report.config;
  nlohmann::json config = {{"total_steps", c.total_steps}, {"n_max", c.n_max},
                           {"cfg_tar", c.cfg_tar},         {"cfg_src", c.cfg_src},
                           {"seed_grid", c.seed_grid},     {"seed_cond", c.seed_cond},
                           {"noise_condition", c.noise_condition}};
  config["preset"] = c.preset_name ? nlohmann::json(*c.preset_name) : nlohmann::json(nullptr);

  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"scene_id", r.scene_id},
                    {"method", r.method},
                    {"mse", r.mse},
                    {"psnr", r.psnr},
                    {"preservation_error", opt_json(r.preservation)},
                    {"edit_direction_cosine", opt_json(r.cosine)}});
  }
  nlohmann::json aggregates = nlohmann::json::object();
  for (const auto& [name, a] : report.aggregates) {
    aggregates[name] = {{"mean_mse", a.mean_mse},
                        {"mean_psnr", a.mean_psnr},
                        {"mean_preservation_error", opt_json(a.mean_preservation)},
                        {"mean_edit_direction_cosine", opt_json(a.mean_cosine)},
                        {"mse_best_rate", a.mse_best_rate}};
  }
  nlohmann::json pairwise = nlohmann::json::array();
  for (const auto& w : report.pairwise) {
    pairwise.push_back({{"method", w.method},
                        {"baseline", w.baseline},
                        {"mse_win_rate", w.mse_win_rate},
                        {"preservation_win_rate", w.preservation_win_rate}});
  }
  return {{"schema_version", kReportSchemaVersion},
          {"edit_direction_note",
           "pixel-space cosine between predicted and ground-truth edit displacements; "
           "not an embedding-space direction score"},
          {"config", config},
          {"methods", report.methods},
          {"rows", rows},
          {"aggregates", aggregates},
          {"pairwise", pairwise}};
}

std::string report_csv(const BenchmarkReport& report) {
  std::ostringstream out;
  out << "scene_id,method,mse,psnr,preservation_error,edit_direction_cosine\n";
  for (const auto& r : report.rows) {
    out << r.scene_id << ',' << r.method << ',' << fmt(r.mse) << ',' << fmt(r.psnr) << ','
        << fmt(r.preservation) << ',' << fmt(r.cosine) << '\n';
  }
  return out.str();
}

}  // namespace gridedit
