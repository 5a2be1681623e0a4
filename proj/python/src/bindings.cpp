#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "gridedit/editor.hpp"
#include "gridedit/errors.hpp"
#include "gridedit/image_io.hpp"
#include "gridedit/metrics.hpp"
#include "gridedit/schedule.hpp"
#include "gridedit/synth.hpp"
#include "gridedit/tiny_flow_net.hpp"
#include "gridedit/trainer.hpp"

namespace py = pybind11;
using namespace gridedit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const detail::PixelBuffer& buf) {
  Array out({static_cast<py::ssize_t>(buf.height()), static_cast<py::ssize_t>(buf.width()),
             static_cast<py::ssize_t>(kChannels)});
  auto v = buf.values();
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<double> flat(const Array& a, int h, int w, const char* what) {
  if (a.ndim() != 3 || a.shape(0) != h || a.shape(1) != w || a.shape(2) != kChannels) {
    throw ShapeError(std::string(what) + ": expected an array of shape (" + std::to_string(h) +
                     ", " + std::to_string(w) + ", 3)");
  }
  return {a.data(), a.data() + a.size()};
}

MvGrid to_grid(const Array& a) {
  if (a.ndim() != 3 || a.shape(0) % kGridRows != 0) {
    throw ShapeError("grid: expected an array of shape (3T, 2T, 3)");
  }
  const int ts = static_cast<int>(a.shape(0)) / kGridRows;
  return MvGrid(ts, flat(a, kGridRows * ts, kGridCols * ts, "grid"));
}

ViewImage to_view(const Array& a) {
  if (a.ndim() != 3) throw ShapeError("view: expected an array of shape (T, T, 3)");
  const int ts = static_cast<int>(a.shape(0));
  return ViewImage(ts, flat(a, ts, ts, "view"));
}

py::dict trace_dict(const EditTrace& trace) {
  py::list t;
  py::list norms;
  py::list snaps;
  for (const auto& s : trace.steps) {
    t.append(s.t);
    norms.append(s.delta_norm);
    if (s.snapshot) snaps.append(to_array(*s.snapshot));
  }
  py::dict d;
  d["t"] = t;
  d["delta_norm"] = norms;
  if (py::len(snaps) > 0) d["snapshots"] = snaps;
  return d;
}

py::tuple run_edit(EditMethod m, const VelocityModel& model, const Array& src_grid,
                   const Array& src_view, const Array& tar_view, const EditConfig& cfg,
                   bool keep_snapshots) {
  const EditRequest req{to_grid(src_grid), to_view(src_view), to_view(tar_view)};
  EditResult res;
  {
    py::gil_scoped_release release;
    res = run_method(m, model, req, cfg, {keep_snapshots, {}});
  }
  return py::make_tuple(to_array(res.grid), trace_dict(res.trace));
}

py::object from_json(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::dict record_dict(const DatasetRecord& r) {
  py::dict d;
  d["id"] = r.id;
  d["scene"] = from_json(to_json(r.scene));
  d["edit"] = from_json(to_json(r.edit));
  d["src_grid"] = to_array(r.src_grid);
  d["src_cond"] = to_array(r.src_cond);
  d["tar_grid"] = to_array(r.tar_grid);
  d["tar_cond"] = to_array(r.tar_cond);
  return d;
}

RegionMask to_mask(const py::array_t<bool, py::array::c_style | py::array::forcecast>& m) {
  if (m.ndim() != 2) throw ShapeError("mask: expected a 2-D boolean array");
  RegionMask mask{static_cast<int>(m.shape(1)), static_cast<int>(m.shape(0)), {}};
  mask.edited.assign(m.data(), m.data() + m.size());
  return mask;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-view grid edit propagation: models, editor, synthetic data and metrics";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.attr("NUM_VIEWS") = kNumViews;

  // Grids and views as (H, W, 3) float64 arrays.
  m.def("split", [](const Array& grid) {
    py::list out;
    for (const auto& v : split(to_grid(grid))) out.append(to_array(v));
    return out;
  });
  m.def("assemble", [](const std::vector<Array>& views) {
    std::vector<ViewImage> v;
    for (const auto& a : views) v.push_back(to_view(a));
    return to_array(assemble(v));
  });
  m.def("add_noise", [](const Array& x, const Array& n, double t) {
    return to_array(add_noise(to_grid(x), to_grid(n), t));
  });
  m.def("read_grid", [](const std::filesystem::path& p) { return to_array(read_grid(p)); });
  m.def("read_view", [](const std::filesystem::path& p) { return to_array(read_view(p)); });
  m.def("write_grid", [](const std::filesystem::path& p, const Array& g) { write_png(p, to_grid(g)); });
  m.def("write_view", [](const std::filesystem::path& p, const Array& v) { write_png(p, to_view(v)); });

  py::class_<VelocityModel>(m, "VelocityModel")
      .def_property_readonly("tile_size", &VelocityModel::tile_size)
      .def("predict_raw",
           [](const VelocityModel& self, const Array& z, const Array& cond, double t) {
             return to_array(self.predict_raw(to_grid(z), to_view(cond), t));
           })
      .def("predict",
           [](const VelocityModel& self, const Array& z, const Array& cond, double t, double w) {
             return to_array(predict(self, to_grid(z), to_view(cond), t, w));
           },
           py::arg("z"), py::arg("cond"), py::arg("t"), py::arg("w") = 1.0);

  py::class_<ViewToGridMap>(m, "ViewToGridMap")
      .def_static("copy", &ViewToGridMap::copy)
      .def_static("zero", &ViewToGridMap::zero)
      .def_static("random", &ViewToGridMap::random, py::arg("seed"), py::arg("spread") = 0.2)
      .def("apply", [](const ViewToGridMap& self, const Array& v) {
        return to_array(self.apply(to_view(v)));
      });

  py::class_<GridLinearMap>(m, "GridLinearMap")
      .def_static("zero", &GridLinearMap::zero)
      .def_static("random", &GridLinearMap::random, py::arg("seed"), py::arg("scale") = 0.3);

  py::class_<GaussianFlowModel, VelocityModel>(m, "GaussianFlowModel")
      .def(py::init<ViewToGridMap, double, int>(), py::arg("mean_map"), py::arg("data_std"),
           py::arg("tile_size"))
      .def_property_readonly("data_std", &GaussianFlowModel::data_std);

  py::class_<LinearFlowModel, VelocityModel>(m, "LinearFlowModel")
      .def(py::init([](GridLinearMap a, ViewToGridMap b, const Array& offset) {
             return LinearFlowModel(a, b, to_grid(offset));
           }),
           py::arg("grid_map"), py::arg("cond_map"), py::arg("offset"));

  py::class_<TinyFlowNetConfig>(m, "TinyFlowNetConfig")
      .def(py::init<>())
      .def_readwrite("tile_size", &TinyFlowNetConfig::tile_size)
      .def_readwrite("layers", &TinyFlowNetConfig::layers)
      .def_readwrite("channels", &TinyFlowNetConfig::channels)
      .def_readwrite("kernel", &TinyFlowNetConfig::kernel)
      .def_readwrite("time_embed_dim", &TinyFlowNetConfig::time_embed_dim)
      .def_readwrite("seed", &TinyFlowNetConfig::seed);

  py::class_<TinyFlowNet, VelocityModel>(m, "TinyFlowNet")
      .def(py::init<const TinyFlowNetConfig&>(), py::arg("config") = TinyFlowNetConfig{})
      .def_static("load", &TinyFlowNet::load)
      .def("save", &TinyFlowNet::save)
      .def_property_readonly("config", &TinyFlowNet::config)
      .def_property_readonly("parameter_count", &TinyFlowNet::parameter_count)
      .def("parameters", [](const TinyFlowNet& self) {
        auto p = self.parameters();
        return py::array_t<double>(static_cast<py::ssize_t>(p.size()), p.data());
      });

  py::class_<EditConfig>(m, "EditConfig")
      .def(py::init<>())
      .def_readwrite("total_steps", &EditConfig::total_steps)
      .def_readwrite("n_max", &EditConfig::n_max)
      .def_readwrite("cfg_tar", &EditConfig::cfg_tar)
      .def_readwrite("cfg_src", &EditConfig::cfg_src)
      .def_readwrite("seed_grid", &EditConfig::seed_grid)
      .def_readwrite("seed_cond", &EditConfig::seed_cond)
      .def_readwrite("preset_name", &EditConfig::preset_name)
      .def_readwrite("noise_condition", &EditConfig::noise_condition)
      .def("validate", &EditConfig::validate);

  m.def("presets", [] {
    py::dict out;
    for (const auto& p : presets()) out[py::str(std::string(p.name))] = py::make_tuple(p.n_max, p.cfg_tar);
    return out;
  });
  m.def("with_preset", [](const EditConfig& cfg, const std::string& name) {
    return with_preset(cfg, find_preset(name));
  });
  m.def("methods", [] {
    std::vector<std::string> out;
    for (EditMethod e : all_methods()) out.emplace_back(method_name(e));
    return out;
  });

  // Each edit returns (grid, trace) with trace = {"t": [...], "delta_norm": [...]}.
  const char* edit_doc = "Returns (edited grid, trace dict).";
  auto bind_edit = [&](const char* name, EditMethod e) {
    m.def(
        name,
        [e](const VelocityModel& model, const Array& src_grid, const Array& src_view,
            const Array& tar_view, const EditConfig& cfg, bool snapshots) {
          return run_edit(e, model, src_grid, src_view, tar_view, cfg, snapshots);
        },
        py::arg("model"), py::arg("src_grid"), py::arg("src_view"), py::arg("tar_view"),
        py::arg("config") = EditConfig{}, py::arg("keep_snapshots") = false, edit_doc);
  };
  bind_edit("propagate_edit", EditMethod::kPropagate);
  bind_edit("ablate_sdedit", EditMethod::kSdedit);
  bind_edit("ablate_flowedit_coupling", EditMethod::kFlowEditCoupling);
  m.def(
      "naive_baseline",
      [](const VelocityModel& model, const Array& tar_view, const EditConfig& cfg) {
        const ViewImage v = to_view(tar_view);
        EditResult res;
        {
          py::gil_scoped_release release;
          res = naive_baseline(model, v, cfg);
        }
        return py::make_tuple(to_array(res.grid), trace_dict(res.trace));
      },
      py::arg("model"), py::arg("tar_view"), py::arg("config") = EditConfig{});
  m.def(
      "run_method",
      [](const std::string& method, const VelocityModel& model, const Array& src_grid,
         const Array& src_view, const Array& tar_view, const EditConfig& cfg) {
        return run_edit(parse_method(method), model, src_grid, src_view, tar_view, cfg, false);
      },
      py::arg("method"), py::arg("model"), py::arg("src_grid"), py::arg("src_view"),
      py::arg("tar_view"), py::arg("config") = EditConfig{});

  // Synthetic data.
  m.def(
      "make_dataset",
      [](int n, std::uint64_t seed, int tile, const std::filesystem::path& out) {
        return from_json(make_dataset(n, seed, tile, out));
      },
      py::arg("n_scenes"), py::arg("seed"), py::arg("tile_size"), py::arg("out_dir"));
  m.def(
      "generate_dataset",
      [](int n, std::uint64_t seed, int tile) {
        py::list out;
        for (const auto& r : generate_dataset(n, seed, tile).records) out.append(record_dict(r));
        return out;
      },
      py::arg("n_scenes"), py::arg("seed"), py::arg("tile_size"));
  m.def("load_dataset", [](const std::filesystem::path& dir) {
    py::list out;
    for (const auto& r : load_dataset(dir).records) out.append(record_dict(r));
    return out;
  });
  m.def(
      "render_scene",
      [](const py::object& scene, int tile) {
        const auto j = nlohmann::json::parse(
            py::module_::import("json").attr("dumps")(scene).cast<std::string>());
        const RenderedViews rv = render_views(scene_from_json(j), CameraSet::standard(), tile);
        return py::make_tuple(to_array(rv.grid), to_array(rv.condition));
      },
      py::arg("scene"), py::arg("tile_size") = kDefaultTileSize,
      "Renders a scene dict {seed, primitives: [{kind, center, size, color}]}.");

  // Training.
  m.def(
      "train",
      [](TinyFlowNet& model, const std::filesystem::path& data, int epochs, std::uint64_t seed,
         int batch_size, double lr, const std::string& optimizer, int steps_per_epoch) {
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.seed = seed;
        cfg.batch_size = batch_size;
        cfg.learning_rate = lr;
        cfg.optimizer = parse_optimizer(optimizer);
        cfg.steps_per_epoch = steps_per_epoch;
        const Dataset ds = load_dataset(data);
        TrainResult res;
        {
          py::gil_scoped_release release;
          res = train(model, ds, cfg);
        }
        py::dict d;
        d["epoch_loss"] = res.epoch_loss;
        d["initial_loss"] = res.initial_loss;
        d["final_loss"] = res.final_loss;
        return d;
      },
      py::arg("model"), py::arg("data_dir"), py::arg("epochs") = 500, py::arg("seed") = 0,
      py::arg("batch_size") = 16, py::arg("learning_rate") = 1e-3,
      py::arg("optimizer") = "adam", py::arg("steps_per_epoch") = 1);

  // Metrics.
  m.def("mse", [](const Array& a, const Array& b) { return mse(to_grid(a), to_grid(b)); });
  m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_grid(a), to_grid(b)); });
  m.def(
      "edit_mask",
      [](const Array& src, const Array& tar, double eps) {
        const RegionMask mask = edit_mask(to_grid(src), to_grid(tar), eps);
        py::array_t<bool> out(
            {static_cast<py::ssize_t>(mask.height), static_cast<py::ssize_t>(mask.width)});
        bool* o = out.mutable_data();
        for (std::size_t i = 0; i < mask.edited.size(); ++i) o[i] = mask.edited[i];
        return out;
      },
      py::arg("src"), py::arg("tar"), py::arg("eps") = kMaskEpsilon);
  m.def("preservation_error",
        [](const Array& pred, const Array& src,
           const py::array_t<bool, py::array::c_style | py::array::forcecast>& mask) {
          return preservation_error(to_grid(pred), to_grid(src), to_mask(mask));
        });
  m.def("edit_direction_cosine", [](const Array& pred, const Array& src, const Array& gt) {
    return edit_direction_cosine(to_grid(pred), to_grid(src), to_grid(gt));
  });
  m.def(
      "evaluate_benchmark",
      [](const VelocityModel& model, const std::filesystem::path& data,
         const std::vector<std::string>& methods, const EditConfig& cfg) {
        std::vector<EditMethod> ms;
        for (const auto& name : methods) ms.push_back(parse_method(name));
        const Dataset ds = load_dataset(data);
        BenchmarkReport rep;
        {
          py::gil_scoped_release release;
          rep = evaluate_benchmark(model, ds, ms, cfg);
        }
        return from_json(report_json(rep));
      },
      py::arg("model"), py::arg("data_dir"), py::arg("methods"),
      py::arg("config") = EditConfig{});
}
