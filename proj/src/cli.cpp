#include "gridedit/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "gridedit/editor.hpp"
#include "gridedit/errors.hpp"
#include "gridedit/image_io.hpp"
#include "gridedit/metrics.hpp"
#include "gridedit/synth.hpp"
#include "gridedit/trainer.hpp"

namespace gridedit {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// JSON run configuration; every level rejects unknown keys.
struct RunConfig {
  json doc = json::object();

  static RunConfig load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file " + path.string());
    RunConfig rc;
    try {
      rc.doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!rc.doc.is_object()) throw ConfigError("config file must hold a JSON object");
    check_keys(rc.doc, {"preset", "data", "model", "edit", "train", "render"}, "");
    if (rc.doc.contains("edit")) {
      check_keys(rc.doc["edit"],
                 {"total_steps", "n_max", "cfg_tar", "cfg_src", "seed_grid", "seed_cond"},
                 "edit.");
    }
    if (rc.doc.contains("train")) {
      check_keys(rc.doc["train"],
                 {"epochs", "batch_size", "learning_rate", "optimizer", "seed",
                  "checkpoint_every", "steps_per_epoch", "eval_records", "channels", "layers"},
                 "train.");
    }
    if (rc.doc.contains("render")) check_keys(rc.doc["render"], {"scenes", "seed", "tile"}, "render.");
    return rc;
  }

  static void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& prefix) {
    if (!obj.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : obj.items()) {
      if (!ok.count(key)) throw ConfigError("unknown config key '" + prefix + key + "'");
    }
  }

  template <class T>
  std::optional<T> get(const char* section, const char* key) const {
    const json* node = &doc;
    if (section) {
      if (!doc.contains(section)) return std::nullopt;
      node = &doc[section];
    }
    if (!node->contains(key)) return std::nullopt;
    try {
      return node->at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + (section ? section + std::string(".") : "") +
                        key + "' has the wrong type");
    }
  }
};

// Flag value if given on the command line, else the config value, else
// the default already stored in `target`.
template <class T>
void merge(T& target, const CLI::Option* flag, const T& flag_value, std::optional<T> from_config) {
  if (flag->count() > 0) {
    target = flag_value;
  } else if (from_config) {
    target = *from_config;
  }
}

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("missing ") + what);
  if (!fs::is_regular_file(p)) throw DataError(std::string(what) + " not found: " + p.string());
}

void require_dir(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("missing ") + what);
  if (!fs::is_directory(p)) throw DataError(std::string(what) + " not found: " + p.string());
}

void prepare_output(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("missing ") + what);
  const fs::path parent = p.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw DataError(std::string("cannot create directory for ") + what + ": " + ec.message());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
  if (!out) throw DataError("writing " + p.string() + " failed");
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension(suffix);
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json config_json(const EditConfig& c) {
  json j = {{"total_steps", c.total_steps}, {"n_max", c.n_max},         {"cfg_tar", c.cfg_tar},
            {"cfg_src", c.cfg_src},         {"seed_grid", c.seed_grid}, {"seed_cond", c.seed_cond}};
  j["preset"] = c.preset_name ? json(*c.preset_name) : json(nullptr);
  return j;
}

// Edit flags shared by `edit` and `eval`.
struct EditFlags {
  std::string preset;
  int steps = 0;
  int nmax = 0;
  double cfg_tar = 0.0;
  double cfg_src = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t seed_cond = 0;
  CLI::Option* preset_opt = nullptr;
  CLI::Option* steps_opt = nullptr;
  CLI::Option* nmax_opt = nullptr;
  CLI::Option* cfg_tar_opt = nullptr;
  CLI::Option* cfg_src_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* seed_cond_opt = nullptr;

  void attach(CLI::App* app) {
    preset_opt = app->add_option("--preset", preset, "Named guidance preset");
    steps_opt = app->add_option("--steps", steps, "Total scheduler steps T");
    nmax_opt = app->add_option("--nmax", nmax, "Active (guided) steps n_max");
    cfg_tar_opt = app->add_option("--cfg-tar", cfg_tar, "Target-branch guidance weight");
    cfg_src_opt = app->add_option("--cfg-src", cfg_src, "Source-branch guidance weight");
    seed_opt = app->add_option("--seed", seed, "Seed for the grid noise stream");
    seed_cond_opt =
        app->add_option("--seed-cond", seed_cond, "Seed for the condition noise stream (default: --seed)");
  }

  // Preset first, then explicit flags (config file below flags).
  EditConfig resolve(const RunConfig& rc) const {
    EditConfig cfg;
    std::string preset_name;
    merge(preset_name, preset_opt, preset, rc.get<std::string>(nullptr, "preset"));
    if (!preset_name.empty()) cfg = with_preset(cfg, find_preset(preset_name));
    merge(cfg.total_steps, steps_opt, steps, rc.get<int>("edit", "total_steps"));
    merge(cfg.n_max, nmax_opt, nmax, rc.get<int>("edit", "n_max"));
    merge(cfg.cfg_tar, cfg_tar_opt, cfg_tar, rc.get<double>("edit", "cfg_tar"));
    merge(cfg.cfg_src, cfg_src_opt, cfg_src, rc.get<double>("edit", "cfg_src"));
    merge(cfg.seed_grid, seed_opt, seed, rc.get<std::uint64_t>("edit", "seed_grid"));
    cfg.seed_cond = cfg.seed_grid;
    if (auto sc = rc.get<std::uint64_t>("edit", "seed_cond"); sc && seed_cond_opt->count() == 0) {
      cfg.seed_cond = *sc;
    }
    if (seed_cond_opt->count() > 0) cfg.seed_cond = seed_cond;
    cfg.validate();
    return cfg;
  }
};

int cmd_render(const RunConfig& rc, int scenes_flag, const CLI::Option* scenes_opt,
               std::uint64_t seed_flag, const CLI::Option* seed_opt, int tile_flag,
               const CLI::Option* tile_opt, const fs::path& out_dir, std::ostream& out) {
  int scenes = 0;
  std::uint64_t seed = 0;
  int tile = kDefaultTileSize;
  merge(scenes, scenes_opt, scenes_flag, rc.get<int>("render", "scenes"));
  merge(seed, seed_opt, seed_flag, rc.get<std::uint64_t>("render", "seed"));
  merge(tile, tile_opt, tile_flag, rc.get<int>("render", "tile"));
  if (scenes < 1) throw ConfigError("--scenes must be at least 1");
  if (tile < kMinTileSize) throw ConfigError("--tile must be at least 8");
  if (out_dir.empty()) throw ConfigError("missing --out");
  const json manifest = make_dataset(scenes, seed, tile, out_dir);
  out << "wrote " << manifest["records"].size() << " records to " << out_dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-view grid edit propagation toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration (flags override it)");

  // render
  auto* render = app.add_subcommand("render", "Render a synthetic scene/edit dataset");
  int r_scenes = 0;
  std::uint64_t r_seed = 0;
  int r_tile = kDefaultTileSize;
  std::string r_out;
  auto* r_scenes_opt = render->add_option("--scenes", r_scenes, "Number of scenes");
  auto* r_seed_opt = render->add_option("--seed", r_seed, "Dataset seed");
  auto* r_tile_opt = render->add_option("--tile", r_tile, "Tile size in pixels");
  render->add_option("--out", r_out, "Output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Fit the toy velocity network");
  std::string t_data;
  std::string t_out;
  std::string t_loss_csv;
  TrainConfig t_cfg;
  TinyFlowNetConfig t_net;
  std::string t_optimizer = "adam";
  auto* t_data_opt = train_cmd->add_option("--data", t_data, "Dataset directory");
  train_cmd->add_option("--out", t_out, "Checkpoint path")->required();
  train_cmd->add_option("--loss-csv", t_loss_csv, "Loss curve CSV (default: <out>.loss.csv)");
  TrainConfig t_flags;
  TinyFlowNetConfig t_net_flags;
  std::string t_opt_flag;
  auto* t_epochs_opt = train_cmd->add_option("--epochs", t_flags.epochs, "Epochs");
  auto* t_seed_opt = train_cmd->add_option("--seed", t_flags.seed, "Training seed");
  auto* t_batch_opt = train_cmd->add_option("--batch", t_flags.batch_size, "Batch size");
  auto* t_lr_opt = train_cmd->add_option("--lr", t_flags.learning_rate, "Learning rate");
  auto* t_optim_opt = train_cmd->add_option("--optimizer", t_opt_flag, "adam or sgd");
  auto* t_spe_opt =
      train_cmd->add_option("--steps-per-epoch", t_flags.steps_per_epoch, "Optimizer steps per epoch");
  auto* t_ckpt_opt = train_cmd->add_option("--checkpoint-every", t_flags.checkpoint_every,
                                           "Write a checkpoint every K epochs (0: off)");
  auto* t_eval_opt =
      train_cmd->add_option("--eval-records", t_flags.eval_records, "Fixed evaluation batch size");
  auto* t_channels_opt = train_cmd->add_option("--channels", t_net_flags.channels, "Hidden channels");
  auto* t_layers_opt = train_cmd->add_option("--layers", t_net_flags.layers, "Convolution layers");

  // edit
  auto* edit_cmd = app.add_subcommand("edit", "Propagate a single-view edit to a grid");
  std::string e_model;
  std::string e_src_grid;
  std::string e_src_view;
  std::string e_tar_view;
  std::string e_out;
  std::string e_trace;
  std::string e_snapshots;
  std::string e_method = "propagate";
  bool e_record_time = false;
  EditFlags e_flags;
  auto* e_model_opt = edit_cmd->add_option("--model", e_model, "Model checkpoint");
  edit_cmd->add_option("--src-grid", e_src_grid, "Source grid PNG")->required();
  edit_cmd->add_option("--src-view", e_src_view, "Source condition view PNG")->required();
  edit_cmd->add_option("--tar-view", e_tar_view, "Edited condition view PNG")->required();
  edit_cmd->add_option("--out", e_out, "Output grid PNG")->required();
  edit_cmd->add_option("--trace", e_trace, "Trace JSON (default: <out>.json)");
  edit_cmd->add_option("--snapshots", e_snapshots, "Directory for per-step snapshots");
  edit_cmd->add_option("--method", e_method, "propagate, sdedit, flowedit_coupling or naive");
  edit_cmd->add_flag("--record-time", e_record_time, "Add wall time to the trace");
  e_flags.attach(edit_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Benchmark editing methods against ground truth");
  std::string v_model;
  std::string v_data;
  std::string v_out;
  std::string v_csv;
  std::string v_methods = "all";
  EditFlags v_flags;
  auto* v_model_opt = eval_cmd->add_option("--model", v_model, "Model checkpoint");
  auto* v_data_opt = eval_cmd->add_option("--data", v_data, "Dataset directory");
  eval_cmd->add_option("--out", v_out, "Report JSON path")->required();
  eval_cmd->add_option("--csv", v_csv, "Report CSV path (default: <out>.csv)");
  eval_cmd->add_option("--methods", v_methods, "Comma-separated methods or 'all'");
  v_flags.attach(eval_cmd);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const RunConfig rc = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);

    if (render->parsed()) {
      return cmd_render(rc, r_scenes, r_scenes_opt, r_seed, r_seed_opt, r_tile, r_tile_opt, r_out,
                        out);
    }

    if (train_cmd->parsed()) {
      merge(t_data, t_data_opt, t_data, rc.get<std::string>(nullptr, "data"));
      merge(t_cfg.epochs, t_epochs_opt, t_flags.epochs, rc.get<int>("train", "epochs"));
      merge(t_cfg.seed, t_seed_opt, t_flags.seed, rc.get<std::uint64_t>("train", "seed"));
      merge(t_cfg.batch_size, t_batch_opt, t_flags.batch_size, rc.get<int>("train", "batch_size"));
      merge(t_cfg.learning_rate, t_lr_opt, t_flags.learning_rate,
            rc.get<double>("train", "learning_rate"));
      merge(t_optimizer, t_optim_opt, t_opt_flag, rc.get<std::string>("train", "optimizer"));
      merge(t_cfg.steps_per_epoch, t_spe_opt, t_flags.steps_per_epoch,
            rc.get<int>("train", "steps_per_epoch"));
      merge(t_cfg.checkpoint_every, t_ckpt_opt, t_flags.checkpoint_every,
            rc.get<int>("train", "checkpoint_every"));
      merge(t_cfg.eval_records, t_eval_opt, t_flags.eval_records,
            rc.get<int>("train", "eval_records"));
      merge(t_net.channels, t_channels_opt, t_net_flags.channels, rc.get<int>("train", "channels"));
      merge(t_net.layers, t_layers_opt, t_net_flags.layers, rc.get<int>("train", "layers"));
      t_cfg.optimizer = parse_optimizer(t_optimizer);
      t_cfg.validate();
      require_dir(t_data, "--data");
      prepare_output(t_out, "--out");
      const fs::path loss_csv = t_loss_csv.empty() ? sibling(t_out, ".loss.csv") : fs::path(t_loss_csv);
      prepare_output(loss_csv, "--loss-csv");

      const Dataset ds = load_dataset(t_data);
      t_net.tile_size = ds.tile_size;
      t_net.seed = t_cfg.seed;
      TinyFlowNet net(t_net);
      out << "training " << net.parameter_count() << " parameters on "
          << 2 * ds.records.size() << " grid/condition pairs\n";
      TrainCallbacks cb;
      cb.on_checkpoint = [&](int epoch, const TinyFlowNet& m) {
        fs::path p = t_out;
        p.replace_extension(".epoch" + std::to_string(epoch) + ".bin");
        m.save(p);
      };
      const TrainResult res = train(net, ds, t_cfg, cb);
      net.save(t_out);
      std::string csv = "epoch,mean_loss\n";
      for (std::size_t i = 0; i < res.epoch_loss.size(); ++i) {
        csv += std::to_string(i + 1) + "," + fmt(res.epoch_loss[i]) + "\n";
      }
      write_text(loss_csv, csv);
      out << "initial loss " << fmt(res.initial_loss) << ", final loss " << fmt(res.final_loss)
          << '\n';
      return kExitOk;
    }

    if (edit_cmd->parsed()) {
      merge(e_model, e_model_opt, e_model, rc.get<std::string>(nullptr, "model"));
      const EditMethod method = parse_method(e_method);
      EditConfig cfg = e_flags.resolve(rc);
      require_file(e_model, "--model");
      require_file(e_src_grid, "--src-grid");
      require_file(e_src_view, "--src-view");
      require_file(e_tar_view, "--tar-view");
      prepare_output(e_out, "--out");
      const fs::path trace_path = e_trace.empty() ? sibling(e_out, ".json") : fs::path(e_trace);
      prepare_output(trace_path, "--trace");
      if (!e_snapshots.empty()) fs::create_directories(e_snapshots);

      const TinyFlowNet net = TinyFlowNet::load(e_model);
      const int ts = net.tile_size();
      const EditRequest req{read_grid(e_src_grid, ts), read_view(e_src_view, ts),
                            read_view(e_tar_view, ts)};
      EditOptions opts;
      opts.keep_snapshots = !e_snapshots.empty();
      const auto start = std::chrono::steady_clock::now();
      const EditResult res = run_method(method, net, req, cfg, opts);
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      write_png(e_out, res.grid);

      json steps = json::array();
      for (std::size_t i = 0; i < res.trace.steps.size(); ++i) {
        const auto& s = res.trace.steps[i];
        steps.push_back({{"step", i}, {"t", s.t}, {"delta_norm", s.delta_norm}});
        if (s.snapshot) {
          char name[32];
          std::snprintf(name, sizeof name, "step_%03zu.png", i);
          write_png(fs::path(e_snapshots) / name, *s.snapshot);
        }
      }
      json trace = {{"schema_version", 1},
                    {"method", method_name(method)},
                    {"config", config_json(cfg)},
                    {"steps", steps}};
      if (e_record_time) trace["wall_time_s"] = wall;
      write_text(trace_path, trace.dump(2) + "\n");
      out << "wrote " << e_out << " (" << res.trace.steps.size() << " steps)\n";
      return kExitOk;
    }

    if (eval_cmd->parsed()) {
      merge(v_model, v_model_opt, v_model, rc.get<std::string>(nullptr, "model"));
      merge(v_data, v_data_opt, v_data, rc.get<std::string>(nullptr, "data"));
      std::vector<EditMethod> methods;
      if (v_methods == "all") {
        methods.assign(all_methods().begin(), all_methods().end());
      } else {
        std::stringstream ss(v_methods);
        std::string item;
        while (std::getline(ss, item, ',')) {
          if (!item.empty()) methods.push_back(parse_method(item));
        }
        if (methods.empty()) throw ConfigError("--methods lists no method");
      }
      EditConfig cfg = v_flags.resolve(rc);
      require_file(v_model, "--model");
      require_dir(v_data, "--data");
      prepare_output(v_out, "--out");
      const fs::path csv_path = v_csv.empty() ? sibling(v_out, ".csv") : fs::path(v_csv);
      prepare_output(csv_path, "--csv");

      const TinyFlowNet net = TinyFlowNet::load(v_model);
      const Dataset ds = load_dataset(v_data);
      if (ds.tile_size != net.tile_size()) {
        throw DataError("dataset tile size does not match the model");
      }
      const BenchmarkReport report = evaluate_benchmark(net, ds, methods, cfg);
      write_text(v_out, report_json(report).dump(2) + "\n");
      write_text(csv_path, report_csv(report));
      out << "evaluated " << ds.records.size() << " scenes x " << methods.size()
          << " methods -> " << v_out << '\n';
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}

}  // namespace gridedit
