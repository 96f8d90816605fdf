#include "tess/experiment.hpp"

#include "tess/targets.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>

namespace tess {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string lookup(const std::map<std::string, std::string>& paths, const std::string& key) {
  const auto it = paths.find(key);
  return it == paths.end() ? std::string{} : it->second;
}

class PhaseClock {
 public:
  explicit PhaseClock(ordered_json& timings) : timings_(timings) {}
  template <typename F>
  auto run(const std::string& phase, F&& body) {
    current = phase;
    const auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      record(phase, start);
    } else {
      auto value = body();
      record(phase, start);
      return value;
    }
  }
  std::string current;

 private:
  void record(const std::string& phase, std::chrono::steady_clock::time_point start) {
    timings_[phase] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  ordered_json& timings_;
};

}  // namespace

WarmupConfig RunConfig::warmup_config() const {
  WarmupConfig w;
  w.k = k;
  w.h = h;
  w.m = m;
  w.M = M;
  w.pretrain_steps = pretrain_steps;
  w.lr0 = lr0;
  w.pretrain = pretrain;
  w.seed = seed;
  return w;
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["model"] = model;
  j["chains"] = k;
  j["warmup"] = h;
  j["samples"] = N;
  j["grad_steps"] = m;
  j["n_layers"] = n_layers;
  j["hidden_width"] = hidden_width;
  j["lr0"] = lr0;
  j["seed"] = seed;
  j["data_seed"] = data_seed;
  j["data_paths"] = data_paths;
  j["pretrain"] = pretrain;
  j["pretrain_batch"] = M;
  j["pretrain_steps"] = pretrain_steps;
  j["stein_cap"] = stein_cap;
  j["iat_window"] = iat_window;
  j["lv_substeps"] = lv_substeps;
  j["exact_map"] = exact_map;
  j["checkpoint_every"] = checkpoint_every;
  j["output_dir"] = output_dir.string();
  return j;
}

const std::vector<std::string>& known_models() {
  static const std::vector<std::string> models = {"banana", "gaussian", "bod", "logistic", "hmm", "lotka_volterra"};
  return models;
}

RunConfig config_for_model(const std::string& model) {
  const auto& models = known_models();
  if (std::find(models.begin(), models.end(), model) == models.end()) {
    std::string list;
    for (const auto& m : models) list += (list.empty() ? "" : ", ") + m;
    throw ConfigError("unknown model '" + model + "' (known: " + list + ")");
  }
  RunConfig cfg;
  cfg.model = model;
  if (model == "banana") {
    cfg.lr0 = 2e-2;
  } else if (model == "gaussian") {
    cfg.lr0 = 1e-3;
  } else if (model == "bod") {
    // The forward KL at the identity map is astronomically large for BOD.
    cfg.lr0 = 2e-2;
    cfg.pretrain = false;
  } else if (model == "logistic") {
    cfg.lr0 = 1e-3;
  } else if (model == "hmm") {
    cfg.lr0 = 1e-3;
  } else if (model == "lotka_volterra") {
    cfg.lr0 = 1e-3;
    cfg.pretrain = false;
  }
  return cfg;
}

void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "model") cfg.model = value.get<std::string>();
      else if (key == "chains") cfg.k = value.get<std::size_t>();
      else if (key == "warmup") cfg.h = value.get<std::size_t>();
      else if (key == "samples") cfg.N = value.get<std::size_t>();
      else if (key == "grad_steps") cfg.m = value.get<std::size_t>();
      else if (key == "n_layers") cfg.n_layers = value.get<int>();
      else if (key == "hidden_width") cfg.hidden_width = value.get<Eigen::Index>();
      else if (key == "lr0") cfg.lr0 = value.get<double>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "data_seed") cfg.data_seed = value.get<std::uint64_t>();
      else if (key == "data_paths") cfg.data_paths = value.get<std::map<std::string, std::string>>();
      else if (key == "pretrain") cfg.pretrain = value.get<bool>();
      else if (key == "pretrain_batch") cfg.M = value.get<std::size_t>();
      else if (key == "pretrain_steps") cfg.pretrain_steps = value.get<std::size_t>();
      else if (key == "stein_cap") cfg.stein_cap = value.get<std::size_t>();
      else if (key == "iat_window") cfg.iat_window = value.get<double>();
      else if (key == "lv_substeps") cfg.lv_substeps = value.get<int>();
      else if (key == "exact_map") cfg.exact_map = value.get<bool>();
      else if (key == "checkpoint_every") cfg.checkpoint_every = value.get<std::size_t>();
      else if (key == "output_dir") cfg.output_dir = value.get<std::string>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path.string() + ": config must be a JSON object");
  RunConfig cfg = config_for_model(j.value("model", std::string("banana")));
  apply_config_json(cfg, j);
  return cfg;
}

void validate_config(const RunConfig& cfg) {
  config_for_model(cfg.model);
  if (cfg.k < 2) throw ConfigError("chains must be >= 2");
  if (cfg.m < 1) throw ConfigError("grad_steps must be >= 1");
  if (cfg.n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (cfg.hidden_width < 0) throw ConfigError("hidden_width must be >= 0");
  if (!(cfg.lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (cfg.pretrain && cfg.M < 1) throw ConfigError("pretrain_batch must be >= 1");
  if (cfg.stein_cap < 2) throw ConfigError("stein_cap must be >= 2");
  if (cfg.iat_window < 0.0) throw ConfigError("iat_window must be >= 0");
  if (cfg.lv_substeps < 1) throw ConfigError("lv_substeps must be >= 1");
  if (cfg.exact_map && cfg.model != "banana") throw ConfigError("--exact-map is only available for the banana model");
  if (cfg.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

LoadedModel load_dataset(const std::string& model, const std::map<std::string, std::string>& paths,
                         std::uint64_t data_seed, int lv_substeps) {
  config_for_model(model);
  LoadedModel out;
  if (model == "banana") {
    out.target = banana_target();
    out.data_source = "none";
  } else if (model == "gaussian") {
    out.target = standard_gaussian_target(2);
    out.data_source = "none";
  } else if (model == "bod") {
    out.target = bod_target(bod_simulate(data_seed));
    out.data_source = "simulated (data_seed " + std::to_string(data_seed) + ")";
  } else if (model == "logistic") {
    const std::string path = lookup(paths, "german_credit");
    if (!path.empty()) {
      out.target = sparse_logistic_target(load_german_credit(path));
      out.data_source = path;
    } else {
      out.target = sparse_logistic_target(synthetic_german_credit(data_seed));
      out.data_source = "synthetic German credit stand-in";
      out.warnings.push_back("no german_credit path given; using the synthetic stand-in dataset");
    }
  } else if (model == "hmm") {
    const std::string path = lookup(paths, "returns");
    if (!path.empty()) {
      out.target = hmm_target(load_returns(path));
      out.data_source = path;
    } else {
      out.target = hmm_target(synthetic_returns(data_seed));
      out.data_source = "synthetic two-regime returns";
      out.warnings.push_back("no returns path given; using a synthetic two-regime series of length 431");
    }
  } else if (model == "lotka_volterra") {
    const std::string path = lookup(paths, "lynx_hare");
    if (!path.empty()) {
      out.target = lotka_volterra_target(load_lynx_hare(path), lv_substeps);
      out.data_source = path;
    } else {
      out.target = lotka_volterra_target(bundled_lynx_hare(), lv_substeps);
      out.data_source = "bundled lynx-hare table (1900-1920)";
    }
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& value) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << value;
    out.flush();
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

RunManifest run_experiment(const RunConfig& cfg) {
  validate_config(cfg);
  namespace fs = std::filesystem;
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  const fs::path checkpoint_dir = dir / "checkpoints";

  RunManifest manifest;
  ordered_json& j = manifest.json;
  j["version"] = kVersion;
  j["config"] = cfg.to_json();
  j["status"] = "running";
  ordered_json timings = ordered_json::object();
  j["warnings"] = ordered_json::array();
  j["outputs"] = ordered_json::object();
  j["checkpoints"] = ordered_json::array();
  PhaseClock clock(timings);

  try {
    const LoadedModel loaded = clock.run("data", [&] { return load_dataset(cfg.model, cfg.data_paths, cfg.data_seed, cfg.lv_substeps); });
    const TargetModel& target = loaded.target;
    for (const auto& w : loaded.warnings) j["warnings"].push_back(w);
    j["data_source"] = loaded.data_source;
    j["dim"] = target.dim;

    std::unique_ptr<Transport> map;
    TransportMap flow;
    const WarmupConfig wcfg = cfg.warmup_config();

    if (cfg.exact_map) {
      map = std::make_unique<ExactBananaMap>();
    } else {
      flow = init_flow(target.dim, cfg.n_layers, cfg.seed, cfg.hidden_width);
      if (cfg.pretrain && cfg.pretrain_steps > 0) {
        std::ofstream plog(dir / "pretrain_log.csv", std::ios::trunc);
        plog << "step,forward_kl,lr\n";
        flow = clock.run("pretrain", [&] {
          return pretrain(flow, target, wcfg, [&](const PretrainStep& s) {
            plog << s.step << ',' << format_double(s.loss) << ',' << format_double(s.lr) << '\n';
          });
        });
        j["outputs"]["pretrain_log"] = "pretrain_log.csv";
      }
    }

    std::vector<ChainState> states;
    clock.run("warmup", [&] {
      const Transport& current = cfg.exact_map ? *map : static_cast<const Transport&>(flow);
      states = initial_states(cfg.k, current, target, cfg.seed);
      if (cfg.exact_map) {
        // Fixed map: the warm-up iterations are plain burn-in.
        for (std::size_t t = 0; t < cfg.h; ++t) tess_sweep(states, *map, target, cfg.seed, Stream::warmup, t);
        return;
      }
      std::ofstream log(dir / "training_log.csv", std::ios::trunc);
      log << "epoch,reverse_kl,forward_kl,lr,mean_shrinks\n";
      auto on_epoch = [&](const EpochRecord& r, const TransportMap& T) {
        log << r.epoch << ',' << format_double(r.reverse_kl) << ','
            << (r.forward_kl ? format_double(*r.forward_kl) : std::string("nan")) << ',' << format_double(r.lr) << ','
            << format_double(r.mean_shrinks) << '\n';
        if (cfg.checkpoint_every > 0 && r.epoch % cfg.checkpoint_every == 0) {
          fs::create_directories(checkpoint_dir);
          char name[64];
          std::snprintf(name, sizeof(name), "flow_epoch_%04zu.bin", r.epoch);
          save_checkpoint(T, checkpoint_dir / name);
          j["checkpoints"].push_back((fs::path("checkpoints") / name).string());
        }
      };
      WarmupResult res = warmup(std::move(states), std::move(flow), target, wcfg, on_epoch);
      flow = std::move(res.map);
      states = std::move(res.states);
      j["outputs"]["training_log"] = "training_log.csv";
      if (res.recovered_chains > 0) {
        j["warnings"].push_back(std::to_string(res.recovered_chains) +
                                " chain refreshes re-anchored at the previous x after a map update");
      }
    });

    const Transport& T = cfg.exact_map ? *map : static_cast<const Transport&>(flow);
    SamplingRun run = clock.run("sampling", [&] { return run_sampling(states, T, target, cfg.N, cfg.seed); });
    j["mean_shrinks"] = run.stats.mean_shrinks();

    DiagnosticsReport report;
    clock.run("diagnostics", [&] {
      if (cfg.N < 2) {
        report.warnings.push_back("fewer than two sampling iterations; diagnostics skipped");
        report.iat.tau_max = report.iat.sigma_tau = std::numeric_limits<double>::quiet_NaN();
        return;
      }
      report = diagnose(target, run.samples, cfg.stein_cap, cfg.seed, IatOptions{cfg.iat_window});
    });
    for (const auto& w : report.warnings) j["warnings"].push_back(w);

    clock.run("output", [&] {
      write_samples_csv(run.samples, dir / "samples.csv");
      write_samples_binary(run.samples, target.dim_names, dir / "samples.bin");
      write_samples_binary(run.latent, target.dim_names, dir / "latent.bin");
      write_file_atomic(dir / "diagnostics.json", report.to_json().dump(2) + "\n");
      j["outputs"]["samples_csv"] = "samples.csv";
      j["outputs"]["samples_binary"] = "samples.bin";
      j["outputs"]["latent_binary"] = "latent.bin";
      j["outputs"]["diagnostics"] = "diagnostics.json";
      if (!cfg.exact_map) {
        save_checkpoint(flow, dir / "flow_final.bin");
        j["checkpoints"].push_back("flow_final.bin");
      }
    });
    j["diagnostics"] = report.to_json();
    j["status"] = "ok";
    manifest.ok = true;
  } catch (const std::exception& e) {
    j["status"] = "failed";
    j["failed_phase"] = clock.current;
    j["error"] = e.what();
    manifest.failed_phase = clock.current;
    j["timings"] = timings;
    write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
    throw PhaseError(clock.current, clock.current + ": " + e.what());
  }
  j["timings"] = timings;
  write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
  return manifest;
}

RowMatrix density_grid(const Transport& map, const TargetModel& target, const GridBounds& bounds, int resolution,
                       const Vector& fixed) {
  if (resolution <= 1) throw ConfigError("grid resolution must be > 1");
  require(map.dim() == target.dim, "density_grid: map and target dimensions differ");
  require(target.dim >= 2, "density_grid: need at least two dimensions");
  require(fixed.size() == target.dim, "density_grid: fixed point has the wrong length");
  if (!(bounds.x0_hi > bounds.x0_lo && bounds.x1_hi > bounds.x1_lo)) throw ConfigError("grid bounds must be increasing");
  const auto res = static_cast<Eigen::Index>(resolution);
  RowMatrix out(res * res, 4);
  Vector x = fixed;
  for (Eigen::Index i = 0; i < res; ++i) {
    x[0] = bounds.x0_lo + (bounds.x0_hi - bounds.x0_lo) * static_cast<double>(i) / static_cast<double>(res - 1);
    for (Eigen::Index k = 0; k < res; ++k) {
      x[1] = bounds.x1_lo + (bounds.x1_hi - bounds.x1_lo) * static_cast<double>(k) / static_cast<double>(res - 1);
      const Eigen::Index row = i * res + k;
      out(row, 0) = x[0];
      out(row, 1) = x[1];
      out(row, 2) = target.log_density(x);
      out(row, 3) = pushforward_logdensity(map, x);
    }
  }
  return out;
}

void emit_density_grid(const Transport& map, const TargetModel& target, const GridBounds& bounds, int resolution,
                       const Vector& fixed, const std::filesystem::path& path) {
  const RowMatrix grid = density_grid(map, target, bounds, resolution, fixed);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write grid file: " + path.string());
  out << "x0,x1,target_logdensity,pushforward_logdensity\n";
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    out << format_double(grid(r, 0)) << ',' << format_double(grid(r, 1)) << ',' << format_double(grid(r, 2)) << ','
        << format_double(grid(r, 3)) << '\n';
  }
  if (!out) throw DataError("failed writing grid file: " + path.string());
}

}  // namespace tess
