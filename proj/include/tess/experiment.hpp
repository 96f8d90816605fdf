#pragma once

#include "tess/diagnostics.hpp"
#include "tess/flow.hpp"
#include "tess/sampler.hpp"
#include "tess/target_model.hpp"
#include "tess/train.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tess {

inline constexpr const char* kVersion = "0.1.0";

struct RunConfig {
  std::string model = "banana";
  std::size_t k = 128;
  std::size_t h = 400;
  std::size_t N = 100;
  std::size_t m = 1;
  int n_layers = 2;
  Eigen::Index hidden_width = 0;  // 0: conditioner input dimension
  double lr0 = 1e-3;
  std::uint64_t seed = 0;
  std::uint64_t data_seed = 0;    // synthetic datasets
  std::map<std::string, std::string> data_paths;
  bool pretrain = true;
  std::size_t M = 128;
  std::size_t pretrain_steps = 400;
  std::size_t stein_cap = 4096;
  double iat_window = 5.0;
  int lv_substeps = 20;
  bool exact_map = false;
  std::size_t checkpoint_every = 100;
  std::filesystem::path output_dir = "tess_output";

  WarmupConfig warmup_config() const;
  nlohmann::ordered_json to_json() const;
};

const std::vector<std::string>& known_models();

/// Protocol defaults with the per-model stanza for `model` applied.
RunConfig config_for_model(const std::string& model);

/// Overrides fields of `cfg` from a JSON object. Unknown keys are a ConfigError.
void apply_config_json(RunConfig& cfg, const nlohmann::json& j);

/// Reads a JSON config file: defaults for its model, then the file's fields.
RunConfig load_config_file(const std::filesystem::path& path);

void validate_config(const RunConfig& cfg);

struct LoadedModel {
  TargetModel target;
  std::string data_source;
  std::vector<std::string> warnings;
};

/// Builds the target for `model`, reading data files from `paths` where given.
/// Missing German credit or returns files fall back to synthetic data with a warning.
LoadedModel load_dataset(const std::string& model, const std::map<std::string, std::string>& paths,
                         std::uint64_t data_seed = 0, int lv_substeps = 20);

/// Thrown by run_experiment after the manifest has been written.
struct PhaseError : Error {
  PhaseError(std::string phase_name, const std::string& what) : Error(what), phase(std::move(phase_name)) {}
  std::string phase;
};

struct RunManifest {
  nlohmann::ordered_json json;
  bool ok = false;
  std::string failed_phase;
};

/// pretrain -> warm-up -> sampling -> diagnostics, writing every output file
/// and `manifest.json` into cfg.output_dir.
RunManifest run_experiment(const RunConfig& cfg);

/// Writes `value` to `path` by way of a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& value);

struct GridBounds {
  double x0_lo, x0_hi, x1_lo, x1_hi;
};

/// Columns x0, x1, target_logdensity, pushforward_logdensity over a res x res
/// grid of the first two coordinates; remaining coordinates are fixed at `fixed`.
RowMatrix density_grid(const Transport& map, const TargetModel& target, const GridBounds& bounds, int resolution,
                       const Vector& fixed);
void emit_density_grid(const Transport& map, const TargetModel& target, const GridBounds& bounds, int resolution,
                       const Vector& fixed, const std::filesystem::path& path);

}  // namespace tess
