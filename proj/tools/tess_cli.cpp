// Command-line front end: run, diagnose, gridplot.

#include "tess/experiment.hpp"
#include "tess/targets.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

tess::GridBounds parse_bounds(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw tess::ConfigError("--bounds: malformed number '" + item + "'");
    }
  }
  if (v.size() != 4) throw tess::ConfigError("--bounds expects four comma-separated numbers a,b,c,d");
  return {v[0], v[1], v[2], v[3]};
}

/// Per-coordinate medians of the unconstrained pooled samples.
tess::Vector unconstrained_medians(const tess::SampleArray& samples, const tess::TargetModel& target) {
  const tess::RowMatrix pooled = samples.pooled();
  tess::RowMatrix z(pooled.rows(), pooled.cols());
  for (Eigen::Index i = 0; i < pooled.rows(); ++i) z.row(i) = target.to_unconstrained(pooled.row(i).transpose()).transpose();
  tess::Vector med(z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    std::vector<double> tmp(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) tmp[static_cast<std::size_t>(i)] = z(i, j);
    std::sort(tmp.begin(), tmp.end());
    const std::size_t n = tmp.size();
    med[j] = n % 2 ? tmp[n / 2] : 0.5 * (tmp[n / 2 - 1] + tmp[n / 2]);
  }
  return med;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transport elliptical slice sampling"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Pretrain, warm up, sample and diagnose one model");
  std::string config_path, model, output;
  std::uint64_t seed = 0;
  std::size_t chains = 0, warmup_iters = 0, samples = 0;
  bool exact_map = false, no_pretrain = false;
  run->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
  auto* model_opt = run->add_option("--model", model, "Model name");
  auto* seed_opt = run->add_option("--seed", seed, "Master seed");
  auto* chains_opt = run->add_option("--chains", chains, "Number of chains k");
  auto* warmup_opt = run->add_option("--warmup", warmup_iters, "Warm-up epochs h");
  auto* samples_opt = run->add_option("--samples", samples, "Sampling iterations N");
  run->add_flag("--exact-map", exact_map, "Use the exact banana transport and skip training");
  run->add_flag("--no-pretrain", no_pretrain, "Skip forward-KL pretraining");
  auto* output_opt = run->add_option("--output", output, "Output directory");

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "IAT, ESS and Stein statistics of a samples CSV");
  std::string samples_csv, diag_model, diag_out, diag_config;
  std::size_t stein_cap = 4096;
  std::uint64_t diag_seed = 0;
  diag->add_option("--samples", samples_csv, "Samples CSV (chain,iter,dim_0,...)")->required()->check(CLI::ExistingFile);
  diag->add_option("--model", diag_model, "Model name")->required();
  diag->add_option("--config", diag_config, "Config file supplying data paths and data seed")->check(CLI::ExistingFile);
  auto* stein_cap_opt = diag->add_option("--stein-cap", stein_cap, "Stein subsample cap (default: config value)");
  auto* diag_seed_opt = diag->add_option("--seed", diag_seed, "Seed for the Stein subsample (default: config seed)");
  diag->add_option("--output", diag_out, "Write the report here instead of stdout");

  // gridplot
  auto* grid = app.add_subcommand("gridplot", "Tabulate target and flow densities on a 2-D grid");
  std::string checkpoint, grid_model, bounds_text, grid_out = "density_grid.csv", grid_samples, grid_config;
  int res = 0;
  grid->add_option("--checkpoint", checkpoint, "Flow checkpoint")->required()->check(CLI::ExistingFile);
  grid->add_option("--model", grid_model, "Model name")->required();
  grid->add_option("--bounds", bounds_text, "x0_lo,x0_hi,x1_lo,x1_hi")->required();
  grid->add_option("--res", res, "Grid points per axis")->required();
  grid->add_option("--samples", grid_samples, "Samples CSV; other coordinates are fixed at their medians")
      ->check(CLI::ExistingFile);
  grid->add_option("--config", grid_config, "Config file supplying data paths and data seed")->check(CLI::ExistingFile);
  grid->add_option("--output", grid_out, "Output CSV");

  CLI11_PARSE(app, argc, argv);

  auto data_config = [](const std::string& path, const std::string& m) {
    tess::RunConfig cfg = path.empty() ? tess::config_for_model(m) : tess::load_config_file(path);
    cfg.model = m;
    return cfg;
  };

  try {
    if (*run) {
      tess::RunConfig cfg = tess::load_config_file(config_path);
      if (*model_opt && model != cfg.model) {
        // Switching model re-applies that model's defaults under the file's fields.
        nlohmann::json file = nlohmann::json::parse(std::ifstream(config_path));
        cfg = tess::config_for_model(model);
        file.erase("model");
        tess::apply_config_json(cfg, file);
      }
      if (*seed_opt) cfg.seed = seed;
      if (*chains_opt) cfg.k = chains;
      if (*warmup_opt) cfg.h = warmup_iters;
      if (*samples_opt) cfg.N = samples;
      if (exact_map) cfg.exact_map = true;
      if (no_pretrain) cfg.pretrain = false;
      if (*output_opt) cfg.output_dir = output;
      const auto manifest = tess::run_experiment(cfg);
      std::cout << manifest.json["diagnostics"].dump(2) << '\n';
      return 0;
    }
    if (*diag) {
      const tess::RunConfig cfg = data_config(diag_config, diag_model);
      const auto loaded = tess::load_dataset(cfg.model, cfg.data_paths, cfg.data_seed, cfg.lv_substeps);
      const auto sample_array = tess::read_samples_csv(samples_csv);
      if (static_cast<Eigen::Index>(sample_array.dim()) != loaded.target.dim) {
        throw tess::DataError("samples have " + std::to_string(sample_array.dim()) + " dimensions but model '" +
                              cfg.model + "' has " + std::to_string(loaded.target.dim));
      }
      auto report = tess::diagnose(loaded.target, sample_array, *stein_cap_opt ? stein_cap : cfg.stein_cap,
                                   *diag_seed_opt ? diag_seed : cfg.seed, tess::IatOptions{cfg.iat_window});
      for (const auto& w : loaded.warnings) report.warnings.push_back(w);
      const std::string text = report.to_json().dump(2) + "\n";
      if (diag_out.empty()) {
        std::cout << text;
      } else {
        tess::write_file_atomic(diag_out, text);
      }
      return 0;
    }
    if (*grid) {
      const tess::RunConfig cfg = data_config(grid_config, grid_model);
      const auto loaded = tess::load_dataset(cfg.model, cfg.data_paths, cfg.data_seed, cfg.lv_substeps);
      const auto map = tess::load_checkpoint(checkpoint);
      tess::Vector fixed = tess::Vector::Zero(loaded.target.dim);
      if (!grid_samples.empty()) fixed = unconstrained_medians(tess::read_samples_csv(grid_samples), loaded.target);
      tess::emit_density_grid(map, loaded.target, parse_bounds(bounds_text), res, fixed, grid_out);
      std::cout << "wrote " << grid_out << '\n';
      return 0;
    }
  } catch (const tess::PhaseError& e) {
    std::cerr << "error in phase " << e.phase << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
