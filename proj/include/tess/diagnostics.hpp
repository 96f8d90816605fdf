#pragma once

#include "tess/sampler.hpp"
#include "tess/target_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tess {

/// C(t) = sum_i (x_i - mean)(x_{i+t} - mean) for t = 0..N-1, via a zero-padded FFT.
/// A constant series yields all zeros.
std::vector<double> autocovariance(const std::vector<double>& series);
/// The same sum by direct O(N^2) evaluation.
std::vector<double> autocovariance_direct(const std::vector<double>& series);

struct IatOptions {
  /// The sum stops at the first lag t with t >= window_factor * 2 tau(t).
  /// Zero sums every lag up to N - 1.
  double window_factor = 5.0;
};

/// tau = 1/2 + sum_t (1 - t/N) C(t)/C(0). Throws NumericalError("zero variance") on constant input.
double iat(const std::vector<double>& series, const IatOptions& options = {});

struct IatSummary {
  Eigen::MatrixXd tau;  // chains x dims; NaN marks a constant (missing) series
  double tau_max = 0.0;
  double sigma_tau = 0.0;
  double ess = 0.0;
  double ess_per_chain = 0.0;
  std::size_t missing = 0;
  std::vector<std::string> warnings;
};

IatSummary summarize(const SampleArray& samples, const IatOptions& options = {});

/// IMQ Stein kernel (beta = -1/2) between x and y with scores sx, sy.
double stein_kernel(const Vector& x, const Vector& sx, const Vector& y, const Vector& sy);
double stein_kernel(const TargetModel& target, const Vector& x, const Vector& y);

struct SteinResult {
  double u_stat = 0.0;
  double v_stat = 0.0;
  double u_std_error = 0.0;  // jackknife standard error of u_stat
  std::size_t pair_count = 0;
  std::size_t points = 0;
};

/// Stein statistics of the rows of `points` (unconstrained space). When there
/// are more than `max_points` rows a seeded uniform subsample is used.
SteinResult stein_stats(const TargetModel& target, const RowMatrix& points, std::size_t max_points = 4096,
                        std::uint64_t seed = 0);
/// Pools a constrained sample array, maps it to unconstrained space and calls the overload above.
SteinResult stein_stats(const TargetModel& target, const SampleArray& samples, std::size_t max_points = 4096,
                        std::uint64_t seed = 0);

struct DiagnosticsReport {
  IatSummary iat;
  std::optional<SteinResult> stein;
  std::vector<std::string> warnings;

  /// {tau_max, sigma_tau, ess, ess_per_chain, stein_u, stein_v, warnings[]}
  nlohmann::ordered_json to_json() const;
};

DiagnosticsReport diagnose(const TargetModel& target, const SampleArray& samples, std::size_t stein_cap = 4096,
                           std::uint64_t seed = 0, const IatOptions& options = {});

}  // namespace tess
