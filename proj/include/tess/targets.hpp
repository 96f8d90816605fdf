#pragma once

#include "tess/flow.hpp"
#include "tess/target_model.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace tess {

// ---------------------------------------------------------------------------
// Reference densities

TargetModel standard_gaussian_target(Eigen::Index dim);
/// Independent N(mean_j, sd^2) in every coordinate.
TargetModel gaussian_target(Vector mean, double sd);

// ---------------------------------------------------------------------------
// Banana

/// -[x1^2/8 + (x2 - x1^2/4)^2] / 2
double banana_logdensity(const Vector& x);
Vector banana_score(const Vector& x);
TargetModel banana_target();

/// log of the banana normalizing constant, 4 sqrt(pi) sqrt(2 pi).
double banana_log_normalizer();

/// Exact transport of N(0, I_2) onto the banana: T(u) = (sqrt(8) u1, u2 + 2 u1^2).
class ExactBananaMap final : public Transport {
 public:
  Eigen::Index dim() const override { return 2; }
  MapResult forward(const Vector& u) const override;
  MapResult inverse(const Vector& x) const override;
};

// ---------------------------------------------------------------------------
// Biochemical oxygen demand

struct BodDataset {
  std::vector<double> times;
  std::vector<double> observations;
  double sigma2_y = 2e-4;
};

inline constexpr double kBodTheta0 = 1.0;
inline constexpr double kBodTheta1 = 0.1;

/// B(t; theta0, theta1) = theta0 (1 - exp(-theta1 t)).
double bod_mean(double t, double theta0, double theta1);
/// 20 observations at t_i = (i-1)/4 with noise N(0, 2e-4), deterministic in seed.
BodDataset bod_simulate(std::uint64_t seed);
/// Same grid with zero noise.
BodDataset bod_noiseless();
double bod_logdensity(const Vector& theta, const BodDataset& data);
TargetModel bod_target(BodDataset data);

// ---------------------------------------------------------------------------
// Sparse logistic regression (horseshoe-like, non-centered)

struct LogisticData {
  RowMatrix features;       // n x p, already standardized, last column intercept
  std::vector<int> labels;  // 0 / 1
};

/// Shape and rate of the Gamma prior on the local and global scales.
inline constexpr double kGammaShape = 0.5;
inline constexpr double kGammaRate = 0.5;

/// log Gamma(v; shape, rate) density evaluated at v = exp(log_v), plus log_v
/// (the Jacobian of the log transform).
double log_gamma_density_logscale(double log_v, double shape, double rate);

/// z = (beta[p], log lambda[p], log tau). Throws DataError on labels outside {0,1}.
double sparse_logistic_logdensity(const Vector& z, const LogisticData& data);
Vector sparse_logistic_score(const Vector& z, const LogisticData& data);
TargetModel sparse_logistic_target(LogisticData data);

/// Standardizes the raw attribute columns and appends an intercept column.
LogisticData make_logistic_data(const RowMatrix& raw_features, std::vector<int> labels);

// ---------------------------------------------------------------------------
// Regime-switching returns model

struct ReturnsSeries {
  std::vector<double> r;
};

/// Constrained parameter order.
struct HmmParams {
  double alpha1, alpha2, rho, sigma1, sigma2, p11, p22, r0, xi10;
};

HmmParams hmm_params_from_vector(const Vector& params);

/// Filtered log-likelihood. The regime indicator is carried as xi (probability
/// of regime 1); the contribution at t is log(xi_{t-1} eta_1t + (1 - xi_{t-1}) eta_2t),
/// then xi_t = xi_{t-1} eta_1t / (xi_{t-1} eta_1t + (1 - xi_{t-1}) eta_2t).
double hmm_filter_loglik(const HmmParams& params, const ReturnsSeries& returns);
double hmm_filter_loglik(const Vector& params, const ReturnsSeries& returns);

/// z = (alpha1, alpha2, log rho, log sigma1, log sigma2, logit p11, logit p22, r0, logit xi10).
double hmm_logdensity(const Vector& z, const ReturnsSeries& returns);
Vector hmm_score(const Vector& z, const ReturnsSeries& returns);
Vector hmm_constrain(const Vector& z);
Vector hmm_unconstrain(const Vector& params);
TargetModel hmm_target(ReturnsSeries returns);

/// Two-regime switching simulation of length `length` (default 431).
ReturnsSeries synthetic_returns(std::uint64_t seed, std::size_t length = 431);

// ---------------------------------------------------------------------------
// ODE solver and Lotka-Volterra

using VectorField = std::function<Vector(double, const Vector&)>;

/// Classical fixed-step RK4. Row i of the result is the state at t_grid[i];
/// each interval is split into `substeps` equal steps.
RowMatrix rk4_integrate(const VectorField& f, const Vector& y0, const std::vector<double>& t_grid, int substeps);

struct LynxHareDataset {
  std::vector<int> years;
  std::vector<double> hare;  // prey
  std::vector<double> lynx;  // predator
};

/// Hudson's Bay Company pelts, 1900-1920, in thousands.
LynxHareDataset bundled_lynx_hare();

/// z = (log alpha, log gamma, log beta, log delta, log sigma_p, log sigma_q, log p0, log q0).
double lotka_volterra_logdensity(const Vector& z, const LynxHareDataset& data, int substeps = 20);
TargetModel lotka_volterra_target(LynxHareDataset data, int substeps = 20);

/// log N(x; mean, sd) - log P(N(mean, sd) > 0)
double truncated_normal_logpdf(double x, double mean, double sd);

// ---------------------------------------------------------------------------
// Dataset files

/// Whitespace-delimited, 24 integer attribute columns followed by a label in {1, 2}.
LogisticData load_german_credit(const std::filesystem::path& path);
/// Deterministic stand-in with the German credit layout (1000 x 24, labels 1/2 recoded).
LogisticData synthetic_german_credit(std::uint64_t seed);
/// Whitespace-delimited year / hare / lynx columns; non-numeric header lines are skipped.
LynxHareDataset load_lynx_hare(const std::filesystem::path& path);
/// One float per line.
ReturnsSeries load_returns(const std::filesystem::path& path);

}  // namespace tess
