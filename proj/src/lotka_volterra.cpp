#include "tess/targets.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace tess {

namespace {

// Fixed-step RK4 over a time grid; `store(i, y)` receives the state at grid
// point i. Returns false as soon as the state leaves the finite range.
template <typename State, typename Field, typename Store>
bool rk4_run(const Field& f, State y, const std::vector<double>& grid, int substeps, Store&& store) {
  if (grid.empty()) return true;
  store(std::size_t{0}, y);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double h = (grid[i] - grid[i - 1]) / substeps;
    double t = grid[i - 1];
    for (int s = 0; s < substeps; ++s) {
      const State k1 = f(t, y);
      const State k2 = f(t + 0.5 * h, State(y + 0.5 * h * k1));
      const State k3 = f(t + 0.5 * h, State(y + 0.5 * h * k2));
      const State k4 = f(t + h, State(y + h * k3));
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      t = grid[i - 1] + (s + 1) * h;
    }
    if (!y.allFinite()) return false;
    store(i, y);
  }
  return true;
}

}  // namespace

RowMatrix rk4_integrate(const VectorField& f, const Vector& y0, const std::vector<double>& t_grid, int substeps) {
  require(substeps >= 1, "rk4_integrate: substeps must be >= 1");
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    require(t_grid[i] > t_grid[i - 1], "rk4_integrate: time grid must be strictly increasing");
  }
  RowMatrix out(static_cast<Eigen::Index>(t_grid.size()), y0.size());
  std::size_t failed_at = 0;
  const bool ok = rk4_run(
      f, Vector(y0), t_grid, substeps,
      [&](std::size_t i, const Vector& y) {
        out.row(static_cast<Eigen::Index>(i)) = y.transpose();
        failed_at = i + 1;
      });
  if (!ok) {
    throw NumericalError("rk4_integrate: non-finite state at grid index " + std::to_string(failed_at) +
                         " (t = " + std::to_string(t_grid[failed_at]) + ")");
  }
  return out;
}

double truncated_normal_logpdf(double x, double mean, double sd) {
  if (x < 0.0) return -std::numeric_limits<double>::infinity();
  const double mass = 0.5 * std::erfc(-mean / (sd * std::numbers::sqrt2));
  return normal_logpdf(x, mean, sd) - std::log(mass);
}

LynxHareDataset bundled_lynx_hare() {
  LynxHareDataset d;
  d.years = {1900, 1901, 1902, 1903, 1904, 1905, 1906, 1907, 1908, 1909, 1910,
             1911, 1912, 1913, 1914, 1915, 1916, 1917, 1918, 1919, 1920};
  d.hare = {30.0, 47.2, 70.2, 77.4, 36.3, 20.6, 18.1, 21.4, 22.0, 25.4, 27.1,
            40.3, 57.0, 76.6, 52.3, 19.5, 11.2, 7.6,  14.6, 16.2, 24.7};
  d.lynx = {4.0, 6.1,  9.8,  35.2, 59.4, 41.7, 19.0, 13.0, 8.3, 9.1, 7.4,
            8.0, 12.3, 19.5, 45.7, 51.1, 29.7, 15.8, 9.7,  10.1, 8.6};
  return d;
}

double lotka_volterra_logdensity(const Vector& z, const LynxHareDataset& data, int substeps) {
  require(z.size() == 8, "Lotka-Volterra model has eight parameters");
  require(data.years.size() >= 2 && data.hare.size() == data.years.size() && data.lynx.size() == data.years.size(),
          "Lotka-Volterra dataset is inconsistent");
  const double alpha = std::exp(z[0]);
  const double gamma = std::exp(z[1]);
  const double beta = std::exp(z[2]);
  const double delta = std::exp(z[3]);
  const double sigma_p = std::exp(z[4]);
  const double sigma_q = std::exp(z[5]);

  // Truncated normal priors on the rates (exp transform, + log-Jacobian z_i),
  // normal priors directly on the log-scale coordinates.
  double lp = 0.0;
  lp += truncated_normal_logpdf(alpha, 1.0, 0.5) + z[0];
  lp += truncated_normal_logpdf(gamma, 1.0, 0.5) + z[1];
  lp += truncated_normal_logpdf(beta, 0.05, 0.05) + z[2];
  lp += truncated_normal_logpdf(delta, 0.05, 0.05) + z[3];
  lp += normal_logpdf(z[4], -1.0, 1.0) + normal_logpdf(z[5], -1.0, 1.0);
  lp += normal_logpdf(z[6], std::log(10.0), 1.0) + normal_logpdf(z[7], std::log(10.0), 1.0);
  if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();

  std::vector<double> grid(data.years.size());
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = data.years[i] - data.years.front();

  auto field = [=](double, const Eigen::Vector2d& y) {
    return Eigen::Vector2d(alpha * y[0] - beta * y[0] * y[1], -gamma * y[1] + delta * y[0] * y[1]);
  };
  double loglik = 0.0;
  bool positive = true;
  const bool ok = rk4_run(field, Eigen::Vector2d(std::exp(z[6]), std::exp(z[7])), grid, substeps,
                          [&](std::size_t i, const Eigen::Vector2d& y) {
                            if (i == 0) return;  // observations are modelled for t > 0
                            if (!(y[0] > 0.0 && y[1] > 0.0)) {
                              positive = false;
                              return;
                            }
                            loglik += normal_logpdf(std::log(data.hare[i]), std::log(y[0]), sigma_p);
                            loglik += normal_logpdf(std::log(data.lynx[i]), std::log(y[1]), sigma_q);
                          });
  if (!ok || !positive || !std::isfinite(loglik)) return -std::numeric_limits<double>::infinity();
  return loglik + lp;
}

TargetModel lotka_volterra_target(LynxHareDataset data, int substeps) {
  require(substeps >= 1, "substeps must be >= 1");
  TargetModel t;
  t.name = "lotka_volterra";
  t.dim = 8;
  t.log_density = [data, substeps](const Vector& z) { return lotka_volterra_logdensity(z, data, substeps); };
  // No analytic score: callers needing one go through with_score_fallback.
  t.constrain = [](const Vector& z) -> Vector { return z.array().exp(); };
  t.unconstrain = [](const Vector& y) -> Vector { return y.array().log(); };
  t.dim_names = {"alpha", "gamma", "beta", "delta", "sigma_p", "sigma_q", "p0", "q0"};
  return t;
}

}  // namespace tess
