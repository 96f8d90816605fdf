#include "tess/targets.hpp"

#include "tess/random.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace tess {

namespace {

std::vector<std::string> default_names(Eigen::Index d) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

}  // namespace

TargetModel standard_gaussian_target(Eigen::Index dim) {
  TargetModel t = gaussian_target(Vector::Zero(dim), 1.0);
  t.log_density = [dim](const Vector& x) {
    require(x.size() == dim, "gaussian target: dimension mismatch");
    return std_normal_logpdf(x);
  };
  return t;
}

TargetModel gaussian_target(Vector mean, double sd) {
  require(sd > 0.0, "gaussian_target: sd must be positive");
  TargetModel t;
  t.name = "gaussian";
  t.dim = mean.size();
  t.log_density = [mean, sd](const Vector& x) {
    require(x.size() == mean.size(), "gaussian target: dimension mismatch");
    double acc = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) acc += normal_logpdf(x[j], mean[j], sd);
    return acc;
  };
  t.score = [mean, sd](const Vector& x) -> Vector { return (mean - x) / (sd * sd); };
  t.dim_names = default_names(t.dim);
  return t;
}

// ---------------------------------------------------------------------------

double banana_logdensity(const Vector& x) {
  require(x.size() == 2, "banana density is two-dimensional");
  const double bend = x[1] - x[0] * x[0] / 4.0;
  return -(x[0] * x[0] / 8.0 + bend * bend) / 2.0;
}

Vector banana_score(const Vector& x) {
  require(x.size() == 2, "banana density is two-dimensional");
  const double bend = x[1] - x[0] * x[0] / 4.0;
  Vector g(2);
  g[0] = -x[0] / 8.0 + bend * x[0] / 2.0;
  g[1] = -bend;
  return g;
}

TargetModel banana_target() {
  TargetModel t;
  t.name = "banana";
  t.dim = 2;
  t.log_density = [](const Vector& x) { return banana_logdensity(x); };
  t.score = [](const Vector& x) { return banana_score(x); };
  t.dim_names = {"x1", "x2"};
  return t;
}

double banana_log_normalizer() {
  return std::log(4.0 * std::sqrt(std::numbers::pi) * std::sqrt(2.0 * std::numbers::pi));
}

MapResult ExactBananaMap::forward(const Vector& u) const {
  require(u.size() == 2, "exact banana map is two-dimensional");
  Vector x(2);
  x[0] = std::sqrt(8.0) * u[0];
  x[1] = u[1] + 2.0 * u[0] * u[0];
  return {x, 0.5 * std::log(8.0)};
}

MapResult ExactBananaMap::inverse(const Vector& x) const {
  require(x.size() == 2, "exact banana map is two-dimensional");
  Vector u(2);
  u[0] = x[0] / std::sqrt(8.0);
  u[1] = x[1] - 2.0 * u[0] * u[0];
  return {u, -0.5 * std::log(8.0)};
}

// ---------------------------------------------------------------------------

double bod_mean(double t, double theta0, double theta1) { return theta0 * (1.0 - std::exp(-theta1 * t)); }

BodDataset bod_noiseless() {
  BodDataset data;
  for (int i = 0; i < 20; ++i) {
    const double t = 0.25 * i;
    data.times.push_back(t);
    data.observations.push_back(bod_mean(t, kBodTheta0, kBodTheta1));
  }
  return data;
}

BodDataset bod_simulate(std::uint64_t seed) {
  BodDataset data = bod_noiseless();
  Rng rng = make_rng(seed, Stream::data, 0, 0);
  std::normal_distribution<double> noise(0.0, std::sqrt(data.sigma2_y));
  for (auto& y : data.observations) y += noise(rng);
  return data;
}

double bod_logdensity(const Vector& theta, const BodDataset& data) {
  require(theta.size() == 2, "BOD model has two parameters");
  const double sd = std::sqrt(data.sigma2_y);
  double acc = 0.0;
  for (std::size_t i = 0; i < data.times.size(); ++i) {
    acc += normal_logpdf(data.observations[i], bod_mean(data.times[i], theta[0], theta[1]), sd);
  }
  return acc;
}

namespace {

Vector bod_score(const Vector& theta, const BodDataset& data) {
  Vector g = Vector::Zero(2);
  for (std::size_t i = 0; i < data.times.size(); ++i) {
    const double t = data.times[i];
    const double decay = std::exp(-theta[1] * t);
    const double resid = data.observations[i] - theta[0] * (1.0 - decay);
    g[0] += resid * (1.0 - decay);
    g[1] += resid * theta[0] * t * decay;
  }
  return g / data.sigma2_y;
}

}  // namespace

TargetModel bod_target(BodDataset data) {
  require(data.times.size() == data.observations.size() && !data.times.empty(), "BOD dataset is inconsistent");
  TargetModel t;
  t.name = "bod";
  t.dim = 2;
  t.log_density = [data](const Vector& theta) { return bod_logdensity(theta, data); };
  t.score = [data](const Vector& theta) { return bod_score(theta, data); };
  t.dim_names = {"theta0", "theta1"};
  return t;
}

}  // namespace tess
