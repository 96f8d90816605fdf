#pragma once

#include "tess/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace tess {

/// An unnormalized log-density on unconstrained R^d.
///
/// `log_density` already includes the log-Jacobian of `constrain`, so the
/// sampler can work on R^d directly. `score` is optional; see
/// `with_score_fallback` for targets that do not supply one.
struct TargetModel {
  using DensityFn = std::function<double(const Vector&)>;
  using VectorFn = std::function<Vector(const Vector&)>;

  std::string name;
  Eigen::Index dim = 0;
  DensityFn log_density;
  VectorFn score;
  VectorFn constrain;
  VectorFn unconstrain;
  std::vector<std::string> dim_names;

  bool has_score() const { return static_cast<bool>(score); }

  double operator()(const Vector& x) const { return log_density(x); }

  Vector score_at(const Vector& x) const;
  Vector to_constrained(const Vector& x) const { return constrain ? constrain(x) : x; }
  Vector to_unconstrained(const Vector& y) const { return unconstrain ? unconstrain(y) : y; }
};

/// Central finite-difference gradient with step 1e-5 * (1 + |x_j|).
Vector fd_score(const TargetModel::DensityFn& log_density, const Vector& x);

/// Copy of `target` whose score falls back to `fd_score` when absent.
TargetModel with_score_fallback(TargetModel target);

/// Adds `offset` to the log-density; the score is unchanged.
TargetModel shifted(TargetModel target, double offset);

}  // namespace tess
