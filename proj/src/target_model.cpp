#include "tess/target_model.hpp"

#include <cmath>

namespace tess {

Vector TargetModel::score_at(const Vector& x) const {
  if (!score) throw CapabilityError("target '" + name + "' has no score");
  return score(x);
}

Vector fd_score(const TargetModel::DensityFn& log_density, const Vector& x) {
  Vector grad(x.size());
  Vector probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = 1e-5 * (1.0 + std::abs(x[j]));
    probe[j] = x[j] + h;
    const double up = log_density(probe);
    probe[j] = x[j] - h;
    const double down = log_density(probe);
    probe[j] = x[j];
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

TargetModel with_score_fallback(TargetModel target) {
  if (!target.score) {
    target.score = [density = target.log_density](const Vector& x) { return fd_score(density, x); };
  }
  return target;
}

TargetModel shifted(TargetModel target, double offset) {
  target.log_density = [density = std::move(target.log_density), offset](const Vector& x) {
    return density(x) + offset;
  };
  return target;
}

}  // namespace tess
