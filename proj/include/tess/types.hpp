#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace tess {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Flat parameter vector of a transport map in canonical order.
using ParamVector = Eigen::VectorXd;

// Error taxonomy. Every error the library raises derives from Error.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// A caller broke a precondition (dimension mismatch, empty batch, ...).
struct ContractError : Error {
  using Error::Error;
};
/// NaN/inf where a finite value was required.
struct NumericalError : Error {
  using Error::Error;
};
/// The operation needs something the target does not provide (e.g. a score).
struct CapabilityError : Error {
  using Error::Error;
};
/// Malformed or inconsistent input data.
struct DataError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

/// Log density of N(x; mean, sd^2).
inline double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * kLogTwoPi;
}

/// Log density of the standard multivariate normal.
inline double std_normal_logpdf(const Vector& u) {
  return -0.5 * u.squaredNorm() - 0.5 * static_cast<double>(u.size()) * kLogTwoPi;
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace tess
