#include "tess/targets.hpp"

#include <cmath>
#include <string>

namespace tess {

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_labels(const LogisticData& data) {
  if (static_cast<Eigen::Index>(data.labels.size()) != data.features.rows()) {
    throw DataError("logistic data: " + std::to_string(data.labels.size()) + " labels for " +
                    std::to_string(data.features.rows()) + " rows");
  }
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    if (data.labels[i] != 0 && data.labels[i] != 1) {
      throw DataError("logistic data: label " + std::to_string(data.labels[i]) + " at row " + std::to_string(i) +
                      " is not in {0, 1}");
    }
  }
}

struct Unpacked {
  Vector beta;
  Vector log_lambda;
  double log_tau;
  Vector weights;  // tau * lambda * beta
};

Unpacked unpack(const Vector& z, Eigen::Index p) {
  if (z.size() != 2 * p + 1) {
    throw ContractError("sparse logistic: expected " + std::to_string(2 * p + 1) + " parameters, got " +
                        std::to_string(z.size()));
  }
  Unpacked u{z.head(p), z.segment(p, p), z[2 * p], {}};
  u.weights = std::exp(u.log_tau) * u.log_lambda.array().exp() * u.beta.array();
  return u;
}

}  // namespace

double log_gamma_density_logscale(double log_v, double shape, double rate) {
  // Gamma(v; a, b) = b^a / Gamma(a) v^(a-1) exp(-b v), then + log v for dv = v d(log v).
  return shape * std::log(rate) - std::lgamma(shape) + shape * log_v - rate * std::exp(log_v);
}

double sparse_logistic_logdensity(const Vector& z, const LogisticData& data) {
  check_labels(data);
  const Eigen::Index p = data.features.cols();
  const Unpacked u = unpack(z, p);
  const Vector eta = data.features * u.weights;

  double loglik = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    loglik += data.labels[static_cast<std::size_t>(i)] * eta[i] - softplus(eta[i]);
  }
  double logprior = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    logprior += normal_logpdf(u.beta[j], 0.0, 1.0);
    logprior += log_gamma_density_logscale(u.log_lambda[j], kGammaShape, kGammaRate);
  }
  logprior += log_gamma_density_logscale(u.log_tau, kGammaShape, kGammaRate);
  return loglik + logprior;
}

Vector sparse_logistic_score(const Vector& z, const LogisticData& data) {
  check_labels(data);
  const Eigen::Index p = data.features.cols();
  const Unpacked u = unpack(z, p);
  const Vector eta = data.features * u.weights;

  Vector resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) resid[i] = data.labels[static_cast<std::size_t>(i)] - sigmoid(eta[i]);
  const Vector g_w = data.features.transpose() * resid;

  const double tau = std::exp(u.log_tau);
  Vector g(2 * p + 1);
  g.head(p) = g_w.array() * tau * u.log_lambda.array().exp() - u.beta.array();
  g.segment(p, p) = g_w.array() * u.weights.array() + kGammaShape - kGammaRate * u.log_lambda.array().exp();
  g[2 * p] = g_w.dot(u.weights) + kGammaShape - kGammaRate * tau;
  return g;
}

TargetModel sparse_logistic_target(LogisticData data) {
  check_labels(data);
  const Eigen::Index p = data.features.cols();
  TargetModel t;
  t.name = "logistic";
  t.dim = 2 * p + 1;
  t.log_density = [data](const Vector& z) { return sparse_logistic_logdensity(z, data); };
  t.score = [data](const Vector& z) { return sparse_logistic_score(z, data); };
  t.constrain = [p](const Vector& z) {
    Vector y = z;
    y.segment(p, p + 1) = z.segment(p, p + 1).array().exp();
    return y;
  };
  t.unconstrain = [p](const Vector& y) {
    Vector z = y;
    z.segment(p, p + 1) = y.segment(p, p + 1).array().log();
    return z;
  };
  for (Eigen::Index j = 0; j < p; ++j) t.dim_names.push_back("beta" + std::to_string(j));
  for (Eigen::Index j = 0; j < p; ++j) t.dim_names.push_back("lambda" + std::to_string(j));
  t.dim_names.push_back("tau");
  return t;
}

LogisticData make_logistic_data(const RowMatrix& raw_features, std::vector<int> labels) {
  const Eigen::Index n = raw_features.rows();
  const Eigen::Index p = raw_features.cols();
  require(n > 1, "logistic data needs at least two rows");
  LogisticData data;
  data.features.resize(n, p + 1);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double mean = raw_features.col(j).mean();
    const double var = (raw_features.col(j).array() - mean).square().sum() / static_cast<double>(n);
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    data.features.col(j) = (raw_features.col(j).array() - mean) / sd;
  }
  data.features.col(p).setOnes();
  data.labels = std::move(labels);
  check_labels(data);
  return data;
}

}  // namespace tess
