#include "tess/random.hpp"
#include "tess/targets.hpp"

#include <ceres/jet.h>

#include <cmath>
#include <numbers>

namespace tess {

namespace {

// Generic helpers so the same density code runs on double and on ceres::Jet
// (forward-mode derivatives for the score).
template <typename S>
S log_add_exp(const S& a, const S& b) {
  using std::exp;
  using std::log;
  const S& hi = a < b ? b : a;
  const S& lo = a < b ? a : b;
  return hi + log(1.0 + exp(lo - hi));
}

template <typename S>
S log_sigmoid(const S& x) {
  using std::exp;
  using std::log;
  // -softplus(-x)
  return x < 0.0 ? x - log(1.0 + exp(x)) : -log(1.0 + exp(-x));
}

template <typename S>
S normal_logpdf_t(double x, const S& mean, const S& log_sd) {
  using std::exp;
  const S z = (x - mean) * exp(-log_sd);
  return -0.5 * z * z - log_sd - 0.5 * kLogTwoPi;
}

struct Regimes {
  double log_beta_10_2 = std::lgamma(10.0) + std::lgamma(2.0) - std::lgamma(12.0);
  double log_beta_2_2 = std::lgamma(2.0) + std::lgamma(2.0) - std::lgamma(4.0);
};

template <typename S>
S filter_loglik(const S& alpha1, const S& alpha2, const S& rho, const S& log_sigma1, const S& log_sigma2,
                const S& log_p11, const S& log_p12, const S& log_p22, const S& log_p21, const S& r0,
                const S& log_xi, const S& log_not_xi, const ReturnsSeries& returns) {
  S lx = log_xi;
  S lnx = log_not_xi;
  S total(0.0);
  S prev = r0;
  for (double r : returns.r) {
    const S ln1 = normal_logpdf_t(r, alpha1, log_sigma1);
    const S ln2 = normal_logpdf_t(r, alpha2 + rho * prev, log_sigma2);
    const S log_eta1 = log_add_exp(S(log_p11 + ln1), S(log_p12 + ln2));
    const S log_eta2 = log_add_exp(S(log_p21 + ln1), S(log_p22 + ln2));
    const S a = lx + log_eta1;
    const S b = lnx + log_eta2;
    const S contrib = log_add_exp(a, b);
    total += contrib;
    lx = a - contrib;
    lnx = b - contrib;
    prev = S(r);
  }
  return total;
}

template <typename S>
S hmm_logdensity_t(const S* z, const ReturnsSeries& returns) {
  using std::exp;
  using std::log;
  static const Regimes consts;
  const S& alpha1 = z[0];
  const S& alpha2 = z[1];
  const S rho = exp(z[2]);
  const S sigma1 = exp(z[3]);
  const S sigma2 = exp(z[4]);
  const S log_p11 = log_sigmoid(z[5]);
  const S log_p12 = log_sigmoid(S(-z[5]));
  const S log_p22 = log_sigmoid(z[6]);
  const S log_p21 = log_sigmoid(S(-z[6]));
  const S& r0 = z[7];
  const S log_xi = log_sigmoid(z[8]);
  const S log_not_xi = log_sigmoid(S(-z[8]));

  const S loglik = filter_loglik(alpha1, alpha2, rho, z[3], z[4], log_p11, log_p12, log_p22, log_p21, r0, log_xi,
                                 log_not_xi, returns);

  S lp(0.0);
  // N(0, 1) on alpha1, alpha2, r0
  lp += -0.5 * (alpha1 * alpha1 + alpha2 * alpha2 + r0 * r0) - 1.5 * kLogTwoPi;
  // rho ~ N(1, 0.1) truncated at zero, log transform
  const double rho_norm = std::log(0.5 * std::erfc(-1.0 / (0.1 * std::numbers::sqrt2)));
  lp += normal_logpdf_t(0.0, S(rho - 1.0), S(std::log(0.1))) - rho_norm + z[2];
  // half-Cauchy(1) on sigmas, log transform
  lp += std::log(2.0 / std::numbers::pi) - log(1.0 + sigma1 * sigma1) + z[3];
  lp += std::log(2.0 / std::numbers::pi) - log(1.0 + sigma2 * sigma2) + z[4];
  // Beta(10, 2) on p11, p22 and Beta(2, 2) on xi10, logit transform:
  // (a-1) log p + (b-1) log(1-p) - log B(a,b) + log p + log(1-p)
  lp += 10.0 * log_p11 + 2.0 * log_p12 - consts.log_beta_10_2;
  lp += 10.0 * log_p22 + 2.0 * log_p21 - consts.log_beta_10_2;
  lp += 2.0 * log_xi + 2.0 * log_not_xi - consts.log_beta_2_2;
  return loglik + lp;
}

void check_params(const HmmParams& p) {
  if (!(p.sigma1 > 0.0 && p.sigma2 > 0.0)) throw ContractError("HMM: standard deviations must be positive");
  for (double prob : {p.p11, p.p22, p.xi10}) {
    if (!(prob > 0.0 && prob < 1.0)) throw ContractError("HMM: probabilities must lie in (0, 1)");
  }
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

HmmParams hmm_params_from_vector(const Vector& params) {
  require(params.size() == 9, "HMM model has nine parameters");
  return {params[0], params[1], params[2], params[3], params[4], params[5], params[6], params[7], params[8]};
}

double hmm_filter_loglik(const HmmParams& p, const ReturnsSeries& returns) {
  check_params(p);
  return filter_loglik(p.alpha1, p.alpha2, p.rho, std::log(p.sigma1), std::log(p.sigma2), std::log(p.p11),
                       std::log1p(-p.p11), std::log(p.p22), std::log1p(-p.p22), p.r0, std::log(p.xi10),
                       std::log1p(-p.xi10), returns);
}

double hmm_filter_loglik(const Vector& params, const ReturnsSeries& returns) {
  return hmm_filter_loglik(hmm_params_from_vector(params), returns);
}

double hmm_logdensity(const Vector& z, const ReturnsSeries& returns) {
  require(z.size() == 9, "HMM model has nine parameters");
  return hmm_logdensity_t(z.data(), returns);
}

Vector hmm_score(const Vector& z, const ReturnsSeries& returns) {
  require(z.size() == 9, "HMM model has nine parameters");
  using Jet = ceres::Jet<double, 9>;
  std::array<Jet, 9> zj;
  for (int i = 0; i < 9; ++i) zj[static_cast<std::size_t>(i)] = Jet(z[i], i);
  const Jet value = hmm_logdensity_t(zj.data(), returns);
  return value.v;
}

Vector hmm_constrain(const Vector& z) {
  require(z.size() == 9, "HMM model has nine parameters");
  Vector y = z;
  for (int i : {2, 3, 4}) y[i] = std::exp(z[i]);
  for (int i : {5, 6, 8}) y[i] = sigmoid(z[i]);
  return y;
}

Vector hmm_unconstrain(const Vector& y) {
  require(y.size() == 9, "HMM model has nine parameters");
  Vector z = y;
  for (int i : {2, 3, 4}) z[i] = std::log(y[i]);
  for (int i : {5, 6, 8}) z[i] = logit(y[i]);
  return z;
}

TargetModel hmm_target(ReturnsSeries returns) {
  require(!returns.r.empty(), "HMM: empty returns series");
  TargetModel t;
  t.name = "hmm";
  t.dim = 9;
  t.log_density = [returns](const Vector& z) { return hmm_logdensity(z, returns); };
  t.score = [returns](const Vector& z) { return hmm_score(z, returns); };
  t.constrain = hmm_constrain;
  t.unconstrain = hmm_unconstrain;
  t.dim_names = {"alpha1", "alpha2", "rho", "sigma1", "sigma2", "p11", "p22", "r0", "xi10"};
  return t;
}

ReturnsSeries synthetic_returns(std::uint64_t seed, std::size_t length) {
  // Calm random-walk regime and a volatile autoregressive regime.
  constexpr double alpha1 = 0.001, sigma1 = 0.01;
  constexpr double alpha2 = 0.0, rho = 0.9, sigma2 = 0.03;
  constexpr double p11 = 0.95, p22 = 0.85;
  Rng rng = make_rng(seed, Stream::data, 1, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  ReturnsSeries out;
  int regime = 0;
  double prev = 0.0;
  for (std::size_t t = 0; t < length; ++t) {
    const double stay = regime == 0 ? p11 : p22;
    if (uniform(rng, 0.0, 1.0) >= stay) regime = 1 - regime;
    const double r = regime == 0 ? alpha1 + sigma1 * normal(rng) : alpha2 + rho * prev + sigma2 * normal(rng);
    out.r.push_back(r);
    prev = r;
  }
  return out;
}

}  // namespace tess
