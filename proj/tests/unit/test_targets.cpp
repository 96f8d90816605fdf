#include "tess/random.hpp"
#include "tess/targets.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace tess;
using tess::testing::hmm_enumerate;

namespace {

void check_score(const TargetModel& target, std::uint64_t seed, double spread = 1.0) {
  const TargetModel scored = with_score_fallback(target);
  Rng rng = make_rng(seed, Stream::data, 3, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const Vector x = spread * standard_normal(rng, target.dim);
    const Vector analytic = scored.score_at(x);
    // Independent central differences with a smaller step than fd_score.
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      Vector up = x, dn = x;
      const double h = 1e-6 * (1.0 + std::abs(x[j]));
      up[j] += h;
      dn[j] -= h;
      const double fd = (target.log_density(up) - target.log_density(dn)) / (2 * h);
      const double scale = std::max(1.0, std::abs(fd));
      CHECK(std::abs(analytic[j] - fd) / scale < 1e-4);
    }
  }
}

void check_round_trip(const TargetModel& target, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::data, 4, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const Vector z = standard_normal(rng, target.dim);
    const Vector back = target.to_unconstrained(target.to_constrained(z));
    CHECK((back - z).cwiseAbs().maxCoeff() < 1e-12);
  }
}

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
  const auto dir = std::filesystem::temp_directory_path() / "tess_targets_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST_CASE("banana density values") {
  CHECK(banana_logdensity(Vector::Zero(2)) == 0.0);
  Vector x(2);
  x << std::sqrt(8.0), 2.0;
  CHECK(banana_logdensity(x) == doctest::Approx(-0.5).epsilon(1e-14));
  check_score(banana_target(), 1, 2.0);
  CHECK(banana_log_normalizer() == doctest::Approx(2.8775978372492634).epsilon(1e-14));
}

TEST_CASE("banana moments by quadrature") {
  const double h = 0.02;
  double z = 0, m1 = 0, m2 = 0, s1 = 0, s2 = 0;
  Vector x(2);
  for (double a = -25.0; a <= 25.0; a += h) {
    for (double b = -12.0; b <= 170.0; b += h) {
      x << a, b;
      const double w = std::exp(banana_logdensity(x));
      z += w;
      m1 += w * a;
      m2 += w * b;
      s1 += w * a * a;
      s2 += w * b * b;
    }
  }
  CHECK(std::log(z * h * h) == doctest::Approx(banana_log_normalizer()).epsilon(1e-6));
  CHECK(std::abs(m1 / z) < 1e-8);
  CHECK(s1 / z == doctest::Approx(8.0).epsilon(1e-6));
  CHECK(m2 / z == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(s2 / z - (m2 / z) * (m2 / z) == doctest::Approx(9.0).epsilon(1e-6));
}

TEST_CASE("exact banana map") {
  const ExactBananaMap T;
  Vector u(2);
  u << 0.7, -0.3;
  const auto f = T.forward(u);
  CHECK(f.value[0] == doctest::Approx(std::sqrt(8.0) * 0.7));
  CHECK(f.value[1] == doctest::Approx(-0.3 + 2 * 0.49));
  CHECK(f.logdet == doctest::Approx(0.5 * std::log(8.0)));
  CHECK((T.inverse(f.value).value - u).norm() < 1e-14);
}

TEST_CASE("BOD model") {
  CHECK(bod_mean(0.0, 3.0, 7.0) == 0.0);
  CHECK(bod_mean(2.0, 1.0, 0.1) == doctest::Approx(0.18126924692201818).epsilon(1e-14));
  const BodDataset a = bod_simulate(4);
  const BodDataset b = bod_simulate(4);
  CHECK(a.observations == b.observations);
  CHECK(bod_simulate(5).observations != a.observations);
  REQUIRE(a.times.size() == 20);
  CHECK(a.times.front() == 0.0);
  CHECK(a.times.back() == 4.75);
  CHECK(bod_mean(a.times.back(), kBodTheta0, kBodTheta1) == doctest::Approx(0.3781149435349799).epsilon(1e-14));

  const BodDataset clean = bod_noiseless();
  Vector truth(2);
  truth << kBodTheta0, kBodTheta1;
  CHECK(bod_logdensity(truth, clean) == doctest::Approx(20 * (-0.5 * std::log(2 * std::numbers::pi * 2e-4))).epsilon(1e-13));
  const TargetModel t = bod_target(a);
  Rng rng = make_rng(0, Stream::data, 0, 0);
  for (int rep = 0; rep < 10; ++rep) {
    Vector th(2);
    th << 1.0 + 0.2 * standard_normal(rng, 1)[0], 0.1 + 0.05 * standard_normal(rng, 1)[0];
    const Vector fd = fd_score(t.log_density, th);
    const Vector an = t.score_at(th);
    CHECK(((an - fd).array().abs() / an.array().abs().max(1.0)).maxCoeff() < 1e-4);
  }
}

TEST_CASE("Gamma(1/2, 1/2) log-scale density") {
  CHECK(log_gamma_density_logscale(0.0, kGammaShape, kGammaRate) ==
        doctest::Approx(-1.4189385332046727).epsilon(1e-14));
  // Normalization over log v.
  double total = 0.0;
  const double h = 1e-3;
  for (double s = -60.0; s <= 8.0; s += h) total += std::exp(log_gamma_density_logscale(s, kGammaShape, kGammaRate));
  CHECK(total * h == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("sparse logistic regression") {
  const LogisticData data = synthetic_german_credit(0);
  CHECK(data.features.rows() == 1000);
  CHECK(data.features.cols() == 25);
  CHECK((data.features.col(24).array() == 1.0).all());
  for (Eigen::Index j = 0; j < 24; ++j) CHECK(std::abs(data.features.col(j).mean()) < 1e-12);

  const TargetModel t = sparse_logistic_target(data);
  CHECK(t.dim == 51);
  // beta = 0: likelihood n log(1/2) regardless of the scales.
  Vector z = Vector::Zero(51);
  Vector z2 = z;
  z2.segment(25, 26).setConstant(0.7);
  const double prior0 = -25 * 0.5 * kLogTwoPi + 26 * log_gamma_density_logscale(0.0, kGammaShape, kGammaRate);
  const double prior2 = -25 * 0.5 * kLogTwoPi + 26 * log_gamma_density_logscale(0.7, kGammaShape, kGammaRate);
  CHECK(t.log_density(z) == doctest::Approx(1000 * std::log(0.5) + prior0).epsilon(1e-13));
  CHECK(t.log_density(z2) == doctest::Approx(1000 * std::log(0.5) + prior2).epsilon(1e-13));
  check_score(t, 2, 0.5);
  check_round_trip(t, 2);

  LogisticData bad = data;
  bad.labels[3] = 2;
  CHECK_THROWS_AS(sparse_logistic_logdensity(z, bad), DataError);
}

TEST_CASE("HMM filter fixed point and reduction") {
  ReturnsSeries r{{0.3, -0.2, 0.5, 0.1}};
  // Identical regimes: i.i.d. normal likelihood.
  const HmmParams same{0.1, 0.1, 0.0, 0.7, 0.7, 0.5, 0.5, 0.0, 0.3};
  double iid = 0.0;
  for (double v : r.r) iid += normal_logpdf(v, 0.1, 0.7);
  CHECK(hmm_filter_loglik(same, r) == doctest::Approx(iid).epsilon(1e-13));
  // eta_1 = eta_2 when both rows of the transition matrix agree and regimes coincide.
  const HmmParams rows{0.0, 0.0, 0.0, 1.0, 1.0, 0.8, 0.2, 0.0, 0.9};
  double expected = 0.0;
  for (double v : r.r) expected += normal_logpdf(v, 0.0, 1.0);
  CHECK(hmm_filter_loglik(rows, r) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("HMM filter equals path enumeration") {
  const HmmParams p{0.01, -0.02, 0.7, 0.5, 1.3, 0.8, 0.6, 0.3, 0.35};
  const ReturnsSeries five{{0.4, -0.9, 1.2, 0.1, -0.3}};
  CHECK(std::abs(hmm_filter_loglik(p, five) - (-6.427331883883112)) < 1e-8);
  Rng rng = make_rng(3, Stream::data, 0, 0);
  for (std::size_t n = 1; n <= 8; ++n) {
    ReturnsSeries r;
    for (std::size_t t = 0; t < n; ++t) r.r.push_back(standard_normal(rng, 1)[0]);
    CHECK(std::abs(hmm_filter_loglik(p, r) - hmm_enumerate(p, r)) < 1e-8);
  }
  HmmParams bad = p;
  bad.sigma1 = 0.0;
  CHECK_THROWS_AS(hmm_filter_loglik(bad, five), ContractError);
  bad = p;
  bad.p11 = 1.0;
  CHECK_THROWS_AS(hmm_filter_loglik(bad, five), ContractError);
}

TEST_CASE("HMM priors at a hand-checked point") {
  const ReturnsSeries r{{0.01, -0.02, 0.03}};
  const Vector z = Vector::Zero(9);  // rho = sigma = 1, probabilities 1/2
  const HmmParams p = hmm_params_from_vector(hmm_constrain(z));
  const double loglik = hmm_filter_loglik(p, r);
  const double log_half_cauchy = std::log(2.0 / std::numbers::pi) - std::log(2.0);
  CHECK(log_half_cauchy == doctest::Approx(-std::log(std::numbers::pi)));
  const double log_beta_10_2 = std::log(110.0 * std::pow(0.5, 10));
  const double log_beta_2_2 = std::log(1.5);
  const double rho_prior = normal_logpdf(1.0, 1.0, 0.1) - std::log(0.5 * std::erfc(-1.0 / (0.1 * std::numbers::sqrt2)));
  const double prior = 3 * normal_logpdf(0.0, 0.0, 1.0) + rho_prior + 2 * log_half_cauchy + 2 * log_beta_10_2 +
                       log_beta_2_2 + 3 * std::log(0.25);
  CHECK(hmm_logdensity(z, r) == doctest::Approx(loglik + prior).epsilon(1e-13));
}

TEST_CASE("HMM score and transforms") {
  const TargetModel t = hmm_target(synthetic_returns(1, 60));
  check_score(t, 4, 0.5);
  check_round_trip(t, 4);
  CHECK(synthetic_returns(2).r.size() == 431);
  CHECK(synthetic_returns(2).r == synthetic_returns(2).r);
}

TEST_CASE("RK4 single step and order") {
  const VectorField grow = [](double, const Vector& y) { return y; };
  const RowMatrix one = rk4_integrate(grow, Vector::Ones(1), {0.0, 0.1}, 1);
  CHECK(one(1, 0) == doctest::Approx(1.105170833333333).epsilon(1e-14));

  const VectorField zero = [](double, const Vector& y) { return Vector::Zero(y.size()); };
  const RowMatrix flat = rk4_integrate(zero, Vector::Constant(2, 3.0), {0.0, 1.0, 2.5}, 4);
  CHECK((flat.array() == 3.0).all());

  const double exact = std::exp(1.0);
  const double e1 = std::abs(rk4_integrate(grow, Vector::Ones(1), {0.0, 1.0}, 8)(1, 0) - exact);
  const double e2 = std::abs(rk4_integrate(grow, Vector::Ones(1), {0.0, 1.0}, 16)(1, 0) - exact);
  CHECK(e1 / e2 == doctest::Approx(16.0).epsilon(0.1));

  const VectorField blow = [](double, const Vector& y) { return Vector(y.array().square() * 1e3); };
  CHECK_THROWS_AS(rk4_integrate(blow, Vector::Ones(1), {0.0, 1.0, 2.0}, 1), NumericalError);
  CHECK_THROWS_AS(rk4_integrate(grow, Vector::Ones(1), {0.0, 1.0}, 0), ContractError);
}

TEST_CASE("Lotka-Volterra solver oracles") {
  const double a = 0.55, g = 0.8, b = 0.028, d = 0.024;
  std::vector<double> grid(21);
  for (int i = 0; i <= 20; ++i) grid[static_cast<std::size_t>(i)] = i;
  const VectorField lv = [&](double, const Vector& y) {
    Vector f(2);
    f << a * y[0] - b * y[0] * y[1], -g * y[1] + d * y[0] * y[1];
    return f;
  };
  Vector y0(2);
  y0 << 33.0, 6.0;
  const RowMatrix path = rk4_integrate(lv, y0, grid, 100);
  auto invariant = [&](double p, double q) { return d * p - g * std::log(p) + b * q - a * std::log(q); };
  const double v0 = invariant(y0[0], y0[1]);
  for (int i = 1; i <= 20; ++i) CHECK(std::abs(invariant(path(i, 0), path(i, 1)) - v0) / i < 1e-6);

  // beta = delta = 0 decouples the system into two exponentials.
  const VectorField decoupled = [&](double, const Vector& y) {
    Vector f(2);
    f << a * y[0], -g * y[1];
    return f;
  };
  const RowMatrix dec = rk4_integrate(decoupled, y0, grid, 20);
  for (int i = 0; i <= 20; ++i) {
    CHECK(dec(i, 0) == doctest::Approx(33.0 * std::exp(a * i)).epsilon(1e-6));
    CHECK(dec(i, 1) == doctest::Approx(6.0 * std::exp(-g * i)).epsilon(1e-6));
  }
}

TEST_CASE("Lotka-Volterra target") {
  const TargetModel t = lotka_volterra_target(bundled_lynx_hare());
  CHECK(t.dim == 8);
  CHECK_FALSE(t.has_score());
  Vector z(8);
  z << std::log(0.55), std::log(0.8), std::log(0.028), std::log(0.024), std::log(0.25), std::log(0.25),
      std::log(33.0), std::log(6.0);
  CHECK(std::isfinite(t.log_density(z)));
  check_round_trip(t, 5);
  // Finite-difference fallback agrees with a smaller-step difference near the mode region.
  const TargetModel scored = with_score_fallback(t);
  const Vector s = scored.score_at(z);
  for (Eigen::Index j = 0; j < 8; ++j) {
    Vector up = z, dn = z;
    up[j] += 1e-6;
    dn[j] -= 1e-6;
    const double fd = (t.log_density(up) - t.log_density(dn)) / 2e-6;
    CHECK(std::abs(s[j] - fd) / std::max(1.0, std::abs(fd)) < 1e-4);
  }
  // Explosive rates make the solution blow up: the density is -inf, not NaN.
  Vector wild = z;
  wild[0] = std::log(60.0);
  wild[2] = std::log(1e-9);
  CHECK(t.log_density(wild) == -std::numeric_limits<double>::infinity());
  CHECK(truncated_normal_logpdf(-0.1, 1.0, 0.5) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("adding a constant shifts every log-density by that constant") {
  const std::vector<TargetModel> targets = {banana_target(), bod_target(bod_simulate(0)),
                                            hmm_target(synthetic_returns(0, 30))};
  for (const auto& t : targets) {
    const TargetModel s = shifted(t, 3.25);
    const Vector z = 0.1 * Vector::Ones(t.dim);
    CHECK(s.log_density(z) - t.log_density(z) == doctest::Approx(3.25).epsilon(1e-12));
    CHECK(s.score_at(z) == t.score_at(z));
  }
}

TEST_CASE("dataset loaders") {
  SUBCASE("lynx-hare") {
    const auto d = load_lynx_hare(std::filesystem::path(TESS_SOURCE_DIR) / "data" / "lynx_hare.txt");
    CHECK(d.years.size() == 21);
    CHECK(d.years.front() == 1900);
    CHECK(d.hare == bundled_lynx_hare().hare);
    CHECK_THROWS_AS(load_lynx_hare(temp_file("lh_bad.txt", "year hare lynx\n1900 30 4\n1901 x 6\n")), DataError);
    CHECK_THROWS_AS(load_lynx_hare(temp_file("lh_cols.txt", "1900 30 4 1\n1901 20 6 2\n")), DataError);
  }
  SUBCASE("German credit") {
    std::string body;
    for (int i = 0; i < 10; ++i) {
      for (int j = 0; j < 24; ++j) body += std::to_string((i * 7 + j * 3) % 5 + 1) + " ";
      body += (i % 3 == 0 ? "2" : "1");
      body += "\n";
    }
    const auto data = load_german_credit(temp_file("gc.txt", body));
    CHECK(data.features.rows() == 10);
    CHECK(data.features.cols() == 25);
    CHECK(data.labels[0] == 1);
    CHECK(data.labels[1] == 0);
    try {
      load_german_credit(temp_file("gc_bad.txt", body + "1 2 3\n"));
      FAIL("expected a DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(":11:") != std::string::npos);
    }
  }
  SUBCASE("returns") {
    const auto r = load_returns(temp_file("r.txt", "return\n0.1\n-0.2\n\n0.05\n"));
    CHECK(r.r.size() == 3);
    CHECK_THROWS_AS(load_returns(temp_file("r_bad.txt", "0.1\nabc\n")), DataError);
  }
  SUBCASE("missing file names the format") {
    try {
      load_returns("/nonexistent/returns.txt");
      FAIL("expected a DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("one return per line") != std::string::npos);
    }
  }
}
