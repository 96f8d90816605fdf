#include "tess/diagnostics.hpp"

#include "tess/random.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

namespace tess {

namespace {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool is_constant(const std::vector<double>& s) {
  return std::all_of(s.begin(), s.end(), [&](double v) { return v == s.front(); });
}

}  // namespace

std::vector<double> autocovariance(const std::vector<double>& series) {
  const std::size_t n = series.size();
  require(n >= 1, "autocovariance: empty series");
  std::vector<double> out(n, 0.0);
  if (is_constant(series)) return out;

  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  const std::size_t len = next_pow2(2 * n);
  const std::size_t bins = len / 2 + 1;
  std::unique_ptr<double, FftwFree> buf(fftw_alloc_real(len));
  std::unique_ptr<fftw_complex, FftwFree> spectrum(fftw_alloc_complex(bins));
  fftw_plan fwd = fftw_plan_dft_r2c_1d(static_cast<int>(len), buf.get(), spectrum.get(), FFTW_ESTIMATE);
  fftw_plan bwd = fftw_plan_dft_c2r_1d(static_cast<int>(len), spectrum.get(), buf.get(), FFTW_ESTIMATE);

  for (std::size_t i = 0; i < len; ++i) buf.get()[i] = i < n ? series[i] - mean : 0.0;
  fftw_execute(fwd);
  for (std::size_t i = 0; i < bins; ++i) {
    fftw_complex& z = spectrum.get()[i];
    z[0] = z[0] * z[0] + z[1] * z[1];
    z[1] = 0.0;
  }
  fftw_execute(bwd);
  for (std::size_t t = 0; t < n; ++t) out[t] = buf.get()[t] / static_cast<double>(len);

  fftw_destroy_plan(fwd);
  fftw_destroy_plan(bwd);
  return out;
}

std::vector<double> autocovariance_direct(const std::vector<double>& series) {
  const std::size_t n = series.size();
  require(n >= 1, "autocovariance: empty series");
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i + t < n; ++i) out[t] += (series[i] - mean) * (series[i + t] - mean);
  }
  return out;
}

double iat(const std::vector<double>& series, const IatOptions& options) {
  const auto c = autocovariance(series);
  if (!(c[0] > 0.0)) throw NumericalError("zero variance");
  const double n = static_cast<double>(series.size());
  double tau = 0.5;
  for (std::size_t t = 1; t < series.size(); ++t) {
    tau += (1.0 - static_cast<double>(t) / n) * c[t] / c[0];
    if (options.window_factor > 0.0 && static_cast<double>(t) >= options.window_factor * 2.0 * tau) break;
  }
  return tau;
}

IatSummary summarize(const SampleArray& samples, const IatOptions& options) {
  const std::size_t n = samples.iterations();
  const std::size_t k = samples.chains();
  const std::size_t d = samples.dim();
  require(n >= 2 && k >= 1 && d >= 1, "summarize: need at least two iterations, one chain and one dimension");

  IatSummary out;
  out.tau = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d),
                                      std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < d; ++j) {
      const auto s = samples.series(c, j);
      if (is_constant(s)) {
        ++out.missing;
        continue;
      }
      out.tau(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = iat(s, options);
    }
  }
  if (out.missing > 0) {
    out.warnings.push_back(std::to_string(out.missing) + " constant chain/dimension series excluded from tau");
  }

  double ess_min = std::numeric_limits<double>::infinity();
  out.tau_max = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> taus, ess;
    for (std::size_t c = 0; c < k; ++c) {
      const double t = out.tau(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j));
      if (std::isnan(t)) continue;
      taus.push_back(t);
      ess.push_back(static_cast<double>(n) / (2.0 * t));
    }
    if (taus.empty()) {
      out.warnings.push_back("dimension " + std::to_string(j) + " is constant in every chain");
      continue;
    }
    out.tau_max = std::max(out.tau_max, median(taus));
    ess_min = std::min(ess_min, median(ess));
  }
  if (!std::isfinite(ess_min)) {
    out.tau_max = std::numeric_limits<double>::quiet_NaN();
    out.ess = 0.0;
    out.ess_per_chain = 0.0;
    return out;
  }
  out.ess = static_cast<double>(k) * ess_min;
  out.ess_per_chain = std::floor(out.ess / static_cast<double>(k));

  std::vector<double> per_chain;
  for (std::size_t c = 0; c < k; ++c) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < d; ++j) {
      const double t = out.tau(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j));
      if (!std::isnan(t)) best = std::max(best, t);
    }
    if (std::isfinite(best)) per_chain.push_back(best);
  }
  if (per_chain.size() >= 2) {
    const double mean = std::accumulate(per_chain.begin(), per_chain.end(), 0.0) / static_cast<double>(per_chain.size());
    double ss = 0.0;
    for (double v : per_chain) ss += (v - mean) * (v - mean);
    out.sigma_tau = std::sqrt(ss / static_cast<double>(per_chain.size() - 1));
  }
  return out;
}

double stein_kernel(const Vector& x, const Vector& sx, const Vector& y, const Vector& sy) {
  const Vector r = x - y;
  const double r2 = r.squaredNorm();
  const double q = 1.0 + r2;
  const double k = 1.0 / std::sqrt(q);
  const double k3 = k / q;
  const double k5 = k3 / q;
  const double d = static_cast<double>(x.size());
  const double div = d * k3 - 3.0 * r2 * k5;
  // grad_x k = -r k3, grad_y k = r k3
  return div - k3 * r.dot(sy) + k3 * r.dot(sx) + k * sx.dot(sy);
}

double stein_kernel(const TargetModel& target, const Vector& x, const Vector& y) {
  return stein_kernel(x, target.score_at(x), y, target.score_at(y));
}

SteinResult stein_stats(const TargetModel& target, const RowMatrix& points, std::size_t max_points,
                        std::uint64_t seed) {
  if (!target.has_score()) throw CapabilityError("Stein statistics need a target score; '" + target.name + "' has none");
  require(points.rows() >= 2, "stein_stats: need at least two points");
  require(max_points >= 2, "stein_stats: max_points must be >= 2");

  std::vector<Eigen::Index> rows(static_cast<std::size_t>(points.rows()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  if (rows.size() > max_points) {
    Rng rng = make_rng(seed, Stream::stein, 0, 0);
    std::vector<Eigen::Index> picked;
    std::sample(rows.begin(), rows.end(), std::back_inserter(picked), static_cast<std::ptrdiff_t>(max_points), rng);
    rows = std::move(picked);
  }
  const std::size_t n = rows.size();
  std::vector<Vector> xs(n), scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = points.row(rows[i]).transpose();
    scores[i] = target.score_at(xs[i]);
    if (!scores[i].allFinite()) throw NumericalError("Stein statistics: non-finite score at a sample point");
  }

  std::vector<double> row_sum(n, 0.0);
  double diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double kii = stein_kernel(xs[i], scores[i], xs[i], scores[i]);
    diag += kii;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double kij = stein_kernel(xs[i], scores[i], xs[j], scores[j]);
      row_sum[i] += kij;
      row_sum[j] += kij;
    }
  }
  const double off = std::accumulate(row_sum.begin(), row_sum.end(), 0.0);
  const double nn = static_cast<double>(n);

  SteinResult out;
  out.points = n;
  out.pair_count = n * (n - 1);
  out.u_stat = off / (nn * (nn - 1.0));
  out.v_stat = (off + diag) / (nn * nn);
  // Jackknife: leave-one-out U-statistics from the row sums.
  double mean_loo = 0.0;
  std::vector<double> loo(n);
  for (std::size_t i = 0; i < n; ++i) {
    loo[i] = (off - 2.0 * row_sum[i]) / ((nn - 1.0) * (nn - 2.0 > 0.0 ? nn - 2.0 : 1.0));
    mean_loo += loo[i];
  }
  mean_loo /= nn;
  double ss = 0.0;
  for (double v : loo) ss += (v - mean_loo) * (v - mean_loo);
  out.u_std_error = n > 2 ? std::sqrt((nn - 1.0) / nn * ss) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

SteinResult stein_stats(const TargetModel& target, const SampleArray& samples, std::size_t max_points,
                        std::uint64_t seed) {
  const RowMatrix pooled = samples.pooled();
  RowMatrix unconstrained(pooled.rows(), pooled.cols());
  for (Eigen::Index i = 0; i < pooled.rows(); ++i) {
    unconstrained.row(i) = target.to_unconstrained(pooled.row(i).transpose()).transpose();
  }
  return stein_stats(target, unconstrained, max_points, seed);
}

nlohmann::ordered_json DiagnosticsReport::to_json() const {
  auto number = [](double v) -> nlohmann::ordered_json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  nlohmann::ordered_json j;
  j["tau_max"] = number(iat.tau_max);
  j["sigma_tau"] = number(iat.sigma_tau);
  j["ess"] = number(iat.ess);
  j["ess_per_chain"] = number(iat.ess_per_chain);
  j["stein_u"] = stein ? number(stein->u_stat) : nlohmann::ordered_json(nullptr);
  j["stein_v"] = stein ? number(stein->v_stat) : nlohmann::ordered_json(nullptr);
  j["warnings"] = warnings;
  return j;
}

DiagnosticsReport diagnose(const TargetModel& target, const SampleArray& samples, std::size_t stein_cap,
                           std::uint64_t seed, const IatOptions& options) {
  DiagnosticsReport report;
  report.iat = summarize(samples, options);
  report.warnings = report.iat.warnings;
  const TargetModel scored = with_score_fallback(target);
  try {
    report.stein = stein_stats(scored, samples, stein_cap, seed);
  } catch (const NumericalError& e) {
    report.warnings.push_back(std::string("Stein statistics unavailable: ") + e.what());
  }
  return report;
}

}  // namespace tess
