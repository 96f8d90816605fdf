#include "tess/sampler.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

namespace tess {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

std::vector<double> SampleArray::series(std::size_t c, std::size_t j) const {
  std::vector<double> out(iterations_);
  for (std::size_t t = 0; t < iterations_; ++t) out[t] = (*this)(t, c, j);
  return out;
}

RowMatrix SampleArray::pooled() const {
  RowMatrix out(static_cast<Eigen::Index>(iterations_ * chains_), static_cast<Eigen::Index>(dim_));
  std::copy(values_.begin(), values_.end(), out.data());
  return out;
}

Vector ess_step(const Vector& x, const std::function<double(const Vector&)>& loglik, Rng& rng, StepTrace* trace) {
  const double current = loglik(x);
  if (!(current > -std::numeric_limits<double>::infinity())) {
    throw ContractError("ess_step: log-likelihood at the current state must be finite");
  }
  const Vector v = standard_normal(rng, x.size());
  const double log_s = current + std::log(uniform_open(rng));
  double theta = uniform(rng, 0.0, kTwoPi);
  double lo = theta - kTwoPi;
  double hi = theta;
  if (trace) {
    trace->v = v;
    trace->log_s = log_s;
    trace->theta_history = {theta};
    trace->n_shrinks = 0;
  }
  for (std::size_t shrink = 0; shrink <= kMaxShrinks; ++shrink) {
    Vector proposal = x * std::cos(theta) + v * std::sin(theta);
    const double value = loglik(proposal);
    if (std::isnan(value)) throw NumericalError("ess_step: log-likelihood returned NaN");
    if (value > log_s) {
      if (trace) trace->n_shrinks = shrink;
      return proposal;
    }
    if (theta < 0.0) {
      lo = theta;
    } else {
      hi = theta;
    }
    theta = uniform(rng, lo, hi);
    if (trace) trace->theta_history.push_back(theta);
  }
  throw NumericalError("ess_step: bracket did not close after " + std::to_string(kMaxShrinks) + " shrinks");
}

ChainState make_chain_state(const Vector& u, const Transport& map, const TargetModel& target,
                            std::uint64_t chain_id) {
  ChainState s;
  s.u = u;
  const auto fwd = map.forward(u);
  s.x = fwd.value;
  const double lp = target.log_density(s.x);
  s.log_pullback = lp == -std::numeric_limits<double>::infinity() ? lp : lp + fwd.logdet;
  s.chain_id = chain_id;
  return s;
}

ChainState tess_step(const ChainState& state, const Transport& map, const TargetModel& target, Rng& rng,
                     StepTrace* trace) {
  const std::string chain = "chain " + std::to_string(state.chain_id);
  if (!(state.log_pullback > -std::numeric_limits<double>::infinity())) {
    throw ContractError("tess_step (" + chain + "): cached log pull-back density is not finite");
  }
  const Eigen::Index d = state.u.size();
  const Vector& u = state.u;
  const Vector v = standard_normal(rng, d);
  const double log_s = state.log_pullback + std_normal_logpdf(v) + std::log(uniform_open(rng));
  double theta = uniform(rng, 0.0, kTwoPi);
  double lo = theta - kTwoPi;
  double hi = theta;
  if (trace) {
    trace->v = v;
    trace->log_s = log_s;
    trace->theta_history = {theta};
    trace->n_shrinks = 0;
  }

  for (std::size_t shrink = 0; shrink <= kMaxShrinks; ++shrink) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Vector u_new = u * c + v * s;
    const Vector v_new = v * c - u * s;
    const auto fwd = map.forward(u_new);
    const double lp = target.log_density(fwd.value);
    if (std::isnan(lp) || std::isnan(fwd.logdet)) {
      throw NumericalError("tess_step (" + chain + "): pull-back density returned NaN");
    }
    const double log_pullback = lp == -std::numeric_limits<double>::infinity() ? lp : lp + fwd.logdet;
    if (log_pullback + std_normal_logpdf(v_new) > log_s) {
      if (trace) trace->n_shrinks = shrink;
      return ChainState{std::move(u_new), fwd.value, log_pullback, state.chain_id};
    }
    if (theta < 0.0) {
      lo = theta;
    } else {
      hi = theta;
    }
    theta = uniform(rng, lo, hi);
    if (trace) trace->theta_history.push_back(theta);
  }
  throw NumericalError("tess_step (" + chain + "): bracket did not close after " + std::to_string(kMaxShrinks) +
                       " shrinks");
}

SweepStats tess_sweep(std::vector<ChainState>& states, const Transport& map, const TargetModel& target,
                      std::uint64_t seed, Stream stream, std::uint64_t iteration) {
  SweepStats stats;
  StepTrace trace;
  for (auto& state : states) {
    Rng rng = make_rng(seed, stream, state.chain_id, iteration);
    state = tess_step(state, map, target, rng, &trace);
    ++stats.steps;
    stats.shrinks += trace.n_shrinks;
    if (trace.n_shrinks == 0) ++stats.first_accepts;
  }
  return stats;
}

SamplingRun run_sampling(std::vector<ChainState>& states, const Transport& map, const TargetModel& target,
                         std::size_t n_iterations, std::uint64_t seed) {
  const auto k = states.size();
  const auto d = static_cast<std::size_t>(map.dim());
  SamplingRun run{SampleArray(n_iterations, k, d), SampleArray(n_iterations, k, d), {}};
  for (std::size_t t = 0; t < n_iterations; ++t) {
    SweepStats sweep;
    try {
      sweep = tess_sweep(states, map, target, seed, Stream::sampling, t);
    } catch (const Error& e) {
      throw NumericalError("sampling iteration " + std::to_string(t) + ": " + e.what());
    }
    run.stats.steps += sweep.steps;
    run.stats.shrinks += sweep.shrinks;
    run.stats.first_accepts += sweep.first_accepts;
    for (std::size_t c = 0; c < k; ++c) {
      const Vector y = target.to_constrained(states[c].x);
      for (std::size_t j = 0; j < d; ++j) {
        run.samples(t, c, j) = y[static_cast<Eigen::Index>(j)];
        run.latent(t, c, j) = states[c].u[static_cast<Eigen::Index>(j)];
      }
    }
  }
  return run;
}

std::vector<ChainState> initial_states(std::size_t k, const Transport& map, const TargetModel& target,
                                       std::uint64_t seed) {
  std::vector<ChainState> states;
  states.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    bool placed = false;
    for (std::uint64_t attempt = 0; attempt < 1000 && !placed; ++attempt) {
      Rng rng = make_rng(seed, Stream::init, c, attempt);
      ChainState s = make_chain_state(standard_normal(rng, map.dim()), map, target, c);
      if (std::isfinite(s.log_pullback)) {
        states.push_back(std::move(s));
        placed = true;
      }
    }
    if (!placed) {
      throw NumericalError("could not find a finite-density starting point for chain " + std::to_string(c));
    }
  }
  return states;
}

// ---------------------------------------------------------------------------
// Output formats

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_samples_csv(const SampleArray& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write samples CSV: " + path.string());
  out << "chain,iter";
  for (std::size_t j = 0; j < samples.dim(); ++j) out << ",dim_" << j;
  out << '\n';
  for (std::size_t c = 0; c < samples.chains(); ++c) {
    for (std::size_t t = 0; t < samples.iterations(); ++t) {
      out << c << ',' << t;
      for (std::size_t j = 0; j < samples.dim(); ++j) out << ',' << format_double(samples(t, c, j));
      out << '\n';
    }
  }
  if (!out) throw DataError("failed writing samples CSV: " + path.string());
}

SampleArray read_samples_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read samples CSV: " + path.string() + " (expected header chain,iter,dim_0,...)");
  std::string line;
  if (!std::getline(in, line) || line.rfind("chain,iter", 0) != 0) {
    throw DataError(path.string() + ": missing header chain,iter,dim_0,...");
  }
  const auto dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
  if (dim == 0) throw DataError(path.string() + ": no dimension columns");

  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> rows;
  std::size_t max_chain = 0, max_iter = 0, line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<double> cells;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        cells.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed value '" + cell + "'");
      }
    }
    if (cells.size() != dim + 2) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim + 2) +
                      " columns");
    }
    const auto c = static_cast<std::size_t>(cells[0]);
    const auto t = static_cast<std::size_t>(cells[1]);
    max_chain = std::max(max_chain, c);
    max_iter = std::max(max_iter, t);
    rows[{c, t}] = std::vector<double>(cells.begin() + 2, cells.end());
  }
  if (rows.empty()) throw DataError(path.string() + ": no samples");
  SampleArray out(max_iter + 1, max_chain + 1, dim);
  if (rows.size() != out.iterations() * out.chains()) {
    throw DataError(path.string() + ": samples do not form a complete chain x iteration grid");
  }
  for (const auto& [key, values] : rows) {
    for (std::size_t j = 0; j < dim; ++j) out(key.second, key.first, j) = values[j];
  }
  return out;
}

void write_samples_binary(const SampleArray& samples, const std::vector<std::string>& dim_names,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write samples tensor: " + path.string());
  for (double v : samples.values()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(bytes, 8);
  }
  nlohmann::ordered_json meta;
  meta["dtype"] = "float64";
  meta["byte_order"] = "little";
  meta["shape"] = {samples.iterations(), samples.chains(), samples.dim()};
  meta["axes"] = {"iteration", "chain", "dimension"};
  meta["dimension_names"] = dim_names;
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  side << meta.dump(2) << '\n';
  if (!out || !side) throw DataError("failed writing samples tensor: " + path.string());
}

}  // namespace tess
