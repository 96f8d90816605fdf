#pragma once

#include "tess/flow.hpp"
#include "tess/random.hpp"
#include "tess/target_model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace tess {

/// Shrink iterations allowed before a slice step is declared broken.
inline constexpr std::size_t kMaxShrinks = 1000;

struct ChainState {
  Vector u;                   // latent position
  Vector x;                   // T(u), unconstrained model space
  double log_pullback = 0.0;  // cached log pi_hat(u)
  std::uint64_t chain_id = 0; // key of this chain's random stream
};

/// Per-step internals of one slice move.
struct StepTrace {
  Vector v;
  double log_s = 0.0;
  std::vector<double> theta_history;
  std::size_t n_shrinks = 0;
};

/// Samples indexed (iteration, chain, dimension), stored contiguously in that order.
class SampleArray {
 public:
  SampleArray() = default;
  SampleArray(std::size_t iterations, std::size_t chains, std::size_t dim)
      : iterations_(iterations), chains_(chains), dim_(dim), values_(iterations * chains * dim, 0.0) {}

  std::size_t iterations() const { return iterations_; }
  std::size_t chains() const { return chains_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t t, std::size_t c, std::size_t j) { return values_[(t * chains_ + c) * dim_ + j]; }
  double operator()(std::size_t t, std::size_t c, std::size_t j) const {
    return values_[(t * chains_ + c) * dim_ + j];
  }

  /// Series of dimension j along chain c.
  std::vector<double> series(std::size_t c, std::size_t j) const;
  /// All samples as rows, iteration-major.
  RowMatrix pooled() const;

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

 private:
  std::size_t iterations_ = 0;
  std::size_t chains_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

/// One elliptical slice update for the density phi(x) exp(loglik(x)).
Vector ess_step(const Vector& x, const std::function<double(const Vector&)>& loglik, Rng& rng,
                StepTrace* trace = nullptr);

/// Builds a chain state at latent position u under `map`.
ChainState make_chain_state(const Vector& u, const Transport& map, const TargetModel& target,
                            std::uint64_t chain_id);

/// One transport elliptical slice move on pi_hat(u) = pi(T(u)) |det dT(u)|.
ChainState tess_step(const ChainState& state, const Transport& map, const TargetModel& target, Rng& rng,
                     StepTrace* trace = nullptr);

struct SweepStats {
  std::size_t steps = 0;
  std::size_t shrinks = 0;
  std::size_t first_accepts = 0;
  double mean_shrinks() const { return steps ? static_cast<double>(shrinks) / static_cast<double>(steps) : 0.0; }
};

/// Advances every chain by one step using streams keyed (seed, stream, chain_id, iteration).
SweepStats tess_sweep(std::vector<ChainState>& states, const Transport& map, const TargetModel& target,
                      std::uint64_t seed, Stream stream, std::uint64_t iteration);

struct SamplingRun {
  SampleArray samples;  // constrained model space
  SampleArray latent;   // u
  SweepStats stats;
};

/// N sequential TESS sweeps with a frozen map. States are advanced in place.
SamplingRun run_sampling(std::vector<ChainState>& states, const Transport& map, const TargetModel& target,
                         std::size_t n_iterations, std::uint64_t seed);

/// u^(0) ~ N(0, I); a draw is redrawn (up to 1000 times) while log pi_hat(u) is not finite.
std::vector<ChainState> initial_states(std::size_t k, const Transport& map, const TargetModel& target,
                                       std::uint64_t seed);

void write_samples_csv(const SampleArray& samples, const std::filesystem::path& path);
SampleArray read_samples_csv(const std::filesystem::path& path);
/// Raw little-endian float64 tensor plus a JSON sidecar (`<path>.json`).
void write_samples_binary(const SampleArray& samples, const std::vector<std::string>& dim_names,
                          const std::filesystem::path& path);

}  // namespace tess
