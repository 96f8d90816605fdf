#pragma once

#include "tess/flow.hpp"
#include "tess/sampler.hpp"
#include "tess/target_model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace tess {

struct AdamState {
  ParamVector m;
  ParamVector v;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr0 = 1e-3;
  double decay_rate = 0.1;
  std::size_t decay_steps = 400;

  /// Zero moments for a parameter vector of length `n`.
  static AdamState zeros(Eigen::Index n, double lr0);

  /// lr0 * decay_rate^(t / decay_steps), continuous exponent.
  double lr(std::size_t t) const;
};

/// One Adam step with bias correction at step count state.step + 1.
/// Throws NumericalError on a non-finite gradient; the inputs are not modified.
std::pair<AdamState, ParamVector> adam_update(const AdamState& state, const ParamVector& params,
                                              const ParamVector& grad);

struct WarmupConfig {
  std::size_t k = 128;
  std::size_t h = 400;
  std::size_t m = 1;
  std::size_t M = 128;
  std::size_t pretrain_steps = 400;
  double lr0 = 1e-3;
  bool pretrain = true;
  std::uint64_t seed = 0;
  /// Size of the reference batch used to monitor the forward KL during warm-up; 0 disables it.
  std::size_t monitor_batch = 128;

  void validate() const;
};

/// (1/k) sum [log pi(x_i) - log phi_hat(x_i)] over the rows of `xs`.
double reverse_kl_loss(const Transport& map, const TargetModel& target, const RowMatrix& xs);
/// (1/M) sum [log phi(u_i) - log pi_hat(u_i)] over the rows of `us`.
double forward_kl_loss(const Transport& map, const TargetModel& target, const RowMatrix& us);

/// Rows i.i.d. N(0, I_d) drawn from the (seed, stream, 0, iteration) substream.
RowMatrix reference_batch(Eigen::Index rows, Eigen::Index dim, std::uint64_t seed, Stream stream,
                          std::uint64_t iteration);

struct PretrainStep {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

/// Forward-KL fit from fresh reference batches. Aborts when the loss exceeds 1e6.
TransportMap pretrain(TransportMap map, const TargetModel& target, const WarmupConfig& cfg,
                      const std::function<void(const PretrainStep&)>& on_step = {});

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double reverse_kl = 0.0;
  std::optional<double> forward_kl;
  double lr = 0.0;
  double mean_shrinks = 0.0;
};

struct WarmupResult {
  TransportMap map;
  std::vector<ChainState> states;
  std::size_t recovered_chains = 0;  // chains re-anchored at their old x after a map update
};

using EpochCallback = std::function<void(const EpochRecord&, const TransportMap&)>;

/// Adaptive warm-up: h epochs of one sweep, m reverse-KL Adam steps on the
/// epoch batch, and a cache refresh under the updated map.
WarmupResult warmup(std::vector<ChainState> states, TransportMap map, const TargetModel& target,
                    const WarmupConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace tess
