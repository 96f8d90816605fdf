#include "tess/train.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace tess {

AdamState AdamState::zeros(Eigen::Index n, double lr0) {
  AdamState s;
  s.m = ParamVector::Zero(n);
  s.v = ParamVector::Zero(n);
  s.lr0 = lr0;
  return s;
}

double AdamState::lr(std::size_t t) const {
  return lr0 * std::pow(decay_rate, static_cast<double>(t) / static_cast<double>(decay_steps));
}

std::pair<AdamState, ParamVector> adam_update(const AdamState& state, const ParamVector& params,
                                              const ParamVector& grad) {
  require(params.size() == grad.size(), "adam_update: gradient length differs from parameter length");
  require(state.m.size() == params.size() && state.v.size() == params.size(),
          "adam_update: optimizer state length differs from parameter length");
  if (!grad.allFinite()) throw NumericalError("adam_update: non-finite gradient");

  AdamState next = state;
  next.step = state.step + 1;
  const double t = static_cast<double>(next.step);
  next.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  next.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const ParamVector m_hat = next.m / c1;
  const ParamVector v_hat = next.v / c2;
  ParamVector updated = params - next.lr(next.step) * (m_hat.array() / (v_hat.array().sqrt() + state.eps)).matrix();
  return {std::move(next), std::move(updated)};
}

void WarmupConfig::validate() const {
  if (k < 2) throw ConfigError("warm-up needs at least two chains (k >= 2)");
  if (m < 1) throw ConfigError("warm-up needs at least one gradient step per epoch (m >= 1)");
  if (pretrain && pretrain_steps > 0 && M < 1) throw ConfigError("pretraining batch size M must be >= 1");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("learning rate must be positive");
}

double reverse_kl_loss(const Transport& map, const TargetModel& target, const RowMatrix& xs) {
  if (xs.rows() == 0) throw ContractError("reverse_kl_loss: empty batch");
  require(xs.cols() == map.dim(), "reverse_kl_loss: batch width differs from map dimension");
  double total = 0.0;
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    const Vector x = xs.row(i).transpose();
    total += target.log_density(x) - pushforward_logdensity(map, x);
  }
  return total / static_cast<double>(xs.rows());
}

double forward_kl_loss(const Transport& map, const TargetModel& target, const RowMatrix& us) {
  if (us.rows() == 0) throw ContractError("forward_kl_loss: empty batch");
  require(us.cols() == map.dim(), "forward_kl_loss: batch width differs from map dimension");
  double total = 0.0;
  for (Eigen::Index i = 0; i < us.rows(); ++i) {
    const Vector u = us.row(i).transpose();
    total += std_normal_logpdf(u) - pullback_logdensity(map, target, u);
  }
  return total / static_cast<double>(us.rows());
}

RowMatrix reference_batch(Eigen::Index rows, Eigen::Index dim, std::uint64_t seed, Stream stream,
                          std::uint64_t iteration) {
  Rng rng = make_rng(seed, stream, 0, iteration);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix out(rows, dim);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = normal(rng);
  return out;
}

TransportMap pretrain(TransportMap map, const TargetModel& target, const WarmupConfig& cfg,
                      const std::function<void(const PretrainStep&)>& on_step) {
  if (cfg.pretrain_steps == 0) return map;
  const TargetModel scored = with_score_fallback(target);
  AdamState adam = AdamState::zeros(map.param_count(), cfg.lr0);
  ParamVector params = map.params();
  for (std::size_t step = 0; step < cfg.pretrain_steps; ++step) {
    const RowMatrix us = reference_batch(static_cast<Eigen::Index>(cfg.M), map.dim(), cfg.seed, Stream::pretrain, step);
    const double loss = forward_kl_loss(map, scored, us);
    if (!(loss <= 1e6)) {
      throw NumericalError("pretraining diverged at step " + std::to_string(step) +
                           ": forward KL = " + std::to_string(loss));
    }
    const ParamVector grad = flow_gradient(map, scored, LossKind::forward_kl, us);
    std::tie(adam, params) = adam_update(adam, params, grad);
    map.set_params(params);
    if (on_step) on_step({step + 1, loss, adam.lr(adam.step)});
  }
  return map;
}

WarmupResult warmup(std::vector<ChainState> states, TransportMap map, const TargetModel& target,
                    const WarmupConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  require(states.size() == cfg.k, "warmup: number of chain states differs from k");
  WarmupResult result{std::move(map), std::move(states), 0};
  if (cfg.h == 0) return result;

  TransportMap& T = result.map;
  auto& chains = result.states;
  AdamState adam = AdamState::zeros(T.param_count(), cfg.lr0);
  ParamVector params = T.params();
  RowMatrix xs(static_cast<Eigen::Index>(chains.size()), T.dim());

  for (std::size_t epoch = 0; epoch < cfg.h; ++epoch) {
    const std::string where = "warm-up epoch " + std::to_string(epoch + 1);
    SweepStats sweep;
    try {
      sweep = tess_sweep(chains, T, target, cfg.seed, Stream::warmup, epoch);
    } catch (const Error& e) {
      throw NumericalError(where + ": " + e.what());
    }
    for (std::size_t c = 0; c < chains.size(); ++c) xs.row(static_cast<Eigen::Index>(c)) = chains[c].x.transpose();

    EpochRecord record;
    record.epoch = epoch + 1;
    record.mean_shrinks = sweep.mean_shrinks();
    record.reverse_kl = reverse_kl_loss(T, target, xs);

    for (std::size_t step = 0; step < cfg.m; ++step) {
      const ParamVector grad = flow_gradient(T, target, LossKind::reverse_kl, xs);
      try {
        std::tie(adam, params) = adam_update(adam, params, grad);
      } catch (const Error& e) {
        throw NumericalError(where + ": " + e.what());
      }
      T.set_params(params);
    }
    record.lr = adam.lr(adam.step);

    // Refresh the cached pull-back density under the new map, keeping u.
    for (auto& chain : chains) {
      ChainState refreshed = make_chain_state(chain.u, T, target, chain.chain_id);
      if (!std::isfinite(refreshed.log_pullback)) {
        const Vector u = T.inverse(chain.x).value;
        refreshed = make_chain_state(u, T, target, chain.chain_id);
        ++result.recovered_chains;
        if (!std::isfinite(refreshed.log_pullback)) {
          throw NumericalError(where + ": chain " + std::to_string(chain.chain_id) +
                               " has no finite density under the updated map");
        }
      }
      chain = std::move(refreshed);
    }

    if (cfg.monitor_batch > 0) {
      const RowMatrix us = reference_batch(static_cast<Eigen::Index>(cfg.monitor_batch), T.dim(), cfg.seed,
                                           Stream::monitor, epoch);
      record.forward_kl = forward_kl_loss(T, target, us);
    }
    if (on_epoch) on_epoch(record, T);
  }
  return result;
}

}  // namespace tess
