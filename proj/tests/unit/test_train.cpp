#include "tess/train.hpp"
#include "tess/targets.hpp"

#include <doctest.h>

#include <cmath>

using namespace tess;

namespace {

RowMatrix banana_draws(Eigen::Index n, std::uint64_t seed) {
  const ExactBananaMap T;
  const RowMatrix us = reference_batch(n, 2, seed, Stream::data, 0);
  RowMatrix xs(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) xs.row(i) = T.forward(us.row(i).transpose()).value.transpose();
  return xs;
}

double max_displacement(const TransportMap& map, const RowMatrix& us) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < us.rows(); ++i) {
    const Vector u = us.row(i).transpose();
    worst = std::max(worst, (map.forward(u).value - u).norm());
  }
  return worst;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters fixed") {
  const AdamState s = AdamState::zeros(3, 1e-3);
  const ParamVector p = ParamVector::LinSpaced(3, -1.0, 1.0);
  const auto [next, q] = adam_update(s, p, ParamVector::Zero(3));
  CHECK(q == p);
  CHECK(next.step == 1);
}

TEST_CASE("adam: first step moves each coordinate by about the learning rate") {
  const AdamState s = AdamState::zeros(4, 1e-2);
  ParamVector g(4);
  g << 3.0, -0.01, 250.0, -7.0;
  const auto [next, q] = adam_update(s, ParamVector::Zero(4), g);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(std::abs(q[i]) == doctest::Approx(next.lr(1)).epsilon(1e-5));
    CHECK(q[i] * g[i] < 0.0);
  }
}

TEST_CASE("adam: learning rate schedule") {
  const AdamState s = AdamState::zeros(1, 2e-3);
  CHECK(s.lr(0) == 2e-3);
  CHECK(s.lr(400) == doctest::Approx(2e-4).epsilon(1e-12));
  CHECK(s.lr(200) == doctest::Approx(2e-3 * std::sqrt(0.1)).epsilon(1e-12));
}

TEST_CASE("adam: non-finite gradient and mismatched lengths") {
  const AdamState s = AdamState::zeros(2, 1e-3);
  ParamVector g(2);
  g << 1.0, std::nan("");
  CHECK_THROWS_AS(adam_update(s, ParamVector::Zero(2), g), NumericalError);
  g << 1.0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(adam_update(s, ParamVector::Zero(2), g), NumericalError);
  CHECK_THROWS_AS(adam_update(s, ParamVector::Zero(3), ParamVector::Zero(3)), ContractError);
}

TEST_CASE("losses vanish for the identity map on a standard Gaussian") {
  const IdentityTransport id(3);
  const TargetModel t = standard_gaussian_target(3);
  const RowMatrix batch = reference_batch(64, 3, 1, Stream::data, 0);
  CHECK(reverse_kl_loss(id, t, batch) == 0.0);
  CHECK(forward_kl_loss(id, t, batch) == 0.0);
}

TEST_CASE("losses for the exact banana map equal the log normalizer per sample") {
  const ExactBananaMap T;
  const TargetModel banana = banana_target();
  const double logz = banana_log_normalizer();
  const RowMatrix xs = banana_draws(50, 3);
  const RowMatrix us = reference_batch(50, 2, 4, Stream::data, 0);
  for (Eigen::Index i = 0; i < 50; ++i) {
    CHECK(reverse_kl_loss(T, banana, xs.row(i)) == doctest::Approx(logz).epsilon(1e-10));
    CHECK(forward_kl_loss(T, banana, us.row(i)) == doctest::Approx(-logz).epsilon(1e-10));
  }
}

TEST_CASE("duplicating a batch leaves losses and gradients unchanged") {
  const TransportMap map = [] {
    TransportMap m = init_flow(2, 2, 7);
    ParamVector p = m.params();
    Rng rng = make_rng(7, Stream::data, 0, 0);
    std::normal_distribution<double> n(0.0, 0.1);
    for (auto& v : p) v = n(rng);
    m.set_params(p);
    return m;
  }();
  const TargetModel banana = banana_target();
  const RowMatrix xs = banana_draws(8, 5);
  RowMatrix twice(16, 2);
  twice << xs, xs;
  CHECK(reverse_kl_loss(map, banana, twice) == doctest::Approx(reverse_kl_loss(map, banana, xs)).epsilon(1e-14));
  const ParamVector g1 = flow_gradient(map, banana, LossKind::reverse_kl, xs);
  const ParamVector g2 = flow_gradient(map, banana, LossKind::reverse_kl, twice);
  CHECK((g1 - g2).norm() <= 1e-12 * (1.0 + g1.norm()));
  const RowMatrix us = reference_batch(8, 2, 6, Stream::data, 0);
  RowMatrix us2(16, 2);
  us2 << us, us;
  CHECK(forward_kl_loss(map, banana, us2) == doctest::Approx(forward_kl_loss(map, banana, us)).epsilon(1e-14));
}

TEST_CASE("empty batches are rejected") {
  const IdentityTransport id(2);
  const TargetModel t = standard_gaussian_target(2);
  CHECK_THROWS_AS(reverse_kl_loss(id, t, RowMatrix(0, 2)), ContractError);
  CHECK_THROWS_AS(forward_kl_loss(id, t, RowMatrix(0, 2)), ContractError);
}

TEST_CASE("reverse gradient ignores an additive constant in the target") {
  TransportMap map = init_flow(3, 2, 11);
  const TargetModel t = gaussian_target(Vector::Constant(3, 0.5), 1.5);
  const RowMatrix xs = reference_batch(32, 3, 12, Stream::data, 0);
  const ParamVector g1 = flow_gradient(map, t, LossKind::reverse_kl, xs);
  const ParamVector g2 = flow_gradient(map, shifted(t, 1e3), LossKind::reverse_kl, xs);
  CHECK(g1 == g2);
  const ParamVector f1 = flow_gradient(map, t, LossKind::forward_kl, xs);
  const ParamVector f2 = flow_gradient(map, shifted(t, -42.0), LossKind::forward_kl, xs);
  CHECK(f1 == f2);
}

TEST_CASE("pretraining with zero steps returns the map unchanged") {
  const TransportMap map = init_flow(2, 2, 3);
  WarmupConfig cfg;
  cfg.pretrain_steps = 0;
  const TransportMap out = pretrain(map, banana_target(), cfg);
  CHECK(out.params() == map.params());
}

TEST_CASE("pretraining on a standard Gaussian stays near the identity") {
  const TransportMap map = init_flow(2, 2, 3);
  WarmupConfig cfg;
  cfg.pretrain_steps = 100;
  cfg.M = 64;
  const TransportMap out = pretrain(map, standard_gaussian_target(2), cfg);
  CHECK(max_displacement(out, reference_batch(200, 2, 99, Stream::data, 0)) < 0.2);
}

TEST_CASE("pretraining on the banana lowers the forward KL") {
  const TargetModel banana = banana_target();
  const TransportMap map = init_flow(2, 2, 1);
  WarmupConfig cfg;
  cfg.pretrain_steps = 400;
  cfg.M = 128;
  cfg.lr0 = 2e-2;
  std::vector<PretrainStep> log;
  const TransportMap out = pretrain(map, banana, cfg, [&](const PretrainStep& s) { log.push_back(s); });
  REQUIRE(log.size() == 400);
  CHECK(log.front().step == 1);
  CHECK(log.back().lr < log.front().lr);
  const RowMatrix us = reference_batch(4000, 2, 77, Stream::data, 0);
  CHECK(forward_kl_loss(out, banana, us) < forward_kl_loss(map, banana, us) - 0.2);
}

TEST_CASE("warm-up with zero epochs returns its inputs") {
  const TransportMap map = init_flow(2, 2, 0);
  const TargetModel banana = banana_target();
  WarmupConfig cfg;
  cfg.k = 4;
  cfg.h = 0;
  auto states = initial_states(4, map, banana, 0);
  const WarmupResult r = warmup(states, map, banana, cfg);
  CHECK(r.map.params() == map.params());
  REQUIRE(r.states.size() == 4);
  for (std::size_t c = 0; c < 4; ++c) CHECK(r.states[c].u == states[c].u);
}

TEST_CASE("warm-up on a standard Gaussian keeps the map near the identity") {
  const TransportMap map = init_flow(2, 2, 0);
  const TargetModel t = standard_gaussian_target(2);
  WarmupConfig cfg;
  cfg.k = 32;
  cfg.h = 50;
  auto states = initial_states(32, map, t, 0);
  std::size_t epochs = 0;
  const WarmupResult r = warmup(states, map, t, cfg, [&](const EpochRecord& rec, const TransportMap&) {
    ++epochs;
    CHECK(rec.epoch == epochs);
    CHECK(rec.forward_kl.has_value());
    CHECK(std::isfinite(rec.reverse_kl));
  });
  CHECK(epochs == 50);
  CHECK(r.states.size() == 32);
  for (std::size_t c = 0; c < 32; ++c) CHECK(r.states[c].chain_id == c);
  CHECK(max_displacement(r.map, reference_batch(200, 2, 98, Stream::data, 0)) < 0.5);
}

TEST_CASE("warm-up validates its configuration") {
  const TransportMap map = init_flow(2, 2, 0);
  const TargetModel t = standard_gaussian_target(2);
  WarmupConfig cfg;
  cfg.k = 1;
  CHECK_THROWS_AS(warmup(initial_states(1, map, t, 0), map, t, cfg), ConfigError);
  cfg.k = 4;
  CHECK_THROWS_AS(warmup(initial_states(3, map, t, 0), map, t, cfg), ContractError);
  cfg.m = 0;
  CHECK_THROWS_AS(warmup(initial_states(4, map, t, 0), map, t, cfg), ConfigError);
}
