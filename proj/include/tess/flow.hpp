#pragma once

#include "tess/target_model.hpp"
#include "tess/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace tess {

struct MapResult {
  Vector value;
  double logdet = 0.0;
};

/// A diffeomorphism of R^d with tractable log-det Jacobian in both directions.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual Eigen::Index dim() const = 0;
  virtual MapResult forward(const Vector& u) const = 0;
  virtual MapResult inverse(const Vector& x) const = 0;
};

/// Log pull-back density log pi(T(u)) + log|det dT(u)|. Unnormalized; returns
/// -inf where the target vanishes.
double pullback_logdensity(const Transport& map, const TargetModel& target, const Vector& u);

/// Log push-forward density log phi(T^{-1}(x)) + log|det dT^{-1}(x)|. Normalized.
double pushforward_logdensity(const Transport& map, const Vector& x);

class IdentityTransport final : public Transport {
 public:
  explicit IdentityTransport(Eigen::Index d) : dim_(d) {}
  Eigen::Index dim() const override { return dim_; }
  MapResult forward(const Vector& u) const override { return {u, 0.0}; }
  MapResult inverse(const Vector& x) const override { return {x, 0.0}; }

 private:
  Eigen::Index dim_;
};

/// Log-scale outputs of every conditioner are clamped to this range.
inline constexpr double kLogScaleClamp = 10.0;

/// Dense tanh network R^in -> R^p x R^p with two hidden layers.
class ConditionerNetwork {
 public:
  struct Dense {
    Eigen::MatrixXd weights;  // out x in
    Vector bias;
  };

  struct Output {
    Vector psi1;  // raw log-scale (before clamping)
    Vector psi2;  // shift
  };

  /// Intermediate activations kept for the backward pass.
  struct Cache {
    Vector input;
    Vector hidden1;
    Vector hidden2;
  };

  ConditionerNetwork() = default;
  ConditionerNetwork(Eigen::Index input_dim, Eigen::Index hidden_width, Eigen::Index block_size);

  Eigen::Index input_dim() const { return layers_[0].weights.cols(); }
  Eigen::Index hidden_width() const { return layers_[0].weights.rows(); }
  Eigen::Index block_size() const { return layers_[2].weights.rows() / 2; }
  Eigen::Index param_count() const;

  Output forward(const Vector& input) const;
  Output forward(const Vector& input, Cache& cache) const;

  /// Backpropagates d(loss)/d(output) = [g_psi1; g_psi2]. Parameter gradients
  /// are accumulated into `param_grad` (canonical order); returns d(loss)/d(input).
  Vector backward(const Cache& cache, const Vector& grad_output, std::span<double> param_grad) const;

  std::array<Dense, 3>& layers() { return layers_; }
  const std::array<Dense, 3>& layers() const { return layers_; }

  void write_params(std::span<double> out) const;
  void read_params(std::span<const double> in);

 private:
  std::array<Dense, 3> layers_;
};

/// G-type layers transform block A (the first ceil(d/2) coordinates) given B;
/// D-type layers transform B given A.
enum class CouplingKind : std::uint8_t { G, D };

class CouplingLayer {
 public:
  /// Per-layer values needed to backpropagate through one application.
  struct Tape {
    ConditionerNetwork::Cache net;
    Vector block_in;   // transformed block before the layer
    Vector block_out;  // transformed block after the layer
    Vector log_scale;  // clamped psi1
    std::vector<bool> clamped;
  };

  CouplingLayer() = default;
  CouplingLayer(CouplingKind kind, Eigen::Index dim, Eigen::Index hidden_width, int index);

  CouplingKind kind() const { return kind_; }
  Eigen::Index dim() const { return dim_; }
  Eigen::Index split() const { return split_; }
  Eigen::Index transformed_begin() const { return kind_ == CouplingKind::G ? 0 : split_; }
  Eigen::Index transformed_size() const { return kind_ == CouplingKind::G ? split_ : dim_ - split_; }
  Eigen::Index conditioning_begin() const { return kind_ == CouplingKind::G ? split_ : 0; }
  Eigen::Index conditioning_size() const { return dim_ - transformed_size(); }

  ConditionerNetwork& conditioner() { return net_; }
  const ConditionerNetwork& conditioner() const { return net_; }

  MapResult forward(const Vector& u) const;
  MapResult inverse(const Vector& x) const;
  MapResult forward(const Vector& u, Tape& tape) const;
  MapResult inverse(const Vector& x, Tape& tape) const;

  /// Backward pass through `forward`. `grad_out` is d(loss)/d(output),
  /// `grad_logdet` is d(loss)/d(logdet). Returns d(loss)/d(input).
  Vector backward_forward(const Tape& tape, const Vector& grad_out, double grad_logdet,
                          std::span<double> param_grad) const;
  /// Backward pass through `inverse`.
  Vector backward_inverse(const Tape& tape, const Vector& grad_out, double grad_logdet,
                          std::span<double> param_grad) const;

 private:
  Vector clamped_log_scale(const Vector& raw, std::vector<bool>* clamped) const;

  CouplingKind kind_ = CouplingKind::G;
  Eigen::Index dim_ = 0;
  Eigen::Index split_ = 0;
  int index_ = 0;
  ConditionerNetwork net_;
};

enum class LossKind : std::uint8_t { reverse_kl, forward_kl };

/// T = D_n o G_n o ... o D_1 o G_1 built from affine coupling layers.
class TransportMap final : public Transport {
 public:
  TransportMap() = default;
  /// Zero-parameter map with `n_pairs` (G, D) pairs. hidden_width <= 0 selects
  /// the conditioner's own input dimension.
  TransportMap(Eigen::Index dim, int n_pairs, Eigen::Index hidden_width = 0);

  Eigen::Index dim() const override { return dim_; }
  int n_pairs() const { return static_cast<int>(layers_.size() / 2); }
  Eigen::Index param_count() const;
  const std::vector<CouplingLayer>& layers() const { return layers_; }
  std::vector<CouplingLayer>& layers() { return layers_; }

  MapResult forward(const Vector& u) const override;
  MapResult inverse(const Vector& x) const override;

  ParamVector params() const;
  void set_params(const ParamVector& psi);

  /// Per-sample gradient of -log phi(T^{-1}(x)) - logdet T^{-1}(x).
  double reverse_kl_term_gradient(const Vector& x, std::span<double> grad) const;
  /// Per-sample gradient of log phi(u) - log pi(T(u)) - logdet T(u) given the
  /// target score at T(u).
  double forward_kl_term_gradient(const Vector& u, const TargetModel& target, std::span<double> grad) const;

 private:
  Eigen::Index dim_ = 0;
  std::vector<CouplingLayer> layers_;
};

/// Output of one conditioner, split into (psi1, psi2) with psi1 unclamped.
ConditionerNetwork::Output conditioner_forward(const ConditionerNetwork& net, const Vector& input);
MapResult coupling_forward(const CouplingLayer& layer, const Vector& u);
MapResult coupling_inverse(const CouplingLayer& layer, const Vector& x);
MapResult map_forward(const Transport& map, const Vector& u);
MapResult map_inverse(const Transport& map, const Vector& x);

/// Exact gradient of the Monte Carlo KL estimate with respect to the
/// canonical parameter vector. Rows of `batch` are x-samples for reverse KL
/// and u-samples for forward KL. Forward KL requires `target.score`.
ParamVector flow_gradient(const TransportMap& map, const TargetModel& target, LossKind kind,
                          const RowMatrix& batch);

/// Identity-initialized flow: hidden weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// final conditioner layer (weights and biases) zero.
TransportMap init_flow(Eigen::Index dim, int n_pairs, std::uint64_t seed, Eigen::Index hidden_width = 0);

void save_checkpoint(const TransportMap& map, const std::filesystem::path& path);
TransportMap load_checkpoint(const std::filesystem::path& path);

}  // namespace tess
