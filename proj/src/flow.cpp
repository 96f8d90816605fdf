#include "tess/flow.hpp"

#include "tess/random.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <limits>
#include <string>

namespace tess {

namespace {

Eigen::Index dense_param_count(const ConditionerNetwork::Dense& layer) {
  return layer.weights.size() + layer.bias.size();
}

}  // namespace

// ---------------------------------------------------------------------------
// ConditionerNetwork

ConditionerNetwork::ConditionerNetwork(Eigen::Index input_dim, Eigen::Index hidden_width, Eigen::Index block_size) {
  require(input_dim > 0 && hidden_width > 0 && block_size > 0, "conditioner dimensions must be positive");
  layers_[0] = {Eigen::MatrixXd::Zero(hidden_width, input_dim), Vector::Zero(hidden_width)};
  layers_[1] = {Eigen::MatrixXd::Zero(hidden_width, hidden_width), Vector::Zero(hidden_width)};
  layers_[2] = {Eigen::MatrixXd::Zero(2 * block_size, hidden_width), Vector::Zero(2 * block_size)};
}

Eigen::Index ConditionerNetwork::param_count() const {
  Eigen::Index n = 0;
  for (const auto& layer : layers_) n += dense_param_count(layer);
  return n;
}

ConditionerNetwork::Output ConditionerNetwork::forward(const Vector& input) const {
  Cache cache;
  return forward(input, cache);
}

ConditionerNetwork::Output ConditionerNetwork::forward(const Vector& input, Cache& cache) const {
  if (input.size() != input_dim()) {
    throw ContractError("conditioner input has length " + std::to_string(input.size()) + ", expected " +
                        std::to_string(input_dim()));
  }
  cache.input = input;
  cache.hidden1 = (layers_[0].weights * input + layers_[0].bias).array().tanh().matrix();
  cache.hidden2 = (layers_[1].weights * cache.hidden1 + layers_[1].bias).array().tanh().matrix();
  const Vector out = layers_[2].weights * cache.hidden2 + layers_[2].bias;
  const Eigen::Index p = block_size();
  return {out.head(p), out.tail(p)};
}

Vector ConditionerNetwork::backward(const Cache& cache, const Vector& grad_output, std::span<double> param_grad) const {
  require(static_cast<Eigen::Index>(param_grad.size()) == param_count(), "conditioner gradient buffer size mismatch");
  const std::array<const Vector*, 3> inputs{&cache.input, &cache.hidden1, &cache.hidden2};

  // Offsets of each dense layer inside param_grad.
  std::array<std::size_t, 3> offset{};
  std::size_t acc = 0;
  for (std::size_t l = 0; l < 3; ++l) {
    offset[l] = acc;
    acc += static_cast<std::size_t>(dense_param_count(layers_[l]));
  }

  Vector grad = grad_output;  // gradient w.r.t. pre-activation of the current layer
  for (int l = 2; l >= 0; --l) {
    const auto& layer = layers_[static_cast<std::size_t>(l)];
    const Vector& in = *inputs[static_cast<std::size_t>(l)];
    double* w = param_grad.data() + offset[static_cast<std::size_t>(l)];
    const Eigen::Index rows = layer.weights.rows();
    const Eigen::Index cols = layer.weights.cols();
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) w[r * cols + c] += grad[r] * in[c];
    }
    double* b = w + rows * cols;
    for (Eigen::Index r = 0; r < rows; ++r) b[r] += grad[r];

    Vector grad_in = layer.weights.transpose() * grad;
    if (l > 0) {
      // in = tanh(pre), d tanh = 1 - tanh^2
      grad = grad_in.array() * (1.0 - in.array().square());
    } else {
      return grad_in;
    }
  }
  return {};
}

void ConditionerNetwork::write_params(std::span<double> out) const {
  require(static_cast<Eigen::Index>(out.size()) == param_count(), "conditioner parameter buffer size mismatch");
  std::size_t k = 0;
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) out[k++] = layer.weights(r, c);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out[k++] = layer.bias[r];
  }
}

void ConditionerNetwork::read_params(std::span<const double> in) {
  require(static_cast<Eigen::Index>(in.size()) == param_count(), "conditioner parameter buffer size mismatch");
  std::size_t k = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = in[k++];
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = in[k++];
  }
}

ConditionerNetwork::Output conditioner_forward(const ConditionerNetwork& net, const Vector& input) {
  return net.forward(input);
}

// ---------------------------------------------------------------------------
// CouplingLayer

CouplingLayer::CouplingLayer(CouplingKind kind, Eigen::Index dim, Eigen::Index hidden_width, int index)
    : kind_(kind), dim_(dim), split_((dim + 1) / 2), index_(index) {
  if (dim < 2) throw ContractError("coupling layers need dim >= 2, got " + std::to_string(dim));
  const Eigen::Index in = conditioning_size();
  net_ = ConditionerNetwork(in, hidden_width > 0 ? hidden_width : in, transformed_size());
}

Vector CouplingLayer::clamped_log_scale(const Vector& raw, std::vector<bool>* clamped) const {
  Vector s(raw.size());
  if (clamped) clamped->assign(static_cast<std::size_t>(raw.size()), false);
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) {
      throw NumericalError("coupling layer " + std::to_string(index_) + ": non-finite log-scale from conditioner");
    }
    s[i] = std::clamp(raw[i], -kLogScaleClamp, kLogScaleClamp);
    if (clamped && s[i] != raw[i]) (*clamped)[static_cast<std::size_t>(i)] = true;
  }
  return s;
}

MapResult CouplingLayer::forward(const Vector& u) const {
  Tape tape;
  return forward(u, tape);
}

MapResult CouplingLayer::inverse(const Vector& x) const {
  Tape tape;
  return inverse(x, tape);
}

MapResult CouplingLayer::forward(const Vector& u, Tape& tape) const {
  if (u.size() != dim_) throw ContractError("coupling_forward: input length mismatch");
  const auto out = net_.forward(u.segment(conditioning_begin(), conditioning_size()), tape.net);
  tape.log_scale = clamped_log_scale(out.psi1, &tape.clamped);
  tape.block_in = u.segment(transformed_begin(), transformed_size());
  tape.block_out = tape.log_scale.array().exp() * tape.block_in.array() + out.psi2.array();
  MapResult result{u, tape.log_scale.sum()};
  result.value.segment(transformed_begin(), transformed_size()) = tape.block_out;
  return result;
}

MapResult CouplingLayer::inverse(const Vector& x, Tape& tape) const {
  if (x.size() != dim_) throw ContractError("coupling_inverse: input length mismatch");
  const auto out = net_.forward(x.segment(conditioning_begin(), conditioning_size()), tape.net);
  tape.log_scale = clamped_log_scale(out.psi1, &tape.clamped);
  tape.block_in = x.segment(transformed_begin(), transformed_size());
  tape.block_out = (tape.block_in - out.psi2).array() * (-tape.log_scale.array()).exp();
  MapResult result{x, -tape.log_scale.sum()};
  result.value.segment(transformed_begin(), transformed_size()) = tape.block_out;
  return result;
}

Vector CouplingLayer::backward_forward(const Tape& tape, const Vector& grad_out, double grad_logdet,
                                       std::span<double> param_grad) const {
  const Eigen::Index p = transformed_size();
  const Vector g_block = grad_out.segment(transformed_begin(), p);
  const Vector scale = tape.log_scale.array().exp();

  Vector g_net(2 * p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double g_s = g_block[i] * scale[i] * tape.block_in[i] + grad_logdet;
    g_net[i] = tape.clamped[static_cast<std::size_t>(i)] ? 0.0 : g_s;
    g_net[p + i] = g_block[i];
  }

  Vector grad_in = grad_out;
  grad_in.segment(transformed_begin(), p) = g_block.array() * scale.array();
  grad_in.segment(conditioning_begin(), conditioning_size()) += net_.backward(tape.net, g_net, param_grad);
  return grad_in;
}

Vector CouplingLayer::backward_inverse(const Tape& tape, const Vector& grad_out, double grad_logdet,
                                       std::span<double> param_grad) const {
  const Eigen::Index p = transformed_size();
  const Vector g_block = grad_out.segment(transformed_begin(), p);
  const Vector inv_scale = (-tape.log_scale.array()).exp();

  // out = (in - psi2) * exp(-s);  logdet = -sum(s)
  Vector g_net(2 * p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double g_s = -g_block[i] * tape.block_out[i] - grad_logdet;
    g_net[i] = tape.clamped[static_cast<std::size_t>(i)] ? 0.0 : g_s;
    g_net[p + i] = -g_block[i] * inv_scale[i];
  }

  Vector grad_in = grad_out;
  grad_in.segment(transformed_begin(), p) = g_block.array() * inv_scale.array();
  grad_in.segment(conditioning_begin(), conditioning_size()) += net_.backward(tape.net, g_net, param_grad);
  return grad_in;
}

MapResult coupling_forward(const CouplingLayer& layer, const Vector& u) { return layer.forward(u); }
MapResult coupling_inverse(const CouplingLayer& layer, const Vector& x) { return layer.inverse(x); }

// ---------------------------------------------------------------------------
// TransportMap

TransportMap::TransportMap(Eigen::Index dim, int n_pairs, Eigen::Index hidden_width) : dim_(dim) {
  if (dim < 2) throw ContractError("transport map needs dim >= 2 (coupling requires two nonempty blocks)");
  require(n_pairs >= 1, "transport map needs at least one (G, D) pair");
  for (int i = 0; i < n_pairs; ++i) {
    layers_.emplace_back(CouplingKind::G, dim, hidden_width, 2 * i);
    layers_.emplace_back(CouplingKind::D, dim, hidden_width, 2 * i + 1);
  }
}

Eigen::Index TransportMap::param_count() const {
  Eigen::Index n = 0;
  for (const auto& layer : layers_) n += layer.conditioner().param_count();
  return n;
}

MapResult TransportMap::forward(const Vector& u) const {
  if (u.size() != dim_) throw ContractError("map_forward: vector length mismatch");
  MapResult acc{u, 0.0};
  for (const auto& layer : layers_) {
    auto step = layer.forward(acc.value);
    acc.value = std::move(step.value);
    acc.logdet += step.logdet;
  }
  return acc;
}

MapResult TransportMap::inverse(const Vector& x) const {
  if (x.size() != dim_) throw ContractError("map_inverse: vector length mismatch");
  MapResult acc{x, 0.0};
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    auto step = it->inverse(acc.value);
    acc.value = std::move(step.value);
    acc.logdet += step.logdet;
  }
  return acc;
}

ParamVector TransportMap::params() const {
  ParamVector psi(param_count());
  std::size_t offset = 0;
  for (const auto& layer : layers_) {
    const auto n = static_cast<std::size_t>(layer.conditioner().param_count());
    layer.conditioner().write_params(std::span<double>(psi.data() + offset, n));
    offset += n;
  }
  return psi;
}

void TransportMap::set_params(const ParamVector& psi) {
  if (psi.size() != param_count()) {
    throw ContractError("parameter vector has length " + std::to_string(psi.size()) + ", expected " +
                        std::to_string(param_count()));
  }
  std::size_t offset = 0;
  for (auto& layer : layers_) {
    const auto n = static_cast<std::size_t>(layer.conditioner().param_count());
    layer.conditioner().read_params(std::span<const double>(psi.data() + offset, n));
    offset += n;
  }
}

double TransportMap::reverse_kl_term_gradient(const Vector& x, std::span<double> grad) const {
  // Inverse pass applies layers last-to-first.
  std::vector<CouplingLayer::Tape> tapes(layers_.size());
  Vector u = x;
  double logdet = 0.0;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    auto step = layers_[i].inverse(u, tapes[i]);
    u = std::move(step.value);
    logdet += step.logdet;
  }
  // loss = -log phi(u) - logdet
  Vector g = u;
  std::size_t offset = 0;
  std::vector<std::size_t> offsets(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    offsets[i] = offset;
    offset += static_cast<std::size_t>(layers_[i].conditioner().param_count());
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto n = static_cast<std::size_t>(layers_[i].conditioner().param_count());
    g = layers_[i].backward_inverse(tapes[i], g, -1.0, grad.subspan(offsets[i], n));
  }
  return -std_normal_logpdf(u) - logdet;
}

double TransportMap::forward_kl_term_gradient(const Vector& u, const TargetModel& target,
                                              std::span<double> grad) const {
  std::vector<CouplingLayer::Tape> tapes(layers_.size());
  Vector x = u;
  double logdet = 0.0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto step = layers_[i].forward(x, tapes[i]);
    x = std::move(step.value);
    logdet += step.logdet;
  }
  const double log_target = target.log_density(x);
  const Vector score = target.score(x);
  if (!std::isfinite(log_target) || !score.allFinite()) {
    throw NumericalError("forward KL gradient: target density or score not finite at T(u)");
  }
  // loss = log phi(u) - log pi(T(u)) - logdet
  Vector g = -score;
  std::size_t offset = static_cast<std::size_t>(param_count());
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const auto n = static_cast<std::size_t>(layers_[i].conditioner().param_count());
    offset -= n;
    g = layers_[i].backward_forward(tapes[i], g, -1.0, grad.subspan(offset, n));
  }
  return std_normal_logpdf(u) - log_target - logdet;
}

MapResult map_forward(const Transport& map, const Vector& u) { return map.forward(u); }
MapResult map_inverse(const Transport& map, const Vector& x) { return map.inverse(x); }

double pullback_logdensity(const Transport& map, const TargetModel& target, const Vector& u) {
  const auto fwd = map.forward(u);
  const double lp = target.log_density(fwd.value);
  if (lp == -std::numeric_limits<double>::infinity()) return lp;
  return lp + fwd.logdet;
}

double pushforward_logdensity(const Transport& map, const Vector& x) {
  const auto inv = map.inverse(x);
  return std_normal_logpdf(inv.value) + inv.logdet;
}

ParamVector flow_gradient(const TransportMap& map, const TargetModel& target, LossKind kind, const RowMatrix& batch) {
  if (batch.rows() == 0) throw ContractError("flow_gradient: empty batch");
  if (batch.cols() != map.dim()) throw ContractError("flow_gradient: batch column count differs from map dimension");
  if (kind == LossKind::forward_kl && !target.has_score()) {
    throw CapabilityError("forward KL gradient needs a target score; '" + target.name + "' provides none");
  }
  ParamVector grad = ParamVector::Zero(map.param_count());
  std::span<double> buf(grad.data(), static_cast<std::size_t>(grad.size()));
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    const Vector row = batch.row(r).transpose();
    if (kind == LossKind::reverse_kl) {
      map.reverse_kl_term_gradient(row, buf);
    } else {
      map.forward_kl_term_gradient(row, target, buf);
    }
  }
  return grad / static_cast<double>(batch.rows());
}

TransportMap init_flow(Eigen::Index dim, int n_pairs, std::uint64_t seed, Eigen::Index hidden_width) {
  TransportMap map(dim, n_pairs, hidden_width);
  Rng rng = make_rng(seed, Stream::flow_init, 0, 0);
  for (auto& layer : map.layers()) {
    auto& dense = layer.conditioner().layers();
    for (std::size_t l = 0; l < 2; ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(dense[l].weights.cols()));
      for (Eigen::Index r = 0; r < dense[l].weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < dense[l].weights.cols(); ++c) dense[l].weights(r, c) = uniform(rng, -bound, bound);
      }
      for (Eigen::Index r = 0; r < dense[l].bias.size(); ++r) dense[l].bias[r] = uniform(rng, -bound, bound);
    }
    dense[2].weights.setZero();
    dense[2].bias.setZero();
  }
  return map;
}

// ---------------------------------------------------------------------------
// Checkpoints. Layout is documented in docs/checkpoint_format.md.

namespace {

constexpr char kMagic[8] = {'T', 'E', 'S', 'S', 'F', 'L', 'O', 'W'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(U));
}

template <typename T>
T get_le(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char bytes[sizeof(U)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(U));
  if (!in) throw DataError("checkpoint truncated");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace

void save_checkpoint(const TransportMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.dim()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.n_pairs()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.layers().size()));
  for (const auto& layer : map.layers()) {
    const auto& net = layer.conditioner();
    put_le<std::uint32_t>(out, layer.kind() == CouplingKind::G ? 0u : 1u);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.input_dim()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.hidden_width()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(2 * net.block_size()));
  }
  const ParamVector psi = map.params();
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(psi.size()));
  for (Eigen::Index i = 0; i < psi.size(); ++i) put_le<double>(out, psi[i]);
  if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

TransportMap load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) throw DataError("not a flow checkpoint: " + path.string());
  if (get_le<std::uint32_t>(in) != kVersion) throw DataError("unsupported checkpoint version");
  const auto dim = static_cast<Eigen::Index>(get_le<std::uint32_t>(in));
  const auto n_pairs = static_cast<int>(get_le<std::uint32_t>(in));
  const auto n_layers = get_le<std::uint32_t>(in);
  if (dim < 2 || n_pairs < 1 || n_layers != static_cast<std::uint32_t>(2 * n_pairs)) {
    throw DataError("inconsistent checkpoint header");
  }
  bool default_width = true;
  bool uniform_width = true;
  Eigen::Index first_width = 0;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const auto kind = get_le<std::uint32_t>(in);
    const auto input_dim = static_cast<Eigen::Index>(get_le<std::uint32_t>(in));
    const auto width = static_cast<Eigen::Index>(get_le<std::uint32_t>(in));
    get_le<std::uint32_t>(in);  // output_dim, implied by dim and kind
    if (kind != l % 2) throw DataError("checkpoint layers do not alternate G, D");
    if (l == 0) first_width = width;
    default_width = default_width && width == input_dim;
    uniform_width = uniform_width && width == first_width;
  }
  if (!default_width && !uniform_width) throw DataError("checkpoint mixes hidden widths");
  TransportMap map = default_width ? TransportMap(dim, n_pairs) : TransportMap(dim, n_pairs, first_width);
  const auto count = get_le<std::uint64_t>(in);
  if (count != static_cast<std::uint64_t>(map.param_count())) throw DataError("checkpoint parameter count mismatch");
  ParamVector psi(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < psi.size(); ++i) psi[i] = get_le<double>(in);
  map.set_params(psi);
  return map;
}

}  // namespace tess
