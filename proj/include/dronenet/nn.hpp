#pragma once

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dronenet/error.hpp"
#include "dronenet/rng.hpp"

namespace dronenet::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// [input, hidden1, hidden2, output]
using LayerDims = std::array<int, 4>;

inline constexpr int kLayers = 3;

// One tensor per weight matrix and bias vector; used for the network
// parameters, their gradients and the optimizer moments alike.
struct ParamSet {
  std::array<Matrix, kLayers> weights;
  std::array<Vector, kLayers> biases;

  static ParamSet zeros(const LayerDims& dims) {
    ParamSet p;
    for (int l = 0; l < kLayers; ++l) {
      p.weights[l] = Matrix::Zero(dims[l + 1], dims[l]);
      p.biases[l] = Vector::Zero(dims[l + 1]);
    }
    return p;
  }

  bool same_shape(const ParamSet& o) const {
    for (int l = 0; l < kLayers; ++l) {
      if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols() ||
          biases[l].size() != o.biases[l].size())
        return false;
    }
    return true;
  }

  bool all_finite() const {
    for (int l = 0; l < kLayers; ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (int l = 0; l < kLayers; ++l)
      n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
  }

  // Visits every scalar in serialization order: per layer, weights
  // row-major then bias.
  template <class F>
  void for_each(F&& f) {
    for (int l = 0; l < kLayers; ++l) {
      for (Eigen::Index r = 0; r < weights[l].rows(); ++r)
        for (Eigen::Index c = 0; c < weights[l].cols(); ++c) f(weights[l](r, c));
      for (Eigen::Index r = 0; r < biases[l].size(); ++r) f(biases[l](r));
    }
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (!a.same_shape(b)) return false;
    for (int l = 0; l < kLayers; ++l)
      if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
    return true;
  }
};

using Gradients = ParamSet;

inline void validate_dims(const LayerDims& dims) {
  for (int d : dims)
    if (d < 1) throw UsageError("every layer dimension must be >= 1");
}

// Two ReLU hidden layers and a linear output layer.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(const LayerDims& dims) : dims_(dims) {
    validate_dims(dims);
    params_ = ParamSet::zeros(dims);
  }

  // He initialization: weights ~ N(0, 2 / fan_in), biases zero.
  static Mlp init(const LayerDims& dims, std::uint64_t seed) {
    Mlp net(dims);
    Rng rng(seed);
    for (int l = 0; l < kLayers; ++l) {
      const double std_dev = std::sqrt(2.0 / dims[l]);
      auto& w = net.params_.weights[l];
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = std_dev * rng.normal();
    }
    return net;
  }

  const LayerDims& dims() const { return dims_; }
  int input_size() const { return dims_[0]; }
  int output_size() const { return dims_[3]; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  Vector forward(std::span<const double> input) const {
    if (static_cast<int>(input.size()) != dims_[0])
      throw UsageError("input has " + std::to_string(input.size()) + " entries, expected " +
                       std::to_string(dims_[0]));
    const Eigen::Map<const Vector> x(input.data(), dims_[0]);
    return forward_batch(x);
  }

  // Column-per-sample batch forward.
  Matrix forward_batch(const Eigen::Ref<const Matrix>& inputs) const {
    if (inputs.rows() != dims_[0]) throw UsageError("batch input has the wrong row count");
    const auto& p = params_;
    Matrix h1 = ((p.weights[0] * inputs).colwise() + p.biases[0]).cwiseMax(0.0);
    Matrix h2 = ((p.weights[1] * h1).colwise() + p.biases[1]).cwiseMax(0.0);
    return (p.weights[2] * h2).colwise() + p.biases[2];
  }

 private:
  LayerDims dims_{1, 1, 1, 1};
  ParamSet params_;
};

namespace detail {

// Backpropagates an output-layer error through the network. `out_grad`
// holds dL/d(output) per sample column.
inline Gradients backprop(const Mlp& net, const Eigen::Ref<const Matrix>& inputs,
                          const Matrix& h1, const Matrix& h2, const Matrix& out_grad) {
  const auto& p = net.params();
  Gradients g;
  g.weights[2].noalias() = out_grad * h2.transpose();
  g.biases[2] = out_grad.rowwise().sum();

  Matrix d2 = p.weights[2].transpose() * out_grad;
  d2.array() *= (h2.array() > 0.0).cast<double>();
  g.weights[1].noalias() = d2 * h1.transpose();
  g.biases[1] = d2.rowwise().sum();

  Matrix d1 = p.weights[1].transpose() * d2;
  d1.array() *= (h1.array() > 0.0).cast<double>();
  g.weights[0].noalias() = d1 * inputs.transpose();
  g.biases[0] = d1.rowwise().sum();
  return g;
}

struct Activations {
  Matrix h1, h2, out;
};

inline Activations forward_cached(const Mlp& net, const Eigen::Ref<const Matrix>& inputs) {
  const auto& p = net.params();
  Activations a;
  a.h1 = ((p.weights[0] * inputs).colwise() + p.biases[0]).cwiseMax(0.0);
  a.h2 = ((p.weights[1] * a.h1).colwise() + p.biases[1]).cwiseMax(0.0);
  a.out = (p.weights[2] * a.h2).colwise() + p.biases[2];
  return a;
}

}  // namespace detail

// Gradient of the mean squared error between forward(input) and target.
// With `only_output` set, the loss covers that single output and the other
// entries of `target` are ignored.
inline Gradients backward(const Mlp& net, std::span<const double> input,
                          std::span<const double> target,
                          std::optional<int> only_output = std::nullopt) {
  if (static_cast<int>(input.size()) != net.input_size())
    throw UsageError("input has the wrong size");
  if (static_cast<int>(target.size()) != net.output_size())
    throw UsageError("target has the wrong size");
  if (only_output && (*only_output < 0 || *only_output >= net.output_size()))
    throw UsageError("masked output index out of range");

  const Eigen::Map<const Matrix> x(input.data(), net.input_size(), 1);
  const Eigen::Map<const Vector> t(target.data(), net.output_size());
  auto a = detail::forward_cached(net, x);
  Matrix grad = Matrix::Zero(net.output_size(), 1);
  if (only_output) {
    const int i = *only_output;
    grad(i, 0) = 2.0 * (a.out(i, 0) - t(i));
  } else {
    grad.col(0) = 2.0 * (a.out.col(0) - t) / static_cast<double>(net.output_size());
  }
  return detail::backprop(net, x, a.h1, a.h2, grad);
}

// Mean squared error of a single output.
inline double loss(const Mlp& net, std::span<const double> input, std::span<const double> target,
                   std::optional<int> only_output = std::nullopt) {
  const Vector y = net.forward(input);
  if (only_output) {
    const double e = y(*only_output) - target[*only_output];
    return e * e;
  }
  double s = 0.0;
  for (int i = 0; i < net.output_size(); ++i) s += (y(i) - target[i]) * (y(i) - target[i]);
  return s / net.output_size();
}

struct BatchGradient {
  Gradients gradients;
  double loss = 0.0;
};

// DQN regression: sample j's loss is (Q(x_j)[action_j] - target_j)^2, and the
// batch loss is the mean over samples.
inline BatchGradient backward_selected(const Mlp& net, const Eigen::Ref<const Matrix>& inputs,
                                       std::span<const double> targets,
                                       std::span<const int> selected) {
  const auto n = inputs.cols();
  if (static_cast<Eigen::Index>(targets.size()) != n ||
      static_cast<Eigen::Index>(selected.size()) != n)
    throw UsageError("batch targets/actions do not match the batch size");
  auto a = detail::forward_cached(net, inputs);
  Matrix grad = Matrix::Zero(net.output_size(), n);
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double e = a.out(selected[j], j) - targets[j];
    total += e * e;
    grad(selected[j], j) = 2.0 * e / static_cast<double>(n);
  }
  return {detail::backprop(net, inputs, a.h1, a.h2, grad), total / static_cast<double>(n)};
}

struct AdamState {
  ParamSet first_moment;
  ParamSet second_moment;
  std::int64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_network(const Mlp& net, double learning_rate = 1e-3) {
    AdamState s;
    s.first_moment = ParamSet::zeros(net.dims());
    s.second_moment = ParamSet::zeros(net.dims());
    s.learning_rate = learning_rate;
    return s;
  }
};

// Bias-corrected Adam update.
inline void adam_step(Mlp& net, AdamState& state, const Gradients& grads) {
  auto& p = net.params();
  if (!p.same_shape(grads) || !p.same_shape(state.first_moment) ||
      !p.same_shape(state.second_moment))
    throw UsageError("adam_step: parameter, gradient and moment shapes differ");
  ++state.step_count;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  const double lr = state.learning_rate;
  const double eps = state.epsilon;

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (int l = 0; l < kLayers; ++l) {
    update(p.weights[l], state.first_moment.weights[l], state.second_moment.weights[l],
           grads.weights[l]);
    update(p.biases[l], state.first_moment.biases[l], state.second_moment.biases[l],
           grads.biases[l]);
  }
}

inline void copy_parameters(const Mlp& source, Mlp& dest) {
  if (source.dims() != dest.dims()) throw UsageError("copy_parameters: dimension mismatch");
  dest.params() = source.params();
}

// Binary layout, little-endian:
//   bytes 0..7   magic "DRNMLP\0\0"
//   u32          format version (kFormatVersion)
//   u32 x 4      layer dims
//   f64 x N      parameters in ParamSet::for_each order
inline constexpr std::array<char, 8> kMagic = {'D', 'R', 'N', 'M', 'L', 'P', 0, 0};
inline constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "parameter serialization assumes a little-endian host");

inline std::vector<std::uint8_t> save_parameters(const Mlp& net) {
  std::vector<std::uint8_t> buf;
  auto put = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  };
  put(kMagic.data(), kMagic.size());
  put(&kFormatVersion, sizeof kFormatVersion);
  for (int d : net.dims()) {
    const auto u = static_cast<std::uint32_t>(d);
    put(&u, sizeof u);
  }
  auto params = net.params();
  params.for_each([&](double& x) { put(&x, sizeof x); });
  return buf;
}

inline Mlp load_parameters(std::span<const std::uint8_t> buf) {
  std::size_t pos = 0;
  auto take = [&](void* p, std::size_t n) {
    if (buf.size() - pos < n) throw FormatError("parameter buffer truncated");
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  };
  std::array<char, 8> magic{};
  take(magic.data(), magic.size());
  if (magic != kMagic) throw FormatError("not a network parameter file");
  std::uint32_t version = 0;
  take(&version, sizeof version);
  if (version != kFormatVersion)
    throw FormatError("unsupported parameter format version " + std::to_string(version));
  LayerDims dims{};
  for (auto& d : dims) {
    std::uint32_t u = 0;
    take(&u, sizeof u);
    if (u < 1 || u > (1u << 20)) throw FormatError("implausible layer dimension");
    d = static_cast<int>(u);
  }
  Mlp net(dims);
  const std::size_t expected = net.params().size() * sizeof(double);
  if (buf.size() - pos != expected)
    throw FormatError("parameter payload is " + std::to_string(buf.size() - pos) +
                      " bytes, expected " + std::to_string(expected));
  net.params().for_each([&](double& x) { take(&x, sizeof x); });
  if (!net.params().all_finite()) throw FormatError("parameter file holds non-finite values");
  return net;
}

}  // namespace dronenet::nn
