#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dronenet/nn.hpp"
#include "dronenet/rng.hpp"

namespace {

using namespace dronenet;
using namespace dronenet::nn;

std::vector<double> random_vector(Rng& rng, int n, double scale = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = scale * (2 * rng.uniform() - 1);
  return v;
}

// Central finite-difference check of backward() on a random net; returns the
// worst relative error over all parameters.
double max_fd_error(std::uint64_t seed, std::optional<int> only_output) {
  Rng rng(seed);
  const LayerDims dims = {5, 7, 6, 4};
  Mlp net = Mlp::init(dims, seed);
  net.params().for_each([&](double& b) { b += 0.1 * (2 * rng.uniform() - 1); });
  const auto x = random_vector(rng, dims[0]);
  const auto t = random_vector(rng, dims[3], 3.0);
  Gradients g = backward(net, x, t, only_output);

  constexpr double h = 1e-5;
  double worst = 0.0;
  std::vector<double*> analytic;
  g.for_each([&](double& v) { analytic.push_back(&v); });
  std::size_t i = 0;
  net.params().for_each([&](double& p) {
    const double saved = p;
    p = saved + h;
    const double up = loss(net, x, t, only_output);
    p = saved - h;
    const double down = loss(net, x, t, only_output);
    p = saved;
    const double numeric = (up - down) / (2 * h);
    const double a = *analytic[i++];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  });
  return worst;
}

TEST(Mlp, InitIsDeterministicWithZeroBiases) {
  const LayerDims dims = {8, 16, 16, 10};
  const Mlp a = Mlp::init(dims, 42);
  const Mlp b = Mlp::init(dims, 42);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_FALSE(a.params() == Mlp::init(dims, 43).params());
  for (int l = 0; l < kLayers; ++l) EXPECT_TRUE(a.params().biases[l].isZero(0.0));
}

TEST(Mlp, InitVarianceMatchesFanIn) {
  const Mlp net = Mlp::init({256, 256, 4, 1}, 9);
  const Matrix& w = net.params().weights[0];
  const double mean = w.mean();
  const double var = (w.array() - mean).square().sum() / static_cast<double>(w.size() - 1);
  EXPECT_NEAR(var, 2.0 / 256, 0.2 * 2.0 / 256);
}

TEST(Mlp, RejectsBadDims) {
  EXPECT_THROW(Mlp({0, 1, 1, 1}), UsageError);
  EXPECT_THROW(Mlp::init({3, 4, -1, 2}, 1), UsageError);
}

TEST(Mlp, ZeroNetOutputsZero) {
  const Mlp net({3, 4, 4, 2});
  const std::vector<double> x = {1.0, -2.0, 3.0};
  EXPECT_TRUE(net.forward(x).isZero(0.0));
}

TEST(Mlp, HandComputedForward) {
  Mlp net({2, 2, 2, 2});
  auto& p = net.params();
  p.weights[0] << 1, 2, -1, 1;
  p.biases[0] << 0, -5;
  p.weights[1] << 1, 0, 2, 1;
  p.biases[1] << 1, -1;
  p.weights[2] << 1, 1, 0, -1;
  p.biases[2] << 0.5, 0;
  // x = (1, 2): h1 = relu(5, -4) = (5, 0); h2 = relu(6, 9) = (6, 9);
  // out = (6 + 9 + 0.5, -9).
  const std::vector<double> x = {1.0, 2.0};
  const Vector y = net.forward(x);
  EXPECT_DOUBLE_EQ(y(0), 15.5);
  EXPECT_DOUBLE_EQ(y(1), -9.0);

  // The second hidden unit is inactive, so its outgoing weights do not matter.
  p.weights[1](0, 1) = 100;
  p.weights[1](1, 1) = -100;
  EXPECT_EQ(net.forward(x), y);
}

TEST(Mlp, ForwardRejectsWrongInputSize) {
  const Mlp net({3, 4, 4, 2});
  const std::vector<double> x = {1.0, 2.0};
  EXPECT_THROW(net.forward(x), UsageError);
}

TEST(Backward, ZeroWhenOutputMatchesTarget) {
  const Mlp net = Mlp::init({4, 5, 5, 3}, 1);
  const std::vector<double> x = {0.1, 0.2, -0.3, 0.4};
  const Vector y = net.forward(x);
  const std::vector<double> t(y.data(), y.data() + y.size());
  Gradients g = backward(net, x, t);
  g.for_each([](double& v) { EXPECT_EQ(v, 0.0); });
}

TEST(Backward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    EXPECT_LE(max_fd_error(seed, std::nullopt), 1e-4) << "seed " << seed;
    EXPECT_LE(max_fd_error(100 + seed, static_cast<int>(seed % 4)), 1e-4) << "seed " << seed;
  }
}

TEST(Backward, MaskedLossEqualsTargetAtPrediction) {
  const Mlp net = Mlp::init({4, 6, 6, 3}, 5);
  const std::vector<double> x = {0.5, -0.1, 0.3, 0.9};
  const Vector y = net.forward(x);
  std::vector<double> t = {7.0, -3.0, 2.0};
  const Gradients masked = backward(net, x, t, 1);
  // Full-vector loss with all other targets equal to the prediction; the
  // full loss averages over 3 outputs, so its gradient is a third.
  std::vector<double> t_full(y.data(), y.data() + y.size());
  t_full[1] = t[1];
  Gradients full = backward(net, x, t_full);
  full.for_each([](double& v) { v *= 3.0; });
  for (int l = 0; l < kLayers; ++l) {
    EXPECT_TRUE(masked.weights[l].isApprox(full.weights[l], 1e-12));
    EXPECT_TRUE(masked.biases[l].isApprox(full.biases[l], 1e-12) ||
                (masked.biases[l].isZero(1e-14) && full.biases[l].isZero(1e-14)));
  }
}

TEST(Backward, BatchEqualsMeanOfSamples) {
  Rng rng(3);
  const Mlp net = Mlp::init({4, 6, 5, 3}, 8);
  const int n = 5;
  Matrix xs(4, n);
  std::vector<double> targets;
  std::vector<int> actions;
  Gradients expected = ParamSet::zeros(net.dims());
  for (int j = 0; j < n; ++j) {
    const auto x = random_vector(rng, 4);
    for (int i = 0; i < 4; ++i) xs(i, j) = x[i];
    targets.push_back(2 * rng.uniform());
    actions.push_back(static_cast<int>(rng.below(3)));
    std::vector<double> t(3, 0.0);
    t[actions.back()] = targets.back();
    const Gradients g = backward(net, x, t, actions.back());
    for (int l = 0; l < kLayers; ++l) {
      expected.weights[l] += g.weights[l] / n;
      expected.biases[l] += g.biases[l] / n;
    }
  }
  const auto batch = backward_selected(net, xs, targets, actions);
  for (int l = 0; l < kLayers; ++l) {
    EXPECT_TRUE(batch.gradients.weights[l].isApprox(expected.weights[l], 1e-12));
    EXPECT_TRUE(batch.gradients.biases[l].isApprox(expected.biases[l], 1e-12));
  }
}

TEST(Adam, ZeroGradientLeavesFreshParametersUnchanged) {
  Mlp net = Mlp::init({3, 4, 4, 2}, 2);
  const ParamSet before = net.params();
  AdamState st = AdamState::for_network(net);
  adam_step(net, st, ParamSet::zeros(net.dims()));
  EXPECT_EQ(net.params(), before);
  EXPECT_EQ(st.step_count, 1);
}

TEST(Adam, MomentsDecayUnderZeroGradient) {
  Mlp net = Mlp::init({3, 4, 4, 2}, 2);
  AdamState st = AdamState::for_network(net);
  Gradients g = ParamSet::zeros(net.dims());
  g.for_each([](double& v) { v = 0.5; });
  adam_step(net, st, g);
  const ParamSet m = st.first_moment;
  const ParamSet v = st.second_moment;
  adam_step(net, st, ParamSet::zeros(net.dims()));
  for (int l = 0; l < kLayers; ++l) {
    EXPECT_TRUE(st.first_moment.weights[l].isApprox(0.9 * m.weights[l]));
    EXPECT_TRUE(st.second_moment.weights[l].isApprox(0.999 * v.weights[l]));
  }
}

TEST(Adam, FirstStepIsLearningRateSized) {
  Mlp net({1, 1, 1, 1});
  AdamState st = AdamState::for_network(net, 0.001);
  Gradients g = ParamSet::zeros(net.dims());
  g.weights[2](0, 0) = 1.0;
  adam_step(net, st, g);
  // m_hat = 1, v_hat = 1: step = -lr / (1 + eps).
  EXPECT_NEAR(net.params().weights[2](0, 0), -0.001 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(net.params().weights[1](0, 0), 0.0);
}

TEST(Adam, DecreasesAFixedQuadratic) {
  Mlp net = Mlp::init({3, 4, 4, 2}, 4);
  ParamSet center = net.params();
  center.for_each([](double& v) { v += 1.0; });
  AdamState st = AdamState::for_network(net);
  auto quad = [&] {
    double s = 0;
    for (int l = 0; l < kLayers; ++l)
      s += (net.params().weights[l] - center.weights[l]).squaredNorm() +
           (net.params().biases[l] - center.biases[l]).squaredNorm();
    return s;
  };
  double last = quad();
  for (int i = 0; i < 100; ++i) {
    Gradients g;
    for (int l = 0; l < kLayers; ++l) {
      g.weights[l] = 2 * (net.params().weights[l] - center.weights[l]);
      g.biases[l] = 2 * (net.params().biases[l] - center.biases[l]);
    }
    adam_step(net, st, g);
    const double now = quad();
    ASSERT_LT(now, last) << "step " << i;
    last = now;
  }
}

TEST(Adam, RejectsShapeMismatch) {
  Mlp net({3, 4, 4, 2});
  AdamState st = AdamState::for_network(net);
  EXPECT_THROW(adam_step(net, st, ParamSet::zeros({3, 4, 5, 2})), UsageError);
}

TEST(Training, IdenticalSeedsGiveIdenticalParameters) {
  auto train = [] {
    Mlp net = Mlp::init({4, 8, 8, 3}, 77);
    AdamState st = AdamState::for_network(net);
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
      const auto x = random_vector(rng, 4);
      const auto t = random_vector(rng, 3);
      adam_step(net, st, backward(net, x, t, static_cast<int>(rng.below(3))));
    }
    return net;
  };
  EXPECT_EQ(train().params(), train().params());
}

TEST(CopyParameters, TargetMatchesSourceAndIsIndependent) {
  Mlp source = Mlp::init({4, 6, 6, 3}, 1);
  Mlp dest = Mlp::init({4, 6, 6, 3}, 2);
  copy_parameters(source, dest);
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const auto x = random_vector(rng, 4);
    EXPECT_EQ(source.forward(x), dest.forward(x));
  }
  const ParamSet snapshot = dest.params();
  source.params().weights[0](0, 0) += 1.0;
  EXPECT_EQ(dest.params(), snapshot);

  const Mlp zero({4, 6, 6, 3});
  copy_parameters(zero, dest);
  EXPECT_EQ(dest.params(), zero.params());

  Mlp other({4, 5, 6, 3});
  EXPECT_THROW(copy_parameters(source, other), UsageError);
}

TEST(Serialization, RoundTripIsBitExact) {
  const Mlp net = Mlp::init({5, 7, 3, 10}, 12);
  const auto bytes = save_parameters(net);
  EXPECT_EQ(bytes.size(), 8 + 4 + 16 + net.params().size() * 8);
  const Mlp back = load_parameters(bytes);
  EXPECT_EQ(back.dims(), net.dims());
  EXPECT_EQ(back.params(), net.params());
  const std::vector<double> x = {1, 2, 3, 4, 5};
  EXPECT_EQ(back.forward(x), net.forward(x));
}

TEST(Serialization, RejectsCorruptBuffers) {
  const auto bytes = save_parameters(Mlp::init({2, 3, 3, 2}, 1));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(load_parameters(truncated), FormatError);

  auto version = bytes;
  version[8] = 9;
  EXPECT_THROW(load_parameters(version), FormatError);

  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(load_parameters(magic), FormatError);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(load_parameters(trailing), FormatError);

  EXPECT_THROW(load_parameters(std::span<const std::uint8_t>()), FormatError);
}

}  // namespace
