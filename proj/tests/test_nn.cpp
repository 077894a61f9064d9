#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "aircomp/nn.hpp"
#include "support.hpp"

using namespace aircomp;
using namespace aircomp::nn;

TEST(Forward, IdentityLayerPassesInputThrough) {
  DenseNet net({{2, 2, Activation::identity}});
  net.weights(0)[0] = 1.0;
  net.weights(0)[3] = 1.0;
  const std::vector<double> in{1.0, 2.0};
  EXPECT_EQ(forward(net, in), (std::vector<double>{1.0, 2.0}));
}

TEST(Forward, ReluClampsNegativePreactivations) {
  DenseNet net({{2, 2, Activation::relu}});
  net.weights(0)[0] = 1.0;
  net.weights(0)[3] = 1.0;
  const std::vector<double> in{-1.0, 3.0};
  EXPECT_EQ(forward(net, in), (std::vector<double>{0.0, 3.0}));
}

TEST(Forward, SoftmaxOfEqualLogitsIsUniform) {
  DenseNet net({{1, 4, Activation::softmax}});
  const std::vector<double> in{0.7};
  for (double p : forward(net, in)) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Forward, RejectsWrongInputWidth) {
  DenseNet net({{3, 2, Activation::relu}});
  const std::vector<double> in{1.0, 2.0};
  EXPECT_THROW(forward(net, in), std::invalid_argument);
}

TEST(DenseNetShape, RejectsBrokenChainAndInnerSoftmax) {
  EXPECT_THROW(DenseNet({{2, 3, Activation::relu}, {4, 1, Activation::identity}}), std::invalid_argument);
  EXPECT_THROW(DenseNet({{2, 3, Activation::softmax}, {3, 1, Activation::identity}}), std::invalid_argument);
}

TEST(Softmax, IsAProbabilityVectorForExtremeLogits) {
  CounterRng rng(7, StreamTag::init);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> z(1 + trial % 40);
    const double scale = std::pow(10.0, trial % 7);  // up to 1e6
    for (double& v : z) v = (2.0 * rng.uniform() - 1.0) * scale;
    const auto p = softmax(z);
    double total = 0.0;
    for (double v : p) {
      ASSERT_GE(v, 0.0);
      total += v;
    }
    ASSERT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(CrossEntropy, KnownValues) {
  EXPECT_DOUBLE_EQ(cross_entropy_loss(std::vector<double>{1.0, 0.0}, 0), 0.0);
  EXPECT_NEAR(cross_entropy_loss(std::vector<double>(25, 1.0 / 25.0), 13), std::log(25.0), 1e-12);
  EXPECT_NEAR(cross_entropy_loss(std::vector<double>{0.5, 0.5}, 1), 0.6931471805599453, 1e-12);
  EXPECT_NEAR(cross_entropy_loss(std::vector<double>{1.0, 0.0}, 1), -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, RejectsLabelOutOfRange) {
  EXPECT_THROW(cross_entropy_loss(std::vector<double>{0.5, 0.5}, 2), std::invalid_argument);
}

TEST(Backward, LinearNeuronGradientIsInput) {
  DenseNet net({{1, 1, Activation::identity}});
  net.weights(0)[0] = 0.5;
  const Tape tape = forward(net, Matrix(1, 1, 3.0));
  const auto back = backward(net, tape, Matrix(1, 1, 1.0));
  EXPECT_DOUBLE_EQ(back.params[0], 3.0);  // dL/dw
  EXPECT_DOUBLE_EQ(back.params[1], 1.0);  // dL/db
  EXPECT_DOUBLE_EQ(back.input(0, 0), 0.5);
}

TEST(Backward, PerfectPredictionGivesZeroOutputGradient) {
  const std::vector<double> probs{0.0, 1.0, 0.0};
  const std::vector<std::size_t> label{1};
  const Matrix g = softmax_cross_entropy_grad(Matrix::from_row(probs), label);
  for (double v : g.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Backward, RejectsTapeFromAnotherNetwork) {
  CounterRng rng(1, StreamTag::init);
  const std::vector<std::size_t> a{3, 4, 2}, b{3, 5, 2};
  DenseNet net_a = DenseNet::make(a, Activation::relu, Activation::identity, rng);
  DenseNet net_b = DenseNet::make(b, Activation::relu, Activation::identity, rng);
  const Tape tape = forward(net_a, Matrix(2, 3, 1.0));
  EXPECT_THROW(backward(net_b, tape, Matrix(2, 2, 1.0)), std::invalid_argument);
  EXPECT_THROW(backward(net_a, tape, Matrix(3, 2, 1.0)), std::invalid_argument);
}

namespace {

// Mean softmax cross-entropy of a classifier on a fixed batch.
double classifier_loss(const DenseNet& net, const Matrix& x, const std::vector<std::size_t>& labels) {
  const Tape t = forward(net, x);
  double loss = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) loss += cross_entropy_loss(t.output().row(r), labels[r]);
  return loss / static_cast<double>(x.rows());
}

// Sum of squares of the network output (for non-softmax heads).
double regression_loss(const DenseNet& net, const Matrix& x) {
  const Tape t = forward(net, x);
  double loss = 0.0;
  for (double v : t.output().data()) loss += 0.5 * v * v;
  return loss;
}

}  // namespace

TEST(GradientCheck, SoftmaxClassifierMatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CounterRng rng(seed, StreamTag::init, 99);
    const std::vector<std::size_t> dims{4, 7, 5};
    DenseNet net = DenseNet::make(dims, Activation::relu, Activation::softmax, rng);
    for (double& b : net.parameters()) b += 0.05 * (rng.uniform() - 0.5);
    Matrix x(6, 4);
    for (double& v : x.data()) v = 2.0 * rng.uniform() - 1.0;
    std::vector<std::size_t> labels{0, 1, 2, 3, 4, 2};
    const Tape t = forward(net, x);
    const auto analytic = backward(net, t, softmax_cross_entropy_grad(t.output(), labels)).params;
    const auto numeric =
        testkit::numeric_gradient(net.parameters(), [&] { return classifier_loss(net, x, labels); });
    EXPECT_LT(testkit::max_relative_error(analytic, numeric), 1e-3) << "seed " << seed;
  }
}

TEST(GradientCheck, IdentityHeadAndInputGradient) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CounterRng rng(seed, StreamTag::init, 98);
    const std::vector<std::size_t> dims{3, 6, 6, 2};
    DenseNet net = DenseNet::make(dims, Activation::relu, Activation::identity, rng);
    Matrix x(4, 3);
    for (double& v : x.data()) v = 2.0 * rng.uniform() - 1.0;
    const Tape t = forward(net, x);
    const auto back = backward(net, t, t.output());  // d(0.5 |y|^2)/dy = y
    const auto numeric = testkit::numeric_gradient(net.parameters(), [&] { return regression_loss(net, x); });
    EXPECT_LT(testkit::max_relative_error(back.params, numeric), 1e-3) << "seed " << seed;
    const auto numeric_x = testkit::numeric_gradient(x.data(), [&] { return regression_loss(net, x); });
    EXPECT_LT(testkit::max_relative_error(back.input.data(), numeric_x), 1e-3) << "seed " << seed;
  }
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  std::vector<double> p{1.0, -2.0};
  AdamState s(2);
  s.first_moment = {0.5, 0.5};
  s.second_moment = {0.25, 0.25};
  s.step = 10;
  const std::vector<double> zero{0.0, 0.0};
  adam_step(p, zero, s);
  EXPECT_NE(p, (std::vector<double>{1.0, -2.0}));  // stale momentum still moves
  std::vector<double> q{1.0, -2.0};
  AdamState fresh(2);
  adam_step(q, zero, fresh);
  EXPECT_EQ(q, (std::vector<double>{1.0, -2.0}));
  EXPECT_DOUBLE_EQ(s.first_moment[0], 0.45);
  EXPECT_DOUBLE_EQ(s.second_moment[0], 0.25 * 0.999);
  EXPECT_EQ(fresh.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  // t = 1: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
  std::vector<double> p{0.0, 0.0, 0.0};
  const std::vector<double> g{0.3, -5.0, 1e-3};
  AdamState s(3, 0.001);
  adam_step(p, g, s);
  for (std::size_t i = 0; i < 3; ++i) {
    const double expected = -0.001 * g[i] / (std::abs(g[i]) + 1e-8);
    EXPECT_NEAR(p[i], expected, 1e-15);
  }
}

TEST(Adam, DeterministicAndRejectsNonFinite) {
  std::vector<double> a{1.0, 2.0}, b{1.0, 2.0};
  AdamState sa(2), sb(2);
  const std::vector<double> g{0.1, -0.2};
  for (int i = 0; i < 5; ++i) {
    adam_step(a, g, sa);
    adam_step(b, g, sb);
  }
  EXPECT_EQ(a, b);
  const std::vector<double> bad{0.1, std::nan("")};
  EXPECT_THROW(adam_step(a, bad, sa), std::invalid_argument);
  const std::vector<double> short_g{0.1};
  EXPECT_THROW(adam_step(a, short_g, sa), std::invalid_argument);
}

TEST(Sgd, Examples) {
  std::vector<double> p{1.0, 1.0};
  sgd_step(p, std::vector<double>{1.0, -1.0}, 0.5);
  EXPECT_EQ(p, (std::vector<double>{0.5, 1.5}));
  sgd_step(p, std::vector<double>{3.0, 4.0}, 0.0);
  EXPECT_EQ(p, (std::vector<double>{0.5, 1.5}));
  sgd_step(p, std::vector<double>{0.0, 0.0}, 0.7);
  EXPECT_EQ(p, (std::vector<double>{0.5, 1.5}));
  EXPECT_THROW(sgd_step(p, std::vector<double>{1.0}, 0.1), std::invalid_argument);
}

TEST(Init, SameSeedSameNetwork) {
  const std::vector<std::size_t> dims{4, 16, 2};
  CounterRng r1(3, StreamTag::init), r2(3, StreamTag::init), r3(4, StreamTag::init);
  const DenseNet a = DenseNet::make(dims, Activation::relu, Activation::identity, r1);
  const DenseNet b = DenseNet::make(dims, Activation::relu, Activation::identity, r2);
  const DenseNet c = DenseNet::make(dims, Activation::relu, Activation::identity, r3);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  const double limit = std::sqrt(6.0 / 4.0);
  for (double w : a.weights(0)) EXPECT_LE(std::abs(w), limit);
  for (double v : a.bias(0)) EXPECT_EQ(v, 0.0);
}

TEST(Checkpoint, TextRoundTripIsExact) {
  CounterRng rng(11, StreamTag::init);
  const std::vector<std::size_t> dims{2, 64, 64, 25};
  const DenseNet net = DenseNet::make(dims, Activation::relu, Activation::softmax, rng);
  std::stringstream ss;
  write_net(ss, net);
  EXPECT_EQ(read_net(ss), net);
}

TEST(Checkpoint, RejectsTruncatedInput) {
  std::stringstream ss("densenet 1\nlayer 2 1 identity\n0.5\n");
  EXPECT_THROW(read_net(ss), std::runtime_error);
}
