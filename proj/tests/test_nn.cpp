#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <string>

#include "oracles.hpp"
#include "swarmnav/nn.hpp"

using namespace swarmnav;

namespace {

// 0.5 |probs - Y|^2 + 0.5 |values - t|^2 summed over the batch.
struct SquaredError {
  Matrix x;
  Matrix y;
  RowVector t;

  double operator()(const PolicyParams& p) const {
    const ForwardTrace f = forward(p, x);
    return 0.5 * (f.probs - y).squaredNorm() + 0.5 * (f.values - t).squaredNorm();
  }

  Gradients grad(const PolicyParams& p) const {
    const ForwardTrace f = forward(p, x);
    return backward(p, f, softmax_backward(f.probs, f.probs - y), f.values - t);
  }
};

SquaredError random_problem(Rng& rng, const NetShape& s, int batch) {
  return {oracle::random_matrix(rng, s.input, batch), oracle::random_matrix(rng, s.actions, batch, 0.0, 1.0),
          oracle::random_matrix(rng, 1, batch, -2.0, 2.0)};
}

}  // namespace

TEST(Params, CountMatchesShapeArithmetic) {
  const PolicyParams p = zero_params(NetShape{90, 4, 256, 6});
  const std::size_t expected = 90 * 256 + 256 + 3 * (256 * 256 + 256) + (256 * 6 + 6) + (256 * 1 + 1);
  EXPECT_EQ(p.parameter_count(), expected);
  EXPECT_EQ(p.layers.size(), 6u);
}

TEST(Params, SeedDeterminism) {
  const PolicyParams a = init_params(NetShape{10, 2, 8, 6}, 0);
  const PolicyParams b = init_params(NetShape{10, 2, 8, 6}, 0);
  const PolicyParams c = init_params(NetShape{10, 2, 8, 6}, 1);
  bool differs = false;
  for (std::size_t i = 0; i < a.parameter_count(); ++i) {
    EXPECT_EQ(a.at(i), b.at(i));
    differs |= a.at(i) != c.at(i);
  }
  EXPECT_TRUE(differs);
}

TEST(Params, InitBounds) {
  const PolicyParams p = init_params(NetShape{16, 2, 9, 6}, 3);
  for (const Layer& l : p.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weights.cols()));
    EXPECT_LE(l.weights.cwiseAbs().maxCoeff(), bound);
    EXPECT_TRUE(l.bias.isZero());
  }
}

TEST(Params, UnsupportedWidthIsAConfigError) {
  EXPECT_THROW(zero_params(NetShape{90, 0, 256, 6}), ConfigError);
  EXPECT_THROW(zero_params(NetShape{90, 4, 0, 6}), ConfigError);
  EXPECT_THROW(zero_params(NetShape{0, 4, 256, 6}), ConfigError);
}

TEST(Params, LayerNames) {
  const PolicyParams p = zero_params(NetShape{4, 2, 3, 6});
  EXPECT_EQ(p.layer_name(1), "hidden layer 1");
  EXPECT_EQ(p.layer_name(2), "policy head");
  EXPECT_EQ(p.layer_name(3), "value head");
}

TEST(Forward, ZeroParamsGiveUniformPolicy) {
  Rng rng(1);
  const PolicyParams p = zero_params(NetShape{90, 4, 32, 6});
  const ForwardTrace f = forward(p, oracle::random_matrix(rng, 90, 5));
  for (Eigen::Index c = 0; c < 5; ++c) {
    for (Eigen::Index a = 0; a < 6; ++a) EXPECT_DOUBLE_EQ(f.probs(a, c), 1.0 / 6.0);
    EXPECT_EQ(f.values(c), 0.0);
  }
}

TEST(Forward, ProbabilitiesSumToOne) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    PolicyParams p = init_params(NetShape{12, 3, 10, 6}, trial);
    for (std::size_t i = 0; i < p.parameter_count(); ++i) p.at(i) *= 10.0;  // sharp softmax
    const ForwardTrace f = forward(p, oracle::random_matrix(rng, 12, 7, -5, 5));
    for (Eigen::Index c = 0; c < 7; ++c) {
      EXPECT_NEAR(f.probs.col(c).sum(), 1.0, 1e-12);
      EXPECT_GE(f.probs.col(c).minCoeff(), 0.0);
    }
  }
}

TEST(Forward, MatchesNaiveImplementation) {
  Rng rng(3);
  const PolicyParams p = init_params(NetShape{20, 3, 15, 6}, 9);
  const Matrix x = oracle::random_matrix(rng, 20, 6);
  const ForwardTrace f = forward(p, x);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::vector<double> col(x.col(c).data(), x.col(c).data() + x.rows());
    const auto [probs, value] = oracle::naive_forward(p, col);
    for (int a = 0; a < 6; ++a) EXPECT_NEAR(f.probs(a, c), probs[a], 1e-12);
    EXPECT_NEAR(f.values(c), value, 1e-12);
  }
}

TEST(Forward, PureFunction) {
  Rng rng(4);
  const PolicyParams p = init_params(NetShape{20, 2, 15, 6}, 9);
  const Matrix x = oracle::random_matrix(rng, 20, 6);
  const ForwardTrace a = forward(p, x), b = forward(p, x);
  EXPECT_EQ(std::memcmp(a.probs.data(), b.probs.data(), sizeof(double) * a.probs.size()), 0);
  EXPECT_EQ(std::memcmp(a.values.data(), b.values.data(), sizeof(double) * a.values.size()), 0);
}

TEST(Forward, InputErrors) {
  const PolicyParams p = init_params(NetShape{4, 1, 3, 6}, 1);
  EXPECT_THROW(forward(p, Matrix::Zero(5, 1)), ProtocolError);
  Matrix bad = Matrix::Zero(4, 2);
  bad(2, 1) = NAN;
  EXPECT_THROW(forward(p, bad), NumericError);
}

TEST(Softmax, ShiftInvariance) {
  Rng rng(5);
  const Matrix z = oracle::random_matrix(rng, 6, 10, -20, 20);
  Matrix shifted = z;
  for (Eigen::Index c = 0; c < z.cols(); ++c) shifted.col(c).array() += rng.uniform(-100, 100);
  EXPECT_LE((softmax_columns(z) - softmax_columns(shifted)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Softmax, LargeLogitsStayFinite) {
  Matrix z(3, 1);
  z << 1000.0, -1000.0, 999.0;
  const Matrix p = softmax_columns(z);
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
}

TEST(Backward, ZeroUpstreamGradient) {
  Rng rng(6);
  const PolicyParams p = init_params(NetShape{8, 2, 5, 6}, 2);
  const ForwardTrace f = forward(p, oracle::random_matrix(rng, 8, 4));
  const Gradients g = backward(p, f, Matrix::Zero(6, 4), RowVector::Zero(4));
  for (std::size_t i = 0; i < g.parameter_count(); ++i) EXPECT_EQ(g.at(i), 0.0);
}

TEST(Backward, ValueHeadMatchesLeastSquaresClosedForm) {
  Rng rng(7);
  const PolicyParams p = init_params(NetShape{6, 1, 4, 6}, 5);
  const Matrix x = oracle::random_matrix(rng, 6, 9);
  const RowVector t = oracle::random_matrix(rng, 1, 9);
  // Features of the linear value regression: the rectified hidden layer.
  Matrix h = p.layers[0].weights * x;
  h.colwise() += p.layers[0].bias;
  h = h.cwiseMax(0.0);
  const RowVector residual = p.value_head().weights * h + RowVector::Constant(9, p.value_head().bias(0)) - t;
  const Matrix want_w = residual * h.transpose();
  const double want_b = residual.sum();

  const ForwardTrace f = forward(p, x);
  const Gradients g = backward(p, f, Matrix::Zero(6, 9), f.values - t);
  EXPECT_LE((g.layers[2].weights - want_w).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(g.layers[2].bias(0), want_b, 1e-12);
  EXPECT_TRUE(g.layers[1].weights.isZero());
}

TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const NetShape s{5, 1 + trial % 3, 4 + trial % 4, 6};
    PolicyParams p = zero_params(s);
    for (std::size_t i = 0; i < p.parameter_count(); ++i) p.at(i) = rng.uniform(-1, 1);
    const SquaredError loss = random_problem(rng, s, 3);
    const Gradients g = loss.grad(p);
    EXPECT_LT(oracle::gradient_check(p, g, loss), 1e-4) << "trial " << trial;
  }
}

TEST(Backward, StaleTraceIsAProtocolError) {
  Rng rng(9);
  PolicyParams p = init_params(NetShape{4, 1, 3, 6}, 1);
  const ForwardTrace f = forward(p, oracle::random_matrix(rng, 4, 2));
  EXPECT_NO_THROW(backward(p, f, Matrix::Zero(6, 2), RowVector::Zero(2)));
  AdamState adam = AdamState::for_params(p);
  adam_step(p, backward(p, f, Matrix::Ones(6, 2), RowVector::Ones(2)), adam, 1e-3);
  EXPECT_THROW(backward(p, f, Matrix::Zero(6, 2), RowVector::Zero(2)), ProtocolError);
}

TEST(Backward, ShapeMismatchIsAProtocolError) {
  Rng rng(10);
  const PolicyParams p = init_params(NetShape{4, 1, 3, 6}, 1);
  const ForwardTrace f = forward(p, oracle::random_matrix(rng, 4, 2));
  EXPECT_THROW(backward(p, f, Matrix::Zero(5, 2), RowVector::Zero(2)), ProtocolError);
  EXPECT_THROW(backward(p, f, Matrix::Zero(6, 2), RowVector::Zero(3)), ProtocolError);
}

TEST(Adam, SingleStepFromZeroMoments) {
  PolicyParams p = init_params(NetShape{3, 1, 2, 6}, 4);
  const PolicyParams before = p;
  Gradients g = zero_params(p.shape);
  Rng rng(11);
  for (std::size_t i = 0; i < g.parameter_count(); ++i) g.at(i) = rng.uniform(-3, 3);
  AdamState s = AdamState::for_params(p);
  const double lr = 0.01;
  adam_step(p, g, s, lr);
  for (std::size_t i = 0; i < p.parameter_count(); ++i) {
    const double want = -lr * g.at(i) / (std::abs(g.at(i)) + 1e-8);
    EXPECT_NEAR(p.at(i) - before.at(i), want, 1e-15) << i;
  }
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  PolicyParams p = zero_params(NetShape{3, 1, 2, 6});
  Gradients g = zero_params(p.shape);
  for (std::size_t i = 0; i < g.parameter_count(); ++i) g.at(i) = (i % 2 ? 1.0 : -1.0) * (0.1 + 0.01 * i);
  AdamState s = AdamState::for_params(p);
  const double lr = 1e-3;
  PolicyParams prev = p;
  for (int k = 0; k < 500; ++k) {
    prev = p;
    adam_step(p, g, s, lr);
  }
  for (std::size_t i = 0; i < p.parameter_count(); ++i) {
    const double delta = p.at(i) - prev.at(i);
    EXPECT_NEAR(std::abs(delta), lr, 1e-9);
    EXPECT_LT(delta * g.at(i), 0.0);
  }
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  PolicyParams p = init_params(NetShape{3, 1, 2, 6}, 4);
  const PolicyParams before = p;
  AdamState s = AdamState::for_params(p);
  adam_step(p, zero_params(p.shape), s, 0.1);
  for (std::size_t i = 0; i < p.parameter_count(); ++i) EXPECT_EQ(p.at(i), before.at(i));

  Gradients g = zero_params(p.shape);
  for (std::size_t i = 0; i < g.parameter_count(); ++i) g.at(i) = 0.5;
  adam_step(p, g, s, 0.1);
  const Matrix m1 = s.first[0].weights;
  const Matrix v1 = s.second[0].weights;
  adam_step(p, zero_params(p.shape), s, 0.1);
  EXPECT_LE((s.first[0].weights - 0.9 * m1).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((s.second[0].weights - 0.999 * v1).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Adam, NonFiniteGradientNamesTheLayer) {
  PolicyParams p = init_params(NetShape{3, 2, 2, 6}, 4);
  Gradients g = zero_params(p.shape);
  g.layers[1].weights(0, 0) = NAN;
  AdamState s = AdamState::for_params(p);
  try {
    adam_step(p, g, s, 0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("hidden layer 1"), std::string::npos) << e.what();
  }
  g.layers[1].weights(0, 0) = 0.0;
  g.layers[3].bias(0) = INFINITY;
  try {
    adam_step(p, g, s, 0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("value head"), std::string::npos) << e.what();
  }
  EXPECT_EQ(s.step, 0);
  EXPECT_TRUE(p.all_finite());
}

TEST(Adam, AccumulatorsMatchParameterShapes) {
  const PolicyParams p = init_params(NetShape{7, 3, 5, 6}, 4);
  const AdamState s = AdamState::for_params(p);
  ASSERT_EQ(s.first.size(), p.layers.size());
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    EXPECT_EQ(s.first[i].weights.rows(), p.layers[i].weights.rows());
    EXPECT_EQ(s.second[i].weights.cols(), p.layers[i].weights.cols());
    EXPECT_EQ(s.first[i].bias.size(), p.layers[i].bias.size());
  }
}
