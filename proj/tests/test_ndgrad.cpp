#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "ldiag/ndgrad.hpp"
#include "test_support.hpp"

namespace nd = ldiag::nd;
using ldiag::Errc;
using nd::Tensor;
using testing_support::expect_errc;

namespace {

Eigen::VectorXd randn(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> z(0.0, scale);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = z(rng);
  return v;
}

Tensor rand_param(std::mt19937_64& rng, nd::Shape shape, double scale = 1.0) {
  const auto n = nd::numel(shape);
  return Tensor::param(std::move(shape), randn(rng, n, scale));
}

// Weighted sum with fixed random weights, so every output coordinate matters.
Tensor probe(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor w(y.shape(), randn(rng, y.size()));
  return nd::sum(nd::mul(y, w));
}

constexpr double kGradTol = 1e-5;
constexpr int kTrials = 20;

}  // namespace

TEST(NdgradTensor, ShapeValidation) {
  expect_errc(Errc::kShapeMismatch, [] { Tensor({2, 3}, Eigen::VectorXd::Zero(5)); });
  Tensor t({2, 3}, Eigen::VectorXd::LinSpaced(6, 0, 5));
  EXPECT_EQ(t.size(), 6);
  EXPECT_EQ(t.matrix(2, 3)(1, 0), 3.0);
  expect_errc(Errc::kShapeMismatch, [&] { (void)t.item(); });
  EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
}

TEST(NdgradTape, RecordsOnlyWhenNeeded) {
  nd::clear_tape();
  Tensor a({3}, Eigen::VectorXd::Ones(3));
  (void)nd::relu(a);
  EXPECT_EQ(nd::tape_size(), 0u);
  Tensor p = Tensor::param({3}, Eigen::VectorXd::Ones(3));
  {
    nd::NoGradGuard guard;
    (void)nd::relu(p);
    EXPECT_EQ(nd::tape_size(), 0u);
  }
  auto y = nd::sum(nd::relu(p));
  EXPECT_EQ(nd::tape_size(), 2u);
  nd::backward(y);
  EXPECT_EQ(nd::tape_size(), 0u);
  EXPECT_TRUE(p.grad().isApproxToConstant(1.0));
}

TEST(NdgradTape, Errors) {
  nd::clear_tape();
  Tensor p = Tensor::param({3}, Eigen::VectorXd::Ones(3));
  expect_errc(Errc::kNonScalarLoss, [&] { nd::backward(nd::relu(p)); });
  nd::clear_tape();
  expect_errc(Errc::kEmptyTape, [] { nd::backward(Tensor::scalar(1.0)); });
  Tensor q = Tensor::param({2}, Eigen::VectorXd::Ones(2));
  nd::Adam opt({p, q});
  nd::backward(nd::sum(p));
  expect_errc(Errc::kMissingGrad, [&] { opt.step(); });
}

TEST(NdgradTape, GradsAccumulateAcrossUses) {
  Tensor p = Tensor::param({2}, Eigen::Vector2d(1.0, -2.0));
  nd::backward(nd::sum(nd::add(nd::mul(p, p), p)));
  EXPECT_NEAR(p.grad()(0), 3.0, 1e-15);
  EXPECT_NEAR(p.grad()(1), -3.0, 1e-15);
}

TEST(NdgradOps, SoftmaxProperties) {
  Tensor zero({2, 4}, Eigen::VectorXd::Zero(8));
  EXPECT_TRUE(nd::softmax(zero).value().isApproxToConstant(0.25, 1e-15));
  std::mt19937_64 rng(3);
  Eigen::VectorXd v = randn(rng, 12);
  auto a = nd::softmax(Tensor({3, 4}, v)).value();
  auto b = nd::softmax(Tensor({3, 4}, (v.array() + 1000.0).matrix())).value();
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
  auto rows = Eigen::Map<const nd::RowMatrixXd>(a.data(), 3, 4).rowwise().sum();
  EXPECT_TRUE(rows.isApproxToConstant(1.0, 1e-14));
}

TEST(NdgradOps, MaxpoolExample) {
  Tensor x({4}, Eigen::Vector4d(1, 3, 2, 5));
  auto y = nd::maxpool1d(x, 2);
  ASSERT_EQ(y.shape(), nd::Shape{2});
  EXPECT_EQ(y.value()(0), 3.0);
  EXPECT_EQ(y.value()(1), 5.0);
  Tensor odd({5}, Eigen::VectorXd::LinSpaced(5, 0, 4));
  EXPECT_EQ(nd::maxpool1d(odd, 2).size(), 2);
}

TEST(NdgradOps, ConvPreservesLength) {
  std::mt19937_64 rng(5);
  for (nd::Index k : {1, 3, 5}) {
    auto x = rand_param(rng, {2, 9, 3});
    auto w = rand_param(rng, {4, k, 3});
    auto b = rand_param(rng, {4});
    EXPECT_EQ(nd::conv1d(x, w, b).shape(), (nd::Shape{2, 9, 4}));
  }
  nd::clear_tape();
}

TEST(NdgradOps, ConvMatchesDirectSum) {
  std::mt19937_64 rng(6);
  Tensor x({7, 2}, randn(rng, 14));
  Tensor w({3, 3, 2}, randn(rng, 18));
  Tensor b({3}, randn(rng, 3));
  auto y = nd::conv1d(x, w, b);
  for (int t = 0; t < 7; ++t)
    for (int o = 0; o < 3; ++o) {
      double acc = b.value()(o);
      for (int kk = 0; kk < 3; ++kk) {
        const int pos = t + kk - 1;
        if (pos < 0 || pos >= 7) continue;
        for (int c = 0; c < 2; ++c) acc += w.value()((o * 3 + kk) * 2 + c) * x.value()(pos * 2 + c);
      }
      EXPECT_NEAR(y.value()(t * 3 + o), acc, 1e-12);
    }
}

TEST(NdgradOps, DenseAndMatmulValues) {
  Tensor x({2, 3}, (Eigen::VectorXd(6) << 1, 2, 3, 4, 5, 6).finished());
  Tensor w({2, 3}, (Eigen::VectorXd(6) << 1, 0, -1, 0.5, 0.5, 0.5).finished());
  Tensor b({2}, Eigen::Vector2d(10, 20));
  auto y = nd::dense(x, w, b);
  EXPECT_EQ(y.value(), Eigen::Vector4d(8, 23, 8, 27.5));
  Tensor a({1, 2, 2}, Eigen::Vector4d(1, 2, 3, 4));
  Tensor c({1, 2, 2}, Eigen::Vector4d(5, 6, 7, 8));
  EXPECT_EQ(nd::batched_matmul(a, c).value(), Eigen::Vector4d(19, 22, 43, 50));
  EXPECT_EQ(nd::batched_matmul(a, c, true).value(), Eigen::Vector4d(17, 23, 39, 53));
}

TEST(NdgradOps, ShapeErrors) {
  Tensor x({2, 3}, Eigen::VectorXd::Zero(6));
  Tensor w({2, 4}, Eigen::VectorXd::Zero(8));
  Tensor b({2}, Eigen::VectorXd::Zero(2));
  expect_errc(Errc::kShapeMismatch, [&] { (void)nd::dense(x, w, b); });
  expect_errc(Errc::kShapeMismatch, [&] { (void)nd::add(x, b); });
  expect_errc(Errc::kShapeMismatch, [&] { (void)nd::reshape(x, {5}); });
  expect_errc(Errc::kShapeMismatch, [&] { (void)nd::concat({x, b}); });
  expect_errc(Errc::kShapeMismatch, [&] { (void)nd::bce_loss(x, Eigen::VectorXd::Zero(5)); });
  expect_errc(Errc::kInvalidArgument, [&] { (void)nd::dropout(x, 1.0, true, 1); });
}

TEST(NdgradGrad, DenseRandomized) {
  std::mt19937_64 rng(101);
  for (int t = 0; t < kTrials; ++t) {
    auto x = rand_param(rng, {3, 4});
    auto w = rand_param(rng, {2, 4});
    auto b = rand_param(rng, {2});
    EXPECT_LT(nd::grad_check([&] { return probe(nd::dense(x, w, b), t); }, {x, w, b}), kGradTol);
  }
}

TEST(NdgradGrad, ConvRandomized) {
  std::mt19937_64 rng(102);
  for (int t = 0; t < kTrials; ++t) {
    const nd::Index k = 1 + 2 * (t % 3);
    const nd::Index stride = 1 + t % 2;
    auto x = rand_param(rng, {2, 6, 3});
    auto w = rand_param(rng, {2, k, 3});
    auto b = rand_param(rng, {2});
    EXPECT_LT(nd::grad_check([&] { return probe(nd::conv1d(x, w, b, stride), t); }, {x, w, b}), kGradTol);
  }
}

TEST(NdgradGrad, ElementwiseAndSoftmaxRandomized) {
  std::mt19937_64 rng(103);
  for (int t = 0; t < kTrials; ++t) {
    auto x = rand_param(rng, {3, 5});
    EXPECT_LT(nd::grad_check([&] { return probe(nd::sigmoid(x), t); }, {x}), kGradTol);
    EXPECT_LT(nd::grad_check([&] { return probe(nd::tanh(x), t); }, {x}), kGradTol);
    EXPECT_LT(nd::grad_check([&] { return probe(nd::softmax(x), t); }, {x}), kGradTol);
    // Values near the relu kink make the finite difference straddle it.
    auto away = Tensor::param({3, 5}, x.value().unaryExpr([](double v) { return v + (v >= 0 ? 0.1 : -0.1); }));
    EXPECT_LT(nd::grad_check([&] { return probe(nd::relu(away), t); }, {away}), kGradTol);
  }
}

TEST(NdgradGrad, StructuralRandomized) {
  std::mt19937_64 rng(104);
  for (int t = 0; t < kTrials; ++t) {
    auto a = rand_param(rng, {2, 3, 4});
    auto b = rand_param(rng, {2, 3, 2});
    auto c = rand_param(rng, {2, 4, 3});
    EXPECT_LT(nd::grad_check([&] { return probe(nd::concat({a, b}), t); }, {a, b}), kGradTol);
    EXPECT_LT(nd::grad_check([&] { return probe(nd::batched_matmul(a, c), t); }, {a, c}), kGradTol);
    auto d = rand_param(rng, {2, 5, 4});
    EXPECT_LT(nd::grad_check([&] { return probe(nd::batched_matmul(a, d, true), t); }, {a, d}), kGradTol);
    EXPECT_LT(nd::grad_check([&] { return probe(nd::reshape(a, {6, 4}), t); }, {a}), kGradTol);
    // Distinct, well-separated values so no window has a near tie.
    Eigen::VectorXd spaced = Eigen::VectorXd::LinSpaced(24, -2.3, 2.3);
    std::shuffle(spaced.begin(), spaced.end(), rng);
    auto e = Tensor::param({2, 3, 4}, spaced);
    EXPECT_LT(nd::grad_check([&] { return probe(nd::maxpool1d(e, 2), t); }, {e}), kGradTol);
    EXPECT_LT(nd::grad_check([&] { return nd::mean(nd::mul(a, a)); }, {a}), kGradTol);
    EXPECT_LT(nd::grad_check([&] { return probe(nd::dropout(a, 0.3, true, 77), t); }, {a}), kGradTol);
  }
}

TEST(NdgradGrad, LossesRandomized) {
  std::mt19937_64 rng(105);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < kTrials; ++t) {
    auto z = rand_param(rng, {8});
    Eigen::VectorXd y(8);
    for (auto& v : y) v = coin(rng) ? 1.0 : 0.0;
    EXPECT_LT(nd::grad_check([&] { return nd::bce_loss(nd::sigmoid(z), y); }, {z}), kGradTol);
    EXPECT_LT(nd::grad_check([&] { return nd::mse_loss(z, y); }, {z}), kGradTol);
  }
}

TEST(NdgradGrad, ThreeLayerNetwork) {
  std::mt19937_64 rng(106);
  auto x = Tensor({4, 6, 1}, randn(rng, 24));
  auto k1 = rand_param(rng, {3, 3, 1}, 0.5), b1 = rand_param(rng, {3}, 0.1);
  auto w2 = rand_param(rng, {5, 9}, 0.5), b2 = rand_param(rng, {5}, 0.1);
  auto w3 = rand_param(rng, {1, 5}, 0.5), b3 = rand_param(rng, {1}, 0.1);
  Eigen::VectorXd y(4);
  y << 1, 0, 0, 1;
  auto net = [&] {
    auto h = nd::maxpool1d(nd::tanh(nd::conv1d(x, k1, b1)), 2);
    auto f = nd::tanh(nd::dense(nd::reshape(h, {4, 9}), w2, b2));
    return nd::bce_loss(nd::sigmoid(nd::dense(f, w3, b3)), y);
  };
  EXPECT_LT(nd::grad_check(net, {k1, b1, w2, b2, w3, b3}), 1e-4);
}

TEST(NdgradOps, DropoutBehaviour) {
  Tensor x({1000}, Eigen::VectorXd::Ones(1000));
  EXPECT_EQ(nd::dropout(x, 0.5, false, 1).value(), x.value());
  EXPECT_EQ(nd::dropout(x, 0.0, true, 1).value(), x.value());
  auto a = nd::dropout(x, 0.25, true, 9).value();
  EXPECT_EQ(a, nd::dropout(x, 0.25, true, 9).value());
  EXPECT_NE(a, nd::dropout(x, 0.25, true, 10).value());
  const auto zeros = (a.array() == 0.0).count();
  EXPECT_NEAR(zeros / 1000.0, 0.25, 0.05);
  EXPECT_TRUE(((a.array() == 0.0) || (a.array() - 1.0 / 0.75).abs() < 1e-15).all());
}

TEST(NdgradOps, BceNonNegativeAndClamped) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd p(5), y(5);
    for (int i = 0; i < 5; ++i) {
      p(i) = u(rng);
      y(i) = u(rng) < 0.5;
    }
    EXPECT_GE(nd::bce_loss(Tensor({5}, p), y).item(), 0.0);
  }
  auto p = Tensor::param({2}, Eigen::Vector2d(0.0, 1.0));
  auto loss = nd::bce_loss(p, Eigen::Vector2d(1.0, 0.0));
  EXPECT_NEAR(loss.item(), -std::log(nd::kProbClamp), 1e-9);
  nd::backward(loss);
  EXPECT_EQ(p.grad(), Eigen::Vector2d::Zero());
}

TEST(NdgradAdam, ZeroGradLeavesParamsAndFirstStepIsLr) {
  auto p = Tensor::param({3}, Eigen::Vector3d(1, 2, 3));
  nd::Adam opt({p});
  nd::backward(nd::mul(nd::sum(p), Tensor::scalar(0.0)));
  opt.step();
  EXPECT_EQ(p.value(), Eigen::Vector3d(1, 2, 3));
  EXPECT_FALSE(p.has_grad());
  // Bias correction makes the first real step exactly lr in magnitude.
  auto q = Tensor::param({3}, Eigen::Vector3d(1, 2, 3));
  nd::Adam fresh({q});
  nd::backward(nd::sum(q));
  fresh.step();
  EXPECT_NEAR(q.value()(0), 1.0 - 0.001, 1e-9);
}

TEST(NdgradAdam, MinimisesQuadratic) {
  auto p = Tensor::param({2}, Eigen::Vector2d(3.0, -4.0));
  nd::Adam opt({p}, {.learning_rate = 0.05});
  Eigen::Vector2d target(1.0, 2.0);
  double first = 0, last = 0;
  for (int s = 0; s < 2000; ++s) {
    auto loss = nd::mse_loss(p, target);
    if (s == 0) first = loss.item();
    last = loss.item();
    nd::backward(loss);
    opt.step();
  }
  EXPECT_LT(last, first * 1e-6);
  EXPECT_LT((p.value() - target).norm(), 1e-3);
  EXPECT_EQ(opt.steps(), 2000);
}

TEST(NdgradCheckpoint, BitExactRoundTrip) {
  std::mt19937_64 rng(8);
  nd::ParamMap params{{"enc.w", rand_param(rng, {3, 4})}, {"enc.b", rand_param(rng, {4})}};
  params["enc.b"].mutable_value()(0) = 0.1 + 0.2;
  params["enc.b"].mutable_value()(1) = std::nextafter(1.0, 2.0);
  params["enc.b"].mutable_value()(2) = 5e-324;
  const auto text = nd::save_checkpoint(params);
  const auto back = nd::load_checkpoint(text);
  ASSERT_EQ(back.size(), 2u);
  for (const auto& [name, t] : params) {
    EXPECT_EQ(back.at(name).shape(), t.shape());
    EXPECT_EQ(std::memcmp(back.at(name).value().data(), t.value().data(), sizeof(double) * t.size()), 0) << name;
  }
  EXPECT_EQ(nd::save_checkpoint(back), text);
  expect_errc(Errc::kMalformedRow, [] { (void)nd::load_checkpoint("{\"version\": 99, \"params\": {}}"); });
  expect_errc(Errc::kMalformedRow, [] { (void)nd::load_checkpoint("not json"); });
}
