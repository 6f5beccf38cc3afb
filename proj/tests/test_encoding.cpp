#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "ldiag/dataio.hpp"
#include "ldiag/encoding.hpp"
#include "test_support.hpp"

using namespace ldiag;
using testing_support::expect_errc;

namespace {

std::vector<Index> all_rows(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

std::vector<ParamColumn> id_learner_columns(int k) {
  std::vector<ParamColumn> cols{{"irt.theta", false}};
  for (int i = 0; i < k; ++i) cols.push_back({"dina.alpha.k" + std::to_string(i + 1), true});
  return cols;
}

std::vector<ParamColumn> id_exercise_columns() {
  return {{"irt.difficulty", false}, {"irt.discrimination", false}, {"dina.guess", false}, {"dina.slip", false}};
}

// theta ~ N(0,1) and K mastery bits that loosely follow theta.
Eigen::MatrixXd learner_rows(Index n, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  Eigen::MatrixXd m(n, k + 1);
  for (Index i = 0; i < n; ++i) {
    m(i, 0) = z(rng);
    for (int j = 0; j < k; ++j) m(i, j + 1) = u(rng) < logistic(1.5 * m(i, 0) - 0.3 * j) ? 1.0 : 0.0;
  }
  return m;
}

}  // namespace

TEST(EncodingPlan, EqualWidthEdges) {
  Eigen::MatrixXd v(3, 1);
  v << 0.0, 0.4, 1.0;
  const auto rows = all_rows(3);
  auto plan = build_encoding_plan(v, {{"x", false}}, 10, rows);
  ASSERT_EQ(plan.columns[0].edges.size(), 9u);
  for (int b = 0; b < 9; ++b) EXPECT_NEAR(plan.columns[0].edges[static_cast<std::size_t>(b)], 0.1 * (b + 1), 1e-15);
  EXPECT_EQ(plan.width(), 10);
}

TEST(EncodingPlan, LdmIdWidths) {
  const auto sc = learner_rows(50, 11, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  Eigen::MatrixXd ec(15, 4);
  for (auto& x : ec.reshaped()) x = z(rng);
  auto lp = build_encoding_plan(sc, id_learner_columns(11), 10, all_rows(50));
  auto ep = build_encoding_plan(ec, id_exercise_columns(), 10, all_rows(15));
  EXPECT_EQ(lp.width(), 21);
  EXPECT_EQ(ep.width(), 40);
}

TEST(EncodingPlan, ClippingPassThroughAndDeterminism) {
  Eigen::MatrixXd v(2, 4);
  v << 0.0, 1, 0, 1,  //
      1.0, 0, 0, 1;
  std::vector<ParamColumn> cols{{"x", false}, {"a1", true}, {"a2", true}, {"a3", true}};
  auto plan = build_encoding_plan(v, cols, 10, all_rows(2));
  Eigen::Vector4d below(-5.0, 1, 0, 1), above(7.0, 1, 0, 1);
  auto e = plan.encode(below);
  EXPECT_EQ(e(0), 1.0);
  EXPECT_EQ(e.head(10).sum(), 1.0);
  EXPECT_EQ(e.tail(3), Eigen::Vector3d(1, 0, 1));
  EXPECT_EQ(plan.encode(above)(9), 1.0);
  EXPECT_EQ(plan.encode(below), e);
  expect_errc(Errc::kArityMismatch, [&] { (void)plan.encode(Eigen::Vector3d::Zero()); });
}

TEST(EncodingPlan, HotBitCountProperty) {
  const auto sc = learner_rows(300, 6, 3);
  auto plan = build_encoding_plan(sc, id_learner_columns(6), 10, all_rows(200));
  auto encoded = plan.encode_rows(sc);
  for (Index i = 0; i < sc.rows(); ++i) {
    const double hot_continuous = encoded.row(i).head(10).sum();
    EXPECT_EQ(hot_continuous, 1.0);
    EXPECT_EQ(encoded.row(i).sum(), 1.0 + sc.row(i).tail(6).sum());
  }
}

TEST(EncodingPlan, ConstantColumnFlagged) {
  Eigen::MatrixXd v(3, 2);
  v << 2.0, 0.1, 2.0, 0.5, 2.0, 0.9;
  auto plan = build_encoding_plan(v, {{"c", false}, {"x", false}}, 10, all_rows(3));
  EXPECT_EQ(plan.constant_columns(), std::vector<std::string>{"c"});
  EXPECT_EQ(plan.columns[0].width(), 1);
  EXPECT_EQ(plan.width(), 11);
  EXPECT_EQ(plan.encode(Eigen::Vector2d(5.0, 0.5))(0), 1.0);
}

TEST(EncodingPlan, TestRowsDoNotMoveEdges) {
  auto sc = learner_rows(100, 3, 4);
  const auto train = all_rows(80);
  auto before = build_encoding_plan(sc.topRows(80), id_learner_columns(3), 10, train);
  sc.bottomRows(20).col(0).setConstant(50.0);
  auto after = build_encoding_plan(sc, id_learner_columns(3), 10, train);
  EXPECT_EQ(before, after);
}

TEST(EncodingPlan, Errors) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Ones(2, 1);
  const auto rows = all_rows(2);
  expect_errc(Errc::kInvalidArgument, [&] { (void)build_encoding_plan(v, {{"x", false}}, 1, rows); });
  expect_errc(Errc::kEmptyInput, [&] { (void)build_encoding_plan(v, {{"x", false}}, 10, {}); });
  expect_errc(Errc::kArityMismatch, [&] { (void)build_encoding_plan(v, {}, 10, rows); });
}

TEST(EncodingPlan, JsonRoundTrip) {
  const auto sc = learner_rows(40, 3, 5);
  EncodingPlans plans{build_encoding_plan(sc, id_learner_columns(3), 10, all_rows(40)),
                      build_encoding_plan(sc.leftCols(1), {{"flat", false}}, 4, all_rows(1))};
  const auto text = encoding_plans_json(plans);
  auto back = parse_encoding_plans_json(text);
  EXPECT_EQ(back.learner, plans.learner);
  EXPECT_EQ(back.exercise, plans.exercise);
  EXPECT_TRUE(back.exercise.columns[0].constant);
  expect_errc(Errc::kMalformedRow, [] { (void)parse_encoding_plans_json("{\"learner\": 3}"); });
}

TEST(Sae, EncodeBasics) {
  SaeModel m(5, 3, {}, 1);
  EXPECT_EQ(m.input_dim(), 5);
  EXPECT_EQ(m.latent_dim(), 3);
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(5, -30, 30);
  auto h = m.encode(x);
  EXPECT_EQ(h, m.encode(x));
  EXPECT_TRUE((h.array().abs() < 1.0).all());
  expect_errc(Errc::kArityMismatch, [&] { (void)m.encode(Eigen::VectorXd::Zero(4)); });
  m.encoder()[0].w.mutable_value().setZero();
  EXPECT_EQ(m.encode(x), Eigen::VectorXd::Zero(3));
  EXPECT_EQ(nd::tape_size(), 0u);
}

TEST(Sae, OvercompleteIdentityFeasible) {
  nd::RowMatrixXd data = nd::RowMatrixXd::Zero(200, 8);
  for (Index i = 0; i < 200; ++i) data(i, i % 8) = 1.0;
  auto fit = train_sae(data, 16, {.epochs = 300, .batch = 32, .learning_rate = 0.01, .seed = 3});
  EXPECT_LT(fit.final_mse, 0.01);
  EXPECT_LT(fit.final_mse, fit.baseline_mse);
}

TEST(Sae, ZeroEpochsReturnsInitialModel) {
  nd::RowMatrixXd data = nd::RowMatrixXd::Zero(10, 4);
  data.col(0).setOnes();
  auto fit = train_sae(data, 3, {.epochs = 0, .seed = 9});
  EXPECT_TRUE(fit.epoch_loss.empty());
  SaeModel init(4, 3, {}, derive_seed(9, 0));
  EXPECT_EQ(fit.model.encode(data.row(0).transpose()), init.encode(data.row(0).transpose()));
  expect_errc(Errc::kEmptyInput, [] { (void)train_sae(nd::RowMatrixXd(0, 3), 2, {}); });
}

TEST(Sae, LearnerAutoencoderBeatsMeanBaseline) {
  const auto sc = learner_rows(4209, 11, 6);
  auto plan = build_encoding_plan(sc, id_learner_columns(11), 10, all_rows(4209));
  const auto x = plan.encode_rows(sc);
  auto fit = train_sae(x, 128, {.epochs = 15, .seed = 4});
  EXPECT_LT(fit.final_mse, fit.baseline_mse);
  // 5-epoch moving average of the loss never rises.
  std::vector<double> smooth;
  for (std::size_t e = 4; e < fit.epoch_loss.size(); ++e) {
    smooth.push_back((fit.epoch_loss[e] + fit.epoch_loss[e - 1] + fit.epoch_loss[e - 2] + fit.epoch_loss[e - 3] +
                      fit.epoch_loss[e - 4]) / 5.0);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) EXPECT_LE(smooth[i], smooth[i - 1]) << i;
}

TEST(Sae, DeterministicAndCheckpointRoundTrip) {
  const auto sc = learner_rows(300, 4, 7);
  auto plan = build_encoding_plan(sc, id_learner_columns(4), 10, all_rows(300));
  const auto x = plan.encode_rows(sc);
  SaeConfig cfg{.epochs = 5, .hidden = {12}, .seed = 11};
  auto a = train_sae(x, 6, cfg);
  auto b = train_sae(x, 6, cfg);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  EXPECT_EQ(a.model.depth(), 2u);
  auto loaded = SaeModel::from_param_map(nd::load_checkpoint(nd::save_checkpoint(a.model.param_map())));
  EXPECT_EQ(loaded.encode_rows(x), a.model.encode_rows(x));
  EXPECT_EQ(loaded.reconstruct_rows(x), a.model.reconstruct_rows(x));
}
