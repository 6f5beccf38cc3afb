#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ldiag/interpret.hpp"
#include "test_support.hpp"

using namespace ldiag;
using testing_support::expect_errc;

namespace {

std::vector<std::string> numbered(const std::string& prefix, Index n) {
  std::vector<std::string> out;
  for (Index i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// Channel fits with arbitrary values, enough to assemble parameter sets.
FittedChannels fake_channels(Index n, Index m, Index k, Index dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::bernoulli_distribution coin(0.5);
  auto v = [&](Index len) { return Eigen::VectorXd::NullaryExpr(len, [&] { return z(rng); }).eval(); };
  auto bits = [&](Index rows) { return BinaryGrid::NullaryExpr(rows, k, [&] { return coin(rng) ? 1 : 0; }).eval(); };
  FittedChannels f;
  f.learner_ids = numbered("s", n);
  f.exercise_ids = numbered("e", m);
  f.knowledge_ids = numbered("k", k);
  f.data_digest = 99;
  IrtFit irt;
  irt.items.difficulty = v(m);
  irt.items.discrimination = v(m).cwiseAbs();
  irt.items.guess = Eigen::VectorXd::Constant(m, 0.1);
  irt.learners.theta = v(n);
  f.irt = irt;
  DinaFit dina;
  dina.items.slip = v(m).cwiseAbs() * 0.1;
  dina.items.guess = v(m).cwiseAbs() * 0.1;
  dina.learners.alpha = bits(n);
  dina.learners.alpha.row(0).setOnes();
  f.dina = dina;
  MirtFit mirt;
  mirt.items.discrimination = Eigen::MatrixXd::NullaryExpr(m, dims, [&] { return std::abs(z(rng)); });
  mirt.items.difficulty = v(m);
  mirt.items.guess = Eigen::VectorXd::Zero(m);
  mirt.learners.ability = Eigen::MatrixXd::NullaryExpr(n, dims, [&] { return z(rng); });
  f.mirt = mirt;
  HoDinaFit ho;
  ho.params.theta = v(n);
  ho.params.alpha = bits(n);
  ho.params.slip = v(m).cwiseAbs() * 0.1;
  ho.params.guess = v(m).cwiseAbs() * 0.1;
  f.hodina = ho;
  return f;
}

}  // namespace

TEST(Reports, LearnerRowsMirrorLearnerSet) {
  const auto f = fake_channels(30, 10, 12, 3, 1);
  const auto sets = build_parameter_sets(Variant::kLdmId, f);
  const std::vector<std::string> ids{"s0", "s7", "s3", "s21"};
  const auto rep = export_learner_report(sets, ids);
  ASSERT_EQ(rep.ids, ids);
  ASSERT_EQ(rep.values.rows(), 4);
  int bits = 0;
  for (const auto& c : rep.columns) bits += c.binary;
  EXPECT_EQ(bits, 12);
  EXPECT_EQ(rep.columns.size(), 13u);
  EXPECT_EQ(rep.columns.front().name, "irt.theta");
  for (Index c = 1; c < 13; ++c) EXPECT_EQ(rep.values(0, c), 1.0);
  for (std::size_t i = 0; i < ids.size(); ++i)
    EXPECT_EQ(rep.values.row(static_cast<Index>(i)), sets.sc.row(sets.learner_row(ids[i])));
  EXPECT_EQ(export_learner_report(sets, {}).ids.size(), 30u);
  const std::vector<std::string> bad{"s0", "zz"};
  expect_errc(Errc::kUnknownLearner, [&] { (void)export_learner_report(sets, bad); });
}

TEST(Reports, ExerciseRowsForHmiCarryDiscriminationVector) {
  const auto f = fake_channels(30, 20, 5, 3, 2);
  const auto sets = build_parameter_sets(Variant::kLdmHmi, f);
  const auto rep = export_exercise_report(sets, {});
  EXPECT_EQ(rep.ids.size(), 20u);
  ASSERT_EQ(rep.columns.size(), 9u);
  int disc = 0;
  for (const auto& c : rep.columns) {
    EXPECT_FALSE(c.binary);
    disc += c.name.rfind("mirt.discrimination.", 0) == 0;
    EXPECT_NE(c.name.find('.'), std::string::npos) << "channel tag missing on " << c.name;
  }
  EXPECT_EQ(disc, 3);
  EXPECT_EQ(rep.values, sets.ec);
  EXPECT_EQ(rep.variant, "ldm-hmi");
  const std::vector<std::string> bad{"nope"};
  expect_errc(Errc::kUnknownExercise, [&] { (void)export_exercise_report(sets, bad); });
}

TEST(Reports, CsvAndJsonRoundTripsAreLossless) {
  const auto f = fake_channels(15, 8, 4, 2, 3);
  for (auto variant : {Variant::kLdmId, Variant::kLdmHmi}) {
    const auto sets = build_parameter_sets(variant, f, true);
    for (const auto& rep : {export_learner_report(sets, {}), export_exercise_report(sets, {})}) {
      const auto csv = parameter_report_csv(rep, "id");
      const auto back = parse_parameter_report_csv(csv, rep.columns, rep.variant);
      EXPECT_EQ(back, rep);
      EXPECT_EQ(parameter_report_csv(back, "id"), csv);
      const auto json = parameter_report_json(rep);
      EXPECT_EQ(parse_parameter_report_json(json), rep);
      EXPECT_EQ(parameter_report_json(parse_parameter_report_json(json)), json);
    }
  }
  const auto sets = build_parameter_sets(Variant::kLdmId, f);
  const auto rep = export_learner_report(sets, {});
  auto cols = rep.columns;
  cols[0].name = "other";
  expect_errc(Errc::kMalformedRow, [&] { (void)parse_parameter_report_csv(parameter_report_csv(rep, "id"), cols, ""); });
}

TEST(LatentCorrelation, SelfCorrelationHasUnitDiagonal) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(50, 6, [&] { return z(rng); });
  const auto c = latent_correlation(x, x);
  EXPECT_LT((c.r.diagonal().array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_TRUE((c.r.array().abs() <= 1.0).all());
  EXPECT_LT((c.r - c.r.transpose()).norm(), 1e-12);
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 6; ++j)
      EXPECT_NEAR(c.r(i, j), testing_support::pearson(x.col(i), x.col(j)), 1e-12);
}

TEST(LatentCorrelation, LinearDependenceGivesPlusMinusOne) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(20, 2, [&] { return z(rng); });
  Eigen::MatrixXd b(20, 2);
  b.col(0) = 3.0 * a.col(0).array() + 1.0;
  b.col(1) = -0.5 * a.col(0);
  const auto c = latent_correlation(a, b);
  EXPECT_NEAR(c.r(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(c.r(0, 1), -1.0, 1e-12);
}

TEST(LatentCorrelation, IndependentBatchesConcentrateNearZero) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z;
  const Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(10000, 16, [&] { return z(rng); });
  const Eigen::MatrixXd b = Eigen::MatrixXd::NullaryExpr(10000, 8, [&] { return z(rng); });
  const auto c = latent_correlation(a, b);
  const double within = (c.r.array().abs() < 0.05).cast<double>().mean();
  EXPECT_GE(within, 0.99);
}

TEST(LatentCorrelation, DegenerateAndInvalidInputs) {
  Eigen::MatrixXd a(4, 2), b(4, 1);
  a << 1, 5, 2, 5, 3, 5, 4, 5;
  b << 2, 1, 0, 3;
  const auto c = latent_correlation(a, b);
  EXPECT_EQ(c.degenerate_learner_dims, std::vector<Index>{1});
  EXPECT_TRUE(c.degenerate_exercise_dims.empty());
  EXPECT_EQ(c.r(1, 0), 0.0);
  EXPECT_TRUE(c.r.allFinite());
  expect_errc(Errc::kBatchTooSmall, [] { (void)latent_correlation(Eigen::MatrixXd::Ones(2, 2), Eigen::MatrixXd::Ones(2, 2)); });
  expect_errc(Errc::kLengthMismatch, [] { (void)latent_correlation(Eigen::MatrixXd::Ones(4, 2), Eigen::MatrixXd::Ones(5, 2)); });
  const auto csv = latent_correlation_csv(c);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "learner_dim,e1");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

namespace {

struct TrainedModel {
  SyntheticData data;
  LdmModel model;
};

const TrainedModel& trained() {
  static const TrainedModel t = [] {
    TrainedModel out;
    out.data = generate_synthetic_dina(400, 20, 3, {0.02, 0.05}, {0.02, 0.05}, 12);
    LdmConfig c;
    c.learner_latent = 16;
    c.exercise_latent = 8;
    c.response_dim = 8;
    c.attn_channels = 4;
    c.max_epochs = 8;
    c.sae.epochs = 30;
    c.learning_rate = 0.003;
    c.seed = 3;
    out.model = fit_ldm(out.data.responses, out.data.q, c);
    return out;
  }();
  return t;
}

}  // namespace

TEST(Attention, ExportRowsAreTheStoredVectors) {
  const auto& t = trained();
  const auto cells = t.data.responses.observed_cells();
  const std::span<const Cell> probe(cells.data(), 50);
  const auto records = predict_records(t.model, probe);
  const auto names = t.model.feature_names();
  const auto m = attention_matrix(records);
  ASSERT_EQ(m.cols(), static_cast<Index>(names.size()));
  EXPECT_LT((m.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-6);

  const auto csv = attention_csv(records, names);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("learner_id,exercise_id,deep.1,", 0), 0u) << line;
  EXPECT_NE(line.find(",learner.dina.alpha.k1,"), std::string::npos);
  EXPECT_NE(line.find(",exercise.dina.slip"), std::string::npos);
  for (const auto& rec : records) {
    ASSERT_TRUE(std::getline(in, line));
    std::istringstream fields(line);
    std::string f;
    std::getline(fields, f, ',');
    EXPECT_EQ(f, rec.learner_id);
    std::getline(fields, f, ',');
    EXPECT_EQ(f, rec.exercise_id);
    for (Index k = 0; k < rec.attention.size(); ++k) {
      std::getline(fields, f, ',');
      EXPECT_EQ(parse_double(f), rec.attention(k));
    }
  }
}

TEST(Attention, SymmetricNetworkAttendsUniformly) {
  // Tensors share storage across copies, so work on a reloaded network.
  auto model = trained().model;
  auto params = model.network.param_map();
  for (auto& [name, t] : params) t = nd::Tensor::param(t.shape(), t.value());
  params.at("query.k").mutable_value().setZero();
  params.at("query.b").mutable_value().setZero();
  model.network = LdmNetwork::from_param_map(params, model.sets.sc.cols(), model.sets.ec.cols(), model.config);
  const auto cells = trained().data.responses.observed_cells();
  const auto records = predict_records(model, std::span<const Cell>(cells.data(), 20));
  const double d5 = static_cast<double>(model.network.fused_width());
  for (const auto& r : records) EXPECT_TRUE(r.attention.isApproxToConstant(1.0 / d5, 1e-12));
}

TEST(Attention, CellLatentsAlignWithModelRows) {
  const auto& t = trained();
  const std::vector<Cell> cells{{0, 1}, {5, 2}, {5, 1}};
  const auto [hs, he] = cell_latents(t.model, cells);
  EXPECT_EQ(hs.row(1), hs.row(2));
  EXPECT_EQ(he.row(0), he.row(2));
  EXPECT_EQ(hs.row(0), Eigen::MatrixXd(t.model.learner_latent).row(0));
  const std::vector<Cell> bad{{1000, 0}};
  expect_errc(Errc::kUnknownLearner, [&] { (void)cell_latents(t.model, bad); });
}
