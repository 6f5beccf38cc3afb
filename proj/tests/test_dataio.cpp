#include <cmath>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "ldiag/dataio.hpp"

using namespace ldiag;

namespace {

template <typename Fn>
void expect_errc(Errc code, Fn&& fn) {
  try {
    fn();
    FAIL() << "expected " << errc_name(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

ResponseMatrix full_matrix(Index n, Index m, std::uint64_t seed) {
  return generate_synthetic_dina(n, m, 2, {0.1, 0.2}, {0.1, 0.2}, seed).responses;
}

}  // namespace

TEST(LongCsv, SparseRowsLeaveMissingCells) {
  const auto r = parse_long_csv("learner_id,exercise_id,score\ns1,e1,1\ns1,e2,0\ns2,e1,1\n");
  ASSERT_EQ(r.num_learners(), 2);
  ASSERT_EQ(r.num_exercises(), 2);
  EXPECT_EQ(r(0, 0), 1);
  EXPECT_EQ(r(0, 1), 0);
  EXPECT_EQ(r(1, 0), 1);
  EXPECT_FALSE(r.observed(1, 1));
  EXPECT_EQ(r.num_observed(), 3);
}

TEST(LongCsv, RejectsBadInput) {
  expect_errc(Errc::kNonBinaryScore, [] { parse_long_csv("learner_id,exercise_id,score\ns1,e1,2\n"); });
  expect_errc(Errc::kDuplicateRecord,
              [] { parse_long_csv("learner_id,exercise_id,score\ns1,e1,1\ns1,e1,0\n"); });
  expect_errc(Errc::kMalformedRow, [] { parse_long_csv("learner_id,exercise_id,score\ns1,e1\n"); });
  expect_errc(Errc::kMalformedRow, [] { parse_long_csv("learner,exercise,score\ns1,e1,1\n"); });
}

TEST(LongCsv, MalformedRowReportsLineNumber) {
  try {
    parse_long_csv("learner_id,exercise_id,score\ns1,e1,1\ns1,e2\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LongCsv, RoundTripIsExact) {
  const auto r = full_matrix(30, 7, 3);
  std::vector<Cell> hide = {{0, 1}, {4, 3}, {29, 6}};
  const auto masked = r.masked(hide);
  const auto back = parse_long_csv(to_long_csv(masked));
  EXPECT_TRUE(back == masked);
  EXPECT_EQ(back.learner_ids(), masked.learner_ids());
  EXPECT_EQ(back.exercise_ids(), masked.exercise_ids());
}

TEST(DenseTsv, ParsesGridWithMissing) {
  const auto r = parse_dense_tsv("1 0 NA\n0\t1 1\n");
  EXPECT_EQ(r.num_learners(), 2);
  EXPECT_EQ(r.num_exercises(), 3);
  EXPECT_FALSE(r.observed(0, 2));
  EXPECT_EQ(r.num_observed(), 5);
  expect_errc(Errc::kNonBinaryScore, [] { parse_dense_tsv("1 0 x\n"); });
  expect_errc(Errc::kEmptyLearnerOrExercise, [] { parse_dense_tsv("1 NA\n0 NA\n"); });
}

TEST(DenseTsv, Math1ShapedGridCountsAllCells) {
  std::string text;
  for (int i = 0; i < 4209; ++i) {
    for (int j = 0; j < 15; ++j) text += (j ? "\t" : "") + std::to_string((i + j) % 2);
    text += "\n";
  }
  const auto r = parse_dense_tsv(text);
  EXPECT_EQ(r.num_learners(), 4209);
  EXPECT_EQ(r.num_exercises(), 15);
  EXPECT_EQ(r.num_observed(), 63135);
}

TEST(QMatrixCsv, ValidatesRows) {
  const auto q = parse_q_csv("exercise_id,k1,k2\ne1,1,0\ne2,1,1\n");
  EXPECT_EQ(q.num_exercises(), 2);
  EXPECT_EQ(q.num_knowledge(), 2);
  EXPECT_TRUE(q.needs(1, 1));
  expect_errc(Errc::kAllZeroExerciseRow, [] { parse_q_csv("exercise_id,k1,k2\ne1,0,0\n"); });
  expect_errc(Errc::kNonBinaryCell, [] { parse_q_csv("exercise_id,k1,k2\ne1,1,2\n"); });
  expect_errc(Errc::kMalformedRow, [] { parse_q_csv("exercise_id,k1,k2\ne1,1\n"); });
}

TEST(QMatrixCsv, PaperShapes) {
  for (auto [m, k] : {std::pair{15, 11}, std::pair{36, 12}}) {
    std::string text = "exercise_id";
    for (int c = 0; c < k; ++c) text += ",k_" + std::to_string(c + 1);
    text += "\n";
    for (int j = 0; j < m; ++j) {
      text += "e" + std::to_string(j);
      for (int c = 0; c < k; ++c) text += c == j % k ? ",1" : ",0";
      text += "\n";
    }
    const auto q = parse_q_csv(text);
    EXPECT_EQ(q.num_exercises(), m);
    EXPECT_EQ(q.num_knowledge(), k);
  }
}

TEST(Folds, SizesFollowRemainderRule) {
  CellGrid cells = CellGrid::Zero(10, 10);
  cells(0, 0) = 1;
  const ResponseMatrix r100({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"},
                            {"1", "2", "3", "4", "5", "6", "7", "8", "9", "10"}, cells);
  auto sizes = split_folds(r100, 5, 1).fold_sizes();
  EXPECT_EQ(sizes, (std::vector<Index>{20, 20, 20, 20, 20}));

  CellGrid wide = CellGrid::Zero(1, 101);
  std::vector<std::string> ex;
  for (int j = 0; j < 101; ++j) ex.push_back("e" + std::to_string(j));
  const ResponseMatrix r101({"s"}, ex, wide);
  sizes = split_folds(r101, 5, 1).fold_sizes();
  EXPECT_EQ(sizes, (std::vector<Index>{21, 20, 20, 20, 20}));
}

TEST(Folds, PartitionAndDeterminism) {
  auto r = full_matrix(40, 12, 5);
  std::vector<Cell> hide;
  for (Index i = 0; i < 40; i += 3) hide.push_back({i, i % 12});
  r = r.masked(hide);
  const auto a = split_folds(r, 5, 11);
  const auto b = split_folds(r, 5, 11);
  EXPECT_EQ(a.fold, b.fold);
  std::set<Cell> seen;
  for (int f = 0; f < 5; ++f) {
    for (const auto& c : a.test_cells(f)) {
      EXPECT_TRUE(r.observed(c.learner, c.exercise));
      EXPECT_TRUE(seen.insert(c).second);
    }
    EXPECT_EQ(a.test_cells(f).size() + a.train_cells(f).size(), static_cast<std::size_t>(r.num_observed()));
  }
  EXPECT_EQ(seen.size(), static_cast<std::size_t>(r.num_observed()));
  const auto sizes = a.fold_sizes();
  EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1);
  EXPECT_NE(split_folds(r, 5, 12).fold, a.fold);
}

TEST(Folds, TooFewCells) {
  const ResponseMatrix r({"s"}, {"e1", "e2"}, CellGrid::Ones(1, 2));
  expect_errc(Errc::kTooFewObservations, [&] { split_folds(r, 5, 0); });
  expect_errc(Errc::kInvalidArgument, [&] { split_folds(r, 1, 0); });
}

TEST(SyntheticDina, Synthetic5Shape) {
  const auto d = generate_synthetic_dina(2000, 50, 5, {0.05, 0.3}, {0.05, 0.3}, 7);
  EXPECT_EQ(d.responses.num_learners(), 2000);
  EXPECT_EQ(d.responses.num_exercises(), 50);
  EXPECT_EQ(d.responses.num_observed(), 100000);
  EXPECT_EQ(d.q.num_knowledge(), 5);
  for (Index j = 0; j < 50; ++j) {
    const int skills = d.q.cells().row(j).cast<int>().sum();
    EXPECT_GE(skills, 1);
    EXPECT_LE(skills, 3);
    EXPECT_LT(d.truth.slip(j) + d.truth.guess(j), 1.0);
  }
  EXPECT_GT(d.truth.bayes_prob.minCoeff(), 0.0);
  EXPECT_LT(d.truth.bayes_prob.maxCoeff(), 1.0);
}

TEST(SyntheticDina, NoiselessLimitGivesIdealResponses) {
  const auto d = generate_synthetic_dina(200, 20, 4, {0, 0}, {0, 0}, 3);
  for (Index i = 0; i < 200; ++i) {
    for (Index j = 0; j < 20; ++j) {
      int eta = 1;
      for (Index k = 0; k < 4; ++k)
        if (d.q.needs(j, k) && d.truth.alpha(i, k) == 0) eta = 0;
      EXPECT_EQ(d.responses(i, j), eta);
    }
  }
}

TEST(SyntheticDina, ClassRatesWithinThreeStandardErrors) {
  const auto d = generate_synthetic_dina(2000, 30, 5, {0.05, 0.3}, {0.05, 0.3}, 7);
  for (Index j = 0; j < 30; ++j) {
    double n1 = 0, c1 = 0, n0 = 0, c0 = 0;
    for (Index i = 0; i < 2000; ++i) {
      const bool eta = d.truth.bayes_prob(i, j) == 1.0 - d.truth.slip(j);
      (eta ? n1 : n0) += 1;
      (eta ? c1 : c0) += d.responses(i, j);
    }
    const double p1 = 1.0 - d.truth.slip(j), p0 = d.truth.guess(j);
    if (n1 > 0) EXPECT_LE(std::abs(c1 / n1 - p1), 3.0 * std::sqrt(p1 * (1 - p1) / n1)) << "item " << j;
    if (n0 > 0) EXPECT_LE(std::abs(c0 / n0 - p0), 3.0 * std::sqrt(p0 * (1 - p0) / n0)) << "item " << j;
  }
}

TEST(SyntheticDina, RejectsBadRanges) {
  expect_errc(Errc::kInvalidRange, [] { generate_synthetic_dina(10, 5, 2, {0.1, 0.6}, {0.1, 0.2}, 1); });
  expect_errc(Errc::kInvalidRange, [] { generate_synthetic_dina(10, 5, 2, {0.3, 0.1}, {0.1, 0.2}, 1); });
  expect_errc(Errc::kTooManyKnowledgePoints, [] { generate_synthetic_dina(10, 5, 21, {0.1, 0.2}, {0.1, 0.2}, 1); });
}

TEST(SyntheticIrt, ResponseLawAndDeterminism) {
  const auto a = generate_synthetic_irt(100, 10, 9);
  const auto b = generate_synthetic_irt(100, 10, 9);
  EXPECT_TRUE(a.responses == b.responses);
  EXPECT_EQ(a.truth.bayes_prob, b.truth.bayes_prob);
  for (Index j = 0; j < 10; ++j) {
    EXPECT_GE(a.truth.discrimination(j), 0.5);
    EXPECT_LE(a.truth.discrimination(j), 2.5);
    EXPECT_GE(a.truth.guess(j), 0.0);
    EXPECT_LE(a.truth.guess(j), 0.25);
  }
  const Index i = 3, j = 4;
  const double c = a.truth.guess(j);
  const double z = 1.702 * a.truth.discrimination(j) * (a.truth.theta(i) - a.truth.difficulty(j));
  EXPECT_DOUBLE_EQ(a.truth.bayes_prob(i, j), c + (1 - c) / (1 + std::exp(-z)));
}

TEST(SyntheticDina, DeterministicInSeed) {
  const auto a = generate_synthetic_dina(50, 10, 3, {0.1, 0.2}, {0.1, 0.2}, 4);
  const auto b = generate_synthetic_dina(50, 10, 3, {0.1, 0.2}, {0.1, 0.2}, 4);
  const auto c = generate_synthetic_dina(50, 10, 3, {0.1, 0.2}, {0.1, 0.2}, 5);
  EXPECT_TRUE(a.responses == b.responses);
  EXPECT_TRUE(a.q == b.q);
  EXPECT_FALSE(a.responses == c.responses);
}

TEST(GroundTruthJson, RoundTrip) {
  const auto d = generate_synthetic_dina(20, 6, 3, {0.1, 0.2}, {0.1, 0.2}, 2);
  const auto back = parse_ground_truth_json(ground_truth_json(d.truth, d.responses));
  EXPECT_EQ(back.alpha, d.truth.alpha);
  EXPECT_EQ(back.slip, d.truth.slip);
  EXPECT_EQ(back.bayes_prob, d.truth.bayes_prob);
}

TEST(Files, AtomicWriteAndReadBack) {
  const auto dir = std::filesystem::temp_directory_path() / "ldiag_test_dataio";
  std::filesystem::create_directories(dir);
  const auto d = generate_synthetic_dina(15, 5, 2, {0.1, 0.2}, {0.1, 0.2}, 8);
  write_long_csv(d.responses, dir / "r.csv");
  write_q_csv(d.q, dir / "q.csv");
  EXPECT_TRUE(load_response_matrix(dir / "r.csv", ResponseFormat::kLongCsv) == d.responses);
  EXPECT_TRUE(load_q_matrix(dir / "q.csv") == d.q);
  expect_errc(Errc::kIoError, [&] { read_text_file(dir / "absent.csv"); });
  std::filesystem::remove_all(dir);
}

TEST(Helpers, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125}) EXPECT_EQ(parse_double(format_double(v)), v);
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

TEST(LongCsv, SparseRoundTripNeedsExplicitMissingRow) {
  // Learner s1 only answered e2 and e1 was only answered by s2: no ordering of
  // observed rows introduces s1 before s2 and e1 before e2.
  CellGrid cells(2, 2);
  cells << ResponseMatrix::kMissing, 1, 0, ResponseMatrix::kMissing;
  const ResponseMatrix r({"s1", "s2"}, {"e1", "e2"}, cells);
  const std::string text = to_long_csv(r);
  EXPECT_NE(text.find(",NA"), std::string::npos);
  EXPECT_TRUE(parse_long_csv(text) == r);
  expect_errc(Errc::kDuplicateRecord,
              [] { parse_long_csv("learner_id,exercise_id,score\ns1,e1,NA\ns1,e1,1\n"); });
}
