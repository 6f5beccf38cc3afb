#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ldiag/error.hpp"

namespace ldiag {

using Index = Eigen::Index;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using CellGrid = RowMatrix<std::int8_t>;
using BinaryGrid = RowMatrix<std::int8_t>;

struct Cell {
  Index learner = 0;
  Index exercise = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// Learners x exercises binary outcomes. Cells hold 1 (correct), 0
/// (incorrect) or kMissing.
class ResponseMatrix {
 public:
  static constexpr std::int8_t kMissing = -1;

  ResponseMatrix() = default;
  /// Validates every invariant, including at least one observation per
  /// learner and per exercise.
  ResponseMatrix(std::vector<std::string> learner_ids, std::vector<std::string> exercise_ids,
                 CellGrid cells);

  Index num_learners() const { return cells_.rows(); }
  Index num_exercises() const { return cells_.cols(); }
  const std::vector<std::string>& learner_ids() const { return learner_ids_; }
  const std::vector<std::string>& exercise_ids() const { return exercise_ids_; }
  const CellGrid& cells() const { return cells_; }

  std::int8_t operator()(Index learner, Index exercise) const { return cells_(learner, exercise); }
  bool observed(Index learner, Index exercise) const { return cells_(learner, exercise) != kMissing; }
  Index num_observed() const;

  /// Observed cells in row-major order.
  std::vector<Cell> observed_cells() const;

  /// Copy with the given cells set to missing. The result may contain
  /// learners or exercises without observations; estimators handle those.
  ResponseMatrix masked(std::span<const Cell> hidden) const;

  /// Y (observed 1s) and M (observation indicator) as dense doubles, the
  /// form the EM E-steps consume.
  Eigen::MatrixXd outcome_matrix() const;
  Eigen::MatrixXd mask_matrix() const;

  Index learner_index(const std::string& id) const;
  Index exercise_index(const std::string& id) const;

  friend bool operator==(const ResponseMatrix& a, const ResponseMatrix& b);

 private:
  struct Unchecked {};
  ResponseMatrix(Unchecked, std::vector<std::string> learner_ids,
                 std::vector<std::string> exercise_ids, CellGrid cells);

  std::vector<std::string> learner_ids_;
  std::vector<std::string> exercise_ids_;
  CellGrid cells_;
};

/// Exercises x knowledge points binary incidence.
class QMatrix {
 public:
  QMatrix() = default;
  QMatrix(std::vector<std::string> exercise_ids, std::vector<std::string> knowledge_ids,
          BinaryGrid cells);

  Index num_exercises() const { return cells_.rows(); }
  Index num_knowledge() const { return cells_.cols(); }
  const std::vector<std::string>& exercise_ids() const { return exercise_ids_; }
  const std::vector<std::string>& knowledge_ids() const { return knowledge_ids_; }
  const BinaryGrid& cells() const { return cells_; }
  bool needs(Index exercise, Index knowledge) const { return cells_(exercise, knowledge) != 0; }

  /// Throws kShapeMismatch unless the exercise ids equal r's, in order.
  void check_aligned(const ResponseMatrix& r) const;

  friend bool operator==(const QMatrix& a, const QMatrix& b);

 private:
  std::vector<std::string> exercise_ids_;
  std::vector<std::string> knowledge_ids_;
  BinaryGrid cells_;
};

enum class ResponseFormat { kLongCsv, kDenseTsv };

ResponseMatrix load_response_matrix(const std::filesystem::path& path, ResponseFormat format);
ResponseMatrix parse_long_csv(const std::string& text);
ResponseMatrix parse_dense_tsv(const std::string& text);
void write_long_csv(const ResponseMatrix& r, const std::filesystem::path& path);
std::string to_long_csv(const ResponseMatrix& r);

QMatrix load_q_matrix(const std::filesystem::path& path);
QMatrix parse_q_csv(const std::string& text);
void write_q_csv(const QMatrix& q, const std::filesystem::path& path);

/// Cross-validation assignment of observed cells to folds.
struct FoldPlan {
  int k = 0;
  std::vector<Cell> cells;  // observed cells, row-major
  std::vector<int> fold;    // fold[i] is the fold of cells[i]

  std::vector<Cell> test_cells(int f) const;
  std::vector<Cell> train_cells(int f) const;
  std::vector<Index> fold_sizes() const;
};

FoldPlan split_folds(const ResponseMatrix& r, int k, std::uint64_t seed);

// --- synthetic data ---------------------------------------------------------

enum class Generator { kDina, kIrt, kHoDina };

struct GroundTruth {
  Generator generator = Generator::kDina;
  BinaryGrid alpha;            // DINA / Ho-DINA mastery, learners x K
  Eigen::VectorXd theta;       // IRT / Ho-DINA ability
  Eigen::VectorXd slip;        // DINA / Ho-DINA
  Eigen::VectorXd guess;       // DINA / Ho-DINA / IRT lower asymptote
  Eigen::VectorXd difficulty;  // IRT
  Eigen::VectorXd discrimination;  // IRT
  Eigen::VectorXd lambda0;     // Ho-DINA
  Eigen::VectorXd lambda1;     // Ho-DINA
  Eigen::MatrixXd bayes_prob;  // learners x exercises success probability
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct SyntheticData {
  ResponseMatrix responses;
  QMatrix q;
  GroundTruth truth;
};

SyntheticData generate_synthetic_dina(Index n_learners, Index n_exercises, Index n_knowledge,
                                      Interval slip_range, Interval guess_range,
                                      std::uint64_t seed);

SyntheticData generate_synthetic_irt(Index n_learners, Index n_exercises, std::uint64_t seed,
                                     double scale = 1.702);

struct HoDinaTruthSpec {
  double lambda0 = 0.0;
  double lambda1 = 1.5;
  double slip = 0.15;
  double guess = 0.15;
};

/// Higher-order DINA data: theta ~ N(0,1), alpha_k ~ Bernoulli(logistic(l0 + l1 theta)),
/// Q rows with 1-3 skills, outcomes per the DINA response law.
SyntheticData generate_synthetic_hodina(Index n_learners, Index n_exercises, Index n_knowledge,
                                        const HoDinaTruthSpec& spec, std::uint64_t seed);

std::string ground_truth_json(const GroundTruth& truth, const ResponseMatrix& r);
GroundTruth parse_ground_truth_json(const std::string& text);

// --- small shared helpers -----------------------------------------------------

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);
double parse_double(std::string_view text);

/// Digest of the observed cells and their values; identifies the data a
/// fitted artifact was derived from.
std::uint64_t data_digest(const ResponseMatrix& r);

/// splitmix64 step; used to derive per-component seeds from one run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace ldiag
