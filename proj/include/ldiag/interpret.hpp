#pragma once

// Machine-readable exports of what a fitted model knows: the cognitive
// parameter rows of chosen learners and exercises, correlations between the
// two latent spaces, and per-cell attention weights.

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ldiag/diagnosis.hpp"
#include "ldiag/psychometrics.hpp"

namespace ldiag {

/// Selected rows of SC or EC with their channel-qualified column names.
struct ParameterReport {
  std::string variant;
  std::vector<ParamColumn> columns;
  std::vector<std::string> ids;
  Eigen::MatrixXd values;  // ids x columns

  bool operator==(const ParameterReport& o) const {
    return variant == o.variant && columns == o.columns && ids == o.ids && values.rows() == o.values.rows() &&
           values.cols() == o.values.cols() && values == o.values;
  }
};

/// Throws kUnknownLearner. An empty `ids` selects every learner.
ParameterReport export_learner_report(const CognitiveParameterSets& sets, std::span<const std::string> ids);
/// Throws kUnknownExercise. An empty `ids` selects every exercise.
ParameterReport export_exercise_report(const CognitiveParameterSets& sets, std::span<const std::string> ids);

/// `<id_header>,<column>...`; binary columns print as 0/1, others round-trip exactly.
std::string parameter_report_csv(const ParameterReport& report, const std::string& id_header);
/// Inverse of parameter_report_csv. The header must list `columns` in order;
/// kMalformedRow otherwise.
ParameterReport parse_parameter_report_csv(const std::string& text, const std::vector<ParamColumn>& columns,
                                           const std::string& variant);

/// Records grouped as mastery bits and continuous parameters per id.
std::string parameter_report_json(const ParameterReport& report);
ParameterReport parse_parameter_report_json(const std::string& text);

struct LatentCorrelation {
  Eigen::MatrixXd r;  // learner dims x exercise dims
  std::vector<Index> degenerate_learner_dims;   // zero variance; their row is 0
  std::vector<Index> degenerate_exercise_dims;  // zero variance; their column is 0
};

/// Pearson correlation of every learner-latent column with every
/// exercise-latent column; row i of both inputs describes the same cell.
/// Throws kBatchTooSmall below 3 rows and kLengthMismatch on unequal rows.
LatentCorrelation latent_correlation(const Eigen::MatrixXd& learner_latent, const Eigen::MatrixXd& exercise_latent);

/// Latents of the learner and exercise of each cell, row-aligned.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> cell_latents(const LdmModel& model, std::span<const Cell> cells);

/// Header `learner_dim,e1,...` then one labelled row per learner dimension.
std::string latent_correlation_csv(const LatentCorrelation& corr);

/// Cells x d5 matrix of the attention vectors stored on the records.
Eigen::MatrixXd attention_matrix(std::span<const PredictionRecord> records);
/// Header `learner_id,exercise_id,<feature names>`, one row per record.
std::string attention_csv(std::span<const PredictionRecord> records, const std::vector<std::string>& feature_names);

}  // namespace ldiag
