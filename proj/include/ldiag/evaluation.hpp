#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ldiag/dataio.hpp"
#include "ldiag/diagnosis.hpp"
#include "ldiag/psychometrics.hpp"

namespace ldiag {

/// Mann-Whitney AUC with average ranks for ties. Throws kSingleClassLabels
/// unless both classes occur and kLengthMismatch on unequal lengths.
double auc(std::span<const double> labels, std::span<const double> scores);
double auc(const Eigen::VectorXd& labels, const Eigen::VectorXd& scores);

/// Root mean squared difference. Throws kEmptyInput on empty input.
double rmse(std::span<const double> labels, std::span<const double> scores);
double rmse(const Eigen::VectorXd& labels, const Eigen::VectorXd& scores);

/// Outcomes of `cells` in `r` as 0/1 doubles.
Eigen::VectorXd labels_of(const ResponseMatrix& r, std::span<const Cell> cells);

// --- baselines ---------------------------------------------------------------------

struct BaselineOptions {
  /// DINA / Ho-DINA: score by the hard mastery profile instead of the
  /// posterior mixture.
  bool hard_profile = false;
};

/// Scores cells with a fitted channel's own response law: IRT at the EAP
/// ability, DINA as the posterior mixture over latent classes, MIRT at the EAP
/// ability vector, Ho-DINA with posterior-mean slip/guess and P(eta = 1).
/// Throws kMissingChannel if the channel was not fitted.
Eigen::VectorXd baseline_predict(Channel channel, const FittedChannels& fitted, std::span<const Cell> cells,
                                 const BaselineOptions& options = {});

// --- cross-validation ----------------------------------------------------------------

struct MetricReport {
  std::string model;
  int fold = -1;  // -1 marks the mean over folds
  double auc = 0.0;
  double rmse = 0.0;
  Index n_cells = 0;
  double wall_clock_ms = 0.0;
};

struct ModelSpec {
  std::string name;
  LdmConfig config;
};

struct CvConfig {
  int folds = 5;
  std::uint64_t seed = 0;
  std::vector<ModelSpec> models;
  std::vector<Channel> baselines;
  PsychConfig psych;
  BaselineOptions baseline_options;
  /// Adds an "oracle" row scored by the generating probabilities.
  const GroundTruth* truth = nullptr;
  /// Record prediction wall-clock time. Off keeps reports byte-reproducible.
  bool timing = false;
  int jobs = 1;
};

struct CvResult {
  std::vector<MetricReport> folds;  // fold-major, models in configuration order
  std::vector<MetricReport> mean;
  std::vector<std::string> warnings;

  const MetricReport& mean_of(const std::string& model) const;
};

/// Per fold: hide the test cells, fit the psychometric channels once on the
/// remaining cells, train every configured model on them, and score the
/// test cells. Fold seeds are derived from the run seed and fold index.
CvResult cross_validate(const ResponseMatrix& r, const QMatrix& q, const CvConfig& config);

/// `fold,model,auc,rmse,n_cells,wall_clock_ms`; mean rows use fold "mean".
std::string report_csv(const CvResult& result);
std::string report_json(const CvResult& result);

}  // namespace ldiag
