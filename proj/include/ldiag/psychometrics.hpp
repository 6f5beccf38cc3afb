#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ldiag/dataio.hpp"
#include "ldiag/response.hpp"

namespace ldiag {

// --- estimator settings ---------------------------------------------------------

struct EmConfig {
  int max_iterations = 200;
  double tolerance = 1e-4;  // on |delta marginal log-likelihood|
  double scale = kDefaultScale;
  int inner_steps = 25;     // projected-gradient steps per item M-step
  int grid_points = 41;     // IRT ability grid
  double grid_bound = 4.0;
  int quadrature_points = 7;  // MIRT Gauss-Hermite nodes per dimension
};

struct McmcConfig {
  int sweeps = 5000;
  int burn_in = 2500;
  double theta_step = 0.3;
  double item_step = 0.05;
  double lambda_step = 0.3;
  double lambda_prior_var = 4.0;
  int divergence_window = 500;
  double min_acceptance = 0.01;
  std::uint64_t seed = 0;
};

/// Per-fit record of what the estimator did. Degenerate items (all observed
/// responses identical, or none observed) are pinned to boundary values and
/// listed here instead of failing the fit.
struct FitDiagnostics {
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
  std::vector<Index> degenerate_items;
  std::vector<std::string> warnings;
};

// --- IRT (3PL) --------------------------------------------------------------------

struct IrtItemParams {
  Eigen::VectorXd difficulty;
  Eigen::VectorXd discrimination;
  Eigen::VectorXd guess;
  double scale = kDefaultScale;
};

struct IrtLearnerParams {
  Eigen::VectorXd theta;  // EAP
};

struct IrtFit {
  IrtItemParams items;
  IrtLearnerParams learners;
  FitDiagnostics diagnostics;
};

/// Starting values the EM uses; exposed so callers can check the no-op bound.
IrtItemParams irt_initial_items(const ResponseMatrix& r, const EmConfig& config);

/// Marginal-likelihood EM over a fixed ability grid with projected gradient
/// M-steps. Throws kTooFewObservations unless at least two learners and two
/// items have both outcomes observed.
IrtFit fit_irt_em(const ResponseMatrix& r, const EmConfig& config = {});

// --- DINA -------------------------------------------------------------------------

struct DinaItemParams {
  Eigen::VectorXd slip;
  Eigen::VectorXd guess;
};

struct DinaLearnerParams {
  BinaryGrid alpha;          // attribute-wise posterior mode, learners x K
  Eigen::MatrixXd posterior;  // learners x 2^K
};

struct DinaFit {
  DinaItemParams items;
  DinaLearnerParams learners;
  BinaryGrid profiles;       // 2^K x K, row l holds the bits of l
  Eigen::MatrixXd ideal;     // exercises x 2^K ideal responses
  Eigen::VectorXd class_prior;
  FitDiagnostics diagnostics;
};

inline constexpr double kDinaFloor = 1e-4;
inline constexpr double kDinaCeiling = 0.5;
inline constexpr Index kMaxKnowledge = 20;

BinaryGrid enumerate_profiles(Index n_knowledge);

DinaFit fit_dina_em(const ResponseMatrix& r, const QMatrix& q, const EmConfig& config = {});

// --- MIRT -------------------------------------------------------------------------

struct MirtItemParams {
  Eigen::MatrixXd discrimination;  // exercises x m, nonnegative
  Eigen::VectorXd difficulty;      // intercept d in D (a . alpha + d)
  Eigen::VectorXd guess;
  double scale = kDefaultScale;
};

struct MirtLearnerParams {
  Eigen::MatrixXd ability;  // learners x m, EAP
};

struct MirtFit {
  MirtItemParams items;
  MirtLearnerParams learners;
  FitDiagnostics diagnostics;
};

inline constexpr int kMaxMirtDims = 4;

/// Probabilists' Gauss-Hermite rule (weight exp(-x^2/2), weights sum to 1),
/// computed by Golub-Welsch.
void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

MirtFit fit_mirt_em(const ResponseMatrix& r, int dims, const EmConfig& config = {});

// --- Ho-DINA ----------------------------------------------------------------------

struct HoDinaParams {
  Eigen::VectorXd theta;      // posterior mean
  BinaryGrid alpha;           // indicator(posterior mean >= 0.5)
  Eigen::MatrixXd alpha_mean;  // learners x K
  Eigen::VectorXd slip;
  Eigen::VectorXd guess;
  Eigen::VectorXd lambda0;
  Eigen::VectorXd lambda1;
  Eigen::MatrixXd eta_mean;   // learners x exercises posterior P(eta = 1)
};

struct McmcDiagnostics {
  int sweeps = 0;
  double theta_acceptance = 0.0;
  double item_acceptance = 0.0;
  double lambda_acceptance = 0.0;
  double min_lambda1_sample = 0.0;
  std::vector<Index> degenerate_items;
};

struct HoDinaFit {
  HoDinaParams params;
  McmcDiagnostics diagnostics;
};

/// Metropolis-within-Gibbs sampler. Throws kChainDiverged when a block's
/// acceptance rate over a full window falls below config.min_acceptance.
HoDinaFit fit_hodina_mcmc(const ResponseMatrix& r, const QMatrix& q, const McmcConfig& config = {});

// --- channel assembly --------------------------------------------------------------

enum class Variant { kLdmId, kLdmHmi };

const char* variant_name(Variant v);  // "ldm-id" / "ldm-hmi"
Variant parse_variant(const std::string& name);

enum class Channel { kIrt, kDina, kMirt, kHoDina };

const char* channel_name(Channel c);
std::vector<Channel> channels_for(Variant v);
inline const std::vector<Channel> kAllChannels = {Channel::kIrt, Channel::kDina, Channel::kMirt,
                                                  Channel::kHoDina};

struct PsychConfig {
  EmConfig em;
  McmcConfig mcmc;
  int mirt_dims = 3;
};

struct FittedChannels {
  std::vector<std::string> learner_ids;
  std::vector<std::string> exercise_ids;
  std::vector<std::string> knowledge_ids;
  std::uint64_t data_digest = 0;
  std::optional<IrtFit> irt;
  std::optional<DinaFit> dina;
  std::optional<MirtFit> mirt;
  std::optional<HoDinaFit> hodina;

  bool has(Channel c) const;
};

/// Fits each requested channel on the same (R, Q).
FittedChannels fit_channels(const ResponseMatrix& r, const QMatrix& q, const std::vector<Channel>& channels,
                            const PsychConfig& config);

struct ParamColumn {
  std::string name;
  bool binary = false;

  bool operator==(const ParamColumn&) const = default;
};

/// Exercise (EC) and learner (SC) parameter rows for one variant.
struct CognitiveParameterSets {
  Variant variant = Variant::kLdmId;
  std::vector<std::string> learner_ids;
  std::vector<std::string> exercise_ids;
  std::vector<ParamColumn> ec_columns;
  std::vector<ParamColumn> sc_columns;
  Eigen::MatrixXd ec;  // exercises x d_e
  Eigen::MatrixXd sc;  // learners x d_s
  std::uint64_t data_digest = 0;

  Index learner_row(const std::string& id) const;
  Index exercise_row(const std::string& id) const;
};

/// LDM-ID:  EC = [irt.difficulty, irt.discrimination, dina.guess, dina.slip],
///          SC = [irt.theta, dina.alpha...].
/// LDM-HMI: EC = [irt.difficulty, irt.discrimination, hodina.slip, hodina.guess,
///                mirt.discrimination..., mirt.guess, mirt.difficulty],
///          SC = [irt.theta, hodina.theta, mirt.alpha..., hodina.alpha...].
/// include_irt_guess appends irt.guess to EC.
CognitiveParameterSets build_parameter_sets(Variant variant, const FittedChannels& channels,
                                            bool include_irt_guess = false);

// --- JSON ------------------------------------------------------------------------

struct FitMeta {
  std::string variant;
  std::uint64_t seed = 0;
};

/// Flat keyed export: irt.difficulty, irt.discrimination, irt.guess,
/// irt.theta, dina.*, mirt.*, hodina.*, meta.
std::string channels_json(const FittedChannels& channels, const FitMeta& meta);

std::string parameter_sets_json(const CognitiveParameterSets& sets);
CognitiveParameterSets parse_parameter_sets_json(const std::string& text);

}  // namespace ldiag
