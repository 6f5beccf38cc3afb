#pragma once

// The fusion and prediction network: learner/exercise latents pass through a
// response layer, are concatenated with the raw parameter rows, mixed by
// per-position self-attention, and scored by a small convolutional head.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ldiag/dataio.hpp"
#include "ldiag/encoding.hpp"
#include "ldiag/ndgrad.hpp"
#include "ldiag/psychometrics.hpp"

namespace ldiag {

/// Which features enter the attention block.
enum class FeatureMode {
  kFused,    // response-layer output, learner row, exercise row
  kShallow,  // learner row, exercise row
  kDeep,     // response-layer output only
};

const char* feature_mode_name(FeatureMode m);
FeatureMode parse_feature_mode(const std::string& name);

struct LdmConfig {
  Variant variant = Variant::kLdmId;
  Index learner_latent = 128;
  Index exercise_latent = 64;
  Index response_dim = 64;
  Index attn_channels = 16;
  Index conv_channels = 8;
  Index kernel = 3;
  Index pool = 2;
  double dropout = 0.2;
  double learning_rate = 0.001;
  Index batch = 64;
  int max_epochs = 50;
  int patience = 5;
  double validation_fraction = 0.1;
  int bins = 10;
  SaeConfig sae;
  bool attention = true;
  FeatureMode features = FeatureMode::kFused;
  bool include_irt_guess = false;
  PsychConfig psych;
  std::uint64_t seed = 0;

  /// Throws kInvalidArgument on out-of-range settings.
  void validate() const;
};

std::string ldm_config_json(const LdmConfig& config);
/// Keys absent from `text` keep their values from `base`.
LdmConfig parse_ldm_config_json(const std::string& text, const LdmConfig& base = {});

/// Trainable weights of the fusion / prediction network.
class LdmNetwork {
 public:
  LdmNetwork() = default;
  LdmNetwork(Index learner_width, Index exercise_width, const LdmConfig& config, std::uint64_t seed);

  struct Batch {
    nd::Tensor learner_latent;   // [B, learner_latent]
    nd::Tensor exercise_latent;  // [B, exercise_latent]
    nd::Tensor learner_row;      // [B, d_s]
    nd::Tensor exercise_row;     // [B, d_e]
  };

  struct Output {
    nd::Tensor p;          // [B]
    nd::Tensor attention;  // [B, d5, d5]; undefined with attention off
    nd::Tensor fused;      // [B, d5]
  };

  Output forward(const Batch& batch, bool training, std::uint64_t dropout_seed) const;

  /// Length of the fused feature vector.
  Index fused_width() const { return fused_width_; }
  std::vector<nd::Tensor> parameters() const;
  nd::ParamMap param_map() const;
  static LdmNetwork from_param_map(const nd::ParamMap& params, Index learner_width, Index exercise_width,
                                   const LdmConfig& config);

  nd::Tensor response_w, response_b;
  nd::Tensor query_k, query_b, key_k, key_b, value_k, value_b;
  nd::Tensor conv_k, conv_b;
  nd::Tensor out_w, out_b;

 private:
  void finish(Index learner_width, Index exercise_width, const LdmConfig& config);

  LdmConfig config_;
  Index fused_width_ = 0;
};

/// Attention block on a [B, d5] feature batch: kernel-1 projections to
/// Query/Key/Value sequences, softmax over unscaled dot products, weighted
/// sum of values. Returns the attended [B, d5, c] sequence and the [B, d5, d5]
/// weights.
std::pair<nd::Tensor, nd::Tensor> attention_forward(const nd::Tensor& fused, const nd::Tensor& query_k,
                                                    const nd::Tensor& query_b, const nd::Tensor& key_k,
                                                    const nd::Tensor& key_b, const nd::Tensor& value_k,
                                                    const nd::Tensor& value_b);

struct TrainingReport {
  std::vector<double> train_loss;  // mean BCE per epoch
  std::vector<double> val_auc;
  int best_epoch = -1;
  double best_val_auc = 0.0;
  double learner_sae_mse = 0.0, learner_sae_baseline = 0.0;
  double exercise_sae_mse = 0.0, exercise_sae_baseline = 0.0;
  std::vector<std::string> warnings;
};

struct LdmModel {
  LdmConfig config;
  CognitiveParameterSets sets;
  EncodingPlans plans;
  SaeModel learner_sae;
  SaeModel exercise_sae;
  LdmNetwork network;
  /// Latents of every learner / exercise row of `sets`, from the frozen encoders.
  nd::RowMatrixXd learner_latent;
  nd::RowMatrixXd exercise_latent;
  /// Digest of the response data every component was fitted on.
  std::uint64_t data_digest = 0;

  /// Names of the fused feature positions.
  std::vector<std::string> feature_names() const;
  /// Recomputes the cached latents from the encoders.
  void refresh_latents();
};

/// Network inputs for cells indexed by the model's learner / exercise rows.
LdmNetwork::Batch gather_batch(const LdmModel& model, std::span<const Cell> cells);

struct PredictionRecord {
  std::string learner_id;
  std::string exercise_id;
  double p = 0.0;
  Eigen::VectorXd attention;  // position-averaged weights, length d5
};

/// Trains the network on `train_cells`, early-stopping on the AUC of
/// `val_cells`, and keeps the best-validation weights. The parameter sets,
/// plans and encoders must have been derived from `train_r`, and every cell
/// of both lists must be observed in it; kLeakage otherwise.
LdmModel train_ldm(const ResponseMatrix& train_r, const CognitiveParameterSets& sets, const EncodingPlans& plans,
                   const SaeModel& learner_sae, const SaeModel& exercise_sae, const LdmConfig& config,
                   std::span<const Cell> train_cells, std::span<const Cell> val_cells,
                   TrainingReport* report = nullptr);

/// The whole pipeline on one training matrix: psychometric channels (unless
/// `fitted` is given), parameter sets, encoding plans, autoencoders, and the
/// network with a held-out validation share of the observed cells.
LdmModel fit_ldm(const ResponseMatrix& train_r, const QMatrix& q, const LdmConfig& config,
                 const FittedChannels* fitted = nullptr, TrainingReport* report = nullptr);

/// Deterministic split of observed cells into fit / validation parts.
std::pair<std::vector<Cell>, std::vector<Cell>> validation_split(const ResponseMatrix& r, double fraction,
                                                                 std::uint64_t seed);

/// Inference-mode probabilities for cells indexed by the model's rows.
Eigen::VectorXd predict_cells(const LdmModel& model, std::span<const Cell> cells);
std::vector<PredictionRecord> predict_records(const LdmModel& model, std::span<const Cell> cells);
/// Throws kUnknownLearner / kUnknownExercise.
PredictionRecord predict(const LdmModel& model, const std::string& learner_id, const std::string& exercise_id);

/// Bundle directory: plan.json, psychometrics.json, sae_learner.ckpt,
/// sae_exercise.ckpt, network.ckpt, config.json.
void save_bundle(const LdmModel& model, const std::filesystem::path& dir,
                 const std::string& channels_json_text = {});
LdmModel load_bundle(const std::filesystem::path& dir);

/// `learner_id,exercise_id,p`.
std::string predictions_csv(const std::vector<PredictionRecord>& records);

}  // namespace ldiag
