#pragma once

// One-hot encoding of cognitive-parameter rows and the autoencoders that
// compress them into learner / exercise latents.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ldiag/ndgrad.hpp"
#include "ldiag/psychometrics.hpp"

namespace ldiag {

struct PlanColumn {
  std::string name;
  bool binary = false;
  std::vector<double> edges;  // interior bin edges, strictly increasing
  bool constant = false;      // zero training range: one degenerate bin

  Index width() const { return binary ? 1 : static_cast<Index>(edges.size()) + 1; }

  friend bool operator==(const PlanColumn&, const PlanColumn&) = default;
};

/// Column-wise discretisation learned from training rows.
struct EncodingPlan {
  std::vector<PlanColumn> columns;

  Index width() const;
  Index continuous_columns() const;
  std::vector<std::string> constant_columns() const;

  /// One hot bit per continuous column (out-of-range values land in the edge
  /// bins), binary columns copied. Throws kArityMismatch on a wrong row length.
  Eigen::VectorXd encode(const Eigen::Ref<const Eigen::VectorXd>& row) const;
  /// Encodes each row of `rows`.
  nd::RowMatrixXd encode_rows(const Eigen::MatrixXd& rows) const;

  friend bool operator==(const EncodingPlan&, const EncodingPlan&) = default;
};

/// Equal-width bins over the range of `train_rows` of `values`. A zero-range
/// column becomes a single degenerate bin and is listed by
/// constant_columns() rather than rejected.
EncodingPlan build_encoding_plan(const Eigen::MatrixXd& values, const std::vector<ParamColumn>& columns,
                                 int bins_per_param, std::span<const Index> train_rows);

struct EncodingPlans {
  EncodingPlan learner;
  EncodingPlan exercise;
};

/// Plans for both sides of a parameter-set pair.
EncodingPlans build_encoding_plans(const CognitiveParameterSets& sets, int bins_per_param,
                                   std::span<const Index> train_learners, std::span<const Index> train_exercises);

std::string encoding_plans_json(const EncodingPlans& plans);
EncodingPlans parse_encoding_plans_json(const std::string& text);

// --- autoencoders -----------------------------------------------------------------

struct SaeConfig {
  int epochs = 100;
  Index batch = 64;
  double learning_rate = 0.001;
  /// Widths of the encoder layers before the latent; empty means a single
  /// encoder/decoder pair.
  std::vector<Index> hidden;
  std::uint64_t seed = 0;
};

/// tanh encoder stack and mirrored tanh decoder stack.
class SaeModel {
 public:
  SaeModel() = default;
  /// Xavier-uniform weights, zero biases.
  SaeModel(Index input_dim, Index latent_dim, const std::vector<Index>& hidden, std::uint64_t seed);

  Index input_dim() const;
  Index latent_dim() const;
  std::size_t depth() const { return encoder_.size(); }

  /// Throws kArityMismatch if x has the wrong width.
  Eigen::VectorXd encode(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  nd::RowMatrixXd encode_rows(const nd::RowMatrixXd& x) const;
  nd::RowMatrixXd reconstruct_rows(const nd::RowMatrixXd& x) const;

  /// Differentiable forward pieces.
  nd::Tensor encode_tensor(const nd::Tensor& x) const;
  nd::Tensor reconstruct_tensor(const nd::Tensor& x) const;

  std::vector<nd::Tensor> parameters() const;
  nd::ParamMap param_map() const;
  static SaeModel from_param_map(const nd::ParamMap& params);

  struct Layer {
    nd::Tensor w;  // [out, in]
    nd::Tensor b;  // [out]
  };
  const std::vector<Layer>& encoder() const { return encoder_; }
  const std::vector<Layer>& decoder() const { return decoder_; }
  std::vector<Layer>& encoder() { return encoder_; }

 private:
  std::vector<Layer> encoder_;
  std::vector<Layer> decoder_;
};

struct SaeTraining {
  SaeModel model;
  std::vector<double> epoch_loss;  // mean minibatch MSE per epoch
  double final_mse = 0.0;          // over the whole training set, after training
  double baseline_mse = 0.0;       // predicting each column's mean
};

/// Minimises mean squared reconstruction error with Adam. Throws kEmptyInput
/// on no vectors.
SaeTraining train_sae(const nd::RowMatrixXd& vectors, Index latent_dim, const SaeConfig& config);

/// Mean squared error of predicting every column by its mean.
double column_mean_mse(const nd::RowMatrixXd& vectors);

}  // namespace ldiag
