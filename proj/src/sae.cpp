#include <algorithm>
#include <numeric>
#include <random>

#include "ldiag/dataio.hpp"
#include "ldiag/encoding.hpp"

namespace ldiag {

namespace {

nd::Tensor apply(const std::vector<SaeModel::Layer>& layers, nd::Tensor x) {
  for (const auto& l : layers) x = nd::tanh(nd::dense(x, l.w, l.b));
  return x;
}

nd::Tensor as_tensor(const nd::RowMatrixXd& m) {
  return nd::Tensor({m.rows(), m.cols()}, Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()));
}

nd::RowMatrixXd as_matrix(const nd::Tensor& t, Index rows) {
  return t.matrix(rows, t.size() / std::max<Index>(rows, 1));
}

std::string layer_key(const char* side, std::size_t i, const char* what) {
  return std::string(side) + "." + std::to_string(i) + "." + what;
}

}  // namespace

SaeModel::SaeModel(Index input_dim, Index latent_dim, const std::vector<Index>& hidden, std::uint64_t seed) {
  if (input_dim < 1 || latent_dim < 1) throw Error(Errc::kInvalidArgument, "autoencoder widths must be positive");
  std::mt19937_64 rng(seed);
  std::vector<Index> widths{input_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(latent_dim);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const Index in = widths[i], out = widths[i + 1];
    encoder_.push_back({nd::xavier_uniform({out, in}, in, out, rng), nd::Tensor::param({out}, Eigen::VectorXd::Zero(out))});
  }
  for (std::size_t i = widths.size() - 1; i > 0; --i) {
    const Index in = widths[i], out = widths[i - 1];
    decoder_.push_back({nd::xavier_uniform({out, in}, in, out, rng), nd::Tensor::param({out}, Eigen::VectorXd::Zero(out))});
  }
}

Index SaeModel::input_dim() const { return encoder_.empty() ? 0 : encoder_.front().w.dim(1); }
Index SaeModel::latent_dim() const { return encoder_.empty() ? 0 : encoder_.back().w.dim(0); }

nd::Tensor SaeModel::encode_tensor(const nd::Tensor& x) const { return apply(encoder_, x); }
nd::Tensor SaeModel::reconstruct_tensor(const nd::Tensor& x) const { return apply(decoder_, apply(encoder_, x)); }

Eigen::VectorXd SaeModel::encode(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != input_dim()) {
    throw Error(Errc::kArityMismatch, "autoencoder expects width " + std::to_string(input_dim()) + ", got " +
                                          std::to_string(x.size()));
  }
  nd::NoGradGuard guard;
  return encode_tensor(nd::Tensor({x.size()}, x)).value();
}

nd::RowMatrixXd SaeModel::encode_rows(const nd::RowMatrixXd& x) const {
  if (x.cols() != input_dim()) throw Error(Errc::kArityMismatch, "autoencoder input width mismatch");
  nd::NoGradGuard guard;
  return as_matrix(encode_tensor(as_tensor(x)), x.rows());
}

nd::RowMatrixXd SaeModel::reconstruct_rows(const nd::RowMatrixXd& x) const {
  if (x.cols() != input_dim()) throw Error(Errc::kArityMismatch, "autoencoder input width mismatch");
  nd::NoGradGuard guard;
  return as_matrix(reconstruct_tensor(as_tensor(x)), x.rows());
}

std::vector<nd::Tensor> SaeModel::parameters() const {
  std::vector<nd::Tensor> out;
  for (const auto* side : {&encoder_, &decoder_})
    for (const auto& l : *side) {
      out.push_back(l.w);
      out.push_back(l.b);
    }
  return out;
}

nd::ParamMap SaeModel::param_map() const {
  nd::ParamMap out;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    out[layer_key("encoder", i, "w")] = encoder_[i].w;
    out[layer_key("encoder", i, "b")] = encoder_[i].b;
    out[layer_key("decoder", i, "w")] = decoder_[i].w;
    out[layer_key("decoder", i, "b")] = decoder_[i].b;
  }
  return out;
}

SaeModel SaeModel::from_param_map(const nd::ParamMap& params) {
  SaeModel m;
  for (std::size_t i = 0; params.count(layer_key("encoder", i, "w")); ++i) {
    try {
      m.encoder_.push_back({params.at(layer_key("encoder", i, "w")), params.at(layer_key("encoder", i, "b"))});
      m.decoder_.push_back({params.at(layer_key("decoder", i, "w")), params.at(layer_key("decoder", i, "b"))});
    } catch (const std::out_of_range&) {
      throw Error(Errc::kMalformedRow, "autoencoder checkpoint is missing layer " + std::to_string(i));
    }
  }
  if (m.encoder_.empty()) throw Error(Errc::kMalformedRow, "autoencoder checkpoint has no layers");
  for (std::size_t i = 0; i + 1 < m.encoder_.size(); ++i) {
    if (m.encoder_[i].w.dim(0) != m.encoder_[i + 1].w.dim(1)) {
      throw Error(Errc::kShapeMismatch, "autoencoder checkpoint layers do not chain");
    }
  }
  return m;
}

double column_mean_mse(const nd::RowMatrixXd& vectors) {
  if (vectors.size() == 0) throw Error(Errc::kEmptyInput, "no vectors");
  const Eigen::RowVectorXd mu = vectors.colwise().mean();
  return (vectors.rowwise() - mu).squaredNorm() / static_cast<double>(vectors.size());
}

SaeTraining train_sae(const nd::RowMatrixXd& vectors, Index latent_dim, const SaeConfig& config) {
  if (vectors.rows() == 0 || vectors.cols() == 0) throw Error(Errc::kEmptyInput, "no vectors to train the autoencoder on");
  if (config.batch < 1 || config.epochs < 0) throw Error(Errc::kInvalidArgument, "bad autoencoder training settings");
  SaeTraining out;
  out.model = SaeModel(vectors.cols(), latent_dim, config.hidden, derive_seed(config.seed, 0));
  out.baseline_mse = column_mean_mse(vectors);

  nd::Adam opt(out.model.parameters(), {.learning_rate = config.learning_rate});
  std::mt19937_64 rng(derive_seed(config.seed, 1));
  std::vector<Index> order(static_cast<std::size_t>(vectors.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  const Index n = vectors.rows();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (Index start = 0; start < n; start += config.batch) {
      const Index b = std::min(config.batch, n - start);
      nd::RowMatrixXd batch(b, vectors.cols());
      for (Index i = 0; i < b; ++i) batch.row(i) = vectors.row(order[static_cast<std::size_t>(start + i)]);
      const Eigen::Map<const Eigen::VectorXd> target(batch.data(), batch.size());
      auto loss = nd::mse_loss(out.model.reconstruct_tensor(as_tensor(batch)), target);
      total += loss.item() * static_cast<double>(b);
      nd::backward(loss);
      opt.step();
    }
    out.epoch_loss.push_back(total / static_cast<double>(n));
  }
  const nd::RowMatrixXd recon = out.model.reconstruct_rows(vectors);
  out.final_mse = (recon - vectors).squaredNorm() / static_cast<double>(vectors.size());
  return out;
}

}  // namespace ldiag
