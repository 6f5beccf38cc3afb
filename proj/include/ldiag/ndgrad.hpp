#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// Every op whose inputs include a tensor that requires grad appends its
// output to the calling thread's tape; backward(loss) walks the tape in
// reverse, accumulating into .grad, and then clears it.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ldiag/error.hpp"

namespace ldiag::nd {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  Eigen::VectorXd value;
  Eigen::VectorXd grad;  // empty until a backward pass reaches this node
  bool requires_grad = false;
  std::function<void(Node&)> backward;
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Eigen::VectorXd values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v);
  /// Trainable leaf.
  static Tensor param(Shape shape, Eigen::VectorXd values) { return Tensor(std::move(shape), std::move(values), true); }

  const Shape& shape() const { return node_->shape; }
  Index dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  Index size() const { return node_->value.size(); }

  const Eigen::VectorXd& value() const { return node_->value; }
  Eigen::VectorXd& mutable_value() { return node_->value; }
  double item() const;

  bool has_grad() const { return node_->grad.size() > 0; }
  const Eigen::VectorXd& grad() const { return node_->grad; }
  /// Releases the gradient storage.
  void clear_grad() { node_->grad = Eigen::VectorXd(); }
  bool requires_grad() const { return node_->requires_grad; }

  /// Row-major [rows, cols] view; rank-1 tensors are one row.
  Eigen::Map<const RowMatrixXd> matrix(Index rows, Index cols) const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  bool defined() const { return static_cast<bool>(node_); }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, Eigen::VectorXd, std::vector<Tensor>, std::function<void(Node&)>);

  std::shared_ptr<Node> node_;
};

/// Builds an op output, recording it on the tape when any input requires grad.
/// backward receives the output node (its grad populated).
Tensor make_result(Shape shape, Eigen::VectorXd value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward);

/// Adds g into the node's gradient, allocating it on first use.
void accumulate(Node& node, const Eigen::Ref<const Eigen::VectorXd>& g);

/// Ops recorded on this thread's tape since the last backward.
std::size_t tape_size();
void clear_tape();

/// While alive, ops on this thread record nothing.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Throws kNonScalarLoss unless loss holds one value and kEmptyTape when
/// nothing was recorded.
void backward(const Tensor& loss);

// --- primitives ---------------------------------------------------------------------

/// x [N, in] or [in], W [out, in], b [out] -> [N, out] or [out].
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

/// x [N, L, Cin] (also [L, Cin] or [L] with Cin = 1), kernel [Cout, k, Cin],
/// bias [Cout]. Zero padding (k - 1) / 2 on both sides, so stride 1 with odd
/// k preserves length. Output [N, Lout, Cout] (or [Lout, Cout]).
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Index stride = 1);

/// Max over non-overlapping windows along the length axis; a trailing partial
/// window is dropped. Accepts [L], [L, C] and [N, L, C].
Tensor maxpool1d(const Tensor& x, Index window);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
/// Over the last axis.
Tensor softmax(const Tensor& x);
/// Inverted dropout: survivors are scaled by 1 / (1 - rate). Identity when
/// rate == 0 or training is false.
Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed);
/// Along the last axis; leading dimensions must agree.
Tensor concat(const std::vector<Tensor>& xs);
Tensor reshape(const Tensor& x, Shape shape);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a [B, M, K] times b [B, K, N] (or b [B, N, K] when transpose_b).
Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

inline constexpr double kProbClamp = 1e-7;

/// Mean binary cross-entropy; p is clamped into [1e-7, 1 - 1e-7] and the
/// gradient is zero where the clamp is active.
Tensor bce_loss(const Tensor& p, const Eigen::VectorXd& y);
Tensor mse_loss(const Tensor& pred, const Eigen::VectorXd& target);

/// Trainable leaf drawn uniformly from +-sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Shape shape, Index fan_in, Index fan_out, std::mt19937_64& rng);

// --- optimisation -----------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config = {});

  /// Applies one update from the current grads, then clears them. Throws
  /// kMissingGrad if a parameter has no gradient.
  void step();
  long long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Tensor> params_;
  std::vector<Eigen::VectorXd> m_, v_;
  AdamConfig config_;
  long long t_ = 0;
};

/// Central-difference check of d fn / d params. Returns the max over all
/// coordinates of |a - n| / max(1e-8, |a| + |n|).
double grad_check(const std::function<Tensor()>& fn, const std::vector<Tensor>& params, double h = 1e-4);
/// Single-input form: fn(point).
double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point, double h = 1e-4);

// --- checkpoints --------------------------------------------------------------------

using ParamMap = std::map<std::string, Tensor>;

inline constexpr int kCheckpointVersion = 1;

/// JSON {version, params: {name: {shape, values}}}; doubles are written in
/// shortest round-trip form, so load(save(p)) is bit-exact.
std::string save_checkpoint(const ParamMap& params);
ParamMap load_checkpoint(const std::string& text);

}  // namespace ldiag::nd
