#include "ldiag/ndgrad.hpp"

namespace ldiag::nd {

namespace {

struct Tape {
  std::vector<std::shared_ptr<Node>> nodes;
  bool enabled = true;
};

Tape& tape() {
  thread_local Tape t;
  return t;
}

}  // namespace

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

Tensor::Tensor(Shape shape, Eigen::VectorXd values, bool requires_grad) : node_(std::make_shared<Node>()) {
  if (numel(shape) != values.size()) {
    throw Error(Errc::kShapeMismatch, "shape " + shape_str(shape) + " needs " + std::to_string(numel(shape)) +
                                          " values, got " + std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const Index n = numel(shape);
  return Tensor(std::move(shape), Eigen::VectorXd::Zero(n), requires_grad);
}

Tensor Tensor::scalar(double v) { return Tensor({}, Eigen::VectorXd::Constant(1, v)); }

double Tensor::item() const {
  if (size() != 1) throw Error(Errc::kShapeMismatch, "item() on tensor of shape " + shape_str(shape()));
  return node_->value(0);
}

Eigen::Map<const RowMatrixXd> Tensor::matrix(Index rows, Index cols) const {
  if (rows * cols != size()) {
    throw Error(Errc::kShapeMismatch, "cannot view " + shape_str(shape()) + " as " + std::to_string(rows) + "x" +
                                          std::to_string(cols));
  }
  return Eigen::Map<const RowMatrixXd>(node_->value.data(), rows, cols);
}

Tensor make_result(Shape shape, Eigen::VectorXd value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  auto& t = tape();
  bool needs = false;
  if (t.enabled)
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->backward = std::move(backward_fn);
    t.nodes.push_back(node);
  }
  return Tensor(std::move(node));
}

void accumulate(Node& node, const Eigen::Ref<const Eigen::VectorXd>& g) {
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) node.grad = g;
  else node.grad += g;
}

std::size_t tape_size() { return tape().nodes.size(); }

void clear_tape() {
  for (auto& n : tape().nodes) n->backward = nullptr;
  tape().nodes.clear();
}

NoGradGuard::NoGradGuard() : previous_(tape().enabled) { tape().enabled = false; }
NoGradGuard::~NoGradGuard() { tape().enabled = previous_; }

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw Error(Errc::kNonScalarLoss, "loss has shape " + shape_str(loss.shape()));
  auto& nodes = tape().nodes;
  if (nodes.empty() || !loss.requires_grad()) throw Error(Errc::kEmptyTape, "no recorded operations reach the loss");
  accumulate(*loss.node(), Eigen::VectorXd::Ones(1));
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    Node& n = **it;
    if (n.grad.size() > 0 && n.backward) n.backward(n);
  }
  // Intermediate grads are not needed once propagated.
  for (auto& n : nodes) n->grad = Eigen::VectorXd();
  clear_tape();
}

}  // namespace ldiag::nd
