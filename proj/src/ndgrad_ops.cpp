#include <algorithm>
#include <cmath>
#include <random>

#include "ldiag/ndgrad.hpp"

namespace ldiag::nd {

namespace {

using MapM = Eigen::Map<RowMatrixXd>;
using CMapM = Eigen::Map<const RowMatrixXd>;

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw Error(Errc::kShapeMismatch, std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

CMapM view(const Eigen::VectorXd& v, Index rows, Index cols) { return CMapM(v.data(), rows, cols); }

template <typename F, typename G>
Tensor elementwise(const Tensor& x, F&& f, G&& dfdx_from_y) {
  Eigen::VectorXd y = x.value().unaryExpr(f);
  return make_result(x.shape(), y, {x}, [x, dfdx_from_y](Node& out) {
    const Eigen::VectorXd d = out.value.binaryExpr(x.value(), dfdx_from_y);
    accumulate(*x.node(), out.grad.cwiseProduct(d));
  });
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || b.rank() != 1 || b.dim(0) != w.dim(0)) mismatch("dense weights", w.shape(), b.shape());
  const Index out_dim = w.dim(0), in_dim = w.dim(1);
  const bool batched = x.rank() == 2;
  if (!(x.rank() == 1 || batched) || x.shape().back() != in_dim) mismatch("dense", x.shape(), w.shape());
  const Index n = batched ? x.dim(0) : 1;
  const auto X = view(x.value(), n, in_dim);
  const auto W = view(w.value(), out_dim, in_dim);
  RowMatrixXd Y = X * W.transpose();
  Y.rowwise() += b.value().transpose();
  Shape shape = batched ? Shape{n, out_dim} : Shape{out_dim};
  return make_result(shape, Eigen::Map<Eigen::VectorXd>(Y.data(), Y.size()), {x, w, b},
                     [x, w, b, n, in_dim, out_dim](Node& out) {
                       const auto dY = view(out.grad, n, out_dim);
                       if (x.requires_grad()) {
                         RowMatrixXd dX = dY * view(w.value(), out_dim, in_dim);
                         accumulate(*x.node(), Eigen::Map<Eigen::VectorXd>(dX.data(), dX.size()));
                       }
                       if (w.requires_grad()) {
                         RowMatrixXd dW = dY.transpose() * view(x.value(), n, in_dim);
                         accumulate(*w.node(), Eigen::Map<Eigen::VectorXd>(dW.data(), dW.size()));
                       }
                       if (b.requires_grad()) accumulate(*b.node(), dY.colwise().sum().transpose());
                     });
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Index stride) {
  if (kernel.rank() != 3 || bias.rank() != 1 || bias.dim(0) != kernel.dim(0)) {
    mismatch("conv1d kernel", kernel.shape(), bias.shape());
  }
  if (stride < 1) throw Error(Errc::kInvalidArgument, "conv1d stride must be positive");
  const Index cout = kernel.dim(0), k = kernel.dim(1), cin = kernel.dim(2);
  Index n = 1, len = 0;
  if (x.rank() == 3) {
    n = x.dim(0);
    len = x.dim(1);
    if (x.dim(2) != cin) mismatch("conv1d", x.shape(), kernel.shape());
  } else if (x.rank() == 2) {
    len = x.dim(0);
    if (x.dim(1) != cin) mismatch("conv1d", x.shape(), kernel.shape());
  } else if (x.rank() == 1) {
    len = x.dim(0);
    if (cin != 1) mismatch("conv1d", x.shape(), kernel.shape());
  } else {
    mismatch("conv1d", x.shape(), kernel.shape());
  }
  const Index pad = (k - 1) / 2;
  const Index lout = (len + 2 * pad - k) / stride + 1;
  if (lout < 1) mismatch("conv1d (input shorter than kernel)", x.shape(), kernel.shape());
  const Index width = k * cin;

  auto cols = std::make_shared<RowMatrixXd>(RowMatrixXd::Zero(n * lout, width));
  const double* xv = x.value().data();
  for (Index s = 0; s < n; ++s) {
    for (Index t = 0; t < lout; ++t) {
      for (Index kk = 0; kk < k; ++kk) {
        const Index pos = t * stride + kk - pad;
        if (pos < 0 || pos >= len) continue;
        for (Index c = 0; c < cin; ++c) (*cols)(s * lout + t, kk * cin + c) = xv[(s * len + pos) * cin + c];
      }
    }
  }
  const auto K = view(kernel.value(), cout, width);
  RowMatrixXd Y = (*cols) * K.transpose();
  Y.rowwise() += bias.value().transpose();
  Shape shape = x.rank() == 3 ? Shape{n, lout, cout} : Shape{lout, cout};
  return make_result(shape, Eigen::Map<Eigen::VectorXd>(Y.data(), Y.size()), {x, kernel, bias},
                     [x, kernel, bias, cols, n, len, lout, cin, cout, k, pad, stride, width](Node& out) {
                       const auto dY = view(out.grad, n * lout, cout);
                       if (kernel.requires_grad()) {
                         RowMatrixXd dK = dY.transpose() * (*cols);
                         accumulate(*kernel.node(), Eigen::Map<Eigen::VectorXd>(dK.data(), dK.size()));
                       }
                       if (bias.requires_grad()) accumulate(*bias.node(), dY.colwise().sum().transpose());
                       if (x.requires_grad()) {
                         const RowMatrixXd dcols = dY * view(kernel.value(), cout, width);
                         Eigen::VectorXd dx = Eigen::VectorXd::Zero(n * len * cin);
                         for (Index s = 0; s < n; ++s)
                           for (Index t = 0; t < lout; ++t)
                             for (Index kk = 0; kk < k; ++kk) {
                               const Index pos = t * stride + kk - pad;
                               if (pos < 0 || pos >= len) continue;
                               for (Index c = 0; c < cin; ++c)
                                 dx((s * len + pos) * cin + c) += dcols(s * lout + t, kk * cin + c);
                             }
                         accumulate(*x.node(), dx);
                       }
                     });
}

Tensor maxpool1d(const Tensor& x, Index window) {
  if (window < 1) throw Error(Errc::kInvalidArgument, "maxpool1d window must be positive");
  Index n = 1, len = 0, ch = 1;
  if (x.rank() == 1) {
    len = x.dim(0);
  } else if (x.rank() == 2) {
    len = x.dim(0);
    ch = x.dim(1);
  } else if (x.rank() == 3) {
    n = x.dim(0);
    len = x.dim(1);
    ch = x.dim(2);
  } else {
    mismatch("maxpool1d", x.shape(), {window});
  }
  const Index lout = len / window;
  if (lout < 1) mismatch("maxpool1d (window longer than input)", x.shape(), {window});
  Eigen::VectorXd y(n * lout * ch);
  auto arg = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(y.size()));
  const auto& xv = x.value();
  for (Index s = 0; s < n; ++s)
    for (Index t = 0; t < lout; ++t)
      for (Index c = 0; c < ch; ++c) {
        Index best = (s * len + t * window) * ch + c;
        for (Index w = 1; w < window; ++w) {
          const Index idx = (s * len + t * window + w) * ch + c;
          if (xv(idx) > xv(best)) best = idx;
        }
        const Index o = (s * lout + t) * ch + c;
        y(o) = xv(best);
        (*arg)[static_cast<std::size_t>(o)] = best;
      }
  Shape shape = x.shape();
  shape[x.rank() == 3 ? 1 : 0] = lout;
  return make_result(shape, y, {x}, [x, arg](Node& out) {
    Eigen::VectorXd dx = Eigen::VectorXd::Zero(x.size());
    for (Index o = 0; o < out.grad.size(); ++o) dx((*arg)[static_cast<std::size_t>(o)]) += out.grad(o);
    accumulate(*x.node(), dx);
  });
}

Tensor relu(const Tensor& x) {
  return elementwise(x, [](double v) { return v > 0 ? v : 0.0; }, [](double, double in) { return in > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return elementwise(x, [](double v) { return stable_sigmoid(v); }, [](double y, double) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return elementwise(x, [](double v) { return std::tanh(v); }, [](double y, double) { return 1.0 - y * y; });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) mismatch("softmax", x.shape(), {});
  const Index cols = x.shape().back();
  const Index rows = x.size() / cols;
  RowMatrixXd y = view(x.value(), rows, cols);
  y.colwise() -= y.rowwise().maxCoeff();
  y = y.array().exp();
  y.array().colwise() /= y.rowwise().sum().array();
  return make_result(x.shape(), Eigen::Map<Eigen::VectorXd>(y.data(), y.size()), {x}, [x, rows, cols](Node& out) {
    const auto Y = view(out.value, rows, cols);
    const auto dY = view(out.grad, rows, cols);
    const Eigen::VectorXd dot = (Y.array() * dY.array()).rowwise().sum();
    RowMatrixXd dx = Y.array() * (dY.colwise() - dot).array();
    accumulate(*x.node(), Eigen::Map<Eigen::VectorXd>(dx.data(), dx.size()));
  });
}

Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(Errc::kInvalidArgument, "dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double scale = 1.0 / (1.0 - rate);
  Eigen::VectorXd mask(x.size());
  for (Index i = 0; i < mask.size(); ++i) mask(i) = unit(rng) < rate ? 0.0 : scale;
  return make_result(x.shape(), x.value().cwiseProduct(mask), {x},
                     [x, mask](Node& out) { accumulate(*x.node(), out.grad.cwiseProduct(mask)); });
}

Tensor concat(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw Error(Errc::kEmptyInput, "concat of nothing");
  Shape lead(xs[0].shape().begin(), xs[0].shape().end() - 1);
  std::vector<Index> widths;
  Index total = 0;
  for (const auto& t : xs) {
    if (t.rank() != xs[0].rank() || !std::equal(lead.begin(), lead.end(), t.shape().begin())) {
      mismatch("concat", xs[0].shape(), t.shape());
    }
    widths.push_back(t.shape().back());
    total += t.shape().back();
  }
  const Index rows = numel(lead);
  RowMatrixXd y(rows, total);
  Index off = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    y.middleCols(off, widths[i]) = view(xs[i].value(), rows, widths[i]);
    off += widths[i];
  }
  Shape shape = lead;
  shape.push_back(total);
  return make_result(shape, Eigen::Map<Eigen::VectorXd>(y.data(), y.size()), xs, [xs, widths, rows, total](Node& out) {
    const auto dY = view(out.grad, rows, total);
    Index off = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (xs[i].requires_grad()) {
        RowMatrixXd d = dY.middleCols(off, widths[i]);
        accumulate(*xs[i].node(), Eigen::Map<Eigen::VectorXd>(d.data(), d.size()));
      }
      off += widths[i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) mismatch("reshape", x.shape(), shape);
  return make_result(std::move(shape), x.value(), {x}, [x](Node& out) { accumulate(*x.node(), out.grad); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("add", a.shape(), b.shape());
  return make_result(a.shape(), a.value() + b.value(), {a, b}, [a, b](Node& out) {
    accumulate(*a.node(), out.grad);
    accumulate(*b.node(), out.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("mul", a.shape(), b.shape());
  return make_result(a.shape(), a.value().cwiseProduct(b.value()), {a, b}, [a, b](Node& out) {
    if (a.requires_grad()) accumulate(*a.node(), out.grad.cwiseProduct(b.value()));
    if (b.requires_grad()) accumulate(*b.node(), out.grad.cwiseProduct(a.value()));
  });
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) mismatch("batched_matmul", a.shape(), b.shape());
  const Index B = a.dim(0), M = a.dim(1), K = a.dim(2);
  const Index N = transpose_b ? b.dim(1) : b.dim(2);
  if ((transpose_b ? b.dim(2) : b.dim(1)) != K) mismatch("batched_matmul", a.shape(), b.shape());
  const Index bs = b.dim(1) * b.dim(2);
  const Index br = b.dim(1), bc = b.dim(2);
  Eigen::VectorXd y(B * M * N);
  for (Index s = 0; s < B; ++s) {
    const CMapM A(a.value().data() + s * M * K, M, K);
    const CMapM Bm(b.value().data() + s * bs, br, bc);
    MapM Y(y.data() + s * M * N, M, N);
    if (transpose_b) Y.noalias() = A * Bm.transpose();
    else Y.noalias() = A * Bm;
  }
  return make_result({B, M, N}, y, {a, b}, [a, b, B, M, K, N, bs, br, bc, transpose_b](Node& out) {
    Eigen::VectorXd da, db;
    if (a.requires_grad()) da = Eigen::VectorXd::Zero(a.size());
    if (b.requires_grad()) db = Eigen::VectorXd::Zero(b.size());
    for (Index s = 0; s < B; ++s) {
      const CMapM dY(out.grad.data() + s * M * N, M, N);
      const CMapM A(a.value().data() + s * M * K, M, K);
      const CMapM Bm(b.value().data() + s * bs, br, bc);
      if (a.requires_grad()) {
        MapM dA(da.data() + s * M * K, M, K);
        if (transpose_b) dA.noalias() = dY * Bm;
        else dA.noalias() = dY * Bm.transpose();
      }
      if (b.requires_grad()) {
        MapM dB(db.data() + s * bs, br, bc);
        if (transpose_b) dB.noalias() = dY.transpose() * A;
        else dB.noalias() = A.transpose() * dY;
      }
    }
    if (a.requires_grad()) accumulate(*a.node(), da);
    if (b.requires_grad()) accumulate(*b.node(), db);
  });
}

Tensor sum(const Tensor& x) {
  return make_result({}, Eigen::VectorXd::Constant(1, x.value().sum()), {x}, [x](Node& out) {
    accumulate(*x.node(), Eigen::VectorXd::Constant(x.size(), out.grad(0)));
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw Error(Errc::kEmptyInput, "mean of empty tensor");
  const double n = static_cast<double>(x.size());
  return make_result({}, Eigen::VectorXd::Constant(1, x.value().sum() / n), {x}, [x, n](Node& out) {
    accumulate(*x.node(), Eigen::VectorXd::Constant(x.size(), out.grad(0) / n));
  });
}

Tensor bce_loss(const Tensor& p, const Eigen::VectorXd& y) {
  if (p.size() != y.size() || p.size() == 0) mismatch("bce_loss", p.shape(), {y.size()});
  const double n = static_cast<double>(p.size());
  double total = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p.value()(i), kProbClamp, 1.0 - kProbClamp);
    total -= y(i) * std::log(q) + (1.0 - y(i)) * std::log(1.0 - q);
  }
  return make_result({}, Eigen::VectorXd::Constant(1, total / n), {p}, [p, y, n](Node& out) {
    Eigen::VectorXd g(p.size());
    for (Index i = 0; i < p.size(); ++i) {
      const double v = p.value()(i);
      const bool clamped = v < kProbClamp || v > 1.0 - kProbClamp;
      g(i) = clamped ? 0.0 : out.grad(0) * (-y(i) / v + (1.0 - y(i)) / (1.0 - v)) / n;
    }
    accumulate(*p.node(), g);
  });
}

Tensor mse_loss(const Tensor& pred, const Eigen::VectorXd& target) {
  if (pred.size() != target.size() || pred.size() == 0) mismatch("mse_loss", pred.shape(), {target.size()});
  const double n = static_cast<double>(pred.size());
  const Eigen::VectorXd diff = pred.value() - target;
  return make_result({}, Eigen::VectorXd::Constant(1, diff.squaredNorm() / n), {pred},
                     [pred, diff, n](Node& out) { accumulate(*pred.node(), (2.0 * out.grad(0) / n) * diff); });
}

}  // namespace ldiag::nd
