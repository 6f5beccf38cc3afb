#include <cmath>

#include <Eigen/Eigenvalues>

#include "em_common.hpp"
#include "ldiag/psychometrics.hpp"

namespace ldiag {

namespace {

constexpr double kMaxDisc = 4.0;
constexpr double kMaxAbsIntercept = 8.0;
constexpr double kMaxGuess = 0.5;

struct ProductGrid {
  Eigen::MatrixXd nodes;  // G x m
  Eigen::VectorXd log_weights;
};

ProductGrid product_grid(int dims, int points) {
  Eigen::VectorXd x, w;
  gauss_hermite(points, x, w);
  Index g = 1;
  for (int d = 0; d < dims; ++d) g *= points;
  ProductGrid grid;
  grid.nodes.resize(g, dims);
  grid.log_weights.resize(g);
  for (Index idx = 0; idx < g; ++idx) {
    Index rest = idx;
    double lw = 0.0;
    for (int d = 0; d < dims; ++d) {
      const Index k = rest % points;
      rest /= points;
      grid.nodes(idx, d) = x(k);
      lw += std::log(w(k));
    }
    grid.log_weights(idx) = lw;
  }
  return grid;
}

}  // namespace

void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  if (n < 1) throw Error(Errc::kInvalidArgument, "quadrature needs at least one node");
  // Jacobi matrix of the probabilists' Hermite recurrence.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    jacobi(i, i - 1) = std::sqrt(static_cast<double>(i));
    jacobi(i - 1, i) = jacobi(i, i - 1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  nodes = solver.eigenvalues();
  weights = solver.eigenvectors().row(0).transpose().array().square();
  weights /= weights.sum();
}

MirtFit fit_mirt_em(const ResponseMatrix& r, int dims, const EmConfig& config) {
  if (dims > kMaxMirtDims) throw Error(Errc::kDimensionTooLarge, "MIRT supports at most 4 dimensions");
  if (dims < 1) throw Error(Errc::kInvalidArgument, "MIRT needs at least one dimension");
  const Index J = r.num_exercises();
  const ProductGrid grid = product_grid(dims, config.quadrature_points);
  const Index G = grid.nodes.rows();
  const Eigen::MatrixXd y = r.outcome_matrix();
  const Eigen::MatrixXd mask = r.mask_matrix();
  const Eigen::MatrixXd fail = mask - y;
  const double D = config.scale;

  MirtFit fit;
  fit.items.scale = D;
  fit.items.discrimination.resize(J, dims);
  fit.items.difficulty.resize(J);
  fit.items.guess = Eigen::VectorXd::Constant(J, 0.05);
  for (Index j = 0; j < J; ++j) {
    // Asymmetric start so the dimensions do not stay interchangeable.
    for (int d = 0; d < dims; ++d) fit.items.discrimination(j, d) = (j % dims == d) ? 1.0 : 0.4;
    const double seen = mask.col(j).sum();
    const double p = detail::clamp(seen > 0 ? y.col(j).sum() / seen : 0.5, 0.02, 0.98);
    fit.items.difficulty(j) = std::log(p / (1.0 - p)) / D;
  }
  std::vector<bool> frozen(static_cast<std::size_t>(J), false);
  for (const auto& d : detail::find_degenerate(r)) {
    frozen[static_cast<std::size_t>(d.item)] = true;
    fit.diagnostics.degenerate_items.push_back(d.item);
    fit.items.guess(d.item) = 0.0;
    if (d.outcome >= 0) fit.items.difficulty(d.item) = d.outcome == 1 ? kMaxAbsIntercept : -kMaxAbsIntercept;
    fit.diagnostics.warnings.push_back("item " + r.exercise_ids()[d.item] +
                                       " has no response variation; guess pinned to 0");
  }

  Eigen::MatrixXd log_p(J, G), log_q(J, G);
  auto tables = [&] {
    const Eigen::MatrixXd z = (grid.nodes * fit.items.discrimination.transpose()).transpose();  // J x G
    for (Index j = 0; j < J; ++j) {
      const double c = fit.items.guess(j);
      for (Index g = 0; g < G; ++g) {
        const double p = detail::clamp(c + (1.0 - c) * logistic(D * (z(j, g) + fit.items.difficulty(j))), 1e-12,
                                       1.0 - 1e-12);
        log_p(j, g) = std::log(p);
        log_q(j, g) = std::log1p(-p);
      }
    }
  };

  std::vector<double> steps(static_cast<std::size_t>(J), 1.0);
  detail::EStep e;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    tables();
    e = detail::run_estep(y, fail, mask, log_p, log_q, grid.log_weights);
    auto& trace = fit.diagnostics.log_likelihood;
    if (!trace.empty() && std::abs(e.log_likelihood - trace.back()) < config.tolerance) {
      trace.push_back(e.log_likelihood);
      fit.diagnostics.converged = true;
      break;
    }
    trace.push_back(e.log_likelihood);

    for (Index j = 0; j < J; ++j) {
      if (frozen[static_cast<std::size_t>(j)]) continue;
      const Eigen::VectorXd rc = e.correct.row(j).transpose();
      const Eigen::VectorXd nt = e.total.row(j).transpose();
      const double n_obs = std::max(nt.sum(), 1e-12);
      // p = [a_1..a_m, d, c]
      auto objective = [&](const Eigen::VectorXd& p, Eigen::VectorXd& grad) {
        const Eigen::VectorXd a = p.head(dims);
        const double d = p(dims), c = p(dims + 1);
        const Eigen::VectorXd z = grid.nodes * a;
        double f = 0.0;
        grad.setZero();
        for (Index g = 0; g < G; ++g) {
          const double s = logistic(D * (z(g) + d));
          const double prob = detail::clamp(c + (1.0 - c) * s, 1e-12, 1.0 - 1e-12);
          f += rc(g) * std::log(prob) + (nt(g) - rc(g)) * std::log1p(-prob);
          const double dfdp = rc(g) / prob - (nt(g) - rc(g)) / (1.0 - prob);
          const double dz = dfdp * (1.0 - c) * s * (1.0 - s) * D;
          grad.head(dims) += dz * grid.nodes.row(g).transpose();
          grad(dims) += dz;
          grad(dims + 1) += dfdp * (1.0 - s);
        }
        grad /= n_obs;
        return f / n_obs;
      };
      auto project = [dims](Eigen::VectorXd& p) {
        for (int k = 0; k < dims; ++k) p(k) = detail::clamp(p(k), 0.0, kMaxDisc);
        p(dims) = detail::clamp(p(dims), -kMaxAbsIntercept, kMaxAbsIntercept);
        p(dims + 1) = detail::clamp(p(dims + 1), 0.0, kMaxGuess);
      };
      Eigen::VectorXd p(dims + 2);
      p.head(dims) = fit.items.discrimination.row(j).transpose();
      p(dims) = fit.items.difficulty(j);
      p(dims + 1) = fit.items.guess(j);
      detail::projected_ascent(p, objective, project, config.inner_steps, steps[static_cast<std::size_t>(j)]);
      fit.items.discrimination.row(j) = p.head(dims).transpose();
      fit.items.difficulty(j) = p(dims);
      fit.items.guess(j) = p(dims + 1);
    }
    fit.diagnostics.iterations = iter + 1;
  }
  if (!fit.diagnostics.converged) {
    tables();
    e = detail::run_estep(y, fail, mask, log_p, log_q, grid.log_weights);
    fit.diagnostics.log_likelihood.push_back(e.log_likelihood);
  }
  fit.learners.ability = e.posterior * grid.nodes;
  return fit;
}

}  // namespace ldiag
