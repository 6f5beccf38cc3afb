#include <cmath>

#include "em_common.hpp"
#include "ldiag/psychometrics.hpp"

namespace ldiag {

namespace {

constexpr double kMinDisc = 0.01;
constexpr double kMaxDisc = 4.0;
constexpr double kMaxAbsDiff = 4.0;
constexpr double kMaxGuess = 0.5;

void check_estimable(const ResponseMatrix& r) {
  Index learners = 0;
  for (Index i = 0; i < r.num_learners(); ++i) {
    bool zero = false, one = false;
    for (Index j = 0; j < r.num_exercises(); ++j) {
      zero = zero || r(i, j) == 0;
      one = one || r(i, j) == 1;
    }
    learners += (zero && one) ? 1 : 0;
  }
  Index items = 0;
  for (Index j = 0; j < r.num_exercises(); ++j) {
    bool zero = false, one = false;
    for (Index i = 0; i < r.num_learners(); ++i) {
      zero = zero || r(i, j) == 0;
      one = one || r(i, j) == 1;
    }
    items += (zero && one) ? 1 : 0;
  }
  if (learners < 2 || items < 2) {
    throw Error(Errc::kTooFewObservations, "IRT needs >= 2 learners and >= 2 items with both outcomes observed");
  }
}

struct Grid {
  Eigen::VectorXd nodes;
  Eigen::VectorXd log_weights;
};

Grid ability_grid(const EmConfig& config) {
  Grid g;
  const int n = config.grid_points;
  g.nodes = Eigen::VectorXd::LinSpaced(n, -config.grid_bound, config.grid_bound);
  Eigen::VectorXd w = (-0.5 * g.nodes.array().square()).exp();
  w /= w.sum();
  g.log_weights = w.array().log();
  return g;
}

void item_tables(const IrtItemParams& items, const Eigen::VectorXd& nodes, Eigen::MatrixXd& log_p,
                 Eigen::MatrixXd& log_q) {
  const Index J = items.difficulty.size();
  log_p.resize(J, nodes.size());
  log_q.resize(J, nodes.size());
  for (Index j = 0; j < J; ++j) {
    for (Index q = 0; q < nodes.size(); ++q) {
      const double p = detail::clamp(
          irt_response(nodes(q), items.difficulty(j), items.discrimination(j), items.guess(j), items.scale),
          1e-12, 1.0 - 1e-12);
      log_p(j, q) = std::log(p);
      log_q(j, q) = std::log1p(-p);
    }
  }
}

}  // namespace

IrtItemParams irt_initial_items(const ResponseMatrix& r, const EmConfig& config) {
  const Index J = r.num_exercises();
  IrtItemParams items;
  items.scale = config.scale;
  items.difficulty.resize(J);
  items.discrimination = Eigen::VectorXd::Ones(J);
  items.guess = Eigen::VectorXd::Constant(J, 0.05);
  for (Index j = 0; j < J; ++j) {
    double ones = 0, seen = 0;
    for (Index i = 0; i < r.num_learners(); ++i) {
      if (!r.observed(i, j)) continue;
      seen += 1;
      ones += r(i, j);
    }
    const double p = detail::clamp(seen > 0 ? ones / seen : 0.5, 0.02, 0.98);
    items.difficulty(j) = detail::clamp(-std::log(p / (1.0 - p)) / config.scale, -kMaxAbsDiff, kMaxAbsDiff);
  }
  return items;
}

IrtFit fit_irt_em(const ResponseMatrix& r, const EmConfig& config) {
  check_estimable(r);
  const Index J = r.num_exercises();
  const Grid grid = ability_grid(config);
  const Eigen::MatrixXd y = r.outcome_matrix();
  const Eigen::MatrixXd mask = r.mask_matrix();
  const Eigen::MatrixXd fail = mask - y;

  IrtFit fit;
  fit.items = irt_initial_items(r, config);
  std::vector<bool> frozen(static_cast<std::size_t>(J), false);
  for (const auto& d : detail::find_degenerate(r)) {
    frozen[static_cast<std::size_t>(d.item)] = true;
    fit.diagnostics.degenerate_items.push_back(d.item);
    if (d.outcome >= 0) {
      fit.items.difficulty(d.item) = d.outcome == 1 ? -kMaxAbsDiff : kMaxAbsDiff;
      fit.items.guess(d.item) = 0.0;
    }
    fit.diagnostics.warnings.push_back("item " + r.exercise_ids()[d.item] +
                                       " has no response variation; pinned to boundary values");
  }

  std::vector<double> steps(static_cast<std::size_t>(J), 1.0);
  Eigen::MatrixXd log_p, log_q;
  detail::EStep e;
  const double D = config.scale;
  const auto& x = grid.nodes;

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    item_tables(fit.items, x, log_p, log_q);
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
      auto objective = [&](const Eigen::VectorXd& p, Eigen::VectorXd& g) {
        const double a = p(0), b = p(1), c = p(2);
        double f = 0.0;
        g.setZero();
        for (Index q = 0; q < x.size(); ++q) {
          const double s = logistic(D * a * (x(q) - b));
          const double prob = detail::clamp(c + (1.0 - c) * s, 1e-12, 1.0 - 1e-12);
          f += rc(q) * std::log(prob) + (nt(q) - rc(q)) * std::log1p(-prob);
          const double dfdp = rc(q) / prob - (nt(q) - rc(q)) / (1.0 - prob);
          const double ds = (1.0 - c) * s * (1.0 - s) * D;
          g(0) += dfdp * ds * (x(q) - b);
          g(1) -= dfdp * ds * a;
          g(2) += dfdp * (1.0 - s);
        }
        g /= n_obs;
        return f / n_obs;
      };
      auto project = [](Eigen::VectorXd& p) {
        p(0) = detail::clamp(p(0), kMinDisc, kMaxDisc);
        p(1) = detail::clamp(p(1), -kMaxAbsDiff, kMaxAbsDiff);
        p(2) = detail::clamp(p(2), 0.0, kMaxGuess);
      };
      Eigen::VectorXd p(3);
      p << fit.items.discrimination(j), fit.items.difficulty(j), fit.items.guess(j);
      detail::projected_ascent(p, objective, project, config.inner_steps, steps[static_cast<std::size_t>(j)]);
      fit.items.discrimination(j) = p(0);
      fit.items.difficulty(j) = p(1);
      fit.items.guess(j) = p(2);
    }
    fit.diagnostics.iterations = iter + 1;
  }

  if (!fit.diagnostics.converged) {
    item_tables(fit.items, x, log_p, log_q);
    e = detail::run_estep(y, fail, mask, log_p, log_q, grid.log_weights);
    fit.diagnostics.log_likelihood.push_back(e.log_likelihood);
  }
  fit.learners.theta = e.posterior * x;
  return fit;
}

}  // namespace ldiag
