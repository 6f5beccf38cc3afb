#pragma once

// Shared pieces of the marginal-likelihood EM fitters.

#include <cmath>

#include <Eigen/Dense>

#include "ldiag/dataio.hpp"

namespace ldiag::detail {

struct EStep {
  double log_likelihood = 0.0;
  Eigen::MatrixXd posterior;  // learners x nodes
  Eigen::MatrixXd correct;    // items x nodes, expected correct responses
  Eigen::MatrixXd total;      // items x nodes, expected responses
};

/// y: observed successes, miss: observed failures (both learners x items);
/// log_p / log_q: items x nodes log P(correct) and log P(incorrect).
inline EStep run_estep(const Eigen::MatrixXd& y, const Eigen::MatrixXd& fail, const Eigen::MatrixXd& mask,
                       const Eigen::MatrixXd& log_p, const Eigen::MatrixXd& log_q,
                       const Eigen::VectorXd& log_prior) {
  EStep out;
  Eigen::MatrixXd ll = y * log_p + fail * log_q;
  ll.rowwise() += log_prior.transpose();
  const Eigen::VectorXd peak = ll.rowwise().maxCoeff();
  ll.colwise() -= peak;
  ll = ll.array().exp().matrix();
  const Eigen::VectorXd norm = ll.rowwise().sum();
  out.log_likelihood = (peak.array() + norm.array().log()).sum();
  out.posterior = ll.array().colwise() / norm.array();
  out.correct = y.transpose() * out.posterior;
  out.total = mask.transpose() * out.posterior;
  return out;
}

/// Projected gradient ascent with an adaptive step: a trial point is kept
/// only when it does not lower the objective, so every call is monotone.
/// f(x, grad) returns the objective and fills the gradient.
template <typename Objective, typename Project>
void projected_ascent(Eigen::VectorXd& x, Objective&& f, Project&& project, int steps, double& step) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd trial_grad(x.size());
  double value = f(x, grad);
  for (int s = 0; s < steps; ++s) {
    bool moved = false;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::VectorXd trial = x + step * grad;
      project(trial);
      if ((trial - x).squaredNorm() < 1e-28) break;
      const double trial_value = f(trial, trial_grad);
      if (trial_value >= value) {
        x = trial;
        value = trial_value;
        grad = trial_grad;
        step = std::min(step * 1.5, 1e3);
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
}

inline double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline double safe_log(double v) { return std::log(std::max(v, 1e-300)); }

// Items whose observed responses are all equal (or absent). outcome: 0 for
// all-incorrect, 1 for all-correct, -1 when nothing observed.
struct DegenerateItem {
  Index item;
  int outcome;
};

inline std::vector<DegenerateItem> find_degenerate(const ResponseMatrix& r) {
  std::vector<DegenerateItem> out;
  for (Index j = 0; j < r.num_exercises(); ++j) {
    Index ones = 0, seen = 0;
    for (Index i = 0; i < r.num_learners(); ++i) {
      if (!r.observed(i, j)) continue;
      ++seen;
      ones += r(i, j);
    }
    if (seen == 0) out.push_back({j, -1});
    else if (ones == 0) out.push_back({j, 0});
    else if (ones == seen) out.push_back({j, 1});
  }
  return out;
}

}  // namespace ldiag::detail
