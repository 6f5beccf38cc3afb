#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "em_common.hpp"
#include "ldiag/psychometrics.hpp"

namespace ldiag {

namespace {

double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

struct Observation {
  Index item;
  int outcome;
};

// Acceptance bookkeeping for one block over the current window.
struct AcceptCounter {
  long long tried = 0;
  long long accepted = 0;
  long long total_tried = 0;
  long long total_accepted = 0;

  void record(bool ok) {
    ++tried;
    ++total_tried;
    accepted += ok ? 1 : 0;
    total_accepted += ok ? 1 : 0;
  }
  double window_rate() const { return tried > 0 ? static_cast<double>(accepted) / static_cast<double>(tried) : 1.0; }
  double overall() const {
    return total_tried > 0 ? static_cast<double>(total_accepted) / static_cast<double>(total_tried) : 0.0;
  }
  void reset_window() { tried = accepted = 0; }
};

}  // namespace

HoDinaFit fit_hodina_mcmc(const ResponseMatrix& r, const QMatrix& q, const McmcConfig& config) {
  q.check_aligned(r);
  const Index N = r.num_learners();
  const Index J = r.num_exercises();
  const Index K = q.num_knowledge();
  if (K > kMaxKnowledge) throw Error(Errc::kTooManyKnowledgePoints, std::to_string(K) + " knowledge points");
  if (config.burn_in >= config.sweeps || config.burn_in < 0) {
    throw Error(Errc::kInvalidArgument, "burn-in must be in [0, sweeps)");
  }

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<Observation>> observed(static_cast<std::size_t>(N));
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j < J; ++j)
      if (r.observed(i, j)) observed[static_cast<std::size_t>(i)].push_back({j, r(i, j)});
  std::vector<std::vector<Index>> items_of_skill(static_cast<std::size_t>(K));
  for (Index j = 0; j < J; ++j)
    for (Index k = 0; k < K; ++k)
      if (q.needs(j, k)) items_of_skill[static_cast<std::size_t>(k)].push_back(j);

  // Chain state.
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(N);
  BinaryGrid alpha = BinaryGrid::Zero(N, K);
  Eigen::VectorXd slip = Eigen::VectorXd::Constant(J, 0.2);
  Eigen::VectorXd guess = Eigen::VectorXd::Constant(J, 0.2);
  Eigen::VectorXd lambda0 = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd lambda1 = Eigen::VectorXd::Ones(K);

  // Start mastery from per-skill proportion correct.
  for (Index i = 0; i < N; ++i) {
    Eigen::VectorXd hits = Eigen::VectorXd::Zero(K), seen = Eigen::VectorXd::Zero(K);
    for (const auto& o : observed[static_cast<std::size_t>(i)]) {
      for (Index k = 0; k < K; ++k) {
        if (!q.needs(o.item, k)) continue;
        seen(k) += 1;
        hits(k) += o.outcome;
      }
    }
    for (Index k = 0; k < K; ++k) alpha(i, k) = (seen(k) > 0 && hits(k) / seen(k) >= 0.5) ? 1 : 0;
  }
  // missing(i, j): required skills of item j that learner i lacks; eta = (missing == 0).
  RowMatrix<int> missing = RowMatrix<int>::Zero(N, J);
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j < J; ++j)
      for (Index k = 0; k < K; ++k) missing(i, j) += (q.needs(j, k) && alpha(i, k) == 0) ? 1 : 0;

  HoDinaFit fit;
  fit.diagnostics.degenerate_items.clear();
  for (const auto& d : detail::find_degenerate(r)) fit.diagnostics.degenerate_items.push_back(d.item);

  Eigen::VectorXd theta_sum = Eigen::VectorXd::Zero(N);
  Eigen::MatrixXd alpha_sum = Eigen::MatrixXd::Zero(N, K);
  Eigen::MatrixXd eta_sum = Eigen::MatrixXd::Zero(N, J);
  Eigen::VectorXd slip_sum = Eigen::VectorXd::Zero(J), guess_sum = Eigen::VectorXd::Zero(J);
  Eigen::VectorXd l0_sum = Eigen::VectorXd::Zero(K), l1_sum = Eigen::VectorXd::Zero(K);
  double min_lambda1 = std::numeric_limits<double>::infinity();

  AcceptCounter theta_acc, item_acc, lambda_acc;

  auto attr_loglik = [&](Index i, double th) {
    double ll = 0.0;
    for (Index k = 0; k < K; ++k) {
      const double z = lambda0(k) + lambda1(k) * th;
      ll += alpha(i, k) ? log_sigmoid(z) : log_sigmoid(-z);
    }
    return ll;
  };
  auto skill_loglik = [&](Index k, double l0, double l1) {
    double ll = 0.0;
    for (Index i = 0; i < N; ++i) {
      const double z = l0 + l1 * theta(i);
      ll += alpha(i, k) ? log_sigmoid(z) : log_sigmoid(-z);
    }
    return ll;
  };
  auto item_loglik = [](const Eigen::Vector4d& n, double s, double g) {
    // n = (eta1 & correct, eta1 & wrong, eta0 & correct, eta0 & wrong)
    return n(0) * std::log1p(-s) + n(1) * std::log(s) + n(2) * std::log(g) + n(3) * std::log1p(-g);
  };

  Eigen::VectorXd log1ms(J), logs(J), logg(J), log1mg(J);

  for (int sweep = 0; sweep < config.sweeps; ++sweep) {
    // 1. theta | alpha, lambda (random-walk Metropolis)
    for (Index i = 0; i < N; ++i) {
      const double cur = theta(i);
      const double prop = cur + config.theta_step * normal(rng);
      const double log_ratio = (-0.5 * prop * prop + attr_loglik(i, prop)) - (-0.5 * cur * cur + attr_loglik(i, cur));
      const bool ok = std::log(unit(rng)) < log_ratio;
      if (ok) theta(i) = prop;
      theta_acc.record(ok);
    }

    // 2. alpha_ik | rest (Gibbs)
    for (Index j = 0; j < J; ++j) {
      log1ms(j) = std::log1p(-slip(j));
      logs(j) = std::log(slip(j));
      logg(j) = std::log(guess(j));
      log1mg(j) = std::log1p(-guess(j));
    }
    for (Index i = 0; i < N; ++i) {
      const auto& obs = observed[static_cast<std::size_t>(i)];
      for (Index k = 0; k < K; ++k) {
        const double z = lambda0(k) + lambda1(k) * theta(i);
        double logit = log_sigmoid(z) - log_sigmoid(-z);
        const int own = alpha(i, k) == 0 ? 1 : 0;  // this skill's share of missing(i, j)
        for (const auto& o : obs) {
          if (!q.needs(o.item, k)) continue;
          const bool eta1 = missing(i, o.item) - own == 0;
          const double ll1 = eta1 ? (o.outcome ? log1ms(o.item) : logs(o.item))
                                  : (o.outcome ? logg(o.item) : log1mg(o.item));
          const double ll0 = o.outcome ? logg(o.item) : log1mg(o.item);
          logit += ll1 - ll0;
        }
        const std::int8_t next = unit(rng) < logistic(logit) ? 1 : 0;
        if (next != alpha(i, k)) {
          const int delta = next == 1 ? -1 : 1;
          for (Index j : items_of_skill[static_cast<std::size_t>(k)]) missing(i, j) += delta;
          alpha(i, k) = next;
        }
      }
    }

    // 3. (slip_j, guess_j) jointly, uniform(0, 0.5) priors with s + g < 1
    for (Index j = 0; j < J; ++j) {
      Eigen::Vector4d n = Eigen::Vector4d::Zero();
      for (Index i = 0; i < N; ++i) {
        if (!r.observed(i, j)) continue;
        const bool eta1 = missing(i, j) == 0;
        const int y = r(i, j);
        n(eta1 ? (y ? 0 : 1) : (y ? 2 : 3)) += 1;
      }
      const double s_new = slip(j) + config.item_step * normal(rng);
      const double g_new = guess(j) + config.item_step * normal(rng);
      bool ok = false;
      if (s_new > 0.0 && s_new < 0.5 && g_new > 0.0 && g_new < 0.5 && s_new + g_new < 1.0) {
        const double log_ratio = item_loglik(n, s_new, g_new) - item_loglik(n, slip(j), guess(j));
        ok = std::log(unit(rng)) < log_ratio;
      }
      if (ok) {
        slip(j) = s_new;
        guess(j) = g_new;
      }
      item_acc.record(ok);
    }

    // 4. (lambda0_k, lambda1_k), N(0, var) priors, lambda1 truncated to > 0
    const double inv_var = 1.0 / config.lambda_prior_var;
    for (Index k = 0; k < K; ++k) {
      const double cur_ll = skill_loglik(k, lambda0(k), lambda1(k));
      const double l0_new = lambda0(k) + config.lambda_step * normal(rng);
      const double l1_new = lambda1(k) + config.lambda_step * normal(rng);
      bool ok = false;
      if (l1_new > 0.0) {
        const double log_prior_new = -0.5 * inv_var * (l0_new * l0_new + l1_new * l1_new);
        const double log_prior_cur = -0.5 * inv_var * (lambda0(k) * lambda0(k) + lambda1(k) * lambda1(k));
        const double log_ratio = skill_loglik(k, l0_new, l1_new) + log_prior_new - cur_ll - log_prior_cur;
        ok = std::log(unit(rng)) < log_ratio;
      }
      if (ok) {
        lambda0(k) = l0_new;
        lambda1(k) = l1_new;
      }
      lambda_acc.record(ok);
      min_lambda1 = std::min(min_lambda1, lambda1(k));
    }

    if ((sweep + 1) % config.divergence_window == 0) {
      const double rates[3] = {theta_acc.window_rate(), item_acc.window_rate(), lambda_acc.window_rate()};
      if (rates[0] < config.min_acceptance || rates[1] < config.min_acceptance || rates[2] < config.min_acceptance) {
        std::ostringstream msg;
        msg << "acceptance below " << config.min_acceptance << " in sweeps " << sweep + 1 - config.divergence_window
            << ".." << sweep << " (theta " << rates[0] << ", slip/guess " << rates[1] << ", lambda " << rates[2]
            << ")";
        throw Error(Errc::kChainDiverged, msg.str());
      }
      theta_acc.reset_window();
      item_acc.reset_window();
      lambda_acc.reset_window();
    }

    if (sweep >= config.burn_in) {
      theta_sum += theta;
      alpha_sum += alpha.cast<double>();
      eta_sum += (missing.array() == 0).cast<double>().matrix();
      slip_sum += slip;
      guess_sum += guess;
      l0_sum += lambda0;
      l1_sum += lambda1;
    }
  }

  const double kept = static_cast<double>(config.sweeps - config.burn_in);
  auto& p = fit.params;
  p.theta = theta_sum / kept;
  p.alpha_mean = alpha_sum / kept;
  p.alpha = (p.alpha_mean.array() >= 0.5).cast<std::int8_t>();
  p.slip = slip_sum / kept;
  p.guess = guess_sum / kept;
  p.lambda0 = l0_sum / kept;
  p.lambda1 = l1_sum / kept;
  p.eta_mean = eta_sum / kept;
  fit.diagnostics.sweeps = config.sweeps;
  fit.diagnostics.theta_acceptance = theta_acc.overall();
  fit.diagnostics.item_acceptance = item_acc.overall();
  fit.diagnostics.lambda_acceptance = lambda_acc.overall();
  fit.diagnostics.min_lambda1_sample = min_lambda1;
  return fit;
}

}  // namespace ldiag
