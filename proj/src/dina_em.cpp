#include <cmath>

#include "em_common.hpp"
#include "ldiag/psychometrics.hpp"

namespace ldiag {

BinaryGrid enumerate_profiles(Index n_knowledge) {
  if (n_knowledge < 1 || n_knowledge > kMaxKnowledge) {
    throw Error(Errc::kTooManyKnowledgePoints, "knowledge point count must be in [1, 20]");
  }
  const Index L = Index{1} << n_knowledge;
  BinaryGrid profiles(L, n_knowledge);
  for (Index l = 0; l < L; ++l)
    for (Index k = 0; k < n_knowledge; ++k) profiles(l, k) = static_cast<std::int8_t>((l >> k) & 1);
  return profiles;
}

DinaFit fit_dina_em(const ResponseMatrix& r, const QMatrix& q, const EmConfig& config) {
  q.check_aligned(r);
  if (q.num_knowledge() > kMaxKnowledge) {
    throw Error(Errc::kTooManyKnowledgePoints, std::to_string(q.num_knowledge()) + " knowledge points");
  }
  const Index J = r.num_exercises();
  DinaFit fit;
  fit.profiles = enumerate_profiles(q.num_knowledge());
  const Index L = fit.profiles.rows();
  fit.ideal.resize(J, L);
  for (Index j = 0; j < J; ++j)
    for (Index l = 0; l < L; ++l)
      fit.ideal(j, l) = dina_ideal_response(fit.profiles.row(l), q.cells().row(j));

  const Eigen::MatrixXd y = r.outcome_matrix();
  const Eigen::MatrixXd mask = r.mask_matrix();
  const Eigen::MatrixXd fail = mask - y;

  fit.items.slip = Eigen::VectorXd::Constant(J, 0.2);
  fit.items.guess = Eigen::VectorXd::Constant(J, 0.2);
  fit.class_prior = Eigen::VectorXd::Constant(L, 1.0 / static_cast<double>(L));
  for (const auto& d : detail::find_degenerate(r)) {
    fit.diagnostics.degenerate_items.push_back(d.item);
    fit.diagnostics.warnings.push_back("item " + r.exercise_ids()[d.item] + " has no response variation");
  }

  Eigen::MatrixXd log_p(J, L), log_q(J, L);
  auto tables = [&] {
    for (Index j = 0; j < J; ++j) {
      const double s = fit.items.slip(j), g = fit.items.guess(j);
      for (Index l = 0; l < L; ++l) {
        const double p = fit.ideal(j, l) > 0.5 ? 1.0 - s : g;
        log_p(j, l) = std::log(p);
        log_q(j, l) = std::log1p(-p);
      }
    }
  };

  detail::EStep e;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    tables();
    e = detail::run_estep(y, fail, mask, log_p, log_q, fit.class_prior.array().max(1e-300).log().matrix());
    auto& trace = fit.diagnostics.log_likelihood;
    if (!trace.empty() && std::abs(e.log_likelihood - trace.back()) < config.tolerance) {
      trace.push_back(e.log_likelihood);
      fit.diagnostics.converged = true;
      break;
    }
    trace.push_back(e.log_likelihood);

    // Closed-form M-step: expected counts split by the ideal response.
    const Eigen::VectorXd total1 = (e.total.array() * fit.ideal.array()).rowwise().sum();
    const Eigen::VectorXd correct1 = (e.correct.array() * fit.ideal.array()).rowwise().sum();
    const Eigen::VectorXd total0 = e.total.rowwise().sum() - total1;
    const Eigen::VectorXd correct0 = e.correct.rowwise().sum() - correct1;
    for (Index j = 0; j < J; ++j) {
      if (total0(j) > 1e-12) fit.items.guess(j) = detail::clamp(correct0(j) / total0(j), kDinaFloor, kDinaCeiling);
      if (total1(j) > 1e-12) {
        fit.items.slip(j) = detail::clamp((total1(j) - correct1(j)) / total1(j), kDinaFloor, kDinaCeiling);
      }
    }
    fit.class_prior = e.posterior.colwise().mean().transpose();
    fit.diagnostics.iterations = iter + 1;
  }
  if (!fit.diagnostics.converged) {
    tables();
    e = detail::run_estep(y, fail, mask, log_p, log_q, fit.class_prior.array().max(1e-300).log().matrix());
    fit.diagnostics.log_likelihood.push_back(e.log_likelihood);
  }

  fit.learners.posterior = std::move(e.posterior);
  const Eigen::MatrixXd marginal = fit.learners.posterior * fit.profiles.cast<double>();
  fit.learners.alpha = (marginal.array() >= 0.5).cast<std::int8_t>();
  return fit;
}

}  // namespace ldiag
