#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <set>
#include <thread>

#include "json_util.hpp"
#include "ldiag/evaluation.hpp"

namespace ldiag {

namespace {

struct FoldOutcome {
  std::vector<MetricReport> reports;
  std::vector<std::string> warnings;
};

FoldOutcome run_fold(const ResponseMatrix& r, const QMatrix& q, const CvConfig& config, const FoldPlan& plan,
                     const std::vector<Channel>& channels, int f) {
  using Clock = std::chrono::steady_clock;
  FoldOutcome out;
  const auto test = plan.test_cells(f);
  const auto train_r = r.masked(test);
  const std::uint64_t fold_seed = derive_seed(config.seed, static_cast<std::uint64_t>(f));
  for (const auto& c : test)
    if (train_r.observed(c.learner, c.exercise)) throw Error(Errc::kLeakage, "a test cell survived masking");

  PsychConfig psych = config.psych;
  psych.mcmc.seed = derive_seed(fold_seed, 7);
  const auto fitted = fit_channels(train_r, q, channels, psych);
  const Eigen::VectorXd y = labels_of(r, test);
  const auto n = static_cast<Index>(test.size());
  const std::string tag = "fold " + std::to_string(f) + ": ";

  auto record = [&](const std::string& name, const std::function<Eigen::VectorXd()>& score) {
    const auto t0 = Clock::now();
    const Eigen::VectorXd p = score();
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    out.reports.push_back({name, f, auc(y, p), rmse(y, p), n, config.timing ? ms : 0.0});
  };

  for (const auto& spec : config.models) {
    LdmConfig cfg = spec.config;
    cfg.seed = fold_seed;
    TrainingReport rep;
    const auto model = fit_ldm(train_r, q, cfg, &fitted, &rep);
    if (model.data_digest != fitted.data_digest) throw Error(Errc::kLeakage, "model provenance differs from the fold");
    for (const auto& w : rep.warnings) out.warnings.push_back(tag + spec.name + ": " + w);
    record(spec.name, [&] { return predict_cells(model, test); });
  }
  for (auto ch : config.baselines) {
    record(channel_name(ch), [&] { return baseline_predict(ch, fitted, test, config.baseline_options); });
  }
  if (config.truth != nullptr) {
    record("oracle", [&] {
      Eigen::VectorXd p(n);
      for (Index i = 0; i < n; ++i) p(i) = config.truth->bayes_prob(test[static_cast<std::size_t>(i)].learner,
                                                                      test[static_cast<std::size_t>(i)].exercise);
      return p;
    });
  }
  return out;
}

}  // namespace

const MetricReport& CvResult::mean_of(const std::string& model) const {
  for (const auto& m : mean)
    if (m.model == model) return m;
  throw Error(Errc::kInvalidArgument, "no report for model " + model);
}

CvResult cross_validate(const ResponseMatrix& r, const QMatrix& q, const CvConfig& config) {
  if (config.jobs < 1) throw Error(Errc::kInvalidArgument, "jobs must be positive");
  std::set<std::string> names;
  for (const auto& m : config.models) {
    m.config.validate();
    if (!names.insert(m.name).second) throw Error(Errc::kInvalidArgument, "duplicate model name " + m.name);
  }
  if (config.truth != nullptr && (config.truth->bayes_prob.rows() != r.num_learners() ||
                                  config.truth->bayes_prob.cols() != r.num_exercises())) {
    throw Error(Errc::kShapeMismatch, "ground truth does not match the response matrix");
  }
  q.check_aligned(r);
  const auto plan = split_folds(r, config.folds, config.seed);

  std::vector<Channel> channels;
  auto want = [&](Channel c) {
    if (std::find(channels.begin(), channels.end(), c) == channels.end()) channels.push_back(c);
  };
  for (const auto& m : config.models)
    for (auto c : channels_for(m.config.variant)) want(c);
  for (auto c : config.baselines) want(c);
  std::sort(channels.begin(), channels.end());

  std::vector<FoldOutcome> outcomes(static_cast<std::size_t>(config.folds));
  std::vector<std::exception_ptr> errors(outcomes.size());
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int f = next++; f < config.folds; f = next++) {
      try {
        outcomes[static_cast<std::size_t>(f)] = run_fold(r, q, config, plan, channels, f);
      } catch (...) {
        errors[static_cast<std::size_t>(f)] = std::current_exception();
      }
    }
  };
  const int jobs = std::min(config.jobs, config.folds);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  CvResult result;
  for (auto& o : outcomes) {
    result.folds.insert(result.folds.end(), o.reports.begin(), o.reports.end());
    result.warnings.insert(result.warnings.end(), o.warnings.begin(), o.warnings.end());
  }
  for (const auto& first : outcomes.front().reports) {
    MetricReport m{first.model, -1, 0.0, 0.0, 0, 0.0};
    for (const auto& rep : result.folds) {
      if (rep.model != first.model) continue;
      m.auc += rep.auc / config.folds;
      m.rmse += rep.rmse / config.folds;
      m.n_cells += rep.n_cells;
      m.wall_clock_ms += rep.wall_clock_ms / config.folds;
    }
    result.mean.push_back(m);
  }
  return result;
}

std::string report_csv(const CvResult& result) {
  std::string out = "fold,model,auc,rmse,n_cells,wall_clock_ms\n";
  auto row = [&](const MetricReport& m) {
    out += (m.fold < 0 ? std::string("mean") : std::to_string(m.fold)) + "," + m.model + "," + format_double(m.auc) +
           "," + format_double(m.rmse) + "," + std::to_string(m.n_cells) + "," + format_double(m.wall_clock_ms) + "\n";
  };
  for (const auto& m : result.folds) row(m);
  for (const auto& m : result.mean) row(m);
  return out;
}

std::string report_json(const CvResult& result) {
  auto rows = [](const std::vector<MetricReport>& v) {
    detail::Json a = detail::Json::array();
    for (const auto& m : v) {
      a.push_back({{"fold", m.fold < 0 ? detail::Json("mean") : detail::Json(m.fold)},
                   {"model", m.model},
                   {"auc", m.auc},
                   {"rmse", m.rmse},
                   {"n_cells", m.n_cells},
                   {"wall_clock_ms", m.wall_clock_ms}});
    }
    return a;
  };
  return detail::Json{{"folds", rows(result.folds)}, {"mean", rows(result.mean)}, {"warnings", result.warnings}}
             .dump(1);
}

}  // namespace ldiag
