#include <algorithm>
#include <numeric>
#include <random>

#include "ldiag/diagnosis.hpp"
#include "ldiag/evaluation.hpp"

namespace ldiag {

namespace {

// Sub-seed streams of LdmConfig::seed.
enum Stream : std::uint64_t {
  kLearnerSae = 1,
  kExerciseSae = 2,
  kNetworkInit = 3,
  kShuffle = 4,
  kDropout = 5,
  kValidation = 6,
  kPsych = 7,
};

std::vector<Index> observed_rows(const ResponseMatrix& r, bool learners) {
  std::vector<Index> out;
  const Index n = learners ? r.num_learners() : r.num_exercises();
  for (Index i = 0; i < n; ++i) {
    const bool any = learners ? (r.cells().row(i).array() != ResponseMatrix::kMissing).any()
                              : (r.cells().col(i).array() != ResponseMatrix::kMissing).any();
    if (any) out.push_back(i);
  }
  return out;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<Index>& rows) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

double validation_score(const Eigen::VectorXd& y, const Eigen::VectorXd& p) {
  try {
    return auc(y, p);
  } catch (const Error& e) {
    if (e.code() != Errc::kSingleClassLabels) throw;
    return 1.0 - rmse(y, p);
  }
}

}  // namespace

std::pair<std::vector<Cell>, std::vector<Cell>> validation_split(const ResponseMatrix& r, double fraction,
                                                                 std::uint64_t seed) {
  auto cells = r.observed_cells();
  if (cells.size() < 2) throw Error(Errc::kNoValidationCells, "need at least two observed cells to hold some out");
  std::mt19937_64 rng(seed);
  std::shuffle(cells.begin(), cells.end(), rng);
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cells.size()))), 1, cells.size() - 1);
  std::vector<Cell> val(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<Cell> fit(cells.begin() + static_cast<std::ptrdiff_t>(n_val), cells.end());
  std::sort(val.begin(), val.end());
  std::sort(fit.begin(), fit.end());
  return {std::move(fit), std::move(val)};
}

LdmModel train_ldm(const ResponseMatrix& train_r, const CognitiveParameterSets& sets, const EncodingPlans& plans,
                   const SaeModel& learner_sae, const SaeModel& exercise_sae, const LdmConfig& config,
                   std::span<const Cell> train_cells, std::span<const Cell> val_cells, TrainingReport* report) {
  config.validate();
  if (train_cells.empty()) throw Error(Errc::kEmptyTrainingSet, "no training cells");
  if (val_cells.empty()) throw Error(Errc::kNoValidationCells, "no validation cells");
  const auto digest = data_digest(train_r);
  if (sets.data_digest != digest) {
    throw Error(Errc::kLeakage, "parameter sets were not derived from the training responses");
  }
  for (const auto* part : {&train_cells, &val_cells})
    for (const auto& c : *part)
      if (!train_r.observed(c.learner, c.exercise)) {
        throw Error(Errc::kLeakage, "cell (" + std::to_string(c.learner) + ", " + std::to_string(c.exercise) +
                                        ") is not an observed training cell");
      }

  TrainingReport local;
  TrainingReport& rep = report ? *report : local;

  LdmModel model;
  model.config = config;
  model.sets = sets;
  model.plans = plans;
  model.learner_sae = learner_sae;
  model.exercise_sae = exercise_sae;
  model.data_digest = digest;
  model.refresh_latents();
  model.network = LdmNetwork(sets.sc.cols(), sets.ec.cols(), config, derive_seed(config.seed, kNetworkInit));

  const Eigen::VectorXd y_train = labels_of(train_r, train_cells);
  const Eigen::VectorXd y_val = labels_of(train_r, val_cells);
  auto params = model.network.parameters();
  nd::Adam opt(params, {.learning_rate = config.learning_rate});

  std::vector<std::size_t> order(train_cells.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(config.seed, kShuffle));
  const std::uint64_t dropout_root = derive_seed(config.seed, kDropout);

  std::vector<Eigen::VectorXd> best;
  for (const auto& p : params) best.push_back(p.value());
  rep.best_val_auc = validation_score(y_val, predict_cells(model, val_cells));
  rep.best_epoch = 0;
  int since_best = 0;
  std::uint64_t step = 0;
  const auto bsz = static_cast<std::size_t>(config.batch);
  std::vector<Cell> batch_cells;
  Eigen::VectorXd y_batch;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bsz) {
      const std::size_t b = std::min(bsz, order.size() - start);
      batch_cells.resize(b);
      y_batch.resize(static_cast<Index>(b));
      for (std::size_t i = 0; i < b; ++i) {
        batch_cells[i] = train_cells[order[start + i]];
        y_batch(static_cast<Index>(i)) = y_train(static_cast<Index>(order[start + i]));
      }
      const auto out = model.network.forward(gather_batch(model, batch_cells), true, derive_seed(dropout_root, step++));
      auto loss = nd::bce_loss(out.p, y_batch);
      total += loss.item() * static_cast<double>(b);
      nd::backward(loss);
      opt.step();
    }
    rep.train_loss.push_back(total / static_cast<double>(order.size()));
    const double score = validation_score(y_val, predict_cells(model, val_cells));
    rep.val_auc.push_back(score);
    if (score > rep.best_val_auc) {
      rep.best_val_auc = score;
      rep.best_epoch = epoch;
      since_best = 0;
      for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i].value();
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = best[i];
  return model;
}

LdmModel fit_ldm(const ResponseMatrix& train_r, const QMatrix& q, const LdmConfig& config,
                 const FittedChannels* fitted, TrainingReport* report) {
  config.validate();
  TrainingReport local;
  TrainingReport& rep = report ? *report : local;

  FittedChannels own;
  if (fitted == nullptr) {
    PsychConfig psych = config.psych;
    psych.mcmc.seed = derive_seed(config.seed, kPsych);
    own = fit_channels(train_r, q, channels_for(config.variant), psych);
    fitted = &own;
  } else if (fitted->data_digest != data_digest(train_r)) {
    throw Error(Errc::kLeakage, "fitted channels were not derived from the training responses");
  }
  const auto sets = build_parameter_sets(config.variant, *fitted, config.include_irt_guess);

  const auto learners = observed_rows(train_r, true);
  const auto exercises = observed_rows(train_r, false);
  const auto plans = build_encoding_plans(sets, config.bins, learners, exercises);
  for (const auto* plan : {&plans.learner, &plans.exercise})
    for (const auto& name : plan->constant_columns())
      rep.warnings.push_back("constant parameter column " + name + " encoded as a single bin");

  SaeModel learner_sae, exercise_sae;
  if (config.features == FeatureMode::kShallow) {
    learner_sae = SaeModel(plans.learner.width(), config.learner_latent, config.sae.hidden,
                           derive_seed(config.seed, kLearnerSae));
    exercise_sae = SaeModel(plans.exercise.width(), config.exercise_latent, config.sae.hidden,
                            derive_seed(config.seed, kExerciseSae));
  } else {
    SaeConfig sc = config.sae;
    sc.seed = derive_seed(config.seed, kLearnerSae);
    auto lt = train_sae(plans.learner.encode_rows(select_rows(sets.sc, learners)), config.learner_latent, sc);
    sc.seed = derive_seed(config.seed, kExerciseSae);
    auto et = train_sae(plans.exercise.encode_rows(select_rows(sets.ec, exercises)), config.exercise_latent, sc);
    rep.learner_sae_mse = lt.final_mse;
    rep.learner_sae_baseline = lt.baseline_mse;
    rep.exercise_sae_mse = et.final_mse;
    rep.exercise_sae_baseline = et.baseline_mse;
    if (config.sae.epochs > 0 && lt.final_mse >= lt.baseline_mse)
      rep.warnings.push_back("learner autoencoder did not beat the column-mean reconstruction");
    if (config.sae.epochs > 0 && et.final_mse >= et.baseline_mse)
      rep.warnings.push_back("exercise autoencoder did not beat the column-mean reconstruction");
    learner_sae = std::move(lt.model);
    exercise_sae = std::move(et.model);
  }

  const auto [fit_cells, val_cells] =
      validation_split(train_r, config.validation_fraction, derive_seed(config.seed, kValidation));
  return train_ldm(train_r, sets, plans, learner_sae, exercise_sae, config, fit_cells, val_cells, &rep);
}

}  // namespace ldiag
