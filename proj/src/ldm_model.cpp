#include <algorithm>

#include "json_util.hpp"
#include "ldiag/diagnosis.hpp"

namespace ldiag {

namespace {

constexpr Index kPredictChunk = 512;

nd::Tensor gather(const Eigen::MatrixXd& m, std::span<const Cell> cells, bool by_learner) {
  const auto b = static_cast<Index>(cells.size());
  nd::RowMatrixXd out(b, m.cols());
  for (Index i = 0; i < b; ++i) {
    const auto& c = cells[static_cast<std::size_t>(i)];
    out.row(i) = m.row(by_learner ? c.learner : c.exercise);
  }
  return nd::Tensor({b, m.cols()}, Eigen::Map<const Eigen::VectorXd>(out.data(), out.size()));
}

nd::Tensor gather(const nd::RowMatrixXd& m, std::span<const Cell> cells, bool by_learner) {
  const auto b = static_cast<Index>(cells.size());
  nd::RowMatrixXd out(b, m.cols());
  for (Index i = 0; i < b; ++i) {
    const auto& c = cells[static_cast<std::size_t>(i)];
    out.row(i) = m.row(by_learner ? c.learner : c.exercise);
  }
  return nd::Tensor({b, m.cols()}, Eigen::Map<const Eigen::VectorXd>(out.data(), out.size()));
}

void check_cells(const LdmModel& model, std::span<const Cell> cells) {
  for (const auto& c : cells) {
    if (c.learner < 0 || c.learner >= model.sets.sc.rows()) {
      throw Error(Errc::kUnknownLearner, "learner row " + std::to_string(c.learner) + " is outside the model");
    }
    if (c.exercise < 0 || c.exercise >= model.sets.ec.rows()) {
      throw Error(Errc::kUnknownExercise, "exercise row " + std::to_string(c.exercise) + " is outside the model");
    }
  }
}

}  // namespace

const char* feature_mode_name(FeatureMode m) {
  switch (m) {
    case FeatureMode::kFused: return "fused";
    case FeatureMode::kShallow: return "shallow";
    case FeatureMode::kDeep: return "deep";
  }
  return "?";
}

FeatureMode parse_feature_mode(const std::string& name) {
  for (auto m : {FeatureMode::kFused, FeatureMode::kShallow, FeatureMode::kDeep})
    if (name == feature_mode_name(m)) return m;
  throw Error(Errc::kInvalidArgument, "unknown feature mode '" + name + "' (fused, shallow, deep)");
}

void LdmConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(Errc::kInvalidArgument, what);
  };
  require(learner_latent > 0 && exercise_latent > 0, "latent widths must be positive");
  require(response_dim > 0, "d4 must be positive");
  require(attn_channels > 0 && conv_channels > 0, "channel counts must be positive");
  require(kernel > 0 && kernel % 2 == 1, "kernel must be a positive odd number");
  require(pool > 0, "pool window must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  require(learning_rate > 0.0, "learning rate must be positive");
  require(batch > 0, "batch must be positive");
  require(max_epochs >= 0 && patience > 0, "epochs must be nonnegative and patience positive");
  require(validation_fraction > 0.0 && validation_fraction < 1.0, "validation fraction must be in (0, 1)");
  require(bins >= 2, "bins must be at least 2");
  require(sae.epochs >= 0 && sae.batch > 0 && sae.learning_rate > 0.0, "bad autoencoder settings");
  require(psych.mirt_dims >= 1, "mirt dims must be positive");
}

std::string ldm_config_json(const LdmConfig& c) {
  detail::Json j{
      {"variant", variant_name(c.variant)},
      {"learner_latent", c.learner_latent},
      {"exercise_latent", c.exercise_latent},
      {"d4", c.response_dim},
      {"attn_channels", c.attn_channels},
      {"conv_channels", c.conv_channels},
      {"kernel", c.kernel},
      {"pool", c.pool},
      {"dropout", c.dropout},
      {"lr", c.learning_rate},
      {"batch", c.batch},
      {"epochs", c.max_epochs},
      {"patience", c.patience},
      {"validation_fraction", c.validation_fraction},
      {"bins", c.bins},
      {"sae_epochs", c.sae.epochs},
      {"sae_batch", c.sae.batch},
      {"sae_lr", c.sae.learning_rate},
      {"sae_hidden", c.sae.hidden},
      {"attention", c.attention},
      {"features", feature_mode_name(c.features)},
      {"include_irt_guess", c.include_irt_guess},
      {"mirt_dims", c.psych.mirt_dims},
      {"em_max_iterations", c.psych.em.max_iterations},
      {"em_tolerance", c.psych.em.tolerance},
      {"mcmc_sweeps", c.psych.mcmc.sweeps},
      {"mcmc_burn_in", c.psych.mcmc.burn_in},
      {"seed", c.seed},
  };
  return j.dump(1);
}

LdmConfig parse_ldm_config_json(const std::string& text, const LdmConfig& base) {
  const auto j = detail::parse_json(text, "config");
  if (!j.is_object()) throw Error(Errc::kMalformedRow, "config must be a JSON object");
  LdmConfig c = base;
  try {
    auto take = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    take("learner_latent", c.learner_latent);
    take("exercise_latent", c.exercise_latent);
    take("d4", c.response_dim);
    take("attn_channels", c.attn_channels);
    take("conv_channels", c.conv_channels);
    take("kernel", c.kernel);
    take("pool", c.pool);
    take("dropout", c.dropout);
    take("lr", c.learning_rate);
    take("batch", c.batch);
    take("epochs", c.max_epochs);
    take("patience", c.patience);
    take("validation_fraction", c.validation_fraction);
    take("bins", c.bins);
    take("sae_epochs", c.sae.epochs);
    take("sae_batch", c.sae.batch);
    take("sae_lr", c.sae.learning_rate);
    take("sae_hidden", c.sae.hidden);
    take("attention", c.attention);
    if (j.contains("features")) c.features = parse_feature_mode(j.at("features").get<std::string>());
    take("include_irt_guess", c.include_irt_guess);
    take("mirt_dims", c.psych.mirt_dims);
    take("em_max_iterations", c.psych.em.max_iterations);
    take("em_tolerance", c.psych.em.tolerance);
    take("mcmc_sweeps", c.psych.mcmc.sweeps);
    take("mcmc_burn_in", c.psych.mcmc.burn_in);
    take("seed", c.seed);
  } catch (const detail::Json::exception& e) {
    throw Error(Errc::kMalformedRow, std::string("config: ") + e.what());
  }
  return c;
}

// --- network -------------------------------------------------------------------------

LdmNetwork::LdmNetwork(Index learner_width, Index exercise_width, const LdmConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const Index c = config.attn_channels;
  auto zeros = [](Index n) { return nd::Tensor::param({n}, Eigen::VectorXd::Zero(n)); };
  if (config.features != FeatureMode::kShallow) {
    const Index in = config.learner_latent + config.exercise_latent;
    response_w = nd::xavier_uniform({config.response_dim, in}, in, config.response_dim, rng);
    response_b = zeros(config.response_dim);
  }
  if (config.attention) {
    query_k = nd::xavier_uniform({c, 1, 1}, 1, c, rng);
    query_b = zeros(c);
    key_k = nd::xavier_uniform({c, 1, 1}, 1, c, rng);
    key_b = zeros(c);
  }
  value_k = nd::xavier_uniform({c, 1, 1}, 1, c, rng);
  value_b = zeros(c);
  const Index cc = config.conv_channels;
  conv_k = nd::xavier_uniform({cc, config.kernel, c}, config.kernel * c, config.kernel * cc, rng);
  conv_b = zeros(cc);
  finish(learner_width, exercise_width, config);
  const Index flat = (fused_width_ / config.pool) * cc;
  out_w = nd::xavier_uniform({1, flat}, flat, 1, rng);
  out_b = zeros(1);
}

void LdmNetwork::finish(Index learner_width, Index exercise_width, const LdmConfig& config) {
  config_ = config;
  switch (config.features) {
    case FeatureMode::kFused: fused_width_ = config.response_dim + learner_width + exercise_width; break;
    case FeatureMode::kShallow: fused_width_ = learner_width + exercise_width; break;
    case FeatureMode::kDeep: fused_width_ = config.response_dim; break;
  }
  if (fused_width_ < config.pool) {
    throw Error(Errc::kShapeMismatch, "fused width " + std::to_string(fused_width_) + " is below the pool window");
  }
}

std::pair<nd::Tensor, nd::Tensor> attention_forward(const nd::Tensor& fused, const nd::Tensor& query_k,
                                                    const nd::Tensor& query_b, const nd::Tensor& key_k,
                                                    const nd::Tensor& key_b, const nd::Tensor& value_k,
                                                    const nd::Tensor& value_b) {
  if (fused.rank() != 2) throw Error(Errc::kShapeMismatch, "attention expects [batch, width] features");
  const auto seq = nd::reshape(fused, {fused.dim(0), fused.dim(1), 1});
  const auto q = nd::conv1d(seq, query_k, query_b);
  const auto k = nd::conv1d(seq, key_k, key_b);
  const auto v = nd::conv1d(seq, value_k, value_b);
  const auto weights = nd::softmax(nd::batched_matmul(q, k, true));
  return {nd::batched_matmul(weights, v), weights};
}

LdmNetwork::Output LdmNetwork::forward(const Batch& batch, bool training, std::uint64_t dropout_seed) const {
  Output out;
  const Index b = batch.learner_row.dim(0);
  nd::Tensor deep;
  if (config_.features != FeatureMode::kShallow) {
    deep = nd::tanh(nd::dense(nd::concat({batch.learner_latent, batch.exercise_latent}), response_w, response_b));
    deep = nd::dropout(deep, config_.dropout, training, derive_seed(dropout_seed, 0));
  }
  switch (config_.features) {
    case FeatureMode::kFused: out.fused = nd::concat({deep, batch.learner_row, batch.exercise_row}); break;
    case FeatureMode::kShallow: out.fused = nd::concat({batch.learner_row, batch.exercise_row}); break;
    case FeatureMode::kDeep: out.fused = deep; break;
  }
  if (out.fused.dim(1) != fused_width_) throw Error(Errc::kShapeMismatch, "fused width differs from the network's");

  nd::Tensor attended;
  if (config_.attention) {
    std::tie(attended, out.attention) =
        attention_forward(out.fused, query_k, query_b, key_k, key_b, value_k, value_b);
  } else {
    attended = nd::conv1d(nd::reshape(out.fused, {b, fused_width_, 1}), value_k, value_b);
  }
  auto h = nd::maxpool1d(nd::relu(nd::conv1d(attended, conv_k, conv_b)), config_.pool);
  h = nd::reshape(h, {b, h.size() / b});
  h = nd::dropout(h, config_.dropout, training, derive_seed(dropout_seed, 1));
  out.p = nd::reshape(nd::sigmoid(nd::dense(h, out_w, out_b)), {b});
  return out;
}

std::vector<nd::Tensor> LdmNetwork::parameters() const {
  std::vector<nd::Tensor> out;
  for (const auto& [name, t] : param_map()) out.push_back(t);
  return out;
}

nd::ParamMap LdmNetwork::param_map() const {
  nd::ParamMap m;
  auto put = [&](const char* name, const nd::Tensor& t) {
    if (t.defined()) m[name] = t;
  };
  put("response.w", response_w);
  put("response.b", response_b);
  put("query.k", query_k);
  put("query.b", query_b);
  put("key.k", key_k);
  put("key.b", key_b);
  put("value.k", value_k);
  put("value.b", value_b);
  put("conv.k", conv_k);
  put("conv.b", conv_b);
  put("out.w", out_w);
  put("out.b", out_b);
  return m;
}

LdmNetwork LdmNetwork::from_param_map(const nd::ParamMap& params, Index learner_width, Index exercise_width,
                                      const LdmConfig& config) {
  config.validate();
  LdmNetwork n;
  auto get = [&](const char* name, bool needed) {
    auto it = params.find(name);
    if (it == params.end()) {
      if (needed) throw Error(Errc::kMalformedRow, std::string("network checkpoint lacks ") + name);
      return nd::Tensor();
    }
    return it->second;
  };
  const bool deep = config.features != FeatureMode::kShallow;
  n.response_w = get("response.w", deep);
  n.response_b = get("response.b", deep);
  n.query_k = get("query.k", config.attention);
  n.query_b = get("query.b", config.attention);
  n.key_k = get("key.k", config.attention);
  n.key_b = get("key.b", config.attention);
  n.value_k = get("value.k", true);
  n.value_b = get("value.b", true);
  n.conv_k = get("conv.k", true);
  n.conv_b = get("conv.b", true);
  n.out_w = get("out.w", true);
  n.out_b = get("out.b", true);
  n.finish(learner_width, exercise_width, config);
  const Index flat = (n.fused_width_ / config.pool) * config.conv_channels;
  if (n.out_w.shape() != nd::Shape{1, flat} || n.conv_k.shape() != nd::Shape{config.conv_channels, config.kernel,
                                                                               config.attn_channels}) {
    throw Error(Errc::kShapeMismatch, "network checkpoint does not match the configuration");
  }
  if (deep && n.response_w.shape() != nd::Shape{config.response_dim, config.learner_latent + config.exercise_latent}) {
    throw Error(Errc::kShapeMismatch, "response layer does not match the configuration");
  }
  return n;
}

// --- model ---------------------------------------------------------------------------

std::vector<std::string> LdmModel::feature_names() const {
  std::vector<std::string> names;
  if (config.features != FeatureMode::kShallow)
    for (Index i = 0; i < config.response_dim; ++i) names.push_back("deep." + std::to_string(i + 1));
  if (config.features != FeatureMode::kDeep) {
    for (const auto& c : sets.sc_columns) names.push_back("learner." + c.name);
    for (const auto& c : sets.ec_columns) names.push_back("exercise." + c.name);
  }
  return names;
}

void LdmModel::refresh_latents() {
  learner_latent = learner_sae.encode_rows(plans.learner.encode_rows(sets.sc));
  exercise_latent = exercise_sae.encode_rows(plans.exercise.encode_rows(sets.ec));
}

LdmNetwork::Batch gather_batch(const LdmModel& model, std::span<const Cell> cells) {
  return {gather(model.learner_latent, cells, true), gather(model.exercise_latent, cells, false),
          gather(model.sets.sc, cells, true), gather(model.sets.ec, cells, false)};
}

Eigen::VectorXd predict_cells(const LdmModel& model, std::span<const Cell> cells) {
  check_cells(model, cells);
  nd::NoGradGuard guard;
  Eigen::VectorXd out(static_cast<Index>(cells.size()));
  for (std::size_t start = 0; start < cells.size(); start += kPredictChunk) {
    const auto chunk = cells.subspan(start, std::min<std::size_t>(kPredictChunk, cells.size() - start));
    const auto y = model.network.forward(gather_batch(model, chunk), false, 0);
    out.segment(static_cast<Index>(start), static_cast<Index>(chunk.size())) = y.p.value();
  }
  return out;
}

std::vector<PredictionRecord> predict_records(const LdmModel& model, std::span<const Cell> cells) {
  check_cells(model, cells);
  nd::NoGradGuard guard;
  std::vector<PredictionRecord> out;
  out.reserve(cells.size());
  const Index d5 = model.network.fused_width();
  for (std::size_t start = 0; start < cells.size(); start += kPredictChunk) {
    const auto chunk = cells.subspan(start, std::min<std::size_t>(kPredictChunk, cells.size() - start));
    const auto y = model.network.forward(gather_batch(model, chunk), false, 0);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      PredictionRecord rec{model.sets.learner_ids[static_cast<std::size_t>(chunk[i].learner)],
                           model.sets.exercise_ids[static_cast<std::size_t>(chunk[i].exercise)],
                           y.p.value()(static_cast<Index>(i)),
                           {}};
      if (y.attention.defined()) {
        const Eigen::Map<const nd::RowMatrixXd> a(y.attention.value().data() + static_cast<Index>(i) * d5 * d5, d5, d5);
        rec.attention = a.colwise().mean().transpose();
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

PredictionRecord predict(const LdmModel& model, const std::string& learner_id, const std::string& exercise_id) {
  const Cell c{model.sets.learner_row(learner_id), model.sets.exercise_row(exercise_id)};
  return predict_records(model, std::span<const Cell>(&c, 1)).front();
}

std::string predictions_csv(const std::vector<PredictionRecord>& records) {
  std::string out = "learner_id,exercise_id,p\n";
  for (const auto& r : records) out += r.learner_id + "," + r.exercise_id + "," + format_double(r.p) + "\n";
  return out;
}

}  // namespace ldiag
