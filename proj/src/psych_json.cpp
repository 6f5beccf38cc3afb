#include "json_util.hpp"
#include "ldiag/psychometrics.hpp"

namespace ldiag {

using detail::Json;
using detail::rows_json;
using detail::to_json;

namespace {

Json fit_meta(const FitDiagnostics& d) {
  Json m;
  m["iterations"] = d.iterations;
  m["converged"] = d.converged;
  m["log_likelihood"] = d.log_likelihood.empty() ? Json(nullptr) : Json(d.log_likelihood.back());
  m["degenerate_items"] = d.degenerate_items;
  m["warnings"] = d.warnings;
  return m;
}

}  // namespace

std::string channels_json(const FittedChannels& ch, const FitMeta& meta) {
  Json j;
  Json m;
  m["variant"] = meta.variant;
  m["seed"] = meta.seed;
  m["data_digest"] = detail::hex64(ch.data_digest);
  m["learner_ids"] = ch.learner_ids;
  m["exercise_ids"] = ch.exercise_ids;
  m["knowledge_ids"] = ch.knowledge_ids;
  if (ch.irt) {
    const auto& f = *ch.irt;
    j["irt.difficulty"] = to_json(f.items.difficulty);
    j["irt.discrimination"] = to_json(f.items.discrimination);
    j["irt.guess"] = to_json(f.items.guess);
    j["irt.theta"] = to_json(f.learners.theta);
    m["irt"] = fit_meta(f.diagnostics);
    m["irt"]["scale"] = f.items.scale;
  }
  if (ch.dina) {
    const auto& f = *ch.dina;
    j["dina.slip"] = to_json(f.items.slip);
    j["dina.guess"] = to_json(f.items.guess);
    j["dina.alpha"] = rows_json(f.learners.alpha.cast<int>());
    j["dina.class_prior"] = to_json(f.class_prior);
    m["dina"] = fit_meta(f.diagnostics);
  }
  if (ch.mirt) {
    const auto& f = *ch.mirt;
    j["mirt.discrimination"] = rows_json(f.items.discrimination);
    j["mirt.difficulty"] = to_json(f.items.difficulty);
    j["mirt.guess"] = to_json(f.items.guess);
    j["mirt.alpha"] = rows_json(f.learners.ability);
    m["mirt"] = fit_meta(f.diagnostics);
    m["mirt"]["dims"] = f.items.discrimination.cols();
  }
  if (ch.hodina) {
    const auto& p = ch.hodina->params;
    const auto& d = ch.hodina->diagnostics;
    j["hodina.theta"] = to_json(p.theta);
    j["hodina.alpha"] = rows_json(p.alpha.cast<int>());
    j["hodina.slip"] = to_json(p.slip);
    j["hodina.guess"] = to_json(p.guess);
    j["hodina.lambda0"] = to_json(p.lambda0);
    j["hodina.lambda1"] = to_json(p.lambda1);
    Json h;
    h["sweeps"] = d.sweeps;
    h["theta_acceptance"] = d.theta_acceptance;
    h["item_acceptance"] = d.item_acceptance;
    h["lambda_acceptance"] = d.lambda_acceptance;
    h["min_lambda1_sample"] = d.min_lambda1_sample;
    h["degenerate_items"] = d.degenerate_items;
    m["hodina"] = h;
  }
  j["meta"] = m;
  return j.dump(2) + "\n";
}

std::string parameter_sets_json(const CognitiveParameterSets& sets) {
  auto columns = [](const std::vector<ParamColumn>& cols) {
    Json out = Json::array();
    for (const auto& c : cols) out.push_back({{"name", c.name}, {"binary", c.binary}});
    return out;
  };
  Json j;
  j["variant"] = variant_name(sets.variant);
  j["data_digest"] = detail::hex64(sets.data_digest);
  j["learner_ids"] = sets.learner_ids;
  j["exercise_ids"] = sets.exercise_ids;
  j["ec_columns"] = columns(sets.ec_columns);
  j["sc_columns"] = columns(sets.sc_columns);
  j["ec"] = rows_json(sets.ec);
  j["sc"] = rows_json(sets.sc);
  return j.dump(2) + "\n";
}

CognitiveParameterSets parse_parameter_sets_json(const std::string& text) {
  const Json j = detail::parse_json(text, "parameter sets");
  CognitiveParameterSets sets;
  try {
    sets.variant = parse_variant(j.at("variant").get<std::string>());
    sets.data_digest = detail::parse_hex64(j.at("data_digest").get<std::string>());
    sets.learner_ids = j.at("learner_ids").get<std::vector<std::string>>();
    sets.exercise_ids = j.at("exercise_ids").get<std::vector<std::string>>();
    for (const auto& c : j.at("ec_columns")) sets.ec_columns.push_back({c.at("name"), c.at("binary")});
    for (const auto& c : j.at("sc_columns")) sets.sc_columns.push_back({c.at("name"), c.at("binary")});
    sets.ec = detail::matrix_from(j.at("ec"), static_cast<Index>(sets.ec_columns.size()));
    sets.sc = detail::matrix_from(j.at("sc"), static_cast<Index>(sets.sc_columns.size()));
  } catch (const Json::exception& e) {
    throw Error(Errc::kMalformedRow, std::string("parameter sets: ") + e.what());
  }
  if (sets.ec.rows() != static_cast<Index>(sets.exercise_ids.size()) ||
      sets.sc.rows() != static_cast<Index>(sets.learner_ids.size())) {
    throw Error(Errc::kShapeMismatch, "parameter sets: row count does not match ids");
  }
  return sets;
}

}  // namespace ldiag
