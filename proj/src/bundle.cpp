#include <filesystem>

#include "json_util.hpp"
#include "ldiag/diagnosis.hpp"

namespace ldiag {

namespace fs = std::filesystem;

namespace {

constexpr int kBundleVersion = 1;

}  // namespace

void save_bundle(const LdmModel& model, const fs::path& dir, const std::string& channels_json_text) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::kIoError, "cannot create " + dir.string() + ": " + ec.message());

  detail::Json config{{"version", kBundleVersion},
                      {"config", detail::parse_json(ldm_config_json(model.config), "config")},
                      {"data_digest", detail::hex64(model.data_digest)},
                      {"fused_width", model.network.fused_width()},
                      {"feature_names", model.feature_names()}};
  detail::Json psych{{"parameter_sets", detail::parse_json(parameter_sets_json(model.sets), "parameter sets")}};
  if (!channels_json_text.empty()) psych["channels"] = detail::parse_json(channels_json_text, "channels");

  write_text_file(dir / "config.json", config.dump(1) + "\n");
  write_text_file(dir / "plan.json", encoding_plans_json(model.plans) + "\n");
  write_text_file(dir / "psychometrics.json", psych.dump(1) + "\n");
  write_text_file(dir / "sae_learner.ckpt", nd::save_checkpoint(model.learner_sae.param_map()));
  write_text_file(dir / "sae_exercise.ckpt", nd::save_checkpoint(model.exercise_sae.param_map()));
  write_text_file(dir / "network.ckpt", nd::save_checkpoint(model.network.param_map()));
}

LdmModel load_bundle(const fs::path& dir) {
  LdmModel model;
  const auto config = detail::parse_json(read_text_file(dir / "config.json"), "bundle config");
  const auto psych = detail::parse_json(read_text_file(dir / "psychometrics.json"), "bundle psychometrics");
  try {
    if (config.at("version").get<int>() != kBundleVersion) {
      throw Error(Errc::kMalformedRow, "unsupported bundle version " + config.at("version").dump());
    }
    model.config = parse_ldm_config_json(config.at("config").dump());
    model.data_digest = detail::parse_hex64(config.at("data_digest").get<std::string>());
    model.sets = parse_parameter_sets_json(psych.at("parameter_sets").dump());
  } catch (const detail::Json::exception& e) {
    throw Error(Errc::kMalformedRow, std::string("bundle: ") + e.what());
  }
  if (model.sets.data_digest != model.data_digest) {
    throw Error(Errc::kLeakage, "bundle parameter sets come from different data than the network");
  }
  model.plans = parse_encoding_plans_json(read_text_file(dir / "plan.json"));
  model.learner_sae = SaeModel::from_param_map(nd::load_checkpoint(read_text_file(dir / "sae_learner.ckpt")));
  model.exercise_sae = SaeModel::from_param_map(nd::load_checkpoint(read_text_file(dir / "sae_exercise.ckpt")));
  model.network = LdmNetwork::from_param_map(nd::load_checkpoint(read_text_file(dir / "network.ckpt")),
                                             model.sets.sc.cols(), model.sets.ec.cols(), model.config);
  model.refresh_latents();
  return model;
}

}  // namespace ldiag
