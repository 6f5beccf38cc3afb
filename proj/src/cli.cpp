#include <chrono>
#include <ctime>
#include <functional>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "json_util.hpp"
#include "ldiag/cli.hpp"
#include "ldiag/evaluation.hpp"
#include "ldiag/interpret.hpp"

namespace ldiag {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::kIoError, "SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text_file(path)); }

std::string run_manifest_json(const RunManifest& m) {
  detail::Json inputs = detail::Json::array();
  for (const auto& in : m.inputs) inputs.push_back({{"path", in.path}, {"sha256", in.sha256}});
  detail::Json j{{"command", m.command},
                 {"argv", m.argv},
                 {"flags", m.flags},
                 {"seed", m.seed},
                 {"inputs", inputs},
                 {"outputs", m.outputs},
                 {"started_at", m.started_at},
                 {"finished_at", m.finished_at}};
  if (!m.config_json.empty()) j["config"] = detail::parse_json(m.config_json, "config");
  return j.dump(1) + "\n";
}

RunManifest parse_run_manifest_json(const std::string& text) {
  const auto j = detail::parse_json(text, "run manifest");
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.flags = j.at("flags").get<std::map<std::string, std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& in : j.at("inputs")) m.inputs.push_back({in.at("path"), in.at("sha256")});
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
    if (j.contains("config")) m.config_json = j.at("config").dump();
  } catch (const detail::Json::exception& e) {
    throw Error(Errc::kMalformedRow, std::string("run manifest: ") + e.what());
  }
  return m;
}

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

ResponseMatrix load_responses(const fs::path& path) {
  return load_response_matrix(path, path.extension() == ".tsv" ? ResponseFormat::kDenseTsv : ResponseFormat::kLongCsv);
}

// Output directory plus the manifest that records everything written to it.
class Run {
 public:
  Run(std::string command, const std::vector<std::string>& argv, const fs::path& out)
      : out_(out) {
    manifest_.command = std::move(command);
    manifest_.argv = argv;
    manifest_.started_at = utc_now();
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) throw Error(Errc::kIoError, "cannot create " + out_.string() + ": " + ec.message());
  }

  void input(const fs::path& path) { manifest_.inputs.push_back({path.string(), sha256_file(path)}); }
  fs::path write(const std::string& name, const std::string& text) {
    const auto path = out_ / name;
    write_text_file(path, text);
    manifest_.outputs.push_back(path.string());
    return path;
  }
  void output(const fs::path& path) { manifest_.outputs.push_back(path.string()); }
  RunManifest& manifest() { return manifest_; }
  const fs::path& dir() const { return out_; }

  /// Records every option of `sub`; `resolved` supplies the effective value
  /// of settings that a config file or a derived default may have changed.
  void finish(const CLI::App& sub, const std::map<std::string, std::string>& resolved = {}) {
    for (const auto* opt : sub.get_options()) {
      const auto& name = opt->get_single_name();
      if (name.empty() || name == "help") continue;
      std::string value;
      if (opt->count() > 0) {
        for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
      } else {
        value = opt->get_default_str();
      }
      manifest_.flags[name] = value;
    }
    for (const auto& [name, value] : resolved) manifest_.flags[name] = value;
    manifest_.finished_at = utc_now();
    const auto path = out_ / "manifest.json";
    manifest_.outputs.push_back(path.string());
    write_text_file(path, run_manifest_json(manifest_));
  }

 private:
  fs::path out_;
  RunManifest manifest_;
};

// Model flags shared by fit-psych, train and evaluate.
struct ModelFlags {
  std::string config_path;
  std::string variant = "ldm-id";
  int bins = 10;
  Index d4 = 64;
  Index attn_channels = 16;
  int epochs = 50;
  Index batch = 64;
  double lr = 0.001;
  double dropout = 0.2;
  int mirt_dims = 3;
  bool include_irt_guess = false;
  int sae_epochs = 100;
  int patience = 5;
  std::uint64_t seed = 0;
  std::map<std::string, CLI::Option*> opts;

  void add_psych(CLI::App& sub) {
    opts["config"] = sub.add_option("--config", config_path, "JSON configuration; flags override it")
                         ->check(CLI::ExistingFile);
    opts["variant"] = sub.add_option("--variant", variant, "ldm-id or ldm-hmi")
                          ->check(CLI::IsMember({"ldm-id", "ldm-hmi"}));
    opts["mirt-dims"] = sub.add_option("--mirt-dims", mirt_dims, "MIRT ability dimensions")->check(CLI::Range(1, 8));
    opts["include-irt-guess"] = sub.add_flag("--include-irt-guess", include_irt_guess, "add the IRT guess column");
    opts["seed"] = sub.add_option("--seed", seed, "run seed");
  }

  void add_model(CLI::App& sub) {
    add_psych(sub);
    opts["bins"] = sub.add_option("--bins", bins, "one-hot bins per continuous parameter");
    opts["d4"] = sub.add_option("--d4", d4, "response-layer width");
    opts["attn-channels"] = sub.add_option("--attn-channels", attn_channels, "attention channels");
    opts["epochs"] = sub.add_option("--epochs", epochs, "maximum training epochs");
    opts["batch"] = sub.add_option("--batch", batch, "minibatch size");
    opts["lr"] = sub.add_option("--lr", lr, "learning rate");
    opts["dropout"] = sub.add_option("--dropout", dropout, "dropout rate");
    opts["sae-epochs"] = sub.add_option("--sae-epochs", sae_epochs, "autoencoder pretraining epochs");
    opts["patience"] = sub.add_option("--patience", patience, "early-stopping patience");
  }

  bool given(const std::string& name) const {
    const auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }

  LdmConfig resolve() const {
    LdmConfig c;
    if (!config_path.empty()) c = parse_ldm_config_json(read_text_file(config_path), c);
    if (given("variant")) c.variant = parse_variant(variant);
    if (given("mirt-dims")) c.psych.mirt_dims = mirt_dims;
    if (given("include-irt-guess")) c.include_irt_guess = include_irt_guess;
    if (given("seed")) c.seed = seed;
    if (given("bins")) c.bins = bins;
    if (given("d4")) c.response_dim = d4;
    if (given("attn-channels")) c.attn_channels = attn_channels;
    if (given("epochs")) c.max_epochs = epochs;
    if (given("batch")) c.batch = batch;
    if (given("lr")) c.learning_rate = lr;
    if (given("dropout")) c.dropout = dropout;
    if (given("sae-epochs")) c.sae.epochs = sae_epochs;
    if (given("patience")) c.patience = patience;
    c.validate();
    return c;
  }

  static std::map<std::string, std::string> resolved_flags(const LdmConfig& c) {
    return {{"variant", variant_name(c.variant)},
            {"mirt-dims", std::to_string(c.psych.mirt_dims)},
            {"include-irt-guess", c.include_irt_guess ? "true" : "false"},
            {"seed", std::to_string(c.seed)},
            {"bins", std::to_string(c.bins)},
            {"d4", std::to_string(c.response_dim)},
            {"attn-channels", std::to_string(c.attn_channels)},
            {"epochs", std::to_string(c.max_epochs)},
            {"batch", std::to_string(c.batch)},
            {"lr", format_double(c.learning_rate)},
            {"dropout", format_double(c.dropout)},
            {"sae-epochs", std::to_string(c.sae.epochs)},
            {"patience", std::to_string(c.patience)}};
  }

  // Integer settings that only the CLI knows, read from the config file.
  int config_int(const std::string& key, int fallback) const {
    if (config_path.empty()) return fallback;
    const auto j = detail::parse_json(read_text_file(config_path), "config");
    return j.contains(key) ? j.at(key).get<int>() : fallback;
  }
};

struct Inputs {
  std::string responses, q;
  void add(CLI::App& sub) {
    sub.add_option("--responses", responses, "responses: long CSV, or dense TSV by .tsv extension")
        ->required()
        ->check(CLI::ExistingFile);
    sub.add_option("--q", q, "Q-matrix CSV")->required()->check(CLI::ExistingFile);
  }
};

void print_mean_table(std::ostream& out, const std::vector<MetricReport>& rows) {
  out << "model                      auc       rmse\n";
  for (const auto& m : rows) {
    std::string name = m.model;
    name.resize(std::max<std::size_t>(name.size(), 24), ' ');
    char buf[64];
    std::snprintf(buf, sizeof buf, "  %.4f    %.4f", m.auc, m.rmse);
    out << name << buf << "\n";
  }
}

std::vector<Cell> cells_for_ids(const LdmModel& model, const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<Cell> cells;
  for (const auto& [l, e] : pairs) cells.push_back({model.sets.learner_row(l), model.sets.exercise_row(e)});
  return cells;
}

std::vector<std::pair<std::string, std::string>> read_cell_list(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<std::pair<std::string, std::string>> out;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_list(line);
    if (f.size() < 2) throw Error(Errc::kMalformedRow, "cell list line '" + line + "' needs learner_id,exercise_id");
    if (header && f[0] == "learner_id") {
      header = false;
      continue;
    }
    header = false;
    out.emplace_back(f[0], f[1]);
  }
  return out;
}

void add_bundle_inputs(Run& run, const fs::path& dir) {
  for (const char* name : {"config.json", "plan.json", "psychometrics.json", "sae_learner.ckpt", "sae_exercise.ckpt",
                           "network.ckpt"})
    run.input(dir / name);
}

// --- subcommands -------------------------------------------------------------------

struct SynthArgs {
  std::string generator = "dina";
  Index learners = 2000, exercises = 50, knowledge = 5;
  std::vector<double> slip{0.1, 0.3}, guess{0.1, 0.3};
  std::uint64_t seed = 0;
  std::string out;
};

void run_synth(const SynthArgs& a, Run& run, std::ostream& out) {
  auto interval = [](const std::vector<double>& v, const char* what) {
    if (v.size() != 2) throw Error(Errc::kInvalidArgument, std::string(what) + " takes two values");
    return Interval{v[0], v[1]};
  };
  SyntheticData d;
  if (a.generator == "dina") {
    d = generate_synthetic_dina(a.learners, a.exercises, a.knowledge, interval(a.slip, "--slip"),
                                interval(a.guess, "--guess"), a.seed);
  } else if (a.generator == "irt") {
    d = generate_synthetic_irt(a.learners, a.exercises, a.seed);
  } else {
    HoDinaTruthSpec spec;
    spec.slip = 0.5 * (a.slip.at(0) + a.slip.at(1));
    spec.guess = 0.5 * (a.guess.at(0) + a.guess.at(1));
    d = generate_synthetic_hodina(a.learners, a.exercises, a.knowledge, spec, a.seed);
  }
  run.manifest().seed = a.seed;
  run.write("responses.csv", to_long_csv(d.responses));
  if (d.q.num_knowledge() > 0) {
    write_q_csv(d.q, run.dir() / "q.csv");
    run.output(run.dir() / "q.csv");
  }
  run.write("truth.json", ground_truth_json(d.truth, d.responses));
  out << "wrote " << d.responses.num_learners() << " x " << d.responses.num_exercises() << " responses to "
      << run.dir().string() << "\n";
}

void run_fit_psych(const ModelFlags& flags, const Inputs& in, Run& run, std::ostream& out) {
  const auto cfg = flags.resolve();
  const auto r = load_responses(in.responses);
  const auto q = load_q_matrix(in.q);
  run.input(in.responses);
  run.input(in.q);
  run.manifest().seed = cfg.seed;
  run.manifest().config_json = ldm_config_json(cfg);
  PsychConfig psych = cfg.psych;
  psych.mcmc.seed = derive_seed(cfg.seed, 7);
  const auto fitted = fit_channels(r, q, channels_for(cfg.variant), psych);
  const auto sets = build_parameter_sets(cfg.variant, fitted, cfg.include_irt_guess);
  run.write("channels.json", channels_json(fitted, {variant_name(cfg.variant), cfg.seed}) + "\n");
  run.write("parameter_sets.json", parameter_sets_json(sets) + "\n");
  out << "fitted " << sets.sc.cols() << " learner and " << sets.ec.cols() << " exercise parameters\n";
}

struct SplitArgs {
  int folds = 5;
  int test_fold = 0;
};

void run_train(const ModelFlags& flags, const Inputs& in, const SplitArgs& split, Run& run, std::ostream& out) {
  const auto cfg = flags.resolve();
  const auto r = load_responses(in.responses);
  const auto q = load_q_matrix(in.q);
  run.input(in.responses);
  run.input(in.q);
  run.manifest().seed = cfg.seed;
  run.manifest().config_json = ldm_config_json(cfg);
  if (split.test_fold < 0 || split.test_fold >= split.folds)
    throw Error(Errc::kInvalidArgument, "--test-fold must lie in [0, folds)");
  const auto plan = split_folds(r, split.folds, derive_seed(cfg.seed, 100));
  const auto test = plan.test_cells(split.test_fold);
  const auto train_r = r.masked(test);

  PsychConfig psych = cfg.psych;
  psych.mcmc.seed = derive_seed(cfg.seed, 7);
  const auto fitted = fit_channels(train_r, q, channels_for(cfg.variant), psych);
  TrainingReport rep;
  const auto model = fit_ldm(train_r, q, cfg, &fitted, &rep);
  const auto model_dir = run.dir() / "model";
  save_bundle(model, model_dir, channels_json(fitted, {variant_name(cfg.variant), cfg.seed}));
  for (const auto& e : fs::directory_iterator(model_dir)) run.output(e.path());

  const auto records = predict_records(model, test);
  Eigen::VectorXd p(static_cast<Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) p(static_cast<Index>(i)) = records[i].p;
  const auto y = labels_of(r, test);
  const double a = auc(y, p), e = rmse(y, p);
  run.write("predictions.csv", predictions_csv(records));
  run.write("metrics.csv", "model,auc,rmse,n_cells\n" + std::string(variant_name(cfg.variant)) + "," +
                               format_double(a) + "," + format_double(e) + "," + std::to_string(test.size()) + "\n");
  detail::Json training{{"train_loss", rep.train_loss},
                        {"val_auc", rep.val_auc},
                        {"best_epoch", rep.best_epoch},
                        {"best_val_auc", rep.best_val_auc},
                        {"learner_sae_mse", rep.learner_sae_mse},
                        {"learner_sae_baseline", rep.learner_sae_baseline},
                        {"exercise_sae_mse", rep.exercise_sae_mse},
                        {"exercise_sae_baseline", rep.exercise_sae_baseline},
                        {"warnings", rep.warnings}};
  run.write("training.json", training.dump(1) + "\n");
  for (const auto& w : rep.warnings) out << "warning: " << w << "\n";
  char buf[96];
  std::snprintf(buf, sizeof buf, "test auc %.4f rmse %.4f on %zu cells (best epoch %d)\n", a, e, test.size(),
                rep.best_epoch);
  out << buf;
}

struct EvalArgs {
  int folds = 5;
  int jobs = 1;
  bool timing = false;
  bool ablations = false;
  bool hard_profile = false;
  std::string truth;
};

void run_evaluate(const ModelFlags& flags, const Inputs& in, const EvalArgs& a, Run& run, std::ostream& out) {
  const auto cfg = flags.resolve();
  const auto r = load_responses(in.responses);
  const auto q = load_q_matrix(in.q);
  run.input(in.responses);
  run.input(in.q);
  run.manifest().seed = cfg.seed;
  run.manifest().config_json = ldm_config_json(cfg);

  CvConfig cv;
  cv.folds = a.folds;
  cv.seed = cfg.seed;
  cv.jobs = a.jobs;
  cv.timing = a.timing;
  cv.psych = cfg.psych;
  cv.baseline_options.hard_profile = a.hard_profile;
  const std::string name = variant_name(cfg.variant);
  cv.models.push_back({name, cfg});
  if (a.ablations) {
    auto shallow = cfg;
    shallow.features = FeatureMode::kShallow;
    cv.models.push_back({name + "-shallow", shallow});
    auto no_attention = cfg;
    no_attention.attention = false;
    cv.models.push_back({name + "-no-attention", no_attention});
  }
  cv.baselines = channels_for(cfg.variant);
  GroundTruth truth;
  if (!a.truth.empty()) {
    truth = parse_ground_truth_json(read_text_file(a.truth));
    run.input(a.truth);
    cv.truth = &truth;
  }
  const auto result = cross_validate(r, q, cv);
  run.write("report.csv", report_csv(result));
  run.write("report.json", report_json(result) + "\n");
  for (const auto& w : result.warnings) out << "warning: " << w << "\n";
  print_mean_table(out, result.mean);
}

struct PredictArgs {
  std::string model, cells, learner, exercise;
};

void run_predict(const PredictArgs& a, Run& run, std::ostream& out) {
  const auto model = load_bundle(a.model);
  add_bundle_inputs(run, a.model);
  run.manifest().seed = model.config.seed;
  std::vector<std::pair<std::string, std::string>> pairs;
  if (!a.cells.empty()) {
    pairs = read_cell_list(a.cells);
    run.input(a.cells);
  }
  if (!a.learner.empty() || !a.exercise.empty()) {
    if (a.learner.empty() || a.exercise.empty())
      throw Error(Errc::kUsageError, "--learner and --exercise go together");
    pairs.emplace_back(a.learner, a.exercise);
  }
  if (pairs.empty()) throw Error(Errc::kUsageError, "give --cells or --learner/--exercise");
  const auto cells = cells_for_ids(model, pairs);
  const auto records = predict_records(model, cells);
  run.write("predictions.csv", predictions_csv(records));
  run.write("attention.csv", attention_csv(records, model.feature_names()));
  if (records.size() == 1) out << format_double(records.front().p) << "\n";
  else out << "wrote " << records.size() << " predictions\n";
}

struct DiagnoseArgs {
  std::string model, learners, exercises, responses;
  std::size_t max_cells = 1000;
};

void run_diagnose(const DiagnoseArgs& a, Run& run, std::ostream& out) {
  const auto model = load_bundle(a.model);
  add_bundle_inputs(run, a.model);
  run.manifest().seed = model.config.seed;
  const auto learner_ids = split_list(a.learners);
  const auto exercise_ids = split_list(a.exercises);
  const auto lrep = export_learner_report(model.sets, learner_ids);
  const auto erep = export_exercise_report(model.sets, exercise_ids);
  run.write("learners.csv", parameter_report_csv(lrep, "learner_id"));
  run.write("exercises.csv", parameter_report_csv(erep, "exercise_id"));
  run.write("learners.json", parameter_report_json(lrep) + "\n");
  run.write("exercises.json", parameter_report_json(erep) + "\n");

  // Cells: observed interactions of the selected ids, else all their pairs.
  std::vector<Cell> cells;
  const std::set<std::string> lset(lrep.ids.begin(), lrep.ids.end()), eset(erep.ids.begin(), erep.ids.end());
  if (!a.responses.empty()) {
    const auto r = load_responses(a.responses);
    run.input(a.responses);
    for (const auto& c : r.observed_cells()) {
      if (cells.size() >= a.max_cells) break;
      const auto& l = r.learner_ids()[static_cast<std::size_t>(c.learner)];
      const auto& e = r.exercise_ids()[static_cast<std::size_t>(c.exercise)];
      if (lset.count(l) && eset.count(e)) cells.push_back({model.sets.learner_row(l), model.sets.exercise_row(e)});
    }
  } else {
    for (const auto& l : lrep.ids)
      for (const auto& e : erep.ids)
        if (cells.size() < a.max_cells) cells.push_back({model.sets.learner_row(l), model.sets.exercise_row(e)});
  }
  const auto records = predict_records(model, cells);
  run.write("attention.csv", attention_csv(records, model.feature_names()));
  if (cells.size() >= 3) {
    const auto [hs, he] = cell_latents(model, cells);
    const auto corr = latent_correlation(hs, he);
    run.write("latent_corr.csv", latent_correlation_csv(corr));
    if (!corr.degenerate_learner_dims.empty() || !corr.degenerate_exercise_dims.empty()) {
      out << "warning: " << corr.degenerate_learner_dims.size() << " learner and "
          << corr.degenerate_exercise_dims.size() << " exercise latent dimensions are constant over the cells\n";
    }
  } else {
    out << "warning: fewer than 3 cells; latent correlation skipped\n";
  }
  out << "reported " << lrep.ids.size() << " learners, " << erep.ids.size() << " exercises, " << records.size()
      << " cells\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cognitive diagnosis with fused psychometric and deep features", "ldiag"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  std::vector<std::string> args(argv, argv + argc);

  auto* synth = app.add_subcommand("synth", "generate synthetic responses with ground truth");
  SynthArgs sa;
  synth->add_option("--generator", sa.generator, "dina, irt or hodina")->check(CLI::IsMember({"dina", "irt", "hodina"}));
  synth->add_option("--learners", sa.learners, "learner count")->check(CLI::PositiveNumber);
  synth->add_option("--exercises", sa.exercises, "exercise count")->check(CLI::PositiveNumber);
  synth->add_option("--knowledge", sa.knowledge, "knowledge points")->check(CLI::PositiveNumber);
  synth->add_option("--slip", sa.slip, "slip range lo hi (Ho-DINA uses the midpoint)")->expected(2);
  synth->add_option("--guess", sa.guess, "guess range lo hi (Ho-DINA uses the midpoint)")->expected(2);
  synth->add_option("--seed", sa.seed, "generator seed");
  synth->add_option("--out", sa.out, "output directory")->required();

  auto* fit = app.add_subcommand("fit-psych", "fit the psychometric channels and assemble parameter sets");
  ModelFlags fit_flags;
  Inputs fit_in;
  std::string fit_out;
  fit_flags.add_psych(*fit);
  fit_in.add(*fit);
  fit->add_option("--out", fit_out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train the full pipeline on one train/test split");
  ModelFlags train_flags;
  Inputs train_in;
  SplitArgs split;
  std::string train_out;
  train_flags.add_model(*train);
  train_in.add(*train);
  train->add_option("--folds", split.folds, "folds of the split")->check(CLI::Range(2, 100));
  train->add_option("--test-fold", split.test_fold, "fold held out for testing");
  train->add_option("--out", train_out, "output directory")->required();

  auto* eval = app.add_subcommand("evaluate", "k-fold cross-validation against the channel baselines");
  ModelFlags eval_flags;
  Inputs eval_in;
  EvalArgs ea;
  std::string eval_out;
  eval_flags.add_model(*eval);
  eval_in.add(*eval);
  auto* folds_opt = eval->add_option("--folds", ea.folds, "folds")->check(CLI::Range(2, 100));
  auto* jobs_opt = eval->add_option("--jobs", ea.jobs, "folds run in parallel")->check(CLI::Range(1, 256));
  eval->add_flag("--timing", ea.timing, "record prediction wall-clock time");
  eval->add_flag("--ablations", ea.ablations, "also run the shallow-only and attention-off models");
  eval->add_flag("--hard-profile", ea.hard_profile, "score DINA baselines by the hard mastery profile");
  eval->add_option("--truth", ea.truth, "ground truth JSON; adds a Bayes-oracle row")->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "output directory")->required();

  auto* pred = app.add_subcommand("predict", "score learner/exercise pairs with a trained model");
  PredictArgs pa;
  std::string pred_out;
  pred->add_option("--model", pa.model, "model bundle directory")->required()->check(CLI::ExistingDirectory);
  pred->add_option("--cells", pa.cells, "CSV of learner_id,exercise_id")->check(CLI::ExistingFile);
  pred->add_option("--learner", pa.learner, "learner id");
  pred->add_option("--exercise", pa.exercise, "exercise id");
  pred->add_option("--out", pred_out, "output directory")->required();

  auto* diag = app.add_subcommand("diagnose", "export parameter reports, latent correlations and attention");
  DiagnoseArgs da;
  std::string diag_out;
  diag->add_option("--model", da.model, "model bundle directory")->required()->check(CLI::ExistingDirectory);
  diag->add_option("--learners", da.learners, "comma-separated learner ids (default all)");
  diag->add_option("--exercises", da.exercises, "comma-separated exercise ids (default all)");
  diag->add_option("--responses", da.responses, "responses whose observed cells drive the cell exports")
      ->check(CLI::ExistingFile);
  diag->add_option("--max-cells", da.max_cells, "cap on exported cells");
  diag->add_option("--out", diag_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto parsed = app.get_subcommands();
    err << (parsed.empty() ? app.help() : parsed.front()->help());
    return 1;
  }

  try {
    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "synth") {
      Run run(name, args, sa.out);
      run_synth(sa, run, out);
      run.finish(*sub);
    } else if (name == "fit-psych") {
      Run run(name, args, fit_out);
      run_fit_psych(fit_flags, fit_in, run, out);
      auto resolved = ModelFlags::resolved_flags(fit_flags.resolve());
      std::erase_if(resolved, [&](const auto& kv) { return !fit_flags.opts.count(kv.first); });
      run.finish(*sub, resolved);
    } else if (name == "train") {
      if (!folds_opt->count()) split.folds = train_flags.config_int("folds", split.folds);
      Run run(name, args, train_out);
      run_train(train_flags, train_in, split, run, out);
      auto resolved = ModelFlags::resolved_flags(train_flags.resolve());
      resolved["folds"] = std::to_string(split.folds);
      run.finish(*sub, resolved);
    } else if (name == "evaluate") {
      if (!folds_opt->count()) ea.folds = eval_flags.config_int("folds", ea.folds);
      if (!jobs_opt->count()) ea.jobs = eval_flags.config_int("jobs", ea.jobs);
      Run run(name, args, eval_out);
      run_evaluate(eval_flags, eval_in, ea, run, out);
      auto resolved = ModelFlags::resolved_flags(eval_flags.resolve());
      resolved["folds"] = std::to_string(ea.folds);
      resolved["jobs"] = std::to_string(ea.jobs);
      resolved["timing"] = ea.timing ? "true" : "false";
      resolved["ablations"] = ea.ablations ? "true" : "false";
      resolved["hard-profile"] = ea.hard_profile ? "true" : "false";
      run.finish(*sub, resolved);
    } else if (name == "predict") {
      Run run(name, args, pred_out);
      run_predict(pa, run, out);
      run.finish(*sub);
    } else {
      Run run(name, args, diag_out);
      run_diagnose(da, run, out);
      run.finish(*sub);
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace ldiag
