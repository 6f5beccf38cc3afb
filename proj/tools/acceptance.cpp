// Acceptance suite: one PASS/FAIL line per criterion.
//
//   ldiag_acceptance [--only 1,5,7] [--out DIR]
//
// Exit status is 0 only when every selected criterion passes.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "ldiag/cli.hpp"
#include "ldiag/evaluation.hpp"

using namespace ldiag;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd x = a.array() - a.mean(), y = b.array() - b.mean();
  return (x * y).sum() / std::sqrt((x * x).sum() * (y * y).sum());
}

double slip_guess_mae(const Eigen::VectorXd& s, const Eigen::VectorXd& g, const GroundTruth& t) {
  return 0.5 * ((s - t.slip).cwiseAbs().mean() + (g - t.guess).cwiseAbs().mean());
}

double recovery(const BinaryGrid& a, const BinaryGrid& b) { return (a.array() == b.array()).cast<double>().mean(); }

// --- 1: response functions against 60-digit references -----------------------------

Outcome response_functions() {
  std::ifstream in(LDIAG_RESPONSE_ORACLE);
  if (!in) return {false, "missing reference file " + std::string(LDIAG_RESPONSE_ORACLE)};
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::pair<int, long double>> worst;  // kind -> (count, max error)
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string kind, tok;
    std::getline(ss, kind, ',');
    std::vector<std::string> toks;
    while (std::getline(ss, tok, ',')) toks.push_back(tok);
    const long double ref = std::stold(toks.back());
    std::vector<double> x;
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) x.push_back(std::stod(toks[i]));
    double p = 0.0;
    if (kind == "irt") {
      p = irt_response(x[0], x[1], x[2], x[3]);
    } else if (kind == "dina") {
      p = dina_response(static_cast<int>(x[0]), x[1], x[2]);
    } else if (kind == "mirt") {
      p = mirt_response(Eigen::Vector3d(x[0], x[1], x[2]), Eigen::Vector3d(x[3], x[4], x[5]), x[6], x[7]);
    } else {
      p = hodina_attr_prob(x[0], x[1], x[2]);
    }
    auto& w = worst[kind];
    ++w.first;
    w.second = std::max(w.second, std::fabs(static_cast<long double>(p) - ref));
  }
  bool pass = worst.size() == 4;
  std::string detail;
  for (const auto& [kind, w] : worst) {
    pass = pass && w.first >= 1000 && w.second < 1e-12L;
    detail += fmt("%s n=%d max|err|=%.2Le  ", kind.c_str(), w.first, w.second);
  }
  return {pass, detail};
}

// --- 2-4: estimator recovery -----------------------------------------------------------

Outcome dina_recovery() {
  double mae = 0.0, acc = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto d = generate_synthetic_dina(2000, 50, 5, {0.1, 0.3}, {0.1, 0.3}, seed);
    const auto fit = fit_dina_em(d.responses, d.q);
    mae += slip_guess_mae(fit.items.slip, fit.items.guess, d.truth) / 3.0;
    acc += recovery(fit.learners.alpha, d.truth.alpha) / 3.0;
  }
  return {mae <= 0.05 && acc >= 0.85, fmt("mean slip/guess MAE %.4f (<= 0.05), attribute recovery %.4f (>= 0.85)", mae, acc)};
}

Outcome irt_recovery() {
  double min_b = 1.0, min_theta = 1.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto d = generate_synthetic_irt(2000, 50, seed);
    const auto fit = fit_irt_em(d.responses);
    min_b = std::min(min_b, pearson(fit.items.difficulty, d.truth.difficulty));
    min_theta = std::min(min_theta, pearson(fit.learners.theta, d.truth.theta));
  }
  return {min_b >= 0.85 && min_theta >= 0.9,
          fmt("worst seed: corr(difficulty) %.4f (>= 0.85), corr(theta) %.4f (>= 0.9)", min_b, min_theta)};
}

Outcome hodina_recovery() {
  const auto d = generate_synthetic_hodina(2000, 50, 5, {}, 1);
  McmcConfig cfg;
  cfg.seed = 11;
  const auto a = fit_hodina_mcmc(d.responses, d.q, cfg);
  const auto b = fit_hodina_mcmc(d.responses, d.q, cfg);
  const double acc = recovery(a.params.alpha, d.truth.alpha);
  const double mae = slip_guess_mae(a.params.slip, a.params.guess, d.truth);
  auto same = [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    return x.size() == y.size() && std::memcmp(x.data(), y.data(), sizeof(double) * x.size()) == 0;
  };
  const bool identical = same(a.params.theta, b.params.theta) && same(a.params.slip, b.params.slip) &&
                         same(a.params.guess, b.params.guess) && same(a.params.lambda0, b.params.lambda0) &&
                         same(a.params.lambda1, b.params.lambda1) && same(a.params.eta_mean, b.params.eta_mean) &&
                         (a.params.alpha.array() == b.params.alpha.array()).all();
  return {acc >= 0.80 && mae <= 0.07 && identical,
          fmt("%d sweeps: attribute recovery %.4f (>= 0.80), slip/guess MAE %.4f (<= 0.07), chains %s", cfg.sweeps,
              acc, mae, identical ? "bit-identical" : "DIFFER")};
}

// --- 5: autodiff ----------------------------------------------------------------------------

Outcome autodiff() {
  using nd::Tensor;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> z;
  auto param = [&](nd::Shape s, double scale = 1.0) {
    const auto n = nd::numel(s);
    return Tensor::param(std::move(s), Eigen::VectorXd::NullaryExpr(n, [&] { return scale * z(rng); }));
  };
  auto input = [&](nd::Shape s, double scale = 1.0) {
    const auto n = nd::numel(s);
    return Tensor(std::move(s), Eigen::VectorXd::NullaryExpr(n, [&] { return scale * z(rng); }));
  };
  // Random linear functional so every output element carries its own weight.
  auto lin = [](const Tensor& y, const Eigen::VectorXd& coef) {
    return nd::sum(nd::mul(y, Tensor(y.shape(), coef.head(y.size()))));
  };
  auto check = [](const std::function<Tensor()>& f, const std::vector<Tensor>& ps) { return nd::grad_check(f, ps); };

  std::map<std::string, double> worst;
  auto note = [&](const std::string& name, double err) { worst[name] = std::max(worst[name], err); };
  for (int t = 0; t < 20; ++t) {
    auto x = param({4, 5}), w = param({3, 5}), b = param({3});
    const Eigen::VectorXd c = Eigen::VectorXd::NullaryExpr(200, [&] { return z(rng); });
    note("dense", check([&] { return lin(nd::dense(x, w, b), c); }, {x, w, b}));
    auto xs = param({2, 6, 3}), k = param({2, 1 + 2 * (t % 3), 3}), kb = param({2});
    const Index stride = 1 + t % 2;
    note("conv1d", check([&] { return lin(nd::conv1d(xs, k, kb, stride), c); }, {xs, k, kb}));
    Eigen::VectorXd spaced = Eigen::VectorXd::LinSpaced(24, -2.3, 2.3);
    std::shuffle(spaced.begin(), spaced.end(), rng);
    auto mp = Tensor::param({2, 3, 4}, spaced);
    note("maxpool1d", check([&] { return lin(nd::maxpool1d(mp, 2), c); }, {mp}));
    auto e = param({3, 5});
    auto away = Tensor::param({3, 5}, e.value().unaryExpr([](double v) { return v + (v >= 0 ? 0.1 : -0.1); }));
    note("relu", check([&] { return lin(nd::relu(away), c); }, {away}));
    note("sigmoid", check([&] { return lin(nd::sigmoid(e), c); }, {e}));
    note("tanh", check([&] { return lin(nd::tanh(e), c); }, {e}));
    note("softmax", check([&] { return lin(nd::softmax(e), c); }, {e}));
    note("dropout", check([&] { return lin(nd::dropout(e, 0.3, true, 77 + t), c); }, {e}));
    auto a3 = param({2, 3, 4}), b3 = param({2, 3, 2}), m3 = param({2, 4, 3}), t3 = param({2, 5, 4});
    note("concat", check([&] { return lin(nd::concat({a3, b3}), c); }, {a3, b3}));
    note("reshape", check([&] { return lin(nd::reshape(a3, {6, 4}), c); }, {a3}));
    note("batched_matmul", check([&] { return lin(nd::batched_matmul(a3, m3), c); }, {a3, m3}));
    note("batched_matmul^T", check([&] { return lin(nd::batched_matmul(a3, t3, true), c); }, {a3, t3}));
    auto a2 = param({3, 4}), b2 = param({3, 4});
    note("add", check([&] { return lin(nd::add(a2, b2), c); }, {a2, b2}));
    note("mul", check([&] { return lin(nd::mul(a2, b2), c); }, {a2, b2}));
    note("sum", check([&] { return nd::sum(nd::mul(a2, a2)); }, {a2}));
    note("mean", check([&] { return nd::mean(nd::mul(a2, a2)); }, {a2}));
    auto logits = param({8});
    Eigen::VectorXd y(8);
    for (Index i = 0; i < 8; ++i) y(i) = (rng() & 1) ? 1.0 : 0.0;
    note("bce_loss", check([&] { return nd::bce_loss(nd::sigmoid(logits), y); }, {logits}));
    note("mse_loss", check([&] { return nd::mse_loss(logits, y); }, {logits}));

    // Whole network at toy width: d5 = 4 + 3 + 3 = 10.
    for (bool attention : {true, false}) {
      LdmConfig cfg;
      cfg.learner_latent = 3;
      cfg.exercise_latent = 2;
      cfg.response_dim = 4;
      cfg.attn_channels = 2;
      cfg.conv_channels = 2;
      cfg.attention = attention;
      LdmNetwork net(3, 3, cfg, 500 + t);
      const LdmNetwork::Batch batch{input({3, 3}, 0.5), input({3, 2}, 0.5), input({3, 3}), input({3, 3})};
      Eigen::VectorXd labels(3);
      labels << 1, 0, 1;
      // The key bias shifts every similarity in a row equally, so softmax makes its true gradient zero
      // and the finite difference only sees rounding. A smaller step keeps relu and maxpool kinks out of reach.
      std::vector<Tensor> ps;
      for (const auto& [name, t] : net.param_map())
        if (name != "key.b") ps.push_back(t);
      note(attention ? "network" : "network (attention off)",
           nd::grad_check([&] { return nd::bce_loss(net.forward(batch, false, 0).p, labels); }, ps, 1e-5));
    }
  }
  double overall = 0.0;
  std::string detail;
  for (const auto& [name, err] : worst) {
    overall = std::max(overall, err);
    detail += name + " " + fmt("%.1e", err) + ", ";
  }
  detail.resize(detail.size() - 2);
  return {overall < 1e-4, fmt("20 trials each, max relative error %.2e (< 1e-4): ", overall) + detail};
}

// --- 6: metric oracles ---------------------------------------------------------------------

Outcome metrics() {
  std::mt19937_64 rng(606);
  std::uniform_int_distribution<int> len(2, 200), level(0, 19);
  std::bernoulli_distribution coin(0.5);
  int exact = 0, complement_ok = 0, rmse_ok = 0;
  double worst_complement = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = len(rng);
    Eigen::VectorXd y(n), s(n);
    for (int i = 0; i < n; ++i) {
      y(i) = coin(rng) ? 1.0 : 0.0;
      s(i) = trial % 2 ? level(rng) / 19.0 : std::uniform_real_distribution<double>()(rng);
    }
    y(0) = 1.0;
    y(1) = 0.0;
    // Pair enumeration: count ordered (positive, negative) pairs, ties as half.
    long long twice_wins = 0, pairs = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (y(i) == 1.0 && y(j) == 0.0) {
          ++pairs;
          twice_wins += s(i) > s(j) ? 2 : (s(i) == s(j) ? 1 : 0);
        }
    const double brute = static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pairs));
    const double a = auc(y, s);
    exact += a == brute;
    const double comp = std::fabs(auc((1.0 - y.array()).matrix(), s) - (1.0 - a));
    worst_complement = std::max(worst_complement, comp);
    complement_ok += comp <= 1e-12;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) sq += (y(i) - s(i)) * (y(i) - s(i));
    rmse_ok += std::fabs(rmse(y, s) - std::sqrt(sq / n)) <= 1e-15;
  }
  return {exact == 500 && complement_ok == 500 && rmse_ok == 500,
          fmt("AUC exact on %d/500, complementation worst %.1e on %d/500, RMSE on %d/500", exact, worst_complement,
              complement_ok, rmse_ok)};
}

// --- 7-9: cross-validation on Synthetic-5-shaped data ---------------------------------------

LdmConfig desk_config(Variant v) {
  LdmConfig c;
  c.variant = v;
  c.response_dim = 32;
  c.attn_channels = 4;
  c.conv_channels = 16;
  c.dropout = 0.0;
  c.max_epochs = 6;
  c.patience = 3;
  return c;
}

struct DeskRun {
  CvResult result;
  double seconds = 0.0;
};

const DeskRun& desk_run(const fs::path& out) {
  static const DeskRun run = [&] {
    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    const auto data = generate_synthetic_dina(2000, 50, 5, {0.1, 0.3}, {0.1, 0.3}, 7);
    CvConfig cv;
    cv.folds = 5;
    cv.seed = 1;
    cv.models.push_back({"ldm-id", desk_config(Variant::kLdmId)});
    cv.models.push_back({"ldm-hmi", desk_config(Variant::kLdmHmi)});
    auto shallow = desk_config(Variant::kLdmId);
    shallow.features = FeatureMode::kShallow;
    cv.models.push_back({"ldm-id-shallow", shallow});
    auto no_attention = desk_config(Variant::kLdmId);
    no_attention.attention = false;
    cv.models.push_back({"ldm-id-no-attention", no_attention});
    cv.baselines = {Channel::kIrt, Channel::kDina};
    cv.truth = &data.truth;
    DeskRun r;
    r.result = cross_validate(data.responses, data.q, cv);
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    if (!out.empty()) write_text_file(out / "desk_cv_report.csv", report_csv(r.result));
    std::cout << "  [desk cross-validation: " << fmt("%.0f", r.seconds) << " s]\n";
    for (const auto& m : r.result.mean) std::cout << "    " << fmt("%-22s auc %.4f rmse %.4f", m.model.c_str(), m.auc, m.rmse) << "\n";
    return r;
  }();
  return run;
}

Outcome ordering(const fs::path& out) {
  const auto& r = desk_run(out).result;
  const double id = r.mean_of("ldm-id").auc, dina = r.mean_of("dina").auc, oracle = r.mean_of("oracle").auc;
  const bool above_dina = id >= dina + 0.03, near_oracle = id >= oracle - 0.05;
  return {above_dina && near_oracle,
          fmt("LDM-ID %.4f vs DINA %.4f + 0.03 = %.4f (%s); vs oracle %.4f - 0.05 = %.4f (%s)", id, dina, dina + 0.03,
              above_dina ? "met" : "NOT met", oracle, oracle - 0.05, near_oracle ? "met" : "NOT met")};
}

Outcome hmi_parity(const fs::path& out) {
  const auto& r = desk_run(out).result;
  const double id = r.mean_of("ldm-id").auc, hmi = r.mean_of("ldm-hmi").auc;
  return {std::fabs(hmi - id) <= 0.02, fmt("LDM-HMI %.4f vs LDM-ID %.4f, gap %.4f (<= 0.02)", hmi, id, std::fabs(hmi - id))};
}

Outcome ablations(const fs::path& out) {
  const auto& r = desk_run(out).result;
  const double fused = r.mean_of("ldm-id").auc, shallow = r.mean_of("ldm-id-shallow").auc;
  const double off = r.mean_of("ldm-id-no-attention").auc;
  const bool fusion = fused >= shallow + 0.005, attention = fused >= off - 0.005;
  return {fusion && attention, fmt("fusion gain %+.4f (>= +0.005, %s); attention on - off %+.4f (>= -0.005, %s)",
                                   fused - shallow, fusion ? "met" : "NOT met", fused - off,
                                   attention ? "met" : "NOT met")};
}

// --- 10: reproducibility ---------------------------------------------------------------------

Outcome reproducibility(const fs::path& out) {
  const fs::path dir = out.empty() ? fs::temp_directory_path() / "ldiag_acceptance" : out / "reproducibility";
  fs::remove_all(dir);
  const auto data = generate_synthetic_dina(2000, 50, 5, {0.1, 0.3}, {0.1, 0.3}, 7);
  write_long_csv(data.responses, dir / "responses.csv");
  write_q_csv(data.q, dir / "q.csv");
  auto evaluate = [&](const std::string& name) {
    std::ostringstream sink;
    const std::vector<std::string> args{"ldiag",  "evaluate", "--responses",  (dir / "responses.csv").string(),
                                        "--q",    (dir / "q.csv").string(), "--folds", "5", "--seed", "1",
                                        "--epochs", "2", "--d4", "32", "--attn-channels", "4",
                                        "--out", (dir / name).string()};
    const int code = run_cli(args, sink, sink);
    return code == 0 ? read_text_file(dir / name / "report.csv") : "exit " + std::to_string(code) + ": " + sink.str();
  };
  const auto a = evaluate("run_a"), b = evaluate("run_b");
  const bool reports_equal = a == b && a.rfind("fold,", 0) == 0;

  const auto plan = split_folds(data.responses, 5, 3);
  const auto test = plan.test_cells(0);
  const auto train_r = data.responses.masked(test);
  auto cfg = desk_config(Variant::kLdmId);
  cfg.max_epochs = 2;
  const auto model = fit_ldm(train_r, data.q, cfg);
  save_bundle(model, dir / "bundle");
  const auto loaded = load_bundle(dir / "bundle");
  const std::span<const Cell> probe(test.data(), 1000);
  const auto p = predict_cells(model, probe), q = predict_cells(loaded, probe);
  const bool bundle_equal = std::memcmp(p.data(), q.data(), sizeof(double) * 1000) == 0;
  if (out.empty()) fs::remove_all(dir);
  return {reports_equal && bundle_equal,
          fmt("evaluate reports %s (%zu bytes); bundle round trip %s on 1000 probe cells",
              reports_equal ? "byte-identical" : "DIFFER", a.size(), bundle_equal ? "bit-identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string only, out;
  app.add_option("--only", only, "comma-separated criterion numbers");
  app.add_option("--out", out, "directory for reports");
  CLI11_PARSE(app, argc, argv);
  std::set<int> selected;
  {
    std::stringstream ss(only);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) selected.insert(std::stoi(tok));
  }
  if (!out.empty()) fs::create_directories(out);
  const fs::path out_dir = out;

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, response_functions},
      {2, dina_recovery},
      {3, irt_recovery},
      {4, hodina_recovery},
      {5, autodiff},
      {6, metrics},
      {7, [&] { return ordering(out_dir); }},
      {8, [&] { return hmi_parity(out_dir); }},
      {9, [&] { return ablations(out_dir); }},
      {10, [&] { return reproducibility(out_dir); }},
  };
  bool all = true;
  for (const auto& [id, run] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all = all && o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << fmt("  [%.1f s]", s)
              << std::endl;
  }
  return all ? 0 : 1;
}
