#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "ldiag/dataio.hpp"

namespace ldiag {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool bernoulli(std::mt19937_64& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

std::vector<std::string> numbered(const char* prefix, Index n) {
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i + 1));
  return ids;
}

void check_interval(Interval r, const char* what) {
  if (!(r.lo >= 0.0) || !(r.hi < 0.5) || r.lo > r.hi) {
    throw Error(Errc::kInvalidRange, std::string(what) + " range must lie in [0, 0.5) with lo <= hi");
  }
}

// Each row requires 1-3 distinct skills, chosen uniformly.
BinaryGrid sample_q(Index n_exercises, Index n_knowledge, std::mt19937_64& rng) {
  BinaryGrid q = BinaryGrid::Zero(n_exercises, n_knowledge);
  const Index max_skills = std::min<Index>(3, n_knowledge);
  std::vector<Index> skills(static_cast<std::size_t>(n_knowledge));
  for (Index j = 0; j < n_exercises; ++j) {
    const auto count = std::uniform_int_distribution<Index>(1, max_skills)(rng);
    std::iota(skills.begin(), skills.end(), Index{0});
    std::shuffle(skills.begin(), skills.end(), rng);
    for (Index s = 0; s < count; ++s) q(j, skills[static_cast<std::size_t>(s)]) = 1;
  }
  return q;
}

bool ideal(const BinaryGrid& alpha, Index i, const BinaryGrid& q, Index j) {
  for (Index k = 0; k < q.cols(); ++k)
    if (q(j, k) == 1 && alpha(i, k) == 0) return false;
  return true;
}

SyntheticData assemble(GroundTruth truth, BinaryGrid q, std::mt19937_64& rng) {
  const Index n = truth.bayes_prob.rows();
  const Index m = truth.bayes_prob.cols();
  CellGrid cells(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) cells(i, j) = bernoulli(rng, truth.bayes_prob(i, j)) ? 1 : 0;
  auto exercises = numbered("e", m);
  SyntheticData out;
  // Fully observed grids can still have an all-identical column; that is
  // fine, only empty rows/columns are rejected.
  out.responses = ResponseMatrix(numbered("s", n), exercises, std::move(cells));
  if (q.size() > 0) {
    auto knowledge = numbered("k", q.cols());
    out.q = QMatrix(exercises, std::move(knowledge), std::move(q));
  }
  out.truth = std::move(truth);
  return out;
}

}  // namespace

SyntheticData generate_synthetic_dina(Index n_learners, Index n_exercises, Index n_knowledge,
                                      Interval slip_range, Interval guess_range, std::uint64_t seed) {
  if (n_learners < 1 || n_exercises < 1 || n_knowledge < 1) {
    throw Error(Errc::kInvalidArgument, "counts must be positive");
  }
  if (n_knowledge > 20) throw Error(Errc::kTooManyKnowledgePoints, "at most 20 knowledge points");
  check_interval(slip_range, "slip");
  check_interval(guess_range, "guess");

  std::mt19937_64 rng(seed);
  GroundTruth truth;
  truth.generator = Generator::kDina;
  truth.alpha.resize(n_learners, n_knowledge);
  for (Index i = 0; i < n_learners; ++i)
    for (Index k = 0; k < n_knowledge; ++k) truth.alpha(i, k) = bernoulli(rng, 0.5) ? 1 : 0;
  BinaryGrid q = sample_q(n_exercises, n_knowledge, rng);
  truth.slip.resize(n_exercises);
  truth.guess.resize(n_exercises);
  for (Index j = 0; j < n_exercises; ++j) {
    truth.slip(j) = uniform(rng, slip_range.lo, slip_range.hi);
    truth.guess(j) = uniform(rng, guess_range.lo, guess_range.hi);
  }
  truth.bayes_prob.resize(n_learners, n_exercises);
  for (Index i = 0; i < n_learners; ++i)
    for (Index j = 0; j < n_exercises; ++j)
      truth.bayes_prob(i, j) = ideal(truth.alpha, i, q, j) ? 1.0 - truth.slip(j) : truth.guess(j);
  return assemble(std::move(truth), std::move(q), rng);
}

SyntheticData generate_synthetic_irt(Index n_learners, Index n_exercises, std::uint64_t seed, double scale) {
  if (n_learners < 1 || n_exercises < 1) throw Error(Errc::kInvalidArgument, "counts must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  GroundTruth truth;
  truth.generator = Generator::kIrt;
  truth.theta.resize(n_learners);
  for (Index i = 0; i < n_learners; ++i) truth.theta(i) = normal(rng);
  truth.difficulty.resize(n_exercises);
  truth.discrimination.resize(n_exercises);
  truth.guess.resize(n_exercises);
  for (Index j = 0; j < n_exercises; ++j) {
    truth.difficulty(j) = normal(rng);
    truth.discrimination(j) = uniform(rng, 0.5, 2.5);
    truth.guess(j) = uniform(rng, 0.0, 0.25);
  }
  truth.bayes_prob.resize(n_learners, n_exercises);
  for (Index i = 0; i < n_learners; ++i) {
    for (Index j = 0; j < n_exercises; ++j) {
      const double c = truth.guess(j);
      const double z = scale * truth.discrimination(j) * (truth.theta(i) - truth.difficulty(j));
      truth.bayes_prob(i, j) = c + (1.0 - c) / (1.0 + std::exp(-z));
    }
  }
  return assemble(std::move(truth), BinaryGrid(), rng);
}

SyntheticData generate_synthetic_hodina(Index n_learners, Index n_exercises, Index n_knowledge,
                                        const HoDinaTruthSpec& spec, std::uint64_t seed) {
  if (n_learners < 1 || n_exercises < 1 || n_knowledge < 1) {
    throw Error(Errc::kInvalidArgument, "counts must be positive");
  }
  if (n_knowledge > 20) throw Error(Errc::kTooManyKnowledgePoints, "at most 20 knowledge points");
  if (!(spec.lambda1 > 0.0)) throw Error(Errc::kInvalidRange, "lambda1 must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  GroundTruth truth;
  truth.generator = Generator::kHoDina;
  truth.theta.resize(n_learners);
  truth.lambda0 = Eigen::VectorXd::Constant(n_knowledge, spec.lambda0);
  truth.lambda1 = Eigen::VectorXd::Constant(n_knowledge, spec.lambda1);
  truth.alpha.resize(n_learners, n_knowledge);
  for (Index i = 0; i < n_learners; ++i) {
    truth.theta(i) = normal(rng);
    for (Index k = 0; k < n_knowledge; ++k) {
      const double p = 1.0 / (1.0 + std::exp(-(spec.lambda0 + spec.lambda1 * truth.theta(i))));
      truth.alpha(i, k) = bernoulli(rng, p) ? 1 : 0;
    }
  }
  BinaryGrid q = sample_q(n_exercises, n_knowledge, rng);
  truth.slip = Eigen::VectorXd::Constant(n_exercises, spec.slip);
  truth.guess = Eigen::VectorXd::Constant(n_exercises, spec.guess);
  truth.bayes_prob.resize(n_learners, n_exercises);
  for (Index i = 0; i < n_learners; ++i)
    for (Index j = 0; j < n_exercises; ++j)
      truth.bayes_prob(i, j) = ideal(truth.alpha, i, q, j) ? 1.0 - spec.slip : spec.guess;
  return assemble(std::move(truth), std::move(q), rng);
}

// --- ground truth export -------------------------------------------------------------

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

std::string ground_truth_json(const GroundTruth& truth, const ResponseMatrix& r) {
  nlohmann::json j;
  j["generator"] = truth.generator == Generator::kDina ? "dina"
                   : truth.generator == Generator::kIrt ? "irt" : "hodina";
  j["learner_ids"] = r.learner_ids();
  j["exercise_ids"] = r.exercise_ids();
  if (truth.alpha.size() > 0) {
    auto rows = nlohmann::json::array();
    for (Index i = 0; i < truth.alpha.rows(); ++i) {
      std::vector<int> row(static_cast<std::size_t>(truth.alpha.cols()));
      for (Index k = 0; k < truth.alpha.cols(); ++k) row[static_cast<std::size_t>(k)] = truth.alpha(i, k);
      rows.push_back(row);
    }
    j["alpha"] = std::move(rows);
  }
  if (truth.theta.size() > 0) j["theta"] = vec_json(truth.theta);
  if (truth.slip.size() > 0) j["slip"] = vec_json(truth.slip);
  if (truth.guess.size() > 0) j["guess"] = vec_json(truth.guess);
  if (truth.difficulty.size() > 0) j["difficulty"] = vec_json(truth.difficulty);
  if (truth.discrimination.size() > 0) j["discrimination"] = vec_json(truth.discrimination);
  if (truth.lambda0.size() > 0) j["lambda0"] = vec_json(truth.lambda0);
  if (truth.lambda1.size() > 0) j["lambda1"] = vec_json(truth.lambda1);
  auto probs = nlohmann::json::array();
  for (Index i = 0; i < truth.bayes_prob.rows(); ++i) probs.push_back(vec_json(truth.bayes_prob.row(i).transpose()));
  j["bayes_prob"] = std::move(probs);
  return j.dump(1) + "\n";
}

GroundTruth parse_ground_truth_json(const std::string& text) {
  GroundTruth truth;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kMalformedRow, std::string("ground truth JSON: ") + e.what());
  }
  const auto gen = j.value("generator", std::string("dina"));
  truth.generator = gen == "irt" ? Generator::kIrt : gen == "hodina" ? Generator::kHoDina : Generator::kDina;
  if (j.contains("alpha")) {
    const auto rows = j["alpha"].get<std::vector<std::vector<int>>>();
    truth.alpha.resize(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t k = 0; k < rows[i].size(); ++k)
        truth.alpha(static_cast<Index>(i), static_cast<Index>(k)) = static_cast<std::int8_t>(rows[i][k]);
  }
  if (j.contains("theta")) truth.theta = json_vec(j["theta"]);
  if (j.contains("slip")) truth.slip = json_vec(j["slip"]);
  if (j.contains("guess")) truth.guess = json_vec(j["guess"]);
  if (j.contains("difficulty")) truth.difficulty = json_vec(j["difficulty"]);
  if (j.contains("discrimination")) truth.discrimination = json_vec(j["discrimination"]);
  if (j.contains("lambda0")) truth.lambda0 = json_vec(j["lambda0"]);
  if (j.contains("lambda1")) truth.lambda1 = json_vec(j["lambda1"]);
  const auto probs = j.at("bayes_prob").get<std::vector<std::vector<double>>>();
  truth.bayes_prob.resize(static_cast<Index>(probs.size()), probs.empty() ? 0 : static_cast<Index>(probs[0].size()));
  for (std::size_t i = 0; i < probs.size(); ++i)
    for (std::size_t k = 0; k < probs[i].size(); ++k)
      truth.bayes_prob(static_cast<Index>(i), static_cast<Index>(k)) = probs[i][k];
  return truth;
}

}  // namespace ldiag
