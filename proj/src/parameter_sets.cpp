#include <algorithm>

#include "ldiag/psychometrics.hpp"

namespace ldiag {

const char* variant_name(Variant v) { return v == Variant::kLdmId ? "ldm-id" : "ldm-hmi"; }

Variant parse_variant(const std::string& name) {
  if (name == "ldm-id") return Variant::kLdmId;
  if (name == "ldm-hmi") return Variant::kLdmHmi;
  throw Error(Errc::kInvalidArgument, "unknown variant '" + name + "' (expected ldm-id or ldm-hmi)");
}

const char* channel_name(Channel c) {
  switch (c) {
    case Channel::kIrt: return "irt";
    case Channel::kDina: return "dina";
    case Channel::kMirt: return "mirt";
    case Channel::kHoDina: return "hodina";
  }
  return "?";
}

std::vector<Channel> channels_for(Variant v) {
  if (v == Variant::kLdmId) return {Channel::kIrt, Channel::kDina};
  return {Channel::kIrt, Channel::kMirt, Channel::kHoDina};
}

bool FittedChannels::has(Channel c) const {
  switch (c) {
    case Channel::kIrt: return irt.has_value();
    case Channel::kDina: return dina.has_value();
    case Channel::kMirt: return mirt.has_value();
    case Channel::kHoDina: return hodina.has_value();
  }
  return false;
}

FittedChannels fit_channels(const ResponseMatrix& r, const QMatrix& q, const std::vector<Channel>& channels,
                            const PsychConfig& config) {
  q.check_aligned(r);
  FittedChannels out;
  out.learner_ids = r.learner_ids();
  out.exercise_ids = r.exercise_ids();
  out.knowledge_ids = q.knowledge_ids();
  out.data_digest = data_digest(r);
  auto wanted = [&](Channel c) { return std::find(channels.begin(), channels.end(), c) != channels.end(); };
  if (wanted(Channel::kIrt)) out.irt = fit_irt_em(r, config.em);
  if (wanted(Channel::kDina)) out.dina = fit_dina_em(r, q, config.em);
  if (wanted(Channel::kMirt)) out.mirt = fit_mirt_em(r, config.mirt_dims, config.em);
  if (wanted(Channel::kHoDina)) out.hodina = fit_hodina_mcmc(r, q, config.mcmc);
  return out;
}

Index CognitiveParameterSets::learner_row(const std::string& id) const {
  const auto it = std::find(learner_ids.begin(), learner_ids.end(), id);
  if (it == learner_ids.end()) throw Error(Errc::kUnknownLearner, "learner '" + id + "'");
  return static_cast<Index>(it - learner_ids.begin());
}

Index CognitiveParameterSets::exercise_row(const std::string& id) const {
  const auto it = std::find(exercise_ids.begin(), exercise_ids.end(), id);
  if (it == exercise_ids.end()) throw Error(Errc::kUnknownExercise, "exercise '" + id + "'");
  return static_cast<Index>(it - exercise_ids.begin());
}

namespace {

// Accumulates named columns, checking every block has the expected row count.
class ColumnBuilder {
 public:
  explicit ColumnBuilder(Index rows) : rows_(rows) {}

  void add(const std::string& name, const Eigen::VectorXd& values, bool binary = false) {
    if (values.size() != rows_) {
      throw Error(Errc::kShapeMismatch, name + " has " + std::to_string(values.size()) + " rows, expected " +
                                            std::to_string(rows_));
    }
    columns_.push_back({name, binary});
    blocks_.push_back(values);
  }

  std::vector<ParamColumn> columns() const { return columns_; }

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd m(rows_, static_cast<Index>(blocks_.size()));
    for (std::size_t c = 0; c < blocks_.size(); ++c) m.col(static_cast<Index>(c)) = blocks_[c];
    return m;
  }

 private:
  Index rows_;
  std::vector<ParamColumn> columns_;
  std::vector<Eigen::VectorXd> blocks_;
};

void add_alpha(ColumnBuilder& b, const std::string& prefix, const BinaryGrid& alpha,
               const std::vector<std::string>& knowledge_ids) {
  if (alpha.cols() != static_cast<Index>(knowledge_ids.size())) {
    throw Error(Errc::kShapeMismatch, prefix + " has " + std::to_string(alpha.cols()) + " knowledge columns, expected " +
                                          std::to_string(knowledge_ids.size()));
  }
  for (Index k = 0; k < alpha.cols(); ++k) {
    b.add(prefix + "." + knowledge_ids[static_cast<std::size_t>(k)], alpha.col(k).cast<double>(), true);
  }
}

}  // namespace

CognitiveParameterSets build_parameter_sets(Variant variant, const FittedChannels& channels, bool include_irt_guess) {
  for (Channel c : channels_for(variant)) {
    if (!channels.has(c)) {
      throw Error(Errc::kMissingChannel,
                  std::string(variant_name(variant)) + " needs the " + channel_name(c) + " channel");
    }
  }
  const Index n = static_cast<Index>(channels.learner_ids.size());
  const Index m = static_cast<Index>(channels.exercise_ids.size());
  ColumnBuilder ec(m), sc(n);
  const auto& irt = *channels.irt;
  ec.add("irt.difficulty", irt.items.difficulty);
  ec.add("irt.discrimination", irt.items.discrimination);
  sc.add("irt.theta", irt.learners.theta);

  if (variant == Variant::kLdmId) {
    const auto& dina = *channels.dina;
    ec.add("dina.guess", dina.items.guess);
    ec.add("dina.slip", dina.items.slip);
    add_alpha(sc, "dina.alpha", dina.learners.alpha, channels.knowledge_ids);
  } else {
    const auto& ho = channels.hodina->params;
    const auto& mirt = *channels.mirt;
    ec.add("hodina.slip", ho.slip);
    ec.add("hodina.guess", ho.guess);
    for (Index d = 0; d < mirt.items.discrimination.cols(); ++d) {
      ec.add("mirt.discrimination." + std::to_string(d + 1), mirt.items.discrimination.col(d));
    }
    ec.add("mirt.guess", mirt.items.guess);
    ec.add("mirt.difficulty", mirt.items.difficulty);
    sc.add("hodina.theta", ho.theta);
    for (Index d = 0; d < mirt.learners.ability.cols(); ++d) {
      sc.add("mirt.alpha." + std::to_string(d + 1), mirt.learners.ability.col(d));
    }
    add_alpha(sc, "hodina.alpha", ho.alpha, channels.knowledge_ids);
  }
  if (include_irt_guess) ec.add("irt.guess", irt.items.guess);

  CognitiveParameterSets out;
  out.variant = variant;
  out.learner_ids = channels.learner_ids;
  out.exercise_ids = channels.exercise_ids;
  out.ec_columns = ec.columns();
  out.sc_columns = sc.columns();
  out.ec = ec.matrix();
  out.sc = sc.matrix();
  out.data_digest = channels.data_digest;
  return out;
}

}  // namespace ldiag
