#include <algorithm>
#include <cmath>
#include <numeric>

#include "ldiag/evaluation.hpp"

namespace ldiag {

double auc(std::span<const double> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw Error(Errc::kLengthMismatch, "labels and scores differ in length");
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positives = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1.0) {
        positives += 1.0;
        rank_sum += avg_rank;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) throw Error(Errc::kSingleClassLabels, "AUC needs both classes");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

double auc(const Eigen::VectorXd& labels, const Eigen::VectorXd& scores) {
  return auc(std::span<const double>(labels.data(), static_cast<std::size_t>(labels.size())),
             std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())));
}

double rmse(std::span<const double> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw Error(Errc::kLengthMismatch, "labels and scores differ in length");
  if (labels.empty()) throw Error(Errc::kEmptyInput, "RMSE of no cells");
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) s += (labels[i] - scores[i]) * (labels[i] - scores[i]);
  return std::sqrt(s / static_cast<double>(labels.size()));
}

double rmse(const Eigen::VectorXd& labels, const Eigen::VectorXd& scores) {
  return rmse(std::span<const double>(labels.data(), static_cast<std::size_t>(labels.size())),
              std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())));
}

Eigen::VectorXd labels_of(const ResponseMatrix& r, std::span<const Cell> cells) {
  Eigen::VectorXd y(static_cast<Index>(cells.size()));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto v = r(cells[i].learner, cells[i].exercise);
    if (v == ResponseMatrix::kMissing) throw Error(Errc::kInvalidArgument, "label requested for a missing cell");
    y(static_cast<Index>(i)) = v;
  }
  return y;
}

Eigen::VectorXd baseline_predict(Channel channel, const FittedChannels& fitted, std::span<const Cell> cells,
                                 const BaselineOptions& options) {
  if (!fitted.has(channel)) {
    throw Error(Errc::kMissingChannel, std::string("channel ") + channel_name(channel) + " was not fitted");
  }
  Eigen::VectorXd out(static_cast<Index>(cells.size()));
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const Index i = cells[c].learner, j = cells[c].exercise;
    double p = 0.0;
    switch (channel) {
      case Channel::kIrt: {
        const auto& it = fitted.irt->items;
        p = irt_response(fitted.irt->learners.theta(i), it.difficulty(j), it.discrimination(j), it.guess(j), it.scale);
        break;
      }
      case Channel::kDina: {
        const auto& d = *fitted.dina;
        const double s = d.items.slip(j), g = d.items.guess(j);
        if (options.hard_profile) {
          Index cls = 0;
          for (Index k = 0; k < d.learners.alpha.cols(); ++k) cls |= Index{d.learners.alpha(i, k) != 0} << k;
          p = dina_response(static_cast<int>(d.ideal(j, cls)), s, g);
        } else {
          // P(correct) = sum over classes of posterior * response of that class.
          const double mass_ideal = d.learners.posterior.row(i).dot(d.ideal.row(j));
          p = g + (1.0 - s - g) * mass_ideal;
        }
        break;
      }
      case Channel::kMirt: {
        const auto& m = *fitted.mirt;
        p = mirt_response(m.learners.ability.row(i).transpose(), m.items.discrimination.row(j).transpose(),
                          m.items.difficulty(j), m.items.guess(j), m.items.scale);
        break;
      }
      case Channel::kHoDina: {
        const auto& h = fitted.hodina->params;
        const double s = h.slip(j), g = h.guess(j);
        const double eta = options.hard_profile ? std::round(h.eta_mean(i, j)) : h.eta_mean(i, j);
        p = g + (1.0 - s - g) * eta;
        break;
      }
    }
    out(static_cast<Index>(c)) = p;
  }
  return out;
}

}  // namespace ldiag
