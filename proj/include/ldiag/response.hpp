#pragma once

// Response functions of the four psychometric channels. Header-only and
// templated on the scalar so the same code serves double precision fits and
// the long-double reference checks in the tests.

#include <cmath>

#include <Eigen/Core>

#include "ldiag/error.hpp"

namespace ldiag {

inline constexpr double kDefaultScale = 1.702;

template <typename Scalar>
Scalar logistic(Scalar z) {
  using std::exp;
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-z));
  const Scalar e = exp(z);
  return e / (Scalar(1) + e);
}

/// 3PL: c + (1 - c) / (1 + exp(-D a (theta - b))).
template <typename Scalar>
Scalar irt_response(Scalar theta, Scalar difficulty, Scalar discrimination, Scalar guess,
                    Scalar scale = Scalar(kDefaultScale)) {
  return guess + (Scalar(1) - guess) * logistic(scale * discrimination * (theta - difficulty));
}

/// Conjunctive ideal response: 1 iff every required skill is mastered.
template <typename DerivedA, typename DerivedQ>
int dina_ideal_response(const Eigen::DenseBase<DerivedA>& alpha, const Eigen::DenseBase<DerivedQ>& q_row) {
  if (alpha.size() != q_row.size()) throw Error(Errc::kLengthMismatch, "alpha and q row lengths differ");
  for (Eigen::Index k = 0; k < alpha.size(); ++k)
    if (q_row(k) != 0 && alpha(k) == 0) return 0;
  return 1;
}

template <typename Scalar>
Scalar dina_response(int eta, Scalar slip, Scalar guess) {
  return eta == 1 ? Scalar(1) - slip : guess;
}

/// Compensatory MIRT: c + (1 - c) / (1 + exp(-D (a . alpha + d))).
template <typename DerivedAlpha, typename DerivedDisc>
typename DerivedAlpha::Scalar mirt_response(const Eigen::MatrixBase<DerivedAlpha>& ability,
                                            const Eigen::MatrixBase<DerivedDisc>& disc,
                                            typename DerivedAlpha::Scalar intercept,
                                            typename DerivedAlpha::Scalar guess,
                                            typename DerivedAlpha::Scalar scale =
                                                typename DerivedAlpha::Scalar(kDefaultScale)) {
  using Scalar = typename DerivedAlpha::Scalar;
  if (ability.size() != disc.size()) throw Error(Errc::kDimensionMismatch, "ability and discrimination dims differ");
  const Scalar z = scale * (disc.dot(ability) + intercept);
  return guess + (Scalar(1) - guess) * logistic(z);
}

/// Higher-order attribute link: P(alpha_k = 1 | theta) = logistic(l0 + l1 theta).
template <typename Scalar>
Scalar hodina_attr_prob(Scalar theta, Scalar lambda0, Scalar lambda1) {
  return logistic(lambda0 + lambda1 * theta);
}

}  // namespace ldiag
