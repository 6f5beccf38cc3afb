#include "ldiag/encoding.hpp"

#include <algorithm>

#include "json_util.hpp"

namespace ldiag {

Index EncodingPlan::width() const {
  Index w = 0;
  for (const auto& c : columns) w += c.width();
  return w;
}

Index EncodingPlan::continuous_columns() const {
  return std::count_if(columns.begin(), columns.end(), [](const PlanColumn& c) { return !c.binary; });
}

std::vector<std::string> EncodingPlan::constant_columns() const {
  std::vector<std::string> out;
  for (const auto& c : columns)
    if (c.constant) out.push_back(c.name);
  return out;
}

Eigen::VectorXd EncodingPlan::encode(const Eigen::Ref<const Eigen::VectorXd>& row) const {
  if (row.size() != static_cast<Index>(columns.size())) {
    throw Error(Errc::kArityMismatch, "row has " + std::to_string(row.size()) + " values, plan expects " +
                                          std::to_string(columns.size()));
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(width());
  Index offset = 0;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto& col = columns[c];
    const double v = row(static_cast<Index>(c));
    if (col.binary) {
      out(offset) = v;
    } else {
      const auto bin = std::upper_bound(col.edges.begin(), col.edges.end(), v) - col.edges.begin();
      out(offset + bin) = 1.0;
    }
    offset += col.width();
  }
  return out;
}

nd::RowMatrixXd EncodingPlan::encode_rows(const Eigen::MatrixXd& rows) const {
  nd::RowMatrixXd out(rows.rows(), width());
  for (Index i = 0; i < rows.rows(); ++i) out.row(i) = encode(rows.row(i).transpose()).transpose();
  return out;
}

EncodingPlan build_encoding_plan(const Eigen::MatrixXd& values, const std::vector<ParamColumn>& columns,
                                 int bins_per_param, std::span<const Index> train_rows) {
  if (bins_per_param < 2) throw Error(Errc::kInvalidArgument, "need at least 2 bins per parameter");
  if (train_rows.empty()) throw Error(Errc::kEmptyInput, "no training rows for the encoding plan");
  if (values.cols() != static_cast<Index>(columns.size())) {
    throw Error(Errc::kArityMismatch, "parameter matrix and column list disagree");
  }
  EncodingPlan plan;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    PlanColumn col{columns[c].name, columns[c].binary, {}, false};
    if (!col.binary) {
      double lo = values(train_rows[0], static_cast<Index>(c)), hi = lo;
      for (Index r : train_rows) {
        lo = std::min(lo, values(r, static_cast<Index>(c)));
        hi = std::max(hi, values(r, static_cast<Index>(c)));
      }
      if (hi > lo) {
        for (int b = 1; b < bins_per_param; ++b) col.edges.push_back(lo + (hi - lo) * b / bins_per_param);
      } else {
        col.constant = true;
      }
    }
    plan.columns.push_back(std::move(col));
  }
  return plan;
}

EncodingPlans build_encoding_plans(const CognitiveParameterSets& sets, int bins_per_param,
                                   std::span<const Index> train_learners, std::span<const Index> train_exercises) {
  return {build_encoding_plan(sets.sc, sets.sc_columns, bins_per_param, train_learners),
          build_encoding_plan(sets.ec, sets.ec_columns, bins_per_param, train_exercises)};
}

namespace {

detail::Json plan_json(const EncodingPlan& plan) {
  detail::Json cols = detail::Json::array();
  for (const auto& c : plan.columns) {
    detail::Json j{{"name", c.name}};
    if (c.binary) {
      j["binary"] = true;
    } else {
      j["edges"] = c.edges;
      if (c.constant) j["constant"] = true;
    }
    cols.push_back(std::move(j));
  }
  return {{"width", plan.width()}, {"columns", std::move(cols)}};
}

EncodingPlan plan_from(const detail::Json& j) {
  EncodingPlan plan;
  for (const auto& c : j.at("columns")) {
    PlanColumn col;
    col.name = c.at("name").get<std::string>();
    col.binary = c.value("binary", false);
    if (!col.binary) {
      col.edges = c.at("edges").get<std::vector<double>>();
      col.constant = c.value("constant", false);
      if (!std::is_sorted(col.edges.begin(), col.edges.end()) ||
          std::adjacent_find(col.edges.begin(), col.edges.end()) != col.edges.end()) {
        throw Error(Errc::kMalformedRow, "plan edges for " + col.name + " are not strictly increasing");
      }
    }
    plan.columns.push_back(std::move(col));
  }
  return plan;
}

}  // namespace

std::string encoding_plans_json(const EncodingPlans& plans) {
  return detail::Json{{"learner", plan_json(plans.learner)}, {"exercise", plan_json(plans.exercise)}}.dump(1);
}

EncodingPlans parse_encoding_plans_json(const std::string& text) {
  const auto j = detail::parse_json(text, "encoding plan");
  try {
    return {plan_from(j.at("learner")), plan_from(j.at("exercise"))};
  } catch (const detail::Json::exception& e) {
    throw Error(Errc::kMalformedRow, std::string("encoding plan: ") + e.what());
  }
}

}  // namespace ldiag
