#include <cmath>
#include <sstream>

#include "json_util.hpp"
#include "ldiag/interpret.hpp"

namespace ldiag {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::string> text_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

ParameterReport select_rows(const CognitiveParameterSets& sets, std::span<const std::string> ids, bool learners) {
  ParameterReport out;
  out.variant = variant_name(sets.variant);
  out.columns = learners ? sets.sc_columns : sets.ec_columns;
  const auto& all = learners ? sets.learner_ids : sets.exercise_ids;
  const auto& m = learners ? sets.sc : sets.ec;
  out.ids = ids.empty() ? all : std::vector<std::string>(ids.begin(), ids.end());
  out.values.resize(static_cast<Index>(out.ids.size()), m.cols());
  for (std::size_t i = 0; i < out.ids.size(); ++i) {
    const Index row = learners ? sets.learner_row(out.ids[i]) : sets.exercise_row(out.ids[i]);
    out.values.row(static_cast<Index>(i)) = m.row(row);
  }
  return out;
}

}  // namespace

ParameterReport export_learner_report(const CognitiveParameterSets& sets, std::span<const std::string> ids) {
  return select_rows(sets, ids, true);
}

ParameterReport export_exercise_report(const CognitiveParameterSets& sets, std::span<const std::string> ids) {
  return select_rows(sets, ids, false);
}

std::string parameter_report_csv(const ParameterReport& report, const std::string& id_header) {
  std::string out = id_header;
  for (const auto& c : report.columns) out += "," + c.name;
  out += "\n";
  for (std::size_t i = 0; i < report.ids.size(); ++i) {
    out += report.ids[i];
    for (std::size_t c = 0; c < report.columns.size(); ++c) {
      const double v = report.values(static_cast<Index>(i), static_cast<Index>(c));
      out += "," + (report.columns[c].binary ? std::string(v != 0.0 ? "1" : "0") : format_double(v));
    }
    out += "\n";
  }
  return out;
}

ParameterReport parse_parameter_report_csv(const std::string& text, const std::vector<ParamColumn>& columns,
                                           const std::string& variant) {
  const auto lines = text_lines(text);
  if (lines.empty()) throw Error(Errc::kMalformedRow, "parameter report has no header");
  const auto header = split_fields(lines[0]);
  if (header.size() != columns.size() + 1) {
    throw Error(Errc::kMalformedRow, "parameter report has " + std::to_string(header.size() - 1) + " columns, expected " +
                                         std::to_string(columns.size()));
  }
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (header[c + 1] != columns[c].name) {
      throw Error(Errc::kMalformedRow, "parameter report column '" + header[c + 1] + "', expected '" +
                                           columns[c].name + "'");
    }
  }
  ParameterReport out;
  out.variant = variant;
  out.columns = columns;
  out.values.resize(static_cast<Index>(lines.size() - 1), static_cast<Index>(columns.size()));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split_fields(lines[i]);
    if (fields.size() != header.size()) {
      throw Error(Errc::kMalformedRow, "line " + std::to_string(i + 1) + " has " + std::to_string(fields.size()) +
                                           " fields");
    }
    out.ids.push_back(fields[0]);
    for (std::size_t c = 0; c < columns.size(); ++c)
      out.values(static_cast<Index>(i - 1), static_cast<Index>(c)) = parse_double(fields[c + 1]);
  }
  return out;
}

std::string parameter_report_json(const ParameterReport& report) {
  detail::Json columns = detail::Json::array(), records = detail::Json::array();
  for (const auto& c : report.columns) columns.push_back({{"name", c.name}, {"binary", c.binary}});
  for (std::size_t i = 0; i < report.ids.size(); ++i) {
    detail::Json mastery = detail::Json::object(), params = detail::Json::object();
    for (std::size_t c = 0; c < report.columns.size(); ++c) {
      const double v = report.values(static_cast<Index>(i), static_cast<Index>(c));
      if (report.columns[c].binary) {
        mastery[report.columns[c].name] = v != 0.0 ? 1 : 0;
      } else {
        params[report.columns[c].name] = v;
      }
    }
    records.push_back({{"id", report.ids[i]}, {"mastery", mastery}, {"parameters", params}});
  }
  return detail::Json{{"variant", report.variant}, {"columns", columns}, {"records", records}}.dump(1);
}

ParameterReport parse_parameter_report_json(const std::string& text) {
  const auto j = detail::parse_json(text, "parameter report");
  ParameterReport out;
  try {
    out.variant = j.at("variant").get<std::string>();
    for (const auto& c : j.at("columns")) out.columns.push_back({c.at("name"), c.at("binary")});
    const auto& records = j.at("records");
    out.values.resize(static_cast<Index>(records.size()), static_cast<Index>(out.columns.size()));
    Index i = 0;
    for (const auto& r : records) {
      out.ids.push_back(r.at("id").get<std::string>());
      for (std::size_t c = 0; c < out.columns.size(); ++c) {
        const auto& col = out.columns[c];
        out.values(i, static_cast<Index>(c)) =
            col.binary ? r.at("mastery").at(col.name).get<double>() : r.at("parameters").at(col.name).get<double>();
      }
      ++i;
    }
  } catch (const detail::Json::exception& e) {
    throw Error(Errc::kMalformedRow, std::string("parameter report: ") + e.what());
  }
  return out;
}

LatentCorrelation latent_correlation(const Eigen::MatrixXd& learner_latent, const Eigen::MatrixXd& exercise_latent) {
  if (learner_latent.rows() != exercise_latent.rows()) {
    throw Error(Errc::kLengthMismatch, "latent batches have " + std::to_string(learner_latent.rows()) + " and " +
                                           std::to_string(exercise_latent.rows()) + " rows");
  }
  const Index n = learner_latent.rows();
  if (n < 3) throw Error(Errc::kBatchTooSmall, "correlation needs at least 3 cells, got " + std::to_string(n));

  LatentCorrelation out;
  // Center and scale each column to unit norm; zero-variance columns stay zero.
  auto standardize = [](const Eigen::MatrixXd& m, std::vector<Index>& degenerate) {
    Eigen::MatrixXd z = m.rowwise() - m.colwise().mean();
    for (Index c = 0; c < z.cols(); ++c) {
      const double norm = z.col(c).norm();
      if (norm == 0.0 || !std::isfinite(norm)) {
        z.col(c).setZero();
        degenerate.push_back(c);
      } else {
        z.col(c) /= norm;
      }
    }
    return z;
  };
  const auto a = standardize(learner_latent, out.degenerate_learner_dims);
  const auto b = standardize(exercise_latent, out.degenerate_exercise_dims);
  out.r = (a.transpose() * b).cwiseMax(-1.0).cwiseMin(1.0);
  return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> cell_latents(const LdmModel& model, std::span<const Cell> cells) {
  Eigen::MatrixXd hs(static_cast<Index>(cells.size()), model.learner_latent.cols());
  Eigen::MatrixXd he(static_cast<Index>(cells.size()), model.exercise_latent.cols());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    if (c.learner < 0 || c.learner >= model.learner_latent.rows())
      throw Error(Errc::kUnknownLearner, "learner row " + std::to_string(c.learner));
    if (c.exercise < 0 || c.exercise >= model.exercise_latent.rows())
      throw Error(Errc::kUnknownExercise, "exercise row " + std::to_string(c.exercise));
    hs.row(static_cast<Index>(i)) = model.learner_latent.row(c.learner);
    he.row(static_cast<Index>(i)) = model.exercise_latent.row(c.exercise);
  }
  return {std::move(hs), std::move(he)};
}

std::string latent_correlation_csv(const LatentCorrelation& corr) {
  std::string out = "learner_dim";
  for (Index j = 0; j < corr.r.cols(); ++j) out += ",e" + std::to_string(j + 1);
  out += "\n";
  for (Index i = 0; i < corr.r.rows(); ++i) {
    out += "s" + std::to_string(i + 1);
    for (Index j = 0; j < corr.r.cols(); ++j) out += "," + format_double(corr.r(i, j));
    out += "\n";
  }
  return out;
}

Eigen::MatrixXd attention_matrix(std::span<const PredictionRecord> records) {
  if (records.empty()) return {};
  Eigen::MatrixXd out(static_cast<Index>(records.size()), records.front().attention.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].attention.size() != out.cols()) {
      throw Error(Errc::kShapeMismatch, "attention vectors differ in length");
    }
    out.row(static_cast<Index>(i)) = records[i].attention.transpose();
  }
  return out;
}

std::string attention_csv(std::span<const PredictionRecord> records, const std::vector<std::string>& feature_names) {
  std::string out = "learner_id,exercise_id";
  for (const auto& n : feature_names) out += "," + n;
  out += "\n";
  for (const auto& rec : records) {
    if (rec.attention.size() != static_cast<Index>(feature_names.size())) {
      throw Error(Errc::kShapeMismatch, "attention vector of length " + std::to_string(rec.attention.size()) +
                                            " for " + std::to_string(feature_names.size()) + " features");
    }
    out += rec.learner_id + "," + rec.exercise_id;
    for (Index k = 0; k < rec.attention.size(); ++k) out += "," + format_double(rec.attention(k));
    out += "\n";
  }
  return out;
}

}  // namespace ldiag
