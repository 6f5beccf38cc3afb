#include "ldiag/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace ldiag {

namespace {

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> lines_of(const std::string& text) {
  std::vector<std::string_view> lines;
  std::string_view rest(text);
  while (!rest.empty()) {
    const auto pos = rest.find('\n');
    lines.push_back(rest.substr(0, pos));
    if (pos == std::string_view::npos) break;
    rest.remove_prefix(pos + 1);
  }
  return lines;
}

std::string line_msg(std::size_t line_no, const std::string& what) {
  return "line " + std::to_string(line_no) + ": " + what;
}

void check_unique(const std::vector<std::string>& ids, const char* what) {
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) {
      throw Error(Errc::kDuplicateRecord, std::string("duplicate ") + what + " id '" + id + "'");
    }
  }
}

Index find_index(const std::vector<std::string>& ids, const std::string& id, Errc err) {
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw Error(err, "unknown id '" + id + "'");
  return static_cast<Index>(it - ids.begin());
}

}  // namespace

// --- ResponseMatrix -----------------------------------------------------------

ResponseMatrix::ResponseMatrix(std::vector<std::string> learner_ids,
                               std::vector<std::string> exercise_ids, CellGrid cells)
    : ResponseMatrix(Unchecked{}, std::move(learner_ids), std::move(exercise_ids), std::move(cells)) {
  for (Index i = 0; i < cells_.rows(); ++i) {
    bool any = false;
    for (Index j = 0; j < cells_.cols(); ++j) any = any || observed(i, j);
    if (!any) {
      throw Error(Errc::kEmptyLearnerOrExercise, "learner '" + learner_ids_[i] + "' has no observations");
    }
  }
  for (Index j = 0; j < cells_.cols(); ++j) {
    bool any = false;
    for (Index i = 0; i < cells_.rows(); ++i) any = any || observed(i, j);
    if (!any) {
      throw Error(Errc::kEmptyLearnerOrExercise, "exercise '" + exercise_ids_[j] + "' has no observations");
    }
  }
}

ResponseMatrix::ResponseMatrix(Unchecked, std::vector<std::string> learner_ids,
                               std::vector<std::string> exercise_ids, CellGrid cells)
    : learner_ids_(std::move(learner_ids)), exercise_ids_(std::move(exercise_ids)), cells_(std::move(cells)) {
  if (static_cast<Index>(learner_ids_.size()) != cells_.rows() ||
      static_cast<Index>(exercise_ids_.size()) != cells_.cols()) {
    throw Error(Errc::kShapeMismatch, "id lists do not match the cell grid");
  }
  check_unique(learner_ids_, "learner");
  check_unique(exercise_ids_, "exercise");
  for (Index i = 0; i < cells_.size(); ++i) {
    const auto v = cells_.data()[i];
    if (v != 0 && v != 1 && v != kMissing) {
      throw Error(Errc::kNonBinaryScore, "cell value " + std::to_string(v));
    }
  }
}

Index ResponseMatrix::num_observed() const {
  return (cells_.array() != kMissing).count();
}

std::vector<Cell> ResponseMatrix::observed_cells() const {
  std::vector<Cell> out;
  out.reserve(static_cast<std::size_t>(num_observed()));
  for (Index i = 0; i < cells_.rows(); ++i)
    for (Index j = 0; j < cells_.cols(); ++j)
      if (observed(i, j)) out.push_back({i, j});
  return out;
}

ResponseMatrix ResponseMatrix::masked(std::span<const Cell> hidden) const {
  CellGrid grid = cells_;
  for (const auto& c : hidden) grid(c.learner, c.exercise) = kMissing;
  return ResponseMatrix(Unchecked{}, learner_ids_, exercise_ids_, std::move(grid));
}

Eigen::MatrixXd ResponseMatrix::outcome_matrix() const {
  return (cells_.array() == 1).cast<double>().matrix();
}

Eigen::MatrixXd ResponseMatrix::mask_matrix() const {
  return (cells_.array() != kMissing).cast<double>().matrix();
}

Index ResponseMatrix::learner_index(const std::string& id) const {
  return find_index(learner_ids_, id, Errc::kUnknownLearner);
}

Index ResponseMatrix::exercise_index(const std::string& id) const {
  return find_index(exercise_ids_, id, Errc::kUnknownExercise);
}

bool operator==(const ResponseMatrix& a, const ResponseMatrix& b) {
  return a.learner_ids_ == b.learner_ids_ && a.exercise_ids_ == b.exercise_ids_ &&
         a.cells_.rows() == b.cells_.rows() && a.cells_.cols() == b.cells_.cols() &&
         a.cells_ == b.cells_;
}

// --- QMatrix ---------------------------------------------------------------------

QMatrix::QMatrix(std::vector<std::string> exercise_ids, std::vector<std::string> knowledge_ids,
                 BinaryGrid cells)
    : exercise_ids_(std::move(exercise_ids)), knowledge_ids_(std::move(knowledge_ids)), cells_(std::move(cells)) {
  if (static_cast<Index>(exercise_ids_.size()) != cells_.rows() ||
      static_cast<Index>(knowledge_ids_.size()) != cells_.cols()) {
    throw Error(Errc::kShapeMismatch, "id lists do not match the Q grid");
  }
  check_unique(exercise_ids_, "exercise");
  check_unique(knowledge_ids_, "knowledge");
  for (Index j = 0; j < cells_.rows(); ++j) {
    bool any = false;
    for (Index k = 0; k < cells_.cols(); ++k) {
      const auto v = cells_(j, k);
      if (v != 0 && v != 1) throw Error(Errc::kNonBinaryCell, "exercise '" + exercise_ids_[j] + "'");
      any = any || v == 1;
    }
    if (!any) throw Error(Errc::kAllZeroExerciseRow, "exercise '" + exercise_ids_[j] + "' tests no knowledge point");
  }
}

void QMatrix::check_aligned(const ResponseMatrix& r) const {
  if (exercise_ids_ != r.exercise_ids()) {
    throw Error(Errc::kShapeMismatch, "Q-matrix exercise ids do not match the response matrix");
  }
}

bool operator==(const QMatrix& a, const QMatrix& b) {
  return a.exercise_ids_ == b.exercise_ids_ && a.knowledge_ids_ == b.knowledge_ids_ &&
         a.cells_.rows() == b.cells_.rows() && a.cells_.cols() == b.cells_.cols() &&
         a.cells_ == b.cells_;
}

// --- parsing ---------------------------------------------------------------------

ResponseMatrix parse_long_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || trim(lines[0]) != "learner_id,exercise_id,score") {
    throw Error(Errc::kMalformedRow, line_msg(1, "expected header 'learner_id,exercise_id,score'"));
  }
  std::vector<std::string> learners, exercises;
  std::unordered_map<std::string, Index> learner_pos, exercise_pos;
  struct Rec { Index l, e; std::int8_t v; };
  std::vector<Rec> records;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const auto line = trim(lines[n]);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw Error(Errc::kMalformedRow, line_msg(n + 1, "expected 3 fields"));
    }
    const auto score = trim(fields[2]);
    if (score != "0" && score != "1" && score != "NA") {
      throw Error(Errc::kNonBinaryScore, line_msg(n + 1, "score '" + std::string(score) + "'"));
    }
    auto [li, l_new] = learner_pos.try_emplace(fields[0], static_cast<Index>(learners.size()));
    if (l_new) learners.push_back(fields[0]);
    auto [ei, e_new] = exercise_pos.try_emplace(fields[1], static_cast<Index>(exercises.size()));
    if (e_new) exercises.push_back(fields[1]);
    const std::int8_t v = score == "1" ? 1 : (score == "0" ? 0 : ResponseMatrix::kMissing);
    records.push_back({li->second, ei->second, v});
  }
  CellGrid grid = CellGrid::Constant(static_cast<Index>(learners.size()),
                                     static_cast<Index>(exercises.size()), ResponseMatrix::kMissing);
  RowMatrix<bool> seen = RowMatrix<bool>::Constant(grid.rows(), grid.cols(), false);
  for (const auto& rec : records) {
    if (std::exchange(seen(rec.l, rec.e), true)) {
      throw Error(Errc::kDuplicateRecord,
                  "(" + learners[rec.l] + ", " + exercises[rec.e] + ") appears more than once");
    }
    grid(rec.l, rec.e) = rec.v;
  }
  return ResponseMatrix(std::move(learners), std::move(exercises), std::move(grid));
}

ResponseMatrix parse_dense_tsv(const std::string& text) {
  std::vector<std::vector<std::int8_t>> rows;
  std::size_t width = 0;
  const auto lines = lines_of(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto line = trim(lines[n]);
    if (line.empty()) continue;
    std::vector<std::int8_t> row;
    std::istringstream in{std::string(line)};
    std::string tok;
    while (in >> tok) {
      if (tok == "0") row.push_back(0);
      else if (tok == "1") row.push_back(1);
      else if (tok == "NA") row.push_back(ResponseMatrix::kMissing);
      else throw Error(Errc::kNonBinaryScore, line_msg(n + 1, "token '" + tok + "'"));
    }
    if (rows.empty()) width = row.size();
    if (row.size() != width) throw Error(Errc::kMalformedRow, line_msg(n + 1, "ragged row"));
    rows.push_back(std::move(row));
  }
  if (rows.empty() || width == 0) throw Error(Errc::kMalformedRow, "empty grid");
  CellGrid grid(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) grid(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  std::vector<std::string> learners, exercises;
  for (std::size_t i = 0; i < rows.size(); ++i) learners.push_back("s" + std::to_string(i + 1));
  for (std::size_t j = 0; j < width; ++j) exercises.push_back("e" + std::to_string(j + 1));
  return ResponseMatrix(std::move(learners), std::move(exercises), std::move(grid));
}

ResponseMatrix load_response_matrix(const std::filesystem::path& path, ResponseFormat format) {
  const auto text = read_text_file(path);
  return format == ResponseFormat::kLongCsv ? parse_long_csv(text) : parse_dense_tsv(text);
}

// Cells are written in an order that introduces learners and exercises in
// their index order, so the reader's first-appearance ids reproduce r. A cell
// is emitted when the later of its two ids is introduced; when neither next id
// can be introduced through an observed cell, an explicit NA row does it.
std::string to_long_csv(const ResponseMatrix& r) {
  std::string out = "learner_id,exercise_id,score\n";
  auto emit = [&](Index i, Index j, bool force) {
    const auto v = r(i, j);
    if (v == ResponseMatrix::kMissing && !force) return;
    out += r.learner_ids()[i];
    out += ',';
    out += r.exercise_ids()[j];
    out += v == 1 ? ",1\n" : (v == 0 ? ",0\n" : ",NA\n");
  };
  const Index n = r.num_learners(), m = r.num_exercises();
  Index L = 0, E = 0;  // next learner / exercise to introduce
  auto row_has = [&](Index i, Index upto) {
    for (Index j = 0; j < upto; ++j)
      if (r.observed(i, j)) return true;
    return false;
  };
  auto col_has = [&](Index j, Index upto) {
    for (Index i = 0; i < upto; ++i)
      if (r.observed(i, j)) return true;
    return false;
  };
  while (L < n || E < m) {
    if (L < n && row_has(L, E)) {
      for (Index j = 0; j < E; ++j) emit(L, j, false);
      ++L;
    } else if (E < m && col_has(E, L)) {
      for (Index i = 0; i < L; ++i) emit(i, E, false);
      ++E;
    } else if (L < n && E < m) {
      emit(L, E, true);
      for (Index j = 0; j < E; ++j) emit(L, j, false);
      for (Index i = 0; i < L; ++i) emit(i, E, false);
      ++L;
      ++E;
    } else if (L < n) {
      emit(L, 0, true);
      ++L;
    } else {
      emit(0, E, true);
      ++E;
    }
  }
  return out;
}

void write_long_csv(const ResponseMatrix& r, const std::filesystem::path& path) {
  write_text_file(path, to_long_csv(r));
}

QMatrix parse_q_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw Error(Errc::kMalformedRow, line_msg(1, "missing header"));
  const auto header = split(trim(lines[0]), ',');
  if (header.size() < 2 || header[0] != "exercise_id") {
    throw Error(Errc::kMalformedRow, line_msg(1, "expected header 'exercise_id,k_1,...'"));
  }
  std::vector<std::string> knowledge(header.begin() + 1, header.end());
  std::vector<std::string> exercises;
  std::vector<std::vector<std::int8_t>> rows;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const auto line = trim(lines[n]);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != header.size() || fields[0].empty()) {
      throw Error(Errc::kMalformedRow, line_msg(n + 1, "expected " + std::to_string(header.size()) + " fields"));
    }
    std::vector<std::int8_t> row;
    for (std::size_t k = 1; k < fields.size(); ++k) {
      const auto v = trim(fields[k]);
      if (v != "0" && v != "1") throw Error(Errc::kNonBinaryCell, line_msg(n + 1, "cell '" + std::string(v) + "'"));
      row.push_back(v == "1" ? 1 : 0);
    }
    exercises.push_back(fields[0]);
    rows.push_back(std::move(row));
  }
  BinaryGrid grid(static_cast<Index>(rows.size()), static_cast<Index>(knowledge.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t k = 0; k < knowledge.size(); ++k) grid(static_cast<Index>(j), static_cast<Index>(k)) = rows[j][k];
  return QMatrix(std::move(exercises), std::move(knowledge), std::move(grid));
}

QMatrix load_q_matrix(const std::filesystem::path& path) { return parse_q_csv(read_text_file(path)); }

void write_q_csv(const QMatrix& q, const std::filesystem::path& path) {
  std::string out = "exercise_id";
  for (const auto& k : q.knowledge_ids()) out += "," + k;
  out += '\n';
  for (Index j = 0; j < q.num_exercises(); ++j) {
    out += q.exercise_ids()[j];
    for (Index k = 0; k < q.num_knowledge(); ++k) out += q.needs(j, k) ? ",1" : ",0";
    out += '\n';
  }
  write_text_file(path, out);
}

// --- folds -----------------------------------------------------------------------

FoldPlan split_folds(const ResponseMatrix& r, int k, std::uint64_t seed) {
  if (k < 2) throw Error(Errc::kInvalidArgument, "fold count must be at least 2");
  FoldPlan plan;
  plan.k = k;
  plan.cells = r.observed_cells();
  if (static_cast<Index>(plan.cells.size()) < k) {
    throw Error(Errc::kTooFewObservations, std::to_string(plan.cells.size()) + " observed cells for " +
                                               std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(plan.cells.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  plan.fold.assign(plan.cells.size(), 0);
  for (std::size_t pos = 0; pos < order.size(); ++pos) plan.fold[order[pos]] = static_cast<int>(pos % k);
  return plan;
}

std::vector<Cell> FoldPlan::test_cells(int f) const {
  std::vector<Cell> out;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (fold[i] == f) out.push_back(cells[i]);
  return out;
}

std::vector<Cell> FoldPlan::train_cells(int f) const {
  std::vector<Cell> out;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (fold[i] != f) out.push_back(cells[i]);
  return out;
}

std::vector<Index> FoldPlan::fold_sizes() const {
  std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
  for (int f : fold) ++sizes[static_cast<std::size_t>(f)];
  return sizes;
}

// --- helpers ---------------------------------------------------------------------

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIoError, "cannot write '" + tmp.string() + "'");
    out << text;
    if (!out) throw Error(Errc::kIoError, "short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  text = trim(text);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(Errc::kMalformedRow, "not a number: '" + std::string(text) + "'");
  }
  return value;
}

std::uint64_t data_digest(const ResponseMatrix& r) {
  // FNV-1a over shape and the raw grid.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<std::uint64_t>(r.num_learners()));
  mix(static_cast<std::uint64_t>(r.num_exercises()));
  const auto& g = r.cells();
  for (Index i = 0; i < g.size(); ++i) {
    h ^= static_cast<std::uint8_t>(g.data()[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace ldiag
