#include "tess/random.hpp"
#include "tess/targets.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

namespace tess {

namespace {

std::ifstream open_data(const std::filesystem::path& path, const std::string& format) {
  if (!std::filesystem::exists(path)) {
    throw DataError("data file not found: " + path.string() + " (expected " + format + ")");
  }
  std::ifstream in(path);
  if (!in) throw DataError("cannot read data file: " + path.string());
  return in;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool blank(const std::string& line) {
  for (char c : line) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

std::string where(const std::filesystem::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no);
}

}  // namespace

LogisticData load_german_credit(const std::filesystem::path& path) {
  const std::string format = "whitespace-delimited German credit numeric file, 24 attributes + label in {1,2}";
  auto in = open_data(path, format);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto tokens = split_ws(line);
    if (tokens.size() != 25) {
      throw DataError(where(path, line_no) + ": expected 25 columns, found " + std::to_string(tokens.size()));
    }
    std::vector<double> row(24);
    for (std::size_t j = 0; j < 24; ++j) {
      if (!parse_double(tokens[j], row[j])) throw DataError(where(path, line_no) + ": malformed value '" + tokens[j] + "'");
    }
    double label = 0.0;
    if (!parse_double(tokens[24], label) || (label != 1.0 && label != 2.0)) {
      throw DataError(where(path, line_no) + ": label must be 1 or 2, found '" + tokens[24] + "'");
    }
    rows.push_back(std::move(row));
    labels.push_back(label == 2.0 ? 1 : 0);
  }
  if (rows.size() < 2) throw DataError(path.string() + ": too few rows");
  RowMatrix raw(static_cast<Eigen::Index>(rows.size()), 24);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < 24; ++j) raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return make_logistic_data(raw, std::move(labels));
}

LogisticData synthetic_german_credit(std::uint64_t seed) {
  constexpr Eigen::Index n = 1000;
  constexpr Eigen::Index p = 24;
  Rng rng = make_rng(seed, Stream::data, 2, 0);
  std::uniform_int_distribution<int> small(1, 4);
  std::uniform_int_distribution<int> amount(4, 72);
  RowMatrix raw(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) raw(i, j) = (j % 6 == 1) ? amount(rng) : small(rng);
  }
  // Sparse truth: a handful of active attributes.
  Vector weights = Vector::Zero(p);
  weights[0] = -0.8;
  weights[1] = 0.5;
  weights[4] = 0.4;
  weights[9] = -0.3;
  RowMatrix standardized = make_logistic_data(raw, std::vector<int>(n, 0)).features.leftCols(p);
  std::vector<int> labels(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eta = -0.9 + standardized.row(i).dot(weights);
    const double prob = 1.0 / (1.0 + std::exp(-eta));
    labels[static_cast<std::size_t>(i)] = uniform(rng, 0.0, 1.0) < prob ? 1 : 0;
  }
  return make_logistic_data(raw, std::move(labels));
}

LynxHareDataset load_lynx_hare(const std::filesystem::path& path) {
  auto in = open_data(path, "whitespace-delimited year / hare / lynx columns");
  LynxHareDataset d;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto tokens = split_ws(line);
    if (!std::isdigit(static_cast<unsigned char>(tokens[0][0]))) {
      if (d.years.empty()) continue;  // header
      throw DataError(where(path, line_no) + ": malformed row");
    }
    if (tokens.size() != 3) {
      throw DataError(where(path, line_no) + ": expected 3 columns, found " + std::to_string(tokens.size()));
    }
    double year = 0.0, hare = 0.0, lynx = 0.0;
    if (!parse_double(tokens[0], year) || !parse_double(tokens[1], hare) || !parse_double(tokens[2], lynx)) {
      throw DataError(where(path, line_no) + ": malformed row");
    }
    if (hare <= 0.0 || lynx <= 0.0) throw DataError(where(path, line_no) + ": populations must be positive");
    d.years.push_back(static_cast<int>(year));
    d.hare.push_back(hare);
    d.lynx.push_back(lynx);
  }
  if (d.years.size() < 2) throw DataError(path.string() + ": need at least two observation years");
  return d;
}

ReturnsSeries load_returns(const std::filesystem::path& path) {
  auto in = open_data(path, "one return per line");
  ReturnsSeries out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto tokens = split_ws(line);
    double value = 0.0;
    if (tokens.size() != 1 || !parse_double(tokens[0], value)) {
      if (line_no == 1) continue;  // header
      throw DataError(where(path, line_no) + ": expected a single number");
    }
    out.r.push_back(value);
  }
  if (out.r.empty()) throw DataError(path.string() + ": no returns found");
  return out;
}

}  // namespace tess
