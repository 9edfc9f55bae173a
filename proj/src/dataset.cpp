#include "softnet/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "softnet/error.hpp"
#include "softnet/io.hpp"
#include "softnet/rng.hpp"

namespace softnet {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view field, std::size_t line_no) {
  field = trim(field);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(value)) {
    fail(ErrorKind::data, "line " + std::to_string(line_no) + ": cannot parse feature '" +
                              std::string(field) + "'");
  }
  return value;
}

}  // namespace

LabeledData parse_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) fail(ErrorKind::data, "dataset is empty (missing header)");
  ++line_no;
  const std::size_t width = split_fields(trim(line)).size();
  if (width < 2) fail(ErrorKind::data, "header must name a label and at least one feature");
  const std::size_t dim = width - 1;

  LabeledData out;
  std::unordered_map<std::string, int> index;
  std::vector<double> features;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view row = trim(line);
    if (row.empty()) continue;
    auto fields = split_fields(row);
    if (fields.size() != width) {
      fail(ErrorKind::data, "line " + std::to_string(line_no) + ": expected " +
                                std::to_string(width) + " fields, got " +
                                std::to_string(fields.size()));
    }
    std::string label(trim(fields[0]));
    if (label.empty()) fail(ErrorKind::data, "line " + std::to_string(line_no) + ": empty label");
    auto [it, inserted] = index.emplace(label, static_cast<int>(out.class_names.size()));
    if (inserted) out.class_names.push_back(label);
    out.set.labels.push_back(it->second);
    for (std::size_t f = 1; f < width; ++f) features.push_back(parse_double(fields[f], line_no));
  }
  if (out.set.labels.empty()) fail(ErrorKind::data, "dataset has a header but no rows");
  out.set.features = Matrix(out.set.labels.size(), dim, std::move(features));
  return out;
}

LabeledData read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open dataset " + path.string());
  return parse_csv(in);
}

void write_csv(std::ostream& out, const LabeledData& data) {
  out << "label";
  for (std::size_t f = 0; f < data.set.features.cols(); ++f) out << ",f" << f;
  out << '\n';
  for (std::size_t r = 0; r < data.set.size(); ++r) {
    out << data.class_names.at(static_cast<std::size_t>(data.set.labels[r]));
    for (double v : data.set.features.row_span(r)) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_csv_file(const std::filesystem::path& path, const LabeledData& data) {
  std::ostringstream buf;
  write_csv(buf, data);
  write_file_atomic(path, buf.str());
}

void validate(const BlobSpec& spec) {
  if (spec.classes < 1) fail(ErrorKind::config, "blob spec needs at least one class");
  if (spec.dim < 2) fail(ErrorKind::config, "blob spec needs dim >= 2");
  if (spec.per_class < 1) fail(ErrorKind::config, "blob spec needs per_class >= 1");
  if (!(spec.radius >= 0.0) || !(spec.scale > 0.0)) {
    fail(ErrorKind::config, "blob radius must be >= 0 and scale > 0");
  }
}

std::vector<std::vector<double>> blob_centers(const BlobSpec& spec) {
  validate(spec);
  Rng rng = make_rng(spec.seed, RngStream::weights);
  const double half = spec.radius / std::numbers::sqrt2;
  std::vector<std::vector<double>> centers;
  for (std::size_t k = 0; k < spec.classes; ++k) {
    std::vector<double> c(spec.dim, 0.0);
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(spec.classes);
    if (spec.dim == 2) {
      c[0] = spec.radius * std::cos(angle);
      c[1] = spec.radius * std::sin(angle);
    } else {
      c[0] = half * std::cos(angle);
      c[1] = half * std::sin(angle);
      double norm = 0.0;
      for (std::size_t d = 2; d < spec.dim; ++d) {
        c[d] = rng.normal();
        norm += c[d] * c[d];
      }
      norm = std::sqrt(norm);
      for (std::size_t d = 2; d < spec.dim; ++d) c[d] *= half / norm;
    }
    centers.push_back(std::move(c));
  }
  return centers;
}

LabeledData generate_blobs(const BlobSpec& spec) {
  auto centers = blob_centers(spec);
  Rng rng = make_rng(spec.seed, RngStream::shots);
  LabeledData out;
  std::vector<double> features;
  features.reserve(spec.classes * spec.per_class * spec.dim);
  for (std::size_t k = 0; k < spec.classes; ++k) {
    out.class_names.push_back("class" + std::to_string(k));
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      for (std::size_t d = 0; d < spec.dim; ++d) {
        features.push_back(centers[k][d] + spec.scale * rng.normal());
      }
      out.set.labels.push_back(static_cast<int>(k));
    }
  }
  out.set.features = Matrix(out.set.labels.size(), spec.dim, std::move(features));
  return out;
}

std::vector<std::vector<double>> class_means(const LabeledData& data) {
  const std::size_t dim = data.set.features.cols();
  std::vector<std::vector<double>> sums(data.class_names.size(), std::vector<double>(dim, 0.0));
  std::vector<std::size_t> counts(data.class_names.size(), 0);
  for (std::size_t r = 0; r < data.set.size(); ++r) {
    const auto k = static_cast<std::size_t>(data.set.labels[r]);
    auto row = data.set.features.row_span(r);
    for (std::size_t d = 0; d < dim; ++d) sums[k][d] += row[d];
    ++counts[k];
  }
  for (std::size_t k = 0; k < sums.size(); ++k) {
    if (counts[k] == 0) continue;
    for (double& v : sums[k]) v /= static_cast<double>(counts[k]);
  }
  return sums;
}

double min_pairwise_distance(const std::vector<std::vector<double>>& points) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      best = std::min(best, euclidean_distance(points[i], points[j]));
    }
  }
  return best;
}

}  // namespace softnet
