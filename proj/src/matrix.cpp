#include "softnet/matrix.hpp"

#include <cmath>
#include <cstring>

#include "softnet/error.hpp"

namespace softnet {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::shape: return "shape error";
    case ErrorKind::index: return "index error";
    case ErrorKind::contract: return "contract error";
    case ErrorKind::config: return "config error";
    case ErrorKind::data: return "data error";
    case ErrorKind::protocol: return "protocol error";
    case ErrorKind::format: return "format error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::invariant: return "invariant violation";
    case ErrorKind::degenerate: return "degenerate input";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::report: return "report error";
  }
  return "error";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::protocol: return 4;
    case ErrorKind::io: return 5;
    case ErrorKind::format: return 6;
    default: return 1;
  }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    fail(ErrorKind::shape, "matrix payload of " + std::to_string(data_.size()) +
                               " entries does not fit " + std::to_string(rows) + "x" +
                               std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) fail(ErrorKind::shape, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::row(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Matrix::sum() const noexcept {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

double Matrix::squared_norm() const noexcept {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

bool Matrix::bit_equal(const Matrix& other) const noexcept {
  return same_shape(other) &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows()) fail(ErrorKind::index, "row index out of range");
    auto src = m.row_span(rows[i]);
    auto dst = out.row_span(i);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::shape, std::string(what) + ": shape mismatch between " + a.shape_string() +
                               " and " + b.shape_string());
  }
}

}  // namespace softnet
