#include "causalflow/dataset.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "causalflow/error.hpp"

namespace causalflow {

Dataset::Dataset(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw InvalidArgument("Dataset: value count does not match rows * cols");
  }
}

Dataset Dataset::select_rows(std::span<const std::size_t> indices) const {
  Dataset out(indices.size(), cols_);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows_) throw InvalidArgument("Dataset: row index out of range");
    const auto src = row(indices[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  n = std::min(n, rows_);
  return Dataset(n, cols_,
                 std::vector<double>(values_.begin(),
                                     values_.begin() + static_cast<std::ptrdiff_t>(n * cols_)));
}

std::vector<double> Dataset::column(std::size_t j) const {
  std::vector<double> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
  return out;
}

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_csv(std::ostream& out, const Dataset& data) {
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto r = data.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (!std::isfinite(r[j])) {
        throw EvaluationError("write_csv: non-finite entry", i);
      }
      if (j) out << ',';
      out << format_double(r[j]);
    }
    out << '\n';
  }
}

Dataset read_csv(std::istream& in) {
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t count = 0;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t end = std::min(line.find(',', pos), line.size());
      double v = 0.0;
      const auto res = std::from_chars(line.data() + pos, line.data() + end, v);
      if (res.ec != std::errc() || res.ptr != line.data() + end) {
        throw InvalidArgument("read_csv: malformed number on row " + std::to_string(rows));
      }
      values.push_back(v);
      ++count;
      pos = end + 1;
    }
    if (rows == 0) {
      cols = count;
    } else if (count != cols) {
      throw InvalidArgument("read_csv: ragged row " + std::to_string(rows));
    }
    ++rows;
  }
  return Dataset(rows, cols, std::move(values));
}

}  // namespace causalflow
