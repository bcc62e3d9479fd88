#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace causalflow {

// Row-major n x d sample matrix. Column j holds vertex j + 1.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}
  Dataset(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  std::span<double> row(std::size_t i) {
    return {values_.data() + i * cols_, cols_};
  }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return values_[i * cols_ + j];
  }

  const std::vector<double>& values() const { return values_; }

  Dataset select_rows(std::span<const std::size_t> indices) const;
  Dataset head(std::size_t n) const;
  std::vector<double> column(std::size_t j) const;

  bool operator==(const Dataset&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Headerless CSV, one row per sample, 17 significant digits.
void write_csv(std::ostream& out, const Dataset& data);
Dataset read_csv(std::istream& in);

// Formats a double with 17 significant digits (exact round trip).
std::string format_double(double v);

}  // namespace causalflow
