#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"

namespace causalflow::cli {

// Column-checked CSV table: every row must have one cell per header entry
// and no cell may contain a separator, quote or newline. Numbers go through
// cell(), which rejects non-finite values.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  void add(std::vector<std::string> row);
  void write(std::ostream& out) const;

  static std::string cell(double v);
  static std::string cell(long long v) { return std::to_string(v); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct RunResult {
  std::vector<std::string> files;  // relative to output_dir, in write order
  nlohmann::json summary = nlohmann::json::object();
};

// Executes the pipeline for every root seed and writes its CSVs under
// cfg.output_dir. Files with the same config and seeds are byte-identical.
RunResult run_pipeline(const ExperimentConfig& cfg);

// run_pipeline plus the run.json manifest (config, hash, seeds, version,
// thread count, wall-clock, file list and summary).
RunResult run_and_record(const ExperimentConfig& cfg);

}  // namespace causalflow::cli
