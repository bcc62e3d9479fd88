#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace causalflow::cli {

struct SelftestRow {
  std::string module;
  std::string check;
  bool pass = false;
  std::string detail;
};

// Desk-scale property checks for every module, in a fixed order. Results
// are deterministic.
std::vector<SelftestRow> run_selftest();

// Aligned pass/fail table, one line per row.
void print_selftest(std::ostream& out, const std::vector<SelftestRow>& rows);

}  // namespace causalflow::cli
