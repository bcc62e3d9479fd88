#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "causalflow/flow.hpp"
#include "causalflow/graph.hpp"
#include "causalflow/tasks.hpp"
#include "causalflow/train.hpp"

namespace causalflow::cli {

enum class Kind { kRegression, kPortfolio, kAugmentation, kUap, kExample35, kWgBounds };
std::string to_string(Kind k);

// Either an Erdos-Renyi draw (p) or explicit edges.
struct DagSpec {
  int d = 0;
  std::optional<double> p;
  std::vector<Edge> edges;
};

struct PortfolioSpec {
  int stocks = 20;
  int drivers = 3;
  int signals = 2;
  double p = 0.5;
};

struct ExperimentConfig {
  Kind kind = Kind::kRegression;
  std::string output_dir = "out";
  std::vector<std::uint64_t> seeds = {0};
  std::optional<DagSpec> dag;
  std::vector<int> targets;
  FlowConfig model;
  TrainConfig train;
  std::size_t interventions = 200;
  std::size_t n_train = 10000;
  std::size_t n_test = 5000;
  std::size_t buckets = 10;
  double gamma = 1.0;
  PortfolioSpec portfolio;
  std::size_t n_synth = 10000;
  std::vector<GeneratorKind> generators = {GeneratorKind::kCausalFlow, GeneratorKind::kDenseFlow,
                                           GeneratorKind::kGaussianFit, GeneratorKind::kPassthrough};
  std::vector<double> eps = {0.5, 0.1, 0.01};
  std::size_t n_samples = 100000;  // example35 sample size, uap evaluation draws
  std::size_t instances = 50;      // wg-bounds
  int max_support = 4;             // wg-bounds

  // Canonical JSON with every field filled in.
  nlohmann::json to_json() const;
};

// Strict parse: unknown keys, keys that do not apply to `kind`, wrong types
// and out-of-range values raise ConfigError. For kinds with a fixed DAG the
// target set is checked against the quotient condition, and the error
// message carries the cycle witness.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// FNV-1a of the canonical JSON dump.
std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace causalflow::cli
