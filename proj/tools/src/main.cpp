#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "causalflow/error.hpp"
#include "causalflow/parallel.hpp"
#include "config.hpp"
#include "pipelines.hpp"
#include "selftest.hpp"

namespace {

// Exit codes: 1 bad config, 2 runtime failure, 3 selftest failure.
int run_command(const std::string& path) {
  using namespace causalflow;
  cli::ExperimentConfig cfg;
  try {
    cfg = cli::load_config(path);
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << '\n';
    return 1;
  } catch (const InvalidArgument& ex) {
    std::cerr << "config error: " << ex.what() << '\n';
    return 1;
  }
  try {
    auto result = cli::run_and_record(cfg);
    for (const auto& f : result.files) std::cout << cfg.output_dir << '/' << f << '\n';
    std::cout << cfg.output_dir << "/run.json\n";
  } catch (const DivergenceError& ex) {
    std::cerr << "diverged: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  }
  return 0;
}

int selftest_command() {
  auto rows = causalflow::cli::run_selftest();
  causalflow::cli::print_selftest(std::cout, rows);
  for (const auto& r : rows)
    if (!r.pass) return 3;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"causalflow: causal normalizing flows and G-causal Wasserstein experiments"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run->add_option("config", config_path, "Path to config.json")->required();
  auto* selftest = app.add_subcommand("selftest", "Run the desk-scale property checks");
  auto* version = app.add_subcommand("version", "Print the library version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*run) return run_command(config_path);
  if (*selftest) return selftest_command();
  if (*version) {
    std::cout << "causalflow " << CAUSALFLOW_VERSION << " (threads " << causalflow::thread_count() << ")\n";
    return 0;
  }
  return 1;
}
