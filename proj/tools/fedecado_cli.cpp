/**
 * Copyright 2026 The fedecado-sim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fedecado/experiment.hpp"
#include "fedecado/verify.hpp"

namespace {

using fedecado::ExperimentConfig;

int cmd_run(const std::string &config_path, const std::optional<std::uint64_t> &seed,
            const std::string &out_dir, const std::string &algo) {
  ExperimentConfig cfg = fedecado::load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!algo.empty()) cfg.algo = fedecado::algorithm_from_string(algo);
  if (!out_dir.empty()) cfg.output = out_dir;
  fedecado::validate(cfg);

  fedecado::ExperimentResult result;
  try {
    result = fedecado::run_experiment(cfg);
  } catch (const fedecado::RunAborted &e) {
    if (!cfg.output.empty()) {
      std::filesystem::create_directories(cfg.output);
      std::ofstream f(std::filesystem::path(cfg.output) / "metrics.csv");
      fedecado::write_metrics_csv(f, e.rows());
    } else {
      fedecado::write_metrics_csv(std::cout, e.rows());
    }
    throw;
  }
  if (cfg.output.empty()) {
    fedecado::write_metrics_csv(std::cout, result.metrics);
  } else {
    fedecado::write_outputs(cfg.output, cfg, result);
  }
  const bool converged = result.status == fedecado::RunStatus::kConverged;
  std::cerr << fedecado::to_string(cfg.algo) << ": "
            << (converged ? "converged" : "reached rounds_max") << " after "
            << result.rounds_run << " rounds";
  if (!result.metrics.empty()) {
    std::cerr << ", global loss " << result.metrics.back().global_loss;
  }
  std::cerr << '\n';
  return fedecado::exit_code(result.status);
}

int cmd_partition(const std::string &config_path, const std::string &out) {
  const ExperimentConfig cfg = fedecado::load_config(config_path);
  const auto part = fedecado::build_partition(cfg);
  const std::string text = fedecado::partition_to_json(part).dump() + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    std::ofstream f(out);
    if (!f) throw fedecado::Error("cannot write '" + out + "'");
    f << text;
  }
  return 0;
}

int cmd_compare(const std::vector<std::string> &configs, const std::string &out) {
  std::ostringstream joined;
  joined << "config,algo,";
  bool header_done = false;
  for (const auto &path : configs) {
    const ExperimentConfig cfg = fedecado::load_config(path);
    const auto result = fedecado::run_experiment(cfg);
    const std::string csv = fedecado::metrics_csv(result.metrics);
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    if (!header_done) {
      joined << line << '\n';
      header_done = true;
    }
    const std::string name = std::filesystem::path(path).stem().string();
    while (std::getline(lines, line)) {
      joined << name << ',' << fedecado::to_string(cfg.algo) << ',' << line << '\n';
    }
  }
  if (out.empty() || out == "-") {
    std::cout << joined.str();
  } else {
    std::ofstream f(out);
    if (!f) throw fedecado::Error("cannot write '" + out + "'");
    f << joined.str();
  }
  return 0;
}

int cmd_verify(std::uint64_t seed) {
  const auto results = fedecado::verify::run_suite(seed);
  return fedecado::verify::write_tap(std::cout, results) == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Federated learning simulator with flow-variable consensus"};
  app.require_subcommand(1);

  std::string config_path, out_dir, algo, partition_out, compare_out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> compare_configs;
  std::uint64_t verify_seed = 20260101;

  auto *run = app.add_subcommand("run", "Run one experiment from a JSON config");
  run->add_option("--config", config_path, "Experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--algo", algo, "Override the algorithm")
      ->check(CLI::IsMember({"fedecado", "fedavg", "fedprox", "fednova"}));

  auto *part = app.add_subcommand("partition", "Write the client partition of a config");
  part->add_option("--config", config_path, "Experiment config")->required()->check(CLI::ExistingFile);
  part->add_option("--out", partition_out, "Partition JSON path ('-' for stdout)")->required();

  auto *cmp = app.add_subcommand("compare", "Run several configs and join their metrics");
  cmp->add_option("--configs", compare_configs, "Experiment configs")
      ->required()
      ->expected(1, -1)
      ->check(CLI::ExistingFile);
  cmp->add_option("--out", compare_out, "Joined CSV path (default stdout)");

  auto *ver = app.add_subcommand("verify", "Run the oracle suite and print a TAP report");
  ver->add_option("--seed", verify_seed, "Seed for the randomized checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(config_path, seed, out_dir, algo);
    if (*part) return cmd_partition(config_path, partition_out);
    if (*cmp) return cmd_compare(compare_configs, compare_out);
    if (*ver) return cmd_verify(verify_seed);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
