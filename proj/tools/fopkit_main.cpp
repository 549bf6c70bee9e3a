/* Copyright 2026 The fopkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fopkit/commands.hpp"
#include "fopkit/verify.hpp"

namespace {

template <typename T>
std::optional<T> opt(bool given, const T& value) {
  return given ? std::optional<T>(value) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fopkit: Fisher-orthogonal projection and KFAC optimizers"};
  app.require_subcommand(1);

  std::string config, resume, metrics_out, suite = "all", sim_out, inspect_path, csv_in, csv_out;
  std::uint64_t seed = 0;
  std::size_t epochs = 0, workers = 0, instances = 0;

  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", config, "Config file")->required();
  auto* train_seed = train->add_option("--seed", seed, "Override the run seed");
  auto* train_out = train->add_option("--out", metrics_out, "Metrics JSONL path (overrides output.metrics)");
  auto* train_resume = train->add_option("--resume", resume, "Resume from a checkpoint");
  auto* train_epochs = train->add_option("--epochs", epochs, "Override the epoch count");

  auto* verify = app.add_subcommand("verify", "Run a property suite");
  verify->add_option("--suite", suite, "Suite name or 'all'");
  auto* verify_seed = verify->add_option("--seed", seed, "Suite seed");
  verify->add_option("--instances", instances, "Override the instance count");

  auto* simulate = app.add_subcommand("simulate", "Simulate distributed FOP and compare with one process");
  simulate->add_option("--config", config, "Config file")->required();
  auto* sim_workers = simulate->add_option("--workers", workers, "Worker count (overrides simulate.workers)");
  auto* sim_seed = simulate->add_option("--seed", seed, "Override the run seed");
  auto* sim_dir = simulate->add_option("--out", sim_out, "Directory for message_log.csv and equivalence.json");

  auto* inspect = app.add_subcommand("inspect", "Summarize a checkpoint");
  inspect->add_option("path", inspect_path, "Checkpoint file")->required();

  auto* export_csv = app.add_subcommand("export-csv", "Convert a metrics JSONL file to CSV");
  export_csv->add_option("metrics", csv_in, "Metrics JSONL file")->required();
  auto* csv_dest = export_csv->add_option("--out", csv_out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "usage_error: " << e.what() << "\n";
    return fopkit::kExitUsage;
  }

  if (train->parsed()) {
    fopkit::TrainArgs a;
    a.config = config;
    a.seed = opt(train_seed->count() > 0, seed);
    if (train_out->count() > 0) a.metrics = metrics_out;
    if (train_resume->count() > 0) a.resume = resume;
    a.epochs = opt(train_epochs->count() > 0, epochs);
    return fopkit::cmd_train(a, std::cout, std::cerr);
  }
  if (verify->parsed()) {
    fopkit::VerifyArgs a;
    a.suite = suite;
    a.seed = opt(verify_seed->count() > 0, seed);
    a.instances = instances;
    return fopkit::cmd_verify(a, std::cout, std::cerr);
  }
  if (simulate->parsed()) {
    fopkit::SimulateArgs a;
    a.config = config;
    a.workers = opt(sim_workers->count() > 0, workers);
    a.seed = opt(sim_seed->count() > 0, seed);
    if (sim_dir->count() > 0) a.out_dir = sim_out;
    return fopkit::cmd_simulate(a, std::cout, std::cerr);
  }
  if (inspect->parsed()) return fopkit::cmd_inspect(inspect_path, std::cout, std::cerr);
  if (export_csv->parsed()) {
    return fopkit::cmd_export_csv(csv_in, opt(csv_dest->count() > 0, std::filesystem::path(csv_out)), std::cout,
                                  std::cerr);
  }
  return fopkit::kExitUsage;
}
