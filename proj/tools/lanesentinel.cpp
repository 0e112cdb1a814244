/* Copyright 2026 The LaneSentinel Authors. All Rights Reserved.

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

// Command-line driver for data generation, training, attacks, evaluation and
// benchmarking. Errors go to stderr as one JSON object and exit with status 1.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lanesentinel/common/error.hpp"
#include "lanesentinel/common/io.hpp"
#include "lanesentinel/experiment/commands.hpp"
#include "lanesentinel/experiment/config.hpp"

namespace ex = lanesentinel::experiment;
namespace ls = lanesentinel;

namespace {

int fail(std::string_view code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump() << "\n";
  return 1;
}

void print(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lane detection attack and verification experiments"};
  app.require_subcommand(1);

  std::string config_path;
  int jobs = 0;
  bool quiet = false;
  app.add_option("--config", config_path, "Experiment config JSON (defaults when omitted)");
  app.add_option("--jobs", jobs, "Worker threads; 0 = all cores; LANE_SENTINEL_JOBS overrides");
  app.add_flag("--quiet", quiet, "Suppress progress lines");

  auto* print_config = app.add_subcommand("print-config", "Print the effective config and its hash");

  std::string gen_out;
  std::optional<int> gen_scenes;
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("gen-data", "Generate scenes and the stabilized-lane dataset");
  gen->add_option("--out", gen_out, "Dataset directory")->required();
  gen->add_option("--scenes", gen_scenes, "Number of scenes (overrides the config)");
  gen->add_option("--seed", gen_seed, "Dataset seed (overrides the config)");

  std::string role, train_data, train_out;
  auto* train = app.add_subcommand("train", "Train the detector or a verifier");
  train->add_option("--role", role, "detector | verifier | linear-verifier")
      ->required()
      ->check(CLI::IsMember({"detector", "verifier", "linear-verifier"}));
  train->add_option("--data", train_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "Model file")->required();

  ex::AttackOptions aopt;
  std::vector<std::string> attack_verifiers;
  std::string attack_data, attack_detector, attack_out;
  std::optional<double> attack_eps;
  std::optional<int> attack_scenes;
  auto* attack = app.add_subcommand("attack", "Attack test scenes and record per-lane verifier scores");
  attack->add_option("--mode", aopt.mode, "bounded | patch-fixed | patch-variable | clean")
      ->check(CLI::IsMember({"bounded", "patch-fixed", "patch-variable", "clean"}));
  attack->add_flag("--adaptive", aopt.adaptive, "Two-stage attack against the first verifier");
  attack->add_option("--cycles", aopt.cycles, "Adaptive cycles")->check(CLI::Range(1, 4));
  attack->add_option("--eps", attack_eps, "L-inf budget (overrides the config)");
  attack->add_option("--scenes", attack_scenes, "Test scenes to attack (overrides the config)");
  attack->add_option("--data", attack_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  attack->add_option("--detector", attack_detector, "Detector model")->required()->check(CLI::ExistingFile);
  attack->add_option("--verifier", attack_verifiers, "Verifier model; repeat to score with several")
      ->check(CLI::ExistingFile);
  attack->add_option("--condition", aopt.condition, "Condition name stored in every record");
  attack->add_option("--out", attack_out, "Results file (JSON lines)")->required();

  ex::EvalOptions eopt;
  std::vector<std::string> eval_results;
  std::string eval_verifier, eval_data, eval_out, eval_split = "val";
  auto* evalc = app.add_subcommand("eval", "Calibrate the threshold and report each results file");
  evalc->add_option("--results", eval_results, "Results file; repeat for several conditions")->required();
  evalc->add_option("--verifier", eval_verifier, "Verifier model")->required()->check(CLI::ExistingFile);
  evalc->add_option("--data", eval_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  evalc->add_option("--calibrate-split", eval_split, "Split whose real lanes set the threshold")
      ->check(CLI::IsMember({"train", "val", "test"}));
  evalc->add_option("--out", eval_out, "Report JSON")->required();
  evalc->add_flag("--svg", eopt.svg, "Also write ROC and IoU plots");
  evalc->add_flag("--force", eopt.force, "Accept inputs produced under another config");

  ex::BenchOptions bopt;
  std::string bench_detector, bench_verifier, bench_data, bench_out;
  auto* bench = app.add_subcommand("bench", "Time detection with and without verification");
  bench->add_option("--detector", bench_detector, "Detector model")->required()->check(CLI::ExistingFile);
  bench->add_option("--verifier", bench_verifier, "Verifier model")->required()->check(CLI::ExistingFile);
  bench->add_option("--data", bench_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  bench->add_option("--reps", bopt.reps, "Repetitions (overrides the config)");
  bench->add_option("--out", bench_out, "Timing JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("UsageError", e.what());
  }

  try {
    ex::ExperimentConfig cfg = config_path.empty() ? ex::default_config() : ex::load_config(config_path);
    if (gen_scenes) cfg.n_scenes = *gen_scenes;
    if (gen_seed) cfg.seed = *gen_seed;
    if (attack_eps) cfg.attack.epsilon = *attack_eps;
    if (attack_scenes) cfg.attack_scenes = *attack_scenes;
    // Re-validate after command-line overrides.
    cfg = ex::config_from_json(ex::to_json(cfg));

    ex::Log log;
    if (!quiet) log = [](const std::string& line) { std::cerr << line << "\n"; };
    const ex::RunContext ctx = ex::make_context(cfg, jobs, log);

    if (*print_config) {
      print({{"config", ex::to_json(cfg)}, {"config_hash", ctx.config_hash}});
    } else if (*gen) {
      print(ex::gen_data(ctx, gen_out));
    } else if (*train) {
      print(ex::train_model(ctx, ex::parse_role(role), train_data, train_out));
    } else if (*attack) {
      aopt.data = attack_data;
      aopt.detector = attack_detector;
      for (const auto& v : attack_verifiers) aopt.verifiers.emplace_back(v);
      aopt.out = attack_out;
      print(ex::run_attack(ctx, aopt));
    } else if (*evalc) {
      for (const auto& r : eval_results) eopt.results.emplace_back(r);
      eopt.verifier = eval_verifier;
      eopt.data = eval_data;
      eopt.calibrate = ls::synth::parse_split(eval_split);
      eopt.out = eval_out;
      const auto report = ex::run_eval(ctx, eopt);
      print(report["conditions"]);
    } else if (*bench) {
      bopt.detector = bench_detector;
      bopt.verifier = bench_verifier;
      bopt.data = bench_data;
      bopt.out = bench_out;
      print(ex::run_bench(ctx, bopt));
    }
  } catch (const ls::Error& e) {
    return fail(ls::errc_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail("InternalError", e.what());
  }
  return 0;
}
