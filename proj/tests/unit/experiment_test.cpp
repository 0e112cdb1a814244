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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "lanesentinel/common/error.hpp"
#include "lanesentinel/common/io.hpp"
#include "lanesentinel/experiment/commands.hpp"
#include "lanesentinel/experiment/config.hpp"

namespace lanesentinel::experiment {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

Errc code_of(const json& user) {
  try {
    config_from_json(user);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "accepted " << user.dump();
  return Errc::kIoError;
}

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig d = default_config();
  const ExperimentConfig back = config_from_json(to_json(d));
  EXPECT_EQ(to_json(back).dump(), to_json(d).dump());
  EXPECT_EQ(config_hash(back), config_hash(d));
  EXPECT_EQ(config_hash(config_from_json(json::object())), config_hash(d));
}

TEST(Config, PartialOverlayKeepsOtherDefaults) {
  const auto c = config_from_json({{"dataset", {{"n_scenes", 40}}}, {"attack", {{"pgd", {{"epsilon", 0.01}}}}}});
  EXPECT_EQ(c.n_scenes, 40);
  EXPECT_DOUBLE_EQ(c.attack.epsilon, 0.01);
  const ExperimentConfig d = default_config();
  EXPECT_EQ(c.seed, d.seed);
  EXPECT_EQ(c.detector.steps, d.detector.steps);
  EXPECT_EQ(c.attack.max_iters, d.attack.max_iters);
}

TEST(Config, HashTracksEveryValue) {
  const std::string h = config_hash(default_config());
  EXPECT_NE(config_hash(config_from_json({{"attack", {{"pgd", {{"epsilon", 0.02}}}}}})), h);
  EXPECT_NE(config_hash(config_from_json({{"dataset", {{"seed", 8}}}})), h);
  EXPECT_NE(config_hash(config_from_json({{"scene", {{"noise_std", 0.01}}}})), h);
}

TEST(Config, RejectsUnknownKeysWrongTypesAndBadValues) {
  EXPECT_EQ(code_of({{"bogus", 1}}), Errc::kConfigError);
  EXPECT_EQ(code_of({{"scene", {{"bogus", 1}}}}), Errc::kConfigError);
  EXPECT_EQ(code_of({{"dataset", {{"n_scenes", "many"}}}}), Errc::kConfigError);
  EXPECT_EQ(code_of({{"dataset", 3}}), Errc::kConfigError);
  EXPECT_EQ(code_of({{"dataset", {{"n_scenes", 2}}}}), Errc::kConfigError);
  EXPECT_EQ(code_of({{"dataset", {{"train_fraction", 0.9}, {"val_fraction", 0.1}}}}), Errc::kConfigError);
  EXPECT_EQ(code_of({{"eval", {{"target_fpr", 1.5}}}}), Errc::kConfigError);
  EXPECT_EQ(code_of({{"attack", {{"pgd", {{"epsilon", -1.0}}}}}}), Errc::kConfigError);
}

TEST(Config, LoadReportsMissingFileAndBadJson) {
  const fs::path dir = fs::temp_directory_path() / "ls_experiment_cfg";
  fs::create_directories(dir);
  try {
    load_config(dir / "absent.json");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kIoError);
  }
  io::write_text(dir / "bad.json", "{not json");
  try {
    load_config(dir / "bad.json");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kConfigError);
  }
  fs::remove_all(dir);
}

TEST(Commands, ConditionNamesAndRoles) {
  AttackOptions o;
  EXPECT_EQ(condition_name(o), "bounded");
  o.adaptive = true;
  EXPECT_EQ(condition_name(o), "bounded-adaptive");
  o.cycles = 4;
  EXPECT_EQ(condition_name(o), "bounded-adaptive-c4");
  o.condition = "mine";
  EXPECT_EQ(condition_name(o), "mine");
  for (Role r : {Role::kDetector, Role::kVerifier, Role::kLinearVerifier}) EXPECT_EQ(parse_role(role_name(r)), r);
  EXPECT_THROW(parse_role("oracle"), Error);
}

TEST(Commands, RunMetadataPath) {
  EXPECT_EQ(run_metadata_path("/x/y/model.lsnt"), fs::path("/x/y/model.lsnt.run.json"));
  EXPECT_EQ(run_metadata_path(fs::temp_directory_path()), fs::temp_directory_path() / "run.json");
}

// One small pass through every command, shared by the tests below.
class TinyRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fs::temp_directory_path() / "ls_experiment_tiny");
    fs::remove_all(*dir_);
    fs::create_directories(*dir_);
    cfg_ = new ExperimentConfig(config_from_json({{"dataset", {{"n_scenes", 12}}},
                                                  {"detector", {{"train", {{"steps", 5}}}}},
                                                  {"verifier", {{"train", {{"epochs", 1}, {"adv_steps", 1}}}}},
                                                  {"linear_verifier", {{"train", {{"epochs", 1}}}}},
                                                  {"attack", {{"pgd", {{"max_iters", 2}}}, {"scenes", 2}}},
                                                  {"bench", {{"scenes", 1}, {"reps", 1}}}}));
    const RunContext ctx = make_context(*cfg_);
    const fs::path& d = *dir_;
    gen_data(ctx, d / "data");
    train_model(ctx, Role::kDetector, d / "data", d / "det.lsnt");
    train_model(ctx, Role::kVerifier, d / "data", d / "ver.lsnt");
    AttackOptions a;
    a.mode = "clean";
    a.data = d / "data";
    a.detector = d / "det.lsnt";
    a.verifiers = {d / "ver.lsnt"};
    a.out = d / "clean.jsonl";
    run_attack(ctx, a);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
    delete cfg_;
  }

  EvalOptions eval_options(const std::string& results) const {
    EvalOptions e;
    e.results = {*dir_ / results};
    e.verifier = *dir_ / "ver.lsnt";
    e.data = *dir_ / "data";
    e.out = *dir_ / "report.json";
    return e;
  }

  static fs::path* dir_;
  static ExperimentConfig* cfg_;
};

fs::path* TinyRun::dir_ = nullptr;
ExperimentConfig* TinyRun::cfg_ = nullptr;

TEST_F(TinyRun, ArtifactsCarryMetadata) {
  for (const char* f : {"det.lsnt", "ver.lsnt", "clean.jsonl"}) {
    const json m = io::read_json(run_metadata_path(*dir_ / f));
    EXPECT_EQ(m.at("config_hash"), config_hash(*cfg_)) << f;
    EXPECT_TRUE(m.contains("wall_seconds"));
  }
  EXPECT_EQ(io::read_json(*dir_ / "data" / "dataset.json").at("n_scenes"), 12);
}

TEST_F(TinyRun, CleanRecordsHoldScoredLanes) {
  const auto recs = read_records(*dir_ / "clean.jsonl");
  ASSERT_EQ(recs.size(), 2u);
  const std::string key = io::file_hash(*dir_ / "ver.lsnt");
  for (const auto& r : recs) {
    EXPECT_EQ(r.at("condition"), "clean");
    EXPECT_TRUE(r.at("target").is_null());
    for (const auto& l : r.at("lanes")) {
      EXPECT_EQ(l.at("rows").size(), l.at("xs").size());
      const double s = l.at("scores").at(key).get<double>();
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
  }
}

TEST_F(TinyRun, EvalReportsCalibratedCondition) {
  const json rep = run_eval(make_context(*cfg_), eval_options("clean.jsonl"));
  EXPECT_LE(rep.at("calibration").at("fpr").get<double>(), 0.05);
  ASSERT_EQ(rep.at("conditions").size(), 1u);
  const json& c = rep.at("conditions")[0];
  EXPECT_EQ(c.at("condition"), "clean");
  EXPECT_FALSE(c.contains("fnr"));
  EXPECT_DOUBLE_EQ(c.at("real_acceptance").get<double>(), 1.0 - c.at("fpr").get<double>());
  EXPECT_EQ(io::read_json(*dir_ / "report.json").dump(), rep.dump());
}

TEST_F(TinyRun, EvalIsRepeatable) {
  const auto ctx = make_context(*cfg_);
  EXPECT_EQ(run_eval(ctx, eval_options("clean.jsonl")).dump(), run_eval(ctx, eval_options("clean.jsonl")).dump());
}

TEST_F(TinyRun, EvalWithoutRecordsIsNoResults) {
  io::write_text(*dir_ / "empty.jsonl", "");
  try {
    run_eval(make_context(*cfg_), eval_options("empty.jsonl"));
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNoResults);
  }
  EvalOptions none = eval_options("empty.jsonl");
  none.results.clear();
  EXPECT_THROW(run_eval(make_context(*cfg_), none), Error);
}

TEST_F(TinyRun, EvalUnderAnotherConfigIsHashMismatchUnlessForced) {
  ExperimentConfig other = *cfg_;
  other.target_fpr = 0.1;
  try {
    run_eval(make_context(other), eval_options("clean.jsonl"));
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kHashMismatch);
  }
  EvalOptions forced = eval_options("clean.jsonl");
  forced.force = true;
  EXPECT_NO_THROW(run_eval(make_context(other), forced));
}

TEST_F(TinyRun, EvalWithUnscoredVerifierIsHashMismatch) {
  const auto ctx = make_context(*cfg_);
  train_model(ctx, Role::kLinearVerifier, *dir_ / "data", *dir_ / "lin.lsnt");
  EvalOptions e = eval_options("clean.jsonl");
  e.verifier = *dir_ / "lin.lsnt";
  try {
    run_eval(ctx, e);
    ADD_FAILURE();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), Errc::kHashMismatch);
  }
}

TEST_F(TinyRun, AttackRejectsBadOptions) {
  const auto ctx = make_context(*cfg_);
  AttackOptions a;
  a.data = *dir_ / "data";
  a.detector = *dir_ / "det.lsnt";
  a.out = *dir_ / "x.jsonl";
  a.adaptive = true;
  EXPECT_THROW(run_attack(ctx, a), Error);  // adaptive needs a verifier
  a.verifiers = {*dir_ / "ver.lsnt"};
  a.cycles = 5;
  EXPECT_THROW(run_attack(ctx, a), Error);
  a.cycles = 1;
  a.mode = "sideways";
  EXPECT_THROW(run_attack(ctx, a), Error);
}

TEST_F(TinyRun, BoundedAttackIsDeterministicAndFeasible) {
  const auto ctx = make_context(*cfg_);
  AttackOptions a;
  a.data = *dir_ / "data";
  a.detector = *dir_ / "det.lsnt";
  a.verifiers = {*dir_ / "ver.lsnt"};
  a.out = *dir_ / "b1.jsonl";
  run_attack(ctx, a);
  a.out = *dir_ / "b2.jsonl";
  run_attack(ctx, a);
  auto r1 = read_records(*dir_ / "b1.jsonl"), r2 = read_records(*dir_ / "b2.jsonl");
  ASSERT_EQ(r1.size(), r2.size());
  for (std::size_t i = 0; i < r1.size(); ++i) {
    r1[i].erase("wall_ms");
    r2[i].erase("wall_ms");
    EXPECT_EQ(r1[i].dump(), r2[i].dump());
    EXPECT_EQ(r1[i].at("mode"), "bounded");
    EXPECT_GE(r1[i].at("iou_vs_target").get<double>(), 0.0);
  }
}

}  // namespace
}  // namespace lanesentinel::experiment
