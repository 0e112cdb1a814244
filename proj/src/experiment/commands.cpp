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

#include "lanesentinel/experiment/commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <memory>
#include <optional>

#include "lanesentinel/common/error.hpp"
#include "lanesentinel/common/io.hpp"
#include "lanesentinel/common/parallel.hpp"
#include "lanesentinel/eval/metrics.hpp"
#include "lanesentinel/neural/model_io.hpp"
#include "lanesentinel/pipeline/pipeline.hpp"

namespace lanesentinel::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void say(const RunContext& ctx, const std::string& line) {
  if (ctx.log) ctx.log(line);
}

void write_metadata(const fs::path& artifact, const RunContext& ctx, const std::string& command, double wall,
                    const json& summary) {
  io::write_json(run_metadata_path(artifact), {{"command", command},
                                               {"config_hash", ctx.config_hash},
                                               {"seed", ctx.config.seed},
                                               {"wall_seconds", wall},
                                               {"summary", summary}});
}

json poly_json(const PolyLane& p) {
  return {{"coeffs", p.coeffs}, {"row_min", p.row_min}, {"row_max", p.row_max}, {"degree", p.degree}};
}

PolyLane poly_from_json(const json& j) {
  PolyLane p;
  p.coeffs = j.at("coeffs").get<std::vector<double>>();
  p.row_min = j.at("row_min").get<int>();
  p.row_max = j.at("row_max").get<int>();
  p.degree = j.at("degree").get<int>();
  return p;
}

json lane_samples_json(const Lane& l) {
  std::vector<int> rows;
  std::vector<double> xs;
  for (const auto& s : l.samples) {
    rows.push_back(s.row);
    xs.push_back(s.x);
  }
  return {{"rows", rows}, {"xs", xs}};
}

Lane lane_from_json(const json& j) {
  const auto rows = j.at("rows").get<std::vector<int>>();
  const auto xs = j.at("xs").get<std::vector<double>>();
  if (rows.size() != xs.size()) throw Error(Errc::kConfigError, "record lane has mismatched rows and xs");
  Lane l;
  for (std::size_t i = 0; i < rows.size(); ++i) l.samples.push_back({rows[i], xs[i]});
  return l;
}

json dataset_info(const fs::path& data) {
  const fs::path p = data / "dataset.json";
  if (!fs::exists(p)) throw Error(Errc::kIoError, "not a dataset directory (missing dataset.json): " + data.string());
  return io::read_json(p);
}

synth::SceneConfig dataset_scene_config(const fs::path& data) {
  return synth::scene_config_from_json(dataset_info(data).at("scene"));
}

struct LoadedVerifier {
  std::unique_ptr<nn::Classifier<float>> model;
  std::string file_hash;    // key for the scores in attack records
  std::string config_hash;  // config the model was trained under
};

LoadedVerifier load_verifier(const fs::path& path) {
  LoadedVerifier v;
  v.model = nn::load_classifier(path, &v.config_hash);
  v.file_hash = io::file_hash(path);
  return v;
}

}  // namespace

RunContext make_context(const ExperimentConfig& config, int jobs, Log log) {
  return {config, config_hash(config), resolve_jobs(jobs), std::move(log)};
}

fs::path run_metadata_path(const fs::path& artifact) {
  fs::path p = artifact;
  if (fs::is_directory(artifact)) return p / "run.json";
  p += ".run.json";
  return p;
}

json gen_data(const RunContext& ctx, const fs::path& out) {
  const auto t0 = Clock::now();
  const ExperimentConfig& c = ctx.config;
  say(ctx, "generating " + std::to_string(c.n_scenes) + " scenes into " + out.string());
  const auto m = synth::generate_dataset(c.scene, c.n_scenes, c.seed, c.dataset_options(), out, c.splits, ctx.jobs);
  const json info = {{"config_hash", ctx.config_hash},
                     {"scene", to_json(c.scene)},
                     {"n_scenes", c.n_scenes},
                     {"seed", c.seed}};
  io::write_json(out / "dataset.json", info);
  json summary = {{"entries", m.entries.size()}, {"skipped_lanes", m.skipped}};
  for (auto split : {synth::Split::kTrain, synth::Split::kVal, synth::Split::kTest}) {
    summary[std::string(synth::split_name(split))] = {{"real", m.count(LaneLabel::kReal, split)},
                                                      {"fake", m.count(LaneLabel::kFake, split)}};
  }
  write_metadata(out, ctx, "gen-data", seconds_since(t0), summary);
  return summary;
}

std::string_view role_name(Role r) {
  switch (r) {
    case Role::kDetector: return "detector";
    case Role::kVerifier: return "verifier";
    case Role::kLinearVerifier: return "linear-verifier";
  }
  return "unknown";
}

Role parse_role(std::string_view s) {
  if (s == "detector") return Role::kDetector;
  if (s == "verifier") return Role::kVerifier;
  if (s == "linear-verifier") return Role::kLinearVerifier;
  throw Error(Errc::kConfigError, "unknown role '" + std::string(s) + "'");
}

namespace {

std::vector<synth::Scene> load_scenes(const fs::path& data, synth::Split split, int limit, int jobs) {
  auto ids = synth::split_scene_ids(data, split);
  if (limit > 0 && static_cast<int>(ids.size()) > limit) ids.resize(limit);
  std::vector<synth::Scene> scenes(ids.size());
  parallel_for(ids.size(), jobs, [&](std::size_t i) { scenes[i] = synth::read_scene(data, ids[i]); });
  return scenes;
}

json report_json(const nn::TrainReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss},
                      {"val_balanced_accuracy", e.val_balanced_accuracy}});
  return {{"epochs", epochs}, {"best_epoch", r.best_epoch}, {"best_val_balanced_accuracy", r.best_val_balanced_accuracy}};
}

}  // namespace

json train_model(const RunContext& ctx, Role role, const fs::path& data, const fs::path& out) {
  const auto t0 = Clock::now();
  const ExperimentConfig& c = ctx.config;
  json summary;
  if (role == Role::kDetector) {
    const auto train = load_scenes(data, synth::Split::kTrain, 0, ctx.jobs);
    if (train.empty()) throw Error(Errc::kEmptyInput, "no training scenes in " + data.string());
    say(ctx, "training detector on " + std::to_string(train.size()) + " scenes");
    nn::ToyDetector<float> det(c.detector.seed);
    const auto rep = nn::train_detector(det, train, c.detector, ctx.log);
    nn::save_detector(out, det, ctx.config_hash);
    const auto val = load_scenes(data, synth::Split::kVal, 0, ctx.jobs);
    summary = {{"role", role_name(role)}, {"loss_curve", rep.loss_curve}, {"val_scenes", val.size()},
               {"val_mean_iou", val.empty() ? 0.0 : nn::detector_mean_iou(det, val)}};
  } else {
    const auto manifest = synth::read_manifest(data / "manifest.json");
    const auto train = synth::load_split(manifest, data, synth::Split::kTrain);
    const auto val = synth::load_split(manifest, data, synth::Split::kVal);
    say(ctx, "training " + std::string(role_name(role)) + " on " + std::to_string(train.images.size()) + " lanes");
    std::unique_ptr<nn::Classifier<float>> model;
    nn::TrainConfig tc;
    if (role == Role::kVerifier) {
      model = std::make_unique<nn::VerifierCNN<float>>(c.verifier_arch, c.verifier.seed);
      tc = c.verifier;
    } else {
      model = std::make_unique<nn::LinearVerifier<float>>(c.dataset.stab.out_height, c.dataset.stab.out_width,
                                                          c.linear_verifier.seed);
      tc = c.linear_verifier;
    }
    const auto rep = nn::train_classifier(*model, train, val, tc, c.focal, ctx.log);
    nn::save_classifier(out, *model, ctx.config_hash);
    summary = report_json(rep);
    summary["role"] = role_name(role);
  }
  summary["model_hash"] = io::file_hash(out);
  write_metadata(out, ctx, "train", seconds_since(t0), summary);
  return summary;
}

std::string condition_name(const AttackOptions& opt) {
  if (!opt.condition.empty()) return opt.condition;
  if (opt.mode == "clean") return "clean";
  std::string name = opt.mode;
  if (opt.adaptive) name += "-adaptive";
  if (opt.adaptive && opt.cycles > 1) name += "-c" + std::to_string(opt.cycles);
  return name;
}

namespace {

// Stream ids for per-scene seeds.
constexpr std::uint64_t kTargetStream = 0x7A61;
constexpr std::uint64_t kPatchStream = 0x9A7C;

json attack_scene(const RunContext& ctx, const AttackOptions& opt, const synth::Scene& scene,
                  const attacks::Detector& det, const std::vector<LoadedVerifier>& verifiers,
                  const synth::SceneConfig& render) {
  const ExperimentConfig& c = ctx.config;
  const auto t0 = Clock::now();
  const bool clean = opt.mode == "clean";
  json rec = {{"condition", condition_name(opt)}, {"config_hash", ctx.config_hash}, {"scene_id", scene.id},
              {"mode", opt.mode},           {"adaptive", opt.adaptive},        {"cycles", opt.cycles},
              {"eps", c.attack.epsilon}};
  std::vector<PolyLane> fake_curves;
  Image image = scene.image;
  std::vector<Lane> lanes;
  if (clean) {
    rec["patch"] = nullptr;
    rec["target"] = nullptr;
    pipeline::ToyLaneDetector d(det.model, det.extract);
    lanes = d.detect(scene.image).lanes;
  } else {
    const auto target = attacks::default_target(scene, render, mix_seed(c.seed, kTargetStream + scene.id));
    fake_curves.push_back(target.poly);
    attacks::AttackConfig ac = c.attack;
    ac.seed = mix_seed(c.attack.seed, static_cast<std::uint64_t>(scene.id));
    const attacks::Mode mode = attacks::parse_mode(opt.mode);
    std::optional<attacks::PatchSpec> patch;
    if (mode != attacks::Mode::kBounded) {
      const auto kind = mode == attacks::Mode::kFixedPatch ? attacks::PatchKind::kFixed : attacks::PatchKind::kVariable;
      patch = attacks::place_patch(kind, target, mix_seed(c.seed, kPatchStream + scene.id), c.patch_side);
    }
    attacks::AttackResult r;
    if (opt.adaptive) {
      attacks::AdaptiveOptions ao;
      ao.mode = mode;
      ao.cycles = opt.cycles;
      ao.patch = patch;
      ao.stab = c.dataset.stab;
      ao.verify_degree = c.verify_degree;
      r = attacks::attack_adaptive(det, *verifiers.front().model, scene.image, target, render, ao, ac);
    } else if (mode == attacks::Mode::kBounded) {
      r = attacks::attack_bounded(det, scene.image, target, ac);
    } else {
      r = attacks::attack_patch(det, scene.image, target, *patch, render, ac);
    }
    // Feasibility is asserted on every returned image.
    const bool feasible = attacks::within_unit_range(r.adv_image) &&
                          (r.patch ? attacks::outside_patch_unchanged(r.adv_image, scene.image, *r.patch)
                                   : attacks::within_linf(r.adv_image, scene.image, c.attack.epsilon));
    if (!feasible) throw Error(Errc::kInvalidConfig, "attack produced an infeasible image for scene " + std::to_string(scene.id));
    rec["patch"] = r.patch ? json{{"y0", r.patch->y0}, {"x0", r.patch->x0}, {"y1", r.patch->y1},
                                  {"x1", r.patch->x1}, {"side", r.patch->side}}
                           : json(nullptr);
    rec["target"] = poly_json(target.poly);
    rec["iou_vs_target"] = r.iou_vs_target;
    rec["iterations"] = r.iterations;
    rec["detector_loss"] = r.detector_loss;
    rec["stage1_scores"] = r.stage1_scores;
    rec["stage2_scores"] = r.stage2_scores;
    rec["attacked_verifier"] = opt.adaptive ? json(verifiers.front().file_hash) : json(nullptr);
    image = std::move(r.adv_image);
    lanes = std::move(r.detected);
  }

  const pipeline::VerifyConfig vc = c.verify_config();
  std::vector<std::vector<pipeline::LaneVerdict>> verdicts;
  for (const auto& v : verifiers) verdicts.push_back(pipeline::score_lanes(lanes, pipeline::ClassifierVerifier(*v.model), image, vc));
  json lane_list = json::array();
  json first_scores = json::array();
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    json l = lane_samples_json(lanes[i]);
    l["label"] = label_name(eval::match_lane(lanes[i], scene.gt_curves, fake_curves, c.match));
    json scores = json::object();
    for (std::size_t k = 0; k < verifiers.size(); ++k) scores[verifiers[k].file_hash] = verdicts[k][i].score;
    l["scores"] = scores;
    l["reason"] = verifiers.empty() ? "verified" : pipeline::reason_name(verdicts.front()[i].reason);
    if (!verifiers.empty()) first_scores.push_back(verdicts.front()[i].score);
    lane_list.push_back(std::move(l));
  }
  rec["lanes"] = lane_list;
  rec["verifier_scores"] = first_scores;
  std::vector<std::string> keys;
  for (const auto& v : verifiers) keys.push_back(v.file_hash);
  rec["verifiers"] = keys;
  rec["wall_ms"] = 1000.0 * seconds_since(t0);
  return rec;
}

}  // namespace

json run_attack(const RunContext& ctx, const AttackOptions& opt) {
  const auto t0 = Clock::now();
  const ExperimentConfig& c = ctx.config;
  if (opt.mode != "clean") attacks::parse_mode(opt.mode);
  if (opt.cycles < 1 || opt.cycles > 4) throw Error(Errc::kConfigError, "cycles must be in [1, 4]");
  if (opt.adaptive && opt.verifiers.empty()) throw Error(Errc::kConfigError, "the adaptive attack needs --verifier");
  if (opt.adaptive && opt.mode == "clean") throw Error(Errc::kConfigError, "clean runs cannot be adaptive");

  const synth::SceneConfig render = dataset_scene_config(opt.data);
  const auto det_model = nn::load_detector(opt.detector);
  const attacks::Detector det{det_model, c.extract};
  std::vector<LoadedVerifier> verifiers;
  for (const auto& p : opt.verifiers) verifiers.push_back(load_verifier(p));

  std::vector<int> ids;
  for (int id : synth::split_scene_ids(opt.data, synth::Split::kTest)) {
    if (static_cast<int>(ids.size()) >= c.attack_scenes) break;
    ids.push_back(id);
  }
  say(ctx, "attack " + condition_name(opt) + " on " + std::to_string(ids.size()) + " test scenes");
  std::vector<std::optional<json>> records(ids.size());
  parallel_for(ids.size(), ctx.jobs, [&](std::size_t i) {
    const synth::Scene scene = synth::read_scene(opt.data, ids[i]);
    if (opt.mode != "clean" && scene.gt_curves.size() < 2) return;  // no neighbouring pair to aim between
    records[i] = attack_scene(ctx, opt, scene, det, verifiers, render);
  });

  std::string text;
  int written = 0, skipped = 0;
  double iou_sum = 0.0;
  for (const auto& r : records) {
    if (!r) {
      ++skipped;
      continue;
    }
    text += r->dump() + "\n";
    ++written;
    if (r->contains("iou_vs_target")) iou_sum += (*r)["iou_vs_target"].get<double>();
  }
  io::write_text(opt.out, text);
  json summary = {{"condition", condition_name(opt)}, {"records", written}, {"skipped_scenes", skipped}};
  if (opt.mode != "clean" && written > 0) summary["mean_iou_vs_target"] = iou_sum / written;
  write_metadata(opt.out, ctx, "attack", seconds_since(t0), summary);
  return summary;
}

std::vector<json> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIoError, "cannot read " + path.string());
  std::vector<json> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(Errc::kConfigError, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

namespace {

std::vector<double> real_scores(const synth::LabeledImages& set, const std::vector<double>& scores) {
  std::vector<double> out;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (set.labels[i] == LaneLabel::kReal) out.push_back(scores[i]);
  return out;
}

std::vector<double> fake_scores(const synth::LabeledImages& set, const std::vector<double>& scores) {
  std::vector<double> out;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (set.labels[i] == LaneLabel::kFake) out.push_back(scores[i]);
  return out;
}

std::string file_stem_for(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p.replace_extension();
  return p.string() + suffix;
}

}  // namespace

json run_eval(const RunContext& ctx, const EvalOptions& opt) {
  const auto t0 = Clock::now();
  const ExperimentConfig& c = ctx.config;
  if (opt.results.empty()) throw Error(Errc::kNoResults, "no results files given");

  std::vector<std::vector<json>> all;
  std::size_t total = 0;
  for (const auto& p : opt.results) {
    all.push_back(read_records(p));
    total += all.back().size();
  }
  if (total == 0) throw Error(Errc::kNoResults, "no results: the results files hold no records");

  const LoadedVerifier ver = load_verifier(opt.verifier);
  const auto mismatch = [&](const std::string& what, const std::string& got) {
    if (got != ctx.config_hash && !opt.force)
      throw Error(Errc::kHashMismatch, what + " was produced under config " + got + ", expected " + ctx.config_hash +
                                           " (use --force to override)");
  };
  mismatch("verifier " + opt.verifier.filename().string(), ver.config_hash);
  for (std::size_t f = 0; f < all.size(); ++f)
    for (const auto& r : all[f]) mismatch("results " + opt.results[f].filename().string(), r.value("config_hash", ""));

  // Threshold from the calibration split; FPR re-measured on the test split.
  const auto manifest = synth::read_manifest(opt.data / "manifest.json");
  const auto cal = synth::load_split(manifest, opt.data, opt.calibrate);
  const auto cal_scores = nn::score_images(*ver.model, cal.images);
  const auto cal_real = real_scores(cal, cal_scores);
  const double tau = eval::calibrate_threshold(cal_real, c.target_fpr);
  const auto test = synth::load_split(manifest, opt.data, synth::Split::kTest);
  const auto test_scores = nn::score_images(*ver.model, test.images);
  const auto test_real = real_scores(test, test_scores);
  const auto test_fake = fake_scores(test, test_scores);
  json calibration = {{"split", synth::split_name(opt.calibrate)},
                      {"target_fpr", c.target_fpr},
                      {"tau", tau},
                      {"n_real", cal_real.size()},
                      {"fpr", eval::false_positive_rate(cal_real, tau)},
                      {"test_n_real", test_real.size()},
                      {"test_n_fake", test_fake.size()},
                      {"test_fpr", test_real.empty() ? 0.0 : eval::false_positive_rate(test_real, tau)}};
  if (!test_real.empty() && !test_fake.empty()) {
    int passed = 0;
    for (double s : test_fake) passed += s <= tau;
    calibration["test_fnr"] = static_cast<double>(passed) / test_fake.size();
    calibration["test_roc"] = eval::to_json(eval::roc_curve(test_real, test_fake));
  }

  const synth::SceneConfig render = dataset_scene_config(opt.data);
  json conditions = json::array();
  std::vector<eval::EvalReport> reports;
  std::vector<std::pair<std::string, eval::RocResult>> rocs;
  for (std::size_t f = 0; f < all.size(); ++f) {
    if (all[f].empty()) continue;
    const std::string name = all[f].front().value("condition", opt.results[f].stem().string());
    std::vector<eval::SceneOutcome> scenes;
    double iou_sum = 0.0;
    bool has_target = false;
    for (const auto& r : all[f]) {
      const auto& keys = r.at("verifiers");
      if (std::find(keys.begin(), keys.end(), ver.file_hash) == keys.end())
        throw Error(Errc::kHashMismatch, "results " + opt.results[f].filename().string() +
                                             " were not scored by verifier " + opt.verifier.filename().string());
      eval::SceneOutcome so;
      so.scene_id = r.at("scene_id").get<int>();
      if (!r.at("target").is_null()) {
        has_target = true;
        so.target_seg = attacks::make_target(poly_from_json(r.at("target")), render).seg;
        iou_sum += r.at("iou_vs_target").get<double>();
      } else {
        so.target_seg = Mask(render.height, render.width);
      }
      for (const auto& l : r.at("lanes")) {
        const auto& scores = l.at("scores");
        if (!scores.contains(ver.file_hash))
          throw Error(Errc::kHashMismatch, "results " + opt.results[f].filename().string() +
                                               " hold no scores for verifier " + opt.verifier.filename().string());
        eval::LaneOutcome lo;
        lo.lane = lane_from_json(l);
        lo.truth = parse_label(l.at("label").get<std::string>());
        lo.score = scores.at(ver.file_hash).get<double>();
        so.lanes.push_back(std::move(lo));
      }
      scenes.push_back(std::move(so));
    }
    eval::EvalReport rep = eval::evaluate_defense(scenes, tau, render, name);
    json j = eval::to_json(rep);
    j["records"] = all[f].size();
    if (has_target) {
      j["mean_iou_vs_target"] = iou_sum / all[f].size();
    } else {
      for (const char* k : {"fn_avg_iou", "unprotected_fn_avg_iou", "fnr", "unprotected_fnr"}) j.erase(k);
      j["real_acceptance"] = 1.0 - rep.fpr;
    }
    conditions.push_back(j);
    if (!rep.roc.points.empty()) {
      io::write_text(file_stem_for(opt.out, "_" + name + ".roc.csv"), eval::roc_csv(rep.roc));
      rocs.emplace_back(name, rep.roc);
    }
    if (has_target) reports.push_back(rep);
  }

  json report = {{"config_hash", ctx.config_hash},
                 {"verifier_hash", ver.file_hash},
                 {"calibration", calibration},
                 {"conditions", conditions}};
  io::write_json(opt.out, report);
  if (opt.svg) {
    io::write_text(file_stem_for(opt.out, "_roc.svg"), eval::roc_svg(rocs));
    io::write_text(file_stem_for(opt.out, "_iou.svg"), eval::iou_bar_svg(reports));
  }
  write_metadata(opt.out, ctx, "eval", seconds_since(t0), {{"conditions", conditions.size()}, {"tau", tau}});
  return report;
}

json run_bench(const RunContext& ctx, const BenchOptions& opt) {
  const auto t0 = Clock::now();
  const ExperimentConfig& c = ctx.config;
  const auto det_model = nn::load_detector(opt.detector);
  const LoadedVerifier ver = load_verifier(opt.verifier);
  const auto scenes = load_scenes(opt.data, synth::Split::kTest, c.bench_scenes, 1);
  if (scenes.empty()) throw Error(Errc::kEmptyInput, "no test scenes to benchmark");
  std::vector<Image> images;
  for (const auto& s : scenes) images.push_back(s.image);
  const pipeline::ToyLaneDetector det(det_model, c.extract);
  const pipeline::ClassifierVerifier verifier(*ver.model);
  const int reps = opt.reps > 0 ? opt.reps : c.bench_reps;
  say(ctx, "benchmarking " + std::to_string(images.size()) + " scenes x " + std::to_string(reps) + " reps");
  const auto t = eval::bench_overhead(det, verifier, images, reps, 0.5, c.verify_config());
  json j = eval::to_json(t);
  j["config_hash"] = ctx.config_hash;
  j["verifier_hash"] = ver.file_hash;
  io::write_json(opt.out, j);
  write_metadata(opt.out, ctx, "bench", seconds_since(t0), j);
  return j;
}

}  // namespace lanesentinel::experiment
