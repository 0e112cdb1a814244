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

#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lanesentinel/common/image.hpp"
#include "lanesentinel/geometry/lane.hpp"
#include "lanesentinel/pipeline/pipeline.hpp"
#include "lanesentinel/synth/scene.hpp"

namespace lanesentinel::eval {

// |a and b| / |a or b|; 1.0 when both maps are empty.
double iou(const Mask& a, const Mask& b);

// Smallest tau with fraction{score > tau} <= target_fpr. Ties stay on the
// conservative side: a tau equal to a score passes every copy of it.
// target_fpr >= 1 returns min(scores) - 1.
double calibrate_threshold(const std::vector<double>& real_scores, double target_fpr);
double false_positive_rate(const std::vector<double>& real_scores, double tau);

struct RocPoint {
  double threshold = 0.0;  // lanes with score >= threshold are flagged
  double fpr = 0.0;
  double tpr = 0.0;
  double fnr() const { return 1.0 - tpr; }
};

struct RocResult {
  std::vector<RocPoint> points;  // fpr ascending, from (0,0) to (1,1)
  double auc = 0.0;
  std::vector<std::pair<double, double>> fnr_at_fpr;  // (fpr, interpolated fnr)
};

inline const std::vector<double>& tabulated_fprs() {
  static const std::vector<double> v{0.01, 0.02, 0.05, 0.10};
  return v;
}

// Sweeps every distinct score; AUC by the trapezoid rule over (fpr, tpr).
RocResult roc_curve(const std::vector<double>& real_scores, const std::vector<double>& fake_scores);
// Upper envelope of the curve at `fpr`, linear between neighbouring points.
double fnr_at(const RocResult& roc, double fpr);

struct MatchConfig {
  double max_mean_dx = 8.0;
};

// Nearest curve by mean |dx| over shared rows; kReal for a ground-truth
// curve, kFake for an attack target, kUnknown when nothing is within
// tolerance.
LaneLabel match_lane(const Lane& lane, const std::vector<PolyLane>& real_curves,
                     const std::vector<PolyLane>& fake_curves, const MatchConfig& cfg = {});

struct LaneOutcome {
  Lane lane;
  LaneLabel truth = LaneLabel::kUnknown;
  double score = 1.0;
};

struct SceneOutcome {
  int scene_id = 0;
  Mask target_seg;
  std::vector<LaneOutcome> lanes;
};

struct EvalReport {
  std::string condition;
  double tau = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
  double fn_avg_iou = 0.0;
  double unprotected_fpr = 0.0;
  double unprotected_fnr = 0.0;
  double unprotected_fn_avg_iou = 0.0;
  int n_scenes = 0;
  int n_real = 0;
  int n_fake = 0;
  int n_mismatch = 0;  // detected lanes matching neither real nor target
  RocResult roc;       // empty unless both classes are present
};

// Rates over matched lanes; fn_avg_iou is the mean over scenes of
// IoU(render(surviving lanes), target_seg). A lane survives when its score
// is <= tau. The unprotected figures pass every lane.
EvalReport evaluate_defense(const std::vector<SceneOutcome>& scenes, double tau, const synth::SceneConfig& render,
                            const std::string& condition = "");

nlohmann::json to_json(const RocResult& roc);
nlohmann::json to_json(const EvalReport& r);
// fpr,fnr,tpr per line after a header.
std::string roc_csv(const RocResult& roc);
std::string roc_svg(const std::vector<std::pair<std::string, RocResult>>& curves);
// Grouped bars of unprotected vs defended FN average IoU per condition.
std::string iou_bar_svg(const std::vector<EvalReport>& reports);

struct TimingRecord {
  int scenes = 0;
  int repetitions = 0;
  int lanes = 0;
  double detect_ms = 0.0;             // median per scene, detect only
  double detect_verify_ms = 0.0;      // median per scene, detect + stabilize + verify
  double detect_stabilize_ms = 0.0;   // median per scene with a constant verifier
  double verify_ms_per_lane = 0.0;    // median of (stabilize + verify) per lane
  double overhead = 0.0;              // (with - without) / without
  double stabilize_overhead = 0.0;    // constant-verifier ablation
  double fps_without = 0.0;
  double fps_with = 0.0;
};

nlohmann::json to_json(const TimingRecord& t);

// Median wall times over repetitions x scenes, measured on the calling
// thread.
TimingRecord bench_overhead(const pipeline::LaneDetector& detector, const pipeline::LaneVerifier& verifier,
                            const std::vector<Image>& scenes, int repetitions, double tau,
                            const pipeline::VerifyConfig& cfg = {});

}  // namespace lanesentinel::eval
