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

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lanesentinel/common/image.hpp"
#include "lanesentinel/common/rng.hpp"
#include "lanesentinel/geometry/lane.hpp"
#include "lanesentinel/geometry/stabilize.hpp"
#include "lanesentinel/neural/models.hpp"
#include "lanesentinel/pipeline/pipeline.hpp"
#include "lanesentinel/synth/scene.hpp"

namespace lanesentinel::attacks {

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double step_size = 0.0;          // 0 means epsilon / 4
  double patch_step_size = 0.03;   // sign step for unbounded patch pixels
  int max_iters = 1000;
  double tolerance = 1e-4;         // mean relative loss change ...
  int window = 10;                 // ... over this many iterations
  bool random_start = true;
  std::uint64_t seed = 0;

  double bounded_step() const { return step_size > 0.0 ? step_size : epsilon / 4.0; }
};

nlohmann::json to_json(const AttackConfig& c);
AttackConfig attack_config_from_json(const nlohmann::json& j, AttackConfig defaults = {});

// Per-coordinate feasible set. Both the L-inf ball and the patch mask
// (intersected with [0,1]) are boxes.
struct Box {
  std::vector<float> lo, hi;
};

// lo/hi = clean -/+ eps clipped to [0,1], rounded inward so that the bound
// holds exactly in double arithmetic. Coordinates outside `active` (when
// given, one flag per pixel shared by all channels) are pinned to clean.
Box linf_box(const Image& clean, double eps, const std::vector<std::uint8_t>* active = nullptr);
// [0,1] inside the mask, pinned to clean outside.
Box patch_box(const Image& clean, const Mask& patch);

// Value and gradient of a loss to minimize.
using Objective = std::function<double(const std::vector<float>& x, std::vector<float>& grad)>;

struct PgdOptions {
  double step = 0.0;
  int max_iters = 1000;
  double tolerance = 1e-4;
  int window = 10;
  bool random_start = true;
};

struct PgdResult {
  std::vector<float> x;          // best iterate (x0 included as a candidate)
  double loss = 0.0;             // its loss
  int iterations = 0;
  std::vector<double> best_loss_trace;  // best loss after each iteration
};

// x <- clamp(x - step * sign(grad), lo, hi), with an optional uniform start
// inside the box. Stops when the mean relative loss change over the last
// `window` iterations drops below `tolerance`, or at max_iters. Throws
// NonFiniteGradient.
PgdResult pgd(const Objective& f, const std::vector<float>& x0, const Box& box, const PgdOptions& opt, Rng& rng);

// Attacker-chosen lane and its rendered map.
struct TargetLane {
  PolyLane poly;
  Mask seg;
};

TargetLane make_target(const PolyLane& poly, const synth::SceneConfig& render);
// A lane between two neighbouring ground-truth lanes at a seeded fraction
// of the gap; requires at least two lanes.
TargetLane default_target(const synth::Scene& scene, const synth::SceneConfig& render, std::uint64_t seed);

enum class PatchKind { kFixed, kVariable };

struct PatchSpec {
  PatchKind kind = PatchKind::kFixed;
  int base_side = 100;
  int row = 0;     // center row
  double x = 0.0;  // center column
};

struct PatchRect {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // inclusive, clipped to the image
  int side = 0;                        // unclipped side length
  bool empty() const { return y1 < y0 || x1 < x0; }
};

// Fixed: base_side. Variable: max(4, round(base_side * scale)) with
// scale = (row - vanishing_row) / (bottom_row - vanishing_row).
int patch_side(const PatchSpec& p, const synth::SceneConfig& scene);
// Throws PatchOutOfFrame when the square misses the image.
PatchRect patch_rect(const PatchSpec& p, const synth::SceneConfig& scene);
Mask patch_mask(const PatchRect& r, int height, int width);
// Center on the target at a seeded row of its extent.
PatchSpec place_patch(PatchKind kind, const TargetLane& target, std::uint64_t seed, int base_side = 100);

enum class Mode { kBounded, kFixedPatch, kVariablePatch };
std::string_view mode_name(Mode m);
Mode parse_mode(std::string_view s);

// Rectangle of the scene scored by the detector objective.
struct Window {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // inclusive
};

// Mean per-pixel BCE between detector probabilities and target.seg over
// `loss_region`, computed from a crop grown by the receptive-field radius so
// the value equals the full-frame loss restricted to that region.
class DetectorObjective {
 public:
  DetectorObjective(const nn::ToyDetector<float>& det, const Mask& target, const Window& loss_region, int height,
                    int width);
  double operator()(const Image& x, Image* grad) const;
  const Window& crop() const { return crop_; }

 private:
  const nn::ToyDetector<float>& det_;
  const Mask& target_;
  Window region_, crop_;
  int height_, width_;
};

inline constexpr int kDetectorRadius = 4;  // four stacked 3x3 convolutions

struct AttackResult {
  Image adv_image;
  Image perturbation;  // adv - clean
  int iterations = 0;
  double detector_loss = 0.0;
  Mask achieved_seg;   // detector output > 0.5 on adv_image
  double iou_vs_target = 0.0;
  std::vector<Lane> detected;
  std::optional<PatchRect> patch;
  // Verifier score of the target-curve stabilization before and after each
  // stage 2.
  std::vector<double> stage1_scores;
  std::vector<double> stage2_scores;
};

struct Detector {
  const nn::ToyDetector<float>& model;
  nn::ExtractConfig extract;
};

AttackResult attack_bounded(const Detector& det, const Image& clean, const TargetLane& target,
                            const AttackConfig& cfg);
AttackResult attack_patch(const Detector& det, const Image& clean, const TargetLane& target, const PatchSpec& patch,
                          const synth::SceneConfig& scene, const AttackConfig& cfg);

struct Stage2Result {
  Image image;         // scene after write-back and projection
  double logit_before = 0.0;
  double logit_after = 0.0;
  int iterations = 0;
};

// PGD on the verifier's fake logit of the lane stabilized along
// target.poly. Every step is written back to scene pixels (equally to all
// channels, which shifts luminance by the same amount) and projected onto
// `box`; the stabilized image is then re-read from the projected scene.
// Starts from `current` without a random start, so a flat verifier leaves
// the scene untouched.
Stage2Result stage2_verifier_attack(const nn::Classifier<float>& verifier, const Image& current, const Box& box,
                                    const PolyLane& target_poly, const StabilizationConfig& stab, double step,
                                    const AttackConfig& cfg, const Mask* region = nullptr);

struct AdaptiveOptions {
  Mode mode = Mode::kBounded;
  int cycles = 1;
  std::optional<PatchSpec> patch;  // required for patch modes
  StabilizationConfig stab;
  int verify_degree = 3;
};

// Alternates detector attack and verifier attack `cycles` times. With
// cycles = 1 and a flat verifier the result equals the nonadaptive attack.
AttackResult attack_adaptive(const Detector& det, const nn::Classifier<float>& verifier, const Image& clean,
                             const TargetLane& target, const synth::SceneConfig& scene, const AdaptiveOptions& opt,
                             const AttackConfig& cfg);

// Exhaustive checks of the returned image.
bool within_linf(const Image& adv, const Image& clean, double eps, double slack = 1e-9);
bool within_unit_range(const Image& adv);
bool outside_patch_unchanged(const Image& adv, const Image& clean, const PatchRect& r);

}  // namespace lanesentinel::attacks
