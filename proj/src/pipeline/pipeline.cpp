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

#include "lanesentinel/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lanesentinel/common/error.hpp"
#include "lanesentinel/neural/train.hpp"

namespace lanesentinel::pipeline {

Detection ToyLaneDetector::detect(const Image& scene) const {
  Detection d;
  d.prob = nn::probability_map(model_, scene);
  d.lanes = nn::extract_lanes(d.prob, cfg_);
  return d;
}

Detection GroundTruthDetector::detect(const Image& scene) const {
  if (scene.height != seg_.height || scene.width != seg_.width)
    throw Error(Errc::kShapeMismatch, "ground-truth detector: scene size differs from its map");
  Detection d;
  d.prob = Image(1, seg_.height, seg_.width);
  for (std::size_t i = 0; i < seg_.data.size(); ++i) d.prob.data[i] = seg_.data[i] ? 1.0f : 0.0f;
  d.lanes = lanes_;
  return d;
}

std::vector<double> ClassifierVerifier::score(const std::vector<const StabilizedLane*>& lanes) const {
  std::vector<const Image*> images;
  images.reserve(lanes.size());
  for (const auto* l : lanes) images.push_back(&l->image);
  if (images.empty()) return {};
  const nn::Tensor<float> x = nn::stack_images(images);
  const std::vector<float> z = model_.forward(x, nn::Mode::kEval);
  std::vector<double> s(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s[i] = nn::sigmoid(z[i]);
  return s;
}

std::vector<double> OracleVerifier::score(const std::vector<const StabilizedLane*>& lanes) const {
  std::vector<double> s;
  for (const auto* l : lanes) {
    const Lane sampled = sample_poly(l->source_poly);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : real_) best = std::min(best, mean_abs_dx(sampled, r));
    s.push_back(best < tolerance_ ? 0.0 : 1.0);
  }
  return s;
}

std::string_view reason_name(Reason r) {
  switch (r) {
    case Reason::kVerified: return "verified";
    case Reason::kFitFailed: return "fit_failed";
    case Reason::kStabilizeFailed: return "stabilize_failed";
    case Reason::kNonFiniteScore: return "non_finite_score";
  }
  return "unknown";
}

PolyLane extend_to_frame_edge(PolyLane poly, int height, int width) {
  int r = poly.row_max;
  while (r + 1 < height) {
    const double x = poly.x_at(r + 1);
    if (!(x >= 0.0 && x <= width - 1)) break;
    ++r;
  }
  poly.row_max = r;
  return poly;
}

PolyLane verification_curve(const Lane& lane, int height, int width, const VerifyConfig& cfg) {
  int degree = cfg.degree;
  if (cfg.rows_per_degree > 0 && !lane.empty()) {
    const int extent = lane.row_max() - lane.row_min() + 1;
    degree = std::clamp(extent / cfg.rows_per_degree, 1, cfg.degree);
  }
  PolyLane poly = fit_polynomial(lane, degree);
  if (cfg.extend_to_frame_edge) poly = extend_to_frame_edge(poly, height, width);
  return poly;
}

std::vector<LaneVerdict> score_lanes(const std::vector<Lane>& lanes, const LaneVerifier& verifier,
                                     const Image& scene, const VerifyConfig& cfg) {
  std::vector<LaneVerdict> verdicts(lanes.size());
  std::vector<StabilizedLane> stabs;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    verdicts[i].lane = lanes[i];
    try {
      verdicts[i].poly = verification_curve(lanes[i], scene.height, scene.width, cfg);
    } catch (const Error&) {
      verdicts[i].reason = Reason::kFitFailed;
      continue;
    }
    try {
      stabs.push_back(stabilize_lane(scene, verdicts[i].poly, cfg.stab));
      owner.push_back(i);
    } catch (const Error&) {
      verdicts[i].reason = Reason::kStabilizeFailed;
    }
  }
  std::vector<const StabilizedLane*> ptrs;
  for (const auto& s : stabs) ptrs.push_back(&s);
  const std::vector<double> scores = verifier.score(ptrs);
  for (std::size_t k = 0; k < owner.size(); ++k) {
    // A non-finite score cannot vouch for a lane.
    if (std::isfinite(scores[k])) {
      verdicts[owner[k]].score = scores[k];
    } else {
      verdicts[owner[k]].score = 1.0;
      verdicts[owner[k]].reason = Reason::kNonFiniteScore;
    }
  }
  return verdicts;
}

VerifiedOutput verify_lanes(const std::vector<Lane>& lanes, const LaneVerifier& verifier, double tau,
                            const Image& scene, const VerifyConfig& cfg) {
  VerifiedOutput out;
  for (auto& v : score_lanes(lanes, verifier, scene, cfg)) {
    if (v.reason == Reason::kVerified && v.score <= tau) out.accepted.push_back(std::move(v));
    else out.rejected.push_back(std::move(v));
  }
  out.alarm = !out.rejected.empty();
  return out;
}

VerifiedOutput verify_scene(const LaneDetector& detector, const LaneVerifier& verifier, double tau,
                            const Image& scene, const VerifyConfig& cfg) {
  return verify_lanes(detector.detect(scene).lanes, verifier, tau, scene, cfg);
}

double mean_abs_dx(const Lane& lane, const PolyLane& poly) {
  double sum = 0.0;
  int n = 0;
  for (const auto& s : lane.samples) {
    if (s.row < poly.row_min || s.row > poly.row_max) continue;
    sum += std::abs(s.x - poly.x_at(s.row));
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::infinity() : sum / n;
}

}  // namespace lanesentinel::pipeline
