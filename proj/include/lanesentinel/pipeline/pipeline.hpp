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

#include <memory>
#include <string_view>
#include <vector>

#include "lanesentinel/common/image.hpp"
#include "lanesentinel/geometry/lane.hpp"
#include "lanesentinel/geometry/stabilize.hpp"
#include "lanesentinel/neural/extract.hpp"
#include "lanesentinel/neural/models.hpp"

namespace lanesentinel::pipeline {

struct Detection {
  Image prob;               // 1 x H x W lane probability
  std::vector<Lane> lanes;  // left to right by bottom x
};

// Any lane detector. Implementations must be deterministic and order lanes
// left to right by bottom-row x.
class LaneDetector {
 public:
  virtual ~LaneDetector() = default;
  virtual Detection detect(const Image& scene) const = 0;
};

// Adapter for the trainable segmentation network plus run-tracking
// extraction.
class ToyLaneDetector final : public LaneDetector {
 public:
  explicit ToyLaneDetector(const nn::ToyDetector<float>& model, const nn::ExtractConfig& cfg = {})
      : model_(model), cfg_(cfg) {}
  Detection detect(const Image& scene) const override;

 private:
  const nn::ToyDetector<float>& model_;
  nn::ExtractConfig cfg_;
};

// Returns fixed lanes regardless of the image; the segmentation map becomes
// a 0/1 probability map.
class GroundTruthDetector final : public LaneDetector {
 public:
  GroundTruthDetector(std::vector<Lane> lanes, Mask seg) : lanes_(std::move(lanes)), seg_(std::move(seg)) {}
  Detection detect(const Image& scene) const override;

 private:
  std::vector<Lane> lanes_;
  Mask seg_;
};

// Scores stabilized lanes with P(fake).
class LaneVerifier {
 public:
  virtual ~LaneVerifier() = default;
  virtual std::vector<double> score(const std::vector<const StabilizedLane*>& lanes) const = 0;
  double score_one(const StabilizedLane& lane) const { return score({&lane}).front(); }
};

class ClassifierVerifier final : public LaneVerifier {
 public:
  explicit ClassifierVerifier(const nn::Classifier<float>& model) : model_(model) {}
  std::vector<double> score(const std::vector<const StabilizedLane*>& lanes) const override;
  const nn::Classifier<float>& model() const { return model_; }

 private:
  const nn::Classifier<float>& model_;
};

// Knows the real curves of a scene; a lane is real when its source curve
// lies within `tolerance` mean |dx| of one of them.
class OracleVerifier final : public LaneVerifier {
 public:
  explicit OracleVerifier(std::vector<PolyLane> real_curves, double tolerance = 8.0)
      : real_(std::move(real_curves)), tolerance_(tolerance) {}
  std::vector<double> score(const std::vector<const StabilizedLane*>& lanes) const override;

 private:
  std::vector<PolyLane> real_;
  double tolerance_;
};

class ConstantVerifier final : public LaneVerifier {
 public:
  explicit ConstantVerifier(double value) : value_(value) {}
  std::vector<double> score(const std::vector<const StabilizedLane*>& lanes) const override {
    return std::vector<double>(lanes.size(), value_);
  }

 private:
  double value_;
};

struct VerifyConfig {
  StabilizationConfig stab;
  int degree = 3;
  // Short lanes get a lower degree, one order per this many rows of extent
  // (at least 1, at most `degree`), so the extension below does not follow
  // a cubic far beyond the rows it was fitted on. 0 keeps `degree`.
  int rows_per_degree = 32;
  // Continue each fitted curve down to the bottom row or the frame edge
  // before stabilizing, so a lane that stops mid-road is judged on the
  // missing stretch as well.
  bool extend_to_frame_edge = true;
};

enum class Reason { kVerified, kFitFailed, kStabilizeFailed, kNonFiniteScore };
std::string_view reason_name(Reason r);

struct LaneVerdict {
  Lane lane;
  PolyLane poly;
  double score = 1.0;
  Reason reason = Reason::kVerified;
};

struct VerifiedOutput {
  std::vector<LaneVerdict> accepted;  // score <= tau
  std::vector<LaneVerdict> rejected;  // score > tau, or not verifiable
  bool alarm = false;                 // any lane rejected
};

// Fits and extends the verification curve of a detected lane. Throws the
// fitter's errors.
PolyLane verification_curve(const Lane& lane, int height, int width, const VerifyConfig& cfg);

// Extends row_max while x(row) stays inside [0, width-1] and row < height.
PolyLane extend_to_frame_edge(PolyLane poly, int height, int width);

// Per lane: fit -> stabilize -> score -> threshold. Lanes whose fit or
// stabilization fails are rejected with score 1.0.
VerifiedOutput verify_lanes(const std::vector<Lane>& lanes, const LaneVerifier& verifier, double tau,
                            const Image& scene, const VerifyConfig& cfg = {});
VerifiedOutput verify_scene(const LaneDetector& detector, const LaneVerifier& verifier, double tau,
                            const Image& scene, const VerifyConfig& cfg = {});

// Scores in lane order (1.0 for unverifiable lanes); shared by evaluation
// and the attack records.
std::vector<LaneVerdict> score_lanes(const std::vector<Lane>& lanes, const LaneVerifier& verifier,
                                     const Image& scene, const VerifyConfig& cfg = {});

// Mean |x_lane(row) - poly(row)| over the rows both cover; +inf when they
// share none.
double mean_abs_dx(const Lane& lane, const PolyLane& poly);

}  // namespace lanesentinel::pipeline
