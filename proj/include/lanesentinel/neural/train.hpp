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
#include <string>
#include <vector>

#include <json.hpp>

#include "lanesentinel/neural/loss.hpp"
#include "lanesentinel/neural/models.hpp"
#include "lanesentinel/synth/dataset.hpp"

namespace lanesentinel::nn {

struct TrainConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int epochs = 24;
  int batch_size = 64;
  std::uint64_t seed = 0;
  double adv_fraction = 0.5;
  double adv_eps = 8.0 / 255.0;
  int adv_steps = 10;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_balanced_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_balanced_accuracy = 0.0;
};

using Progress = std::function<void(const std::string&)>;

// Stacks single-channel images into [N, 1, H, W].
Tensor<float> stack_images(const std::vector<const Image*>& images);

// Eval-mode scores P(fake), evaluated in batches.
std::vector<double> score_images(const Classifier<float>& model, const std::vector<Image>& images);

// Mean of per-class accuracies with score > threshold meaning FAKE.
double balanced_accuracy(const std::vector<double>& scores, const std::vector<LaneLabel>& labels,
                         double threshold = 0.5);

// Eval-mode PGD that maximizes the focal loss inside an L-inf ball, used to
// harden the verifier against perturbed fakes.
Tensor<float> pgd_maximize_focal(const Classifier<float>& model, const Tensor<float>& x,
                                 const std::vector<LaneLabel>& labels, const FocalParams& focal, double eps, int steps,
                                 Rng& rng);

// Minibatch SGD with momentum on the focal loss; lr drops x0.1 after two
// thirds of the epochs. Returns the weights with the best validation
// balanced accuracy (earliest on ties). Throws EmptyClass when a split lacks
// a class.
TrainReport train_classifier(Classifier<float>& model, const synth::LabeledImages& train,
                             const synth::LabeledImages& val, const TrainConfig& cfg, const FocalParams& focal,
                             const Progress& progress = {});

struct DetectorTrainConfig {
  int steps = 1500;
  int batch_size = 8;
  int crop = 64;
  double lr = 3e-3;  // Adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double lane_crop_fraction = 0.75;  // crops centred on a marking pixel
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const DetectorTrainConfig& c);
DetectorTrainConfig detector_train_config_from_json(const nlohmann::json& j, DetectorTrainConfig defaults = {});

struct DetectorTrainReport {
  std::vector<double> loss_curve;  // mean BCE per 100 steps
};

// Per-pixel BCE against seg_map on random crops.
DetectorTrainReport train_detector(ToyDetector<float>& model, const std::vector<synth::Scene>& scenes,
                                   const DetectorTrainConfig& cfg, const Progress& progress = {});

Tensor<float> image_batch(const Image& scene);            // [1, C, H, W]
Image probability_map(const ToyDetector<float>& model, const Image& scene);  // 1 x H x W
// Mean over scenes of IoU(prob > 0.5, seg_map).
double detector_mean_iou(const ToyDetector<float>& model, const std::vector<synth::Scene>& scenes);

}  // namespace lanesentinel::nn
