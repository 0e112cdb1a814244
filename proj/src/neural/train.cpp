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

#include "lanesentinel/neural/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lanesentinel/common/error.hpp"
#include "lanesentinel/kernels/kernels.hpp"

namespace lanesentinel::nn {

namespace {

template <class Cfg, class F>
void read_field(const nlohmann::json& j, const char* key, F& field) {
  if (j.contains(key)) field = j.at(key).get<F>();
}

void require_both_classes(const synth::LabeledImages& s, const char* which) {
  const bool real = std::find(s.labels.begin(), s.labels.end(), LaneLabel::kReal) != s.labels.end();
  const bool fake = std::find(s.labels.begin(), s.labels.end(), LaneLabel::kFake) != s.labels.end();
  if (!real || !fake) throw Error(Errc::kEmptyClass, std::string(which) + " split lacks a class");
}

void copy_weights(Classifier<float>& dst, Classifier<float>& src) {
  auto dp = dst.parameters(), sp = src.parameters();
  for (std::size_t i = 0; i < dp.size(); ++i) dp[i]->data = sp[i]->data;
  auto db = dst.buffers(), sb = src.buffers();
  for (std::size_t i = 0; i < db.size(); ++i) db[i]->data = sb[i]->data;
}

}  // namespace

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"adv_fraction", c.adv_fraction},
          {"adv_eps", c.adv_eps},
          {"adv_steps", c.adv_steps}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    read_field<TrainConfig>(j, "lr", c.lr);
    read_field<TrainConfig>(j, "momentum", c.momentum);
    read_field<TrainConfig>(j, "weight_decay", c.weight_decay);
    read_field<TrainConfig>(j, "epochs", c.epochs);
    read_field<TrainConfig>(j, "batch_size", c.batch_size);
    read_field<TrainConfig>(j, "seed", c.seed);
    read_field<TrainConfig>(j, "adv_fraction", c.adv_fraction);
    read_field<TrainConfig>(j, "adv_eps", c.adv_eps);
    read_field<TrainConfig>(j, "adv_steps", c.adv_steps);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kConfigError, std::string("train config: ") + e.what());
  }
  if (c.adv_fraction < 0.0 || c.adv_fraction > 1.0) throw Error(Errc::kInvalidConfig, "adv_fraction must be in [0,1]");
  if (c.batch_size < 1 || c.epochs < 0) throw Error(Errc::kInvalidConfig, "bad batch size or epoch count");
  return c;
}

nlohmann::json to_json(const DetectorTrainConfig& c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"crop", c.crop},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"lane_crop_fraction", c.lane_crop_fraction},
          {"seed", c.seed}};
}

DetectorTrainConfig detector_train_config_from_json(const nlohmann::json& j, DetectorTrainConfig c) {
  try {
    read_field<DetectorTrainConfig>(j, "steps", c.steps);
    read_field<DetectorTrainConfig>(j, "batch_size", c.batch_size);
    read_field<DetectorTrainConfig>(j, "crop", c.crop);
    read_field<DetectorTrainConfig>(j, "lr", c.lr);
    read_field<DetectorTrainConfig>(j, "beta1", c.beta1);
    read_field<DetectorTrainConfig>(j, "beta2", c.beta2);
    read_field<DetectorTrainConfig>(j, "lane_crop_fraction", c.lane_crop_fraction);
    read_field<DetectorTrainConfig>(j, "seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kConfigError, std::string("detector train config: ") + e.what());
  }
  if (c.crop < 8 || c.batch_size < 1) throw Error(Errc::kInvalidConfig, "bad detector crop or batch size");
  return c;
}

Tensor<float> stack_images(const std::vector<const Image*>& images) {
  if (images.empty()) throw Error(Errc::kEmptyInput, "no images to stack");
  const int h = images.front()->height, w = images.front()->width;
  Tensor<float> x({static_cast<int>(images.size()), 1, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->channels != 1 || images[i]->height != h || images[i]->width != w)
      throw Error(Errc::kShapeMismatch, "stabilized images must share one single-channel shape");
    std::copy(images[i]->data.begin(), images[i]->data.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i) * h * w);
  }
  return x;
}

std::vector<double> score_images(const Classifier<float>& model, const std::vector<Image>& images) {
  std::vector<double> scores;
  scores.reserve(images.size());
  constexpr std::size_t kBatch = 256;
  for (std::size_t s = 0; s < images.size(); s += kBatch) {
    std::vector<const Image*> ptrs;
    for (std::size_t i = s; i < std::min(images.size(), s + kBatch); ++i) ptrs.push_back(&images[i]);
    for (float z : model.forward(stack_images(ptrs), Mode::kEval)) scores.push_back(sigmoid(z));
  }
  return scores;
}

double balanced_accuracy(const std::vector<double>& scores, const std::vector<LaneLabel>& labels, double threshold) {
  double ok[2] = {0, 0}, n[2] = {0, 0};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int k = labels[i] == LaneLabel::kFake ? 1 : 0;
    n[k] += 1;
    if ((scores[i] > threshold) == (k == 1)) ok[k] += 1;
  }
  if (n[0] == 0 || n[1] == 0) throw Error(Errc::kEmptyClass, "balanced accuracy needs both classes");
  return 0.5 * (ok[0] / n[0] + ok[1] / n[1]);
}

Tensor<float> pgd_maximize_focal(const Classifier<float>& model, const Tensor<float>& x,
                                 const std::vector<LaneLabel>& labels, const FocalParams& focal, double eps, int steps,
                                 Rng& rng) {
  Tensor<float> lo(x.shape), hi(x.shape), adv(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    lo.data[i] = std::max(0.0f, x.data[i] - static_cast<float>(eps));
    hi.data[i] = std::min(1.0f, x.data[i] + static_cast<float>(eps));
    adv.data[i] = static_cast<float>(uniform(rng, lo.data[i], hi.data[i]));
    adv.data[i] = std::clamp(adv.data[i], lo.data[i], hi.data[i]);
  }
  const float step = static_cast<float>(eps / 4.0);
  std::vector<float> neg(x.numel());
  for (int s = 0; s < steps; ++s) {
    std::unique_ptr<ClassifierCache<float>> cache;
    const auto logits = model.forward(adv, Mode::kEval, &cache);
    std::vector<float> d(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) d[i] = static_cast<float>(focal_loss(logits[i], labels[i], focal).dlogit);
    const Tensor<float> g = model.backward(*cache, d, nullptr);
    for (std::size_t i = 0; i < g.numel(); ++i) neg[i] = -g.data[i];
    kernels::sign_step_box<float>(adv.ptr(), neg.data(), lo.ptr(), hi.ptr(), step, adv.numel());
  }
  return adv;
}

TrainReport train_classifier(Classifier<float>& model, const synth::LabeledImages& train,
                             const synth::LabeledImages& val, const TrainConfig& cfg, const FocalParams& focal,
                             const Progress& progress) {
  require_both_classes(train, "train");
  require_both_classes(val, "val");
  Rng rng = make_rng(cfg.seed, 0x7A1Eull);
  auto best = model.clone();
  TrainReport report;
  report.best_val_balanced_accuracy = -1.0;
  auto velocity = model.zero_grads();
  std::vector<std::size_t> order(train.images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const int decay_epoch = (2 * cfg.epochs) / 3;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = epoch >= decay_epoch ? 0.1 * cfg.lr : cfg.lr;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Image*> ptrs;
      std::vector<LaneLabel> labels;
      for (std::size_t i = start; i < end; ++i) {
        ptrs.push_back(&train.images[order[i]]);
        labels.push_back(train.labels[order[i]]);
      }
      Tensor<float> x = stack_images(ptrs);
      const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);

      std::vector<std::size_t> fakes;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == LaneLabel::kFake) fakes.push_back(i);
      const auto n_adv = static_cast<std::size_t>(std::lround(cfg.adv_fraction * fakes.size()));
      if (n_adv > 0 && cfg.adv_eps > 0.0 && cfg.adv_steps > 0) {
        Tensor<float> sub({static_cast<int>(n_adv), 1, x.dim(2), x.dim(3)});
        for (std::size_t k = 0; k < n_adv; ++k)
          std::copy_n(x.data.begin() + fakes[k] * plane, plane, sub.data.begin() + k * plane);
        const Tensor<float> adv = pgd_maximize_focal(model, sub, std::vector<LaneLabel>(n_adv, LaneLabel::kFake), focal,
                                                     cfg.adv_eps, cfg.adv_steps, rng);
        for (std::size_t k = 0; k < n_adv; ++k)
          std::copy_n(adv.data.begin() + k * plane, plane, x.data.begin() + fakes[k] * plane);
      }

      std::unique_ptr<ClassifierCache<float>> cache;
      const auto logits = model.forward(x, Mode::kTrain, &cache);
      std::vector<float> d(logits.size());
      for (std::size_t i = 0; i < logits.size(); ++i) {
        const LossGrad lg = focal_loss(logits[i], labels[i], focal);
        loss_sum += lg.loss;
        d[i] = static_cast<float>(lg.dlogit / logits.size());
      }
      auto grads = model.zero_grads();
      model.backward(*cache, d, &grads);
      auto params = model.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& w = params[p]->data;
        auto& v = velocity[p].data;
        const auto& g = grads[p].data;
        for (std::size_t k = 0; k < w.size(); ++k) {
          v[k] = static_cast<float>(cfg.momentum * v[k] + g[k] + cfg.weight_decay * w[k]);
          w[k] = static_cast<float>(w[k] - lr * v[k]);
        }
      }
      model.update_running_stats(*cache);
    }
    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.train_loss = loss_sum / std::max<std::size_t>(1, order.size());
    st.val_balanced_accuracy = balanced_accuracy(score_images(model, val.images), val.labels);
    report.epochs.push_back(st);
    if (st.val_balanced_accuracy > report.best_val_balanced_accuracy) {
      report.best_val_balanced_accuracy = st.val_balanced_accuracy;
      report.best_epoch = epoch;
      best = model.clone();
    }
    if (progress)
      progress("epoch " + std::to_string(epoch) + " loss " + std::to_string(st.train_loss) + " val_bacc " +
               std::to_string(st.val_balanced_accuracy));
  }
  copy_weights(model, *best);
  return report;
}

Tensor<float> image_batch(const Image& scene) {
  Tensor<float> x({1, scene.channels, scene.height, scene.width});
  x.data = scene.data;
  return x;
}

Image probability_map(const ToyDetector<float>& model, const Image& scene) {
  const Tensor<float> z = model.forward(image_batch(scene));
  Image p(1, scene.height, scene.width);
  for (std::size_t i = 0; i < p.size(); ++i) p.data[i] = static_cast<float>(sigmoid(z.data[i]));
  return p;
}

double detector_mean_iou(const ToyDetector<float>& model, const std::vector<synth::Scene>& scenes) {
  if (scenes.empty()) throw Error(Errc::kEmptyInput, "no scenes");
  double total = 0.0;
  for (const auto& s : scenes) {
    const Mask pred = threshold(probability_map(model, s.image), 0.5f);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
      inter += pred.data[i] && s.seg_map.data[i];
      uni += pred.data[i] || s.seg_map.data[i];
    }
    total += uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
  }
  return total / scenes.size();
}

DetectorTrainReport train_detector(ToyDetector<float>& model, const std::vector<synth::Scene>& scenes,
                                   const DetectorTrainConfig& cfg, const Progress& progress) {
  if (scenes.empty()) throw Error(Errc::kEmptyInput, "no training scenes");
  Rng rng = make_rng(cfg.seed, 0xDE7ull);
  std::vector<std::vector<int>> lane_pixels(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s)
    for (std::size_t i = 0; i < scenes[s].seg_map.data.size(); ++i)
      if (scenes[s].seg_map.data[i]) lane_pixels[s].push_back(static_cast<int>(i));

  auto params = model.parameters();
  auto m = model.zero_grads(), v = model.zero_grads();
  const int c = cfg.crop, B = cfg.batch_size;
  DetectorTrainReport report;
  double window = 0.0;
  for (int step = 1; step <= cfg.steps; ++step) {
    Tensor<float> x({B, 3, c, c});
    std::vector<float> target(static_cast<std::size_t>(B) * c * c);
    for (int b = 0; b < B; ++b) {
      const std::size_t si = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(scenes.size()) - 1));
      const auto& sc = scenes[si];
      const int H = sc.image.height, W = sc.image.width;
      int y0, x0;
      if (!lane_pixels[si].empty() && uniform(rng, 0.0, 1.0) < cfg.lane_crop_fraction) {
        const int p = lane_pixels[si][uniform_int(rng, 0, static_cast<int>(lane_pixels[si].size()) - 1)];
        y0 = std::clamp(p / W - c / 2 + uniform_int(rng, -c / 4, c / 4), 0, H - c);
        x0 = std::clamp(p % W - c / 2 + uniform_int(rng, -c / 4, c / 4), 0, W - c);
      } else {
        y0 = uniform_int(rng, 0, H - c);
        x0 = uniform_int(rng, 0, W - c);
      }
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < c; ++y)
          for (int xx = 0; xx < c; ++xx)
            x.data[((static_cast<std::size_t>(b) * 3 + ch) * c + y) * c + xx] = sc.image.at(ch, y0 + y, x0 + xx);
      for (int y = 0; y < c; ++y)
        for (int xx = 0; xx < c; ++xx)
          target[(static_cast<std::size_t>(b) * c + y) * c + xx] = sc.seg_map.at(y0 + y, x0 + xx);
    }
    ToyDetector<float>::Cache cache;
    const Tensor<float> z = model.forward(x, &cache);
    Tensor<float> dz(z.shape);
    double loss = 0.0;
    const double scale = 1.0 / static_cast<double>(z.numel());
    for (std::size_t i = 0; i < z.numel(); ++i) {
      const LossGrad lg = bce_with_logits(z.data[i], target[i]);
      loss += lg.loss;
      dz.data[i] = static_cast<float>(lg.dlogit * scale);
    }
    window += loss * scale;
    auto grads = model.zero_grads();
    model.backward(cache, dz, &grads, false);
    const double bc1 = 1.0 - std::pow(cfg.beta1, step), bc2 = 1.0 - std::pow(cfg.beta2, step);
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::size_t k = 0; k < params[p]->numel(); ++k) {
        const double g = grads[p].data[k];
        m[p].data[k] = static_cast<float>(cfg.beta1 * m[p].data[k] + (1 - cfg.beta1) * g);
        v[p].data[k] = static_cast<float>(cfg.beta2 * v[p].data[k] + (1 - cfg.beta2) * g * g);
        const double mh = m[p].data[k] / bc1, vh = v[p].data[k] / bc2;
        params[p]->data[k] = static_cast<float>(params[p]->data[k] - cfg.lr * mh / (std::sqrt(vh) + 1e-8));
      }
    if (step % 100 == 0 || step == cfg.steps) {
      const int n = step % 100 == 0 ? 100 : step % 100;
      report.loss_curve.push_back(window / n);
      if (progress) progress("step " + std::to_string(step) + " bce " + std::to_string(window / n));
      window = 0.0;
    }
  }
  return report;
}

}  // namespace lanesentinel::nn
