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

#include "lanesentinel/attacks/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lanesentinel/common/error.hpp"
#include "lanesentinel/eval/metrics.hpp"
#include "lanesentinel/kernels/kernels.hpp"
#include "lanesentinel/neural/loss.hpp"
#include "lanesentinel/neural/train.hpp"

namespace lanesentinel::attacks {

nlohmann::json to_json(const AttackConfig& c) {
  return {{"epsilon", c.epsilon},     {"step_size", c.step_size}, {"patch_step_size", c.patch_step_size},
          {"max_iters", c.max_iters}, {"tolerance", c.tolerance}, {"window", c.window},
          {"random_start", c.random_start}, {"seed", c.seed}};
}

AttackConfig attack_config_from_json(const nlohmann::json& j, AttackConfig d) {
  d.epsilon = j.value("epsilon", d.epsilon);
  d.step_size = j.value("step_size", d.step_size);
  d.patch_step_size = j.value("patch_step_size", d.patch_step_size);
  d.max_iters = j.value("max_iters", d.max_iters);
  d.tolerance = j.value("tolerance", d.tolerance);
  d.window = j.value("window", d.window);
  d.random_start = j.value("random_start", d.random_start);
  d.seed = j.value("seed", d.seed);
  if (d.epsilon < 0.0 || d.step_size < 0.0 || d.patch_step_size <= 0.0 || d.max_iters < 0 || d.window < 1)
    throw Error(Errc::kConfigError, "attack: invalid epsilon, step or iteration settings");
  return d;
}

Box linf_box(const Image& clean, double eps, const std::vector<std::uint8_t>* active) {
  if (eps < 0.0) throw Error(Errc::kInvalidConfig, "epsilon must be non-negative");
  Box b;
  b.lo.resize(clean.size());
  b.hi.resize(clean.size());
  const std::size_t plane = clean.plane_size();
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const float c = clean.data[i];
    if (active && !(*active)[i % plane]) {
      b.lo[i] = b.hi[i] = c;
      continue;
    }
    float lo = static_cast<float>(std::max(0.0, static_cast<double>(c) - eps));
    float hi = static_cast<float>(std::min(1.0, static_cast<double>(c) + eps));
    while (static_cast<double>(c) - static_cast<double>(lo) > eps) lo = std::nextafter(lo, c);
    while (static_cast<double>(hi) - static_cast<double>(c) > eps) hi = std::nextafter(hi, c);
    b.lo[i] = std::min(lo, c);
    b.hi[i] = std::max(hi, c);
  }
  return b;
}

Box patch_box(const Image& clean, const Mask& patch) {
  if (patch.height != clean.height || patch.width != clean.width)
    throw Error(Errc::kShapeMismatch, "patch mask must match the scene");
  Box b{clean.data, clean.data};
  const std::size_t plane = clean.plane_size();
  for (std::size_t i = 0; i < clean.size(); ++i)
    if (patch.data[i % plane]) b.lo[i] = 0.0f, b.hi[i] = 1.0f;
  return b;
}

PgdResult pgd(const Objective& f, const std::vector<float>& x0, const Box& box, const PgdOptions& opt, Rng& rng) {
  if (box.lo.size() != x0.size() || box.hi.size() != x0.size())
    throw Error(Errc::kShapeMismatch, "pgd: box does not match the start point");
  if (!(opt.step >= 0.0)) throw Error(Errc::kInvalidConfig, "pgd: step must be non-negative");
  for (std::size_t i = 0; i < x0.size(); ++i)
    if (box.lo[i] > box.hi[i]) throw Error(Errc::kInvalidConfig, "pgd: empty feasible set");

  const auto finite_or_throw = [](double loss, const std::vector<float>& g, int it) {
    if (!std::isfinite(loss))
      throw Error(Errc::kNonFiniteGradient, "pgd: loss is not finite at iteration " + std::to_string(it));
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i]))
        throw Error(Errc::kNonFiniteGradient,
                    "pgd: gradient component " + std::to_string(i) + " is not finite at iteration " + std::to_string(it));
  };

  PgdResult res;
  std::vector<float> grad(x0.size());
  std::vector<float> x = x0;
  res.x = x0;
  if (opt.random_start) {
    // The clean point stays a candidate so a start can never do worse.
    res.loss = f(x0, grad);
    finite_or_throw(res.loss, grad, 0);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (box.lo[i] < box.hi[i]) x[i] = std::uniform_real_distribution<float>(box.lo[i], box.hi[i])(rng);
  } else {
    res.loss = std::numeric_limits<double>::infinity();
  }

  const float step = static_cast<float>(opt.step);
  std::vector<double> changes;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int it = 0;; ++it) {
    const double loss = f(x, grad);
    finite_or_throw(loss, grad, it);
    if (loss < res.loss) {
      res.loss = loss;
      res.x = x;
    }
    if (it > 0) res.best_loss_trace.push_back(res.loss);
    if (!std::isnan(prev)) changes.push_back(std::abs(loss - prev) / std::max(std::abs(prev), 1e-12));
    prev = loss;
    if (it >= opt.max_iters) break;
    if (static_cast<int>(changes.size()) >= opt.window) {
      double mean = 0.0;
      for (std::size_t k = changes.size() - opt.window; k < changes.size(); ++k) mean += changes[k];
      if (mean / opt.window < opt.tolerance) break;
    }
    kernels::sign_step_box(x.data(), grad.data(), box.lo.data(), box.hi.data(), step, x.size());
    ++res.iterations;
  }
  return res;
}

TargetLane make_target(const PolyLane& poly, const synth::SceneConfig& render) {
  TargetLane t;
  t.poly = poly;
  t.seg = synth::render_lanes({sample_poly(poly, LaneLabel::kFake)}, render);
  return t;
}

TargetLane default_target(const synth::Scene& scene, const synth::SceneConfig& render, std::uint64_t seed) {
  if (scene.gt_curves.size() < 2) throw Error(Errc::kInvalidConfig, "default target needs two neighbouring lanes");
  Rng rng = make_rng(seed, 0x7A26E7ull);
  const int i = uniform_int(rng, 0, static_cast<int>(scene.gt_curves.size()) - 2);
  const double u = uniform(rng, 0.35, 0.65);
  const PolyLane& a = scene.gt_curves[i];
  const PolyLane& b = scene.gt_curves[i + 1];
  PolyLane p;
  p.degree = std::max(a.degree, b.degree);
  p.coeffs.assign(std::max(a.coeffs.size(), b.coeffs.size()), 0.0);
  for (std::size_t k = 0; k < p.coeffs.size(); ++k) {
    const double ca = k < a.coeffs.size() ? a.coeffs[k] : 0.0;
    const double cb = k < b.coeffs.size() ? b.coeffs[k] : 0.0;
    p.coeffs[k] = (1.0 - u) * ca + u * cb;
  }
  p.row_min = std::max(a.row_min, b.row_min);
  p.row_max = std::min(a.row_max, b.row_max);
  if (p.row_max - p.row_min < 1) throw Error(Errc::kExtentTooShort, "neighbouring lanes share no rows");
  return make_target(p, render);
}

int patch_side(const PatchSpec& p, const synth::SceneConfig& scene) {
  if (p.kind == PatchKind::kFixed) return p.base_side;
  const double scale = static_cast<double>(p.row - scene.vanishing_row) / (scene.bottom_row() - scene.vanishing_row);
  return std::max(4, static_cast<int>(std::lround(p.base_side * scale)));
}

PatchRect patch_rect(const PatchSpec& p, const synth::SceneConfig& scene) {
  PatchRect r;
  r.side = patch_side(p, scene);
  const int cx = static_cast<int>(std::lround(p.x));
  const int y0 = p.row - r.side / 2, x0 = cx - r.side / 2;
  r.y0 = std::max(0, y0);
  r.x0 = std::max(0, x0);
  r.y1 = std::min(scene.height - 1, y0 + r.side - 1);
  r.x1 = std::min(scene.width - 1, x0 + r.side - 1);
  if (r.empty()) throw Error(Errc::kPatchOutOfFrame, "patch does not intersect the image");
  return r;
}

Mask patch_mask(const PatchRect& r, int height, int width) {
  Mask m(height, width);
  for (int y = std::max(0, r.y0); y <= std::min(height - 1, r.y1); ++y)
    for (int x = std::max(0, r.x0); x <= std::min(width - 1, r.x1); ++x) m.at(y, x) = 1;
  return m;
}

PatchSpec place_patch(PatchKind kind, const TargetLane& target, std::uint64_t seed, int base_side) {
  Rng rng = make_rng(seed, 0x9A7C4ull);
  PatchSpec p;
  p.kind = kind;
  p.base_side = base_side;
  p.row = uniform_int(rng, target.poly.row_min, target.poly.row_max);
  p.x = target.poly.x_at(p.row);
  return p;
}

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::kBounded: return "bounded";
    case Mode::kFixedPatch: return "patch-fixed";
    case Mode::kVariablePatch: return "patch-variable";
  }
  return "unknown";
}

Mode parse_mode(std::string_view s) {
  if (s == "bounded") return Mode::kBounded;
  if (s == "patch-fixed") return Mode::kFixedPatch;
  if (s == "patch-variable") return Mode::kVariablePatch;
  throw Error(Errc::kConfigError, "unknown attack mode '" + std::string(s) + "'");
}

namespace {

Window grow(const Window& w, int r, int height, int width) {
  return {std::max(0, w.y0 - r), std::max(0, w.x0 - r), std::min(height - 1, w.y1 + r), std::min(width - 1, w.x1 + r)};
}

Window bounding_window(const std::vector<const Mask*>& masks) {
  Window w{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), -1, -1};
  for (const Mask* m : masks)
    for (int y = 0; y < m->height; ++y)
      for (int x = 0; x < m->width; ++x)
        if (m->at(y, x)) {
          w.y0 = std::min(w.y0, y);
          w.x0 = std::min(w.x0, x);
          w.y1 = std::max(w.y1, y);
          w.x1 = std::max(w.x1, x);
        }
  return w;
}

Image as_image(const std::vector<float>& v, int c, int h, int w) {
  Image img;
  img.channels = c;
  img.height = h;
  img.width = w;
  img.data = v;
  return img;
}

Objective detector_objective(const DetectorObjective& obj, int c, int h, int w) {
  return [&obj, c, h, w](const std::vector<float>& x, std::vector<float>& grad) {
    Image g;
    const double loss = obj(as_image(x, c, h, w), &g);
    grad = std::move(g.data);
    return loss;
  };
}

void finish(AttackResult& r, const Detector& det, const Image& clean, const TargetLane& target) {
  r.perturbation = r.adv_image;
  for (std::size_t i = 0; i < clean.size(); ++i) r.perturbation.data[i] -= clean.data[i];
  const Image prob = nn::probability_map(det.model, r.adv_image);
  r.achieved_seg = threshold(prob, 0.5f);
  r.iou_vs_target = eval::iou(r.achieved_seg, target.seg);
  r.detected = nn::extract_lanes(prob, det.extract);
}

// The bounded attack scores everything the target and the clean detection
// touch, plus a margin. Pixels within the receptive-field radius of the
// window edge stay fixed so every output they move is scored.
constexpr int kBoundedMargin = 12;

struct Setup {
  Window region;
  Box box;
  std::optional<PatchRect> patch;
  std::optional<Mask> patch_mask;
  double step = 0.0;
};

Setup bounded_setup(const Detector& det, const Image& clean, const TargetLane& target, const AttackConfig& cfg) {
  const Mask clean_det = threshold(nn::probability_map(det.model, clean), 0.5f);
  Window w = bounding_window({&target.seg, &clean_det});
  if (w.y1 < 0) w = {0, 0, clean.height - 1, clean.width - 1};
  Setup s;
  s.region = grow(w, kBoundedMargin, clean.height, clean.width);
  const int r = kDetectorRadius;
  std::vector<std::uint8_t> active(clean.plane_size(), 0);
  const int ya = s.region.y0 == 0 ? 0 : s.region.y0 + r;
  const int yb = s.region.y1 == clean.height - 1 ? s.region.y1 : s.region.y1 - r;
  const int xa = s.region.x0 == 0 ? 0 : s.region.x0 + r;
  const int xb = s.region.x1 == clean.width - 1 ? s.region.x1 : s.region.x1 - r;
  for (int y = ya; y <= yb; ++y)
    for (int x = xa; x <= xb; ++x) active[static_cast<std::size_t>(y) * clean.width + x] = 1;
  s.box = linf_box(clean, cfg.epsilon, &active);
  s.step = cfg.bounded_step();
  return s;
}

Setup patch_setup(const Image& clean, const PatchSpec& patch, const synth::SceneConfig& scene,
                  const AttackConfig& cfg) {
  if (scene.height != clean.height || scene.width != clean.width)
    throw Error(Errc::kShapeMismatch, "scene config does not match the image");
  Setup s;
  s.patch = patch_rect(patch, scene);
  s.patch_mask = patch_mask(*s.patch, clean.height, clean.width);
  s.region = grow({s.patch->y0, s.patch->x0, s.patch->y1, s.patch->x1}, kDetectorRadius, clean.height, clean.width);
  s.box = patch_box(clean, *s.patch_mask);
  s.step = cfg.patch_step_size;
  return s;
}

PgdOptions stage_options(const AttackConfig& cfg, double step, bool random_start) {
  return {step, cfg.max_iters, cfg.tolerance, cfg.window, random_start};
}

AttackResult run_nonadaptive(const Detector& det, const Image& clean, const TargetLane& target, const Setup& s,
                             const AttackConfig& cfg) {
  const DetectorObjective obj(det.model, target.seg, s.region, clean.height, clean.width);
  Rng rng = make_rng(cfg.seed, 0);
  const PgdResult p = pgd(detector_objective(obj, clean.channels, clean.height, clean.width), clean.data, s.box,
                          stage_options(cfg, s.step, cfg.random_start), rng);
  AttackResult r;
  r.adv_image = as_image(p.x, clean.channels, clean.height, clean.width);
  r.iterations = p.iterations;
  r.detector_loss = p.loss;
  r.patch = s.patch;
  finish(r, det, clean, target);
  return r;
}

}  // namespace

DetectorObjective::DetectorObjective(const nn::ToyDetector<float>& det, const Mask& target, const Window& loss_region,
                                     int height, int width)
    : det_(det), target_(target), region_(loss_region), height_(height), width_(width) {
  if (target.height != height || target.width != width)
    throw Error(Errc::kShapeMismatch, "target map must match the scene");
  if (region_.y0 < 0 || region_.x0 < 0 || region_.y1 >= height || region_.x1 >= width || region_.y1 < region_.y0 ||
      region_.x1 < region_.x0)
    throw Error(Errc::kInvalidConfig, "loss region must be a nonempty rectangle inside the image");
  crop_ = grow(region_, kDetectorRadius, height, width);
}

double DetectorObjective::operator()(const Image& x, Image* grad) const {
  if (x.height != height_ || x.width != width_) throw Error(Errc::kShapeMismatch, "objective: scene size changed");
  const int C = x.channels, ch = crop_.y1 - crop_.y0 + 1, cw = crop_.x1 - crop_.x0 + 1;
  nn::Tensor<float> in({1, C, ch, cw});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < ch; ++y) {
      const float* src = &x.data[(static_cast<std::size_t>(c) * height_ + crop_.y0 + y) * width_ + crop_.x0];
      std::copy(src, src + cw, &in.data[(static_cast<std::size_t>(c) * ch + y) * cw]);
    }
  typename nn::ToyDetector<float>::Cache cache;
  const nn::Tensor<float> z = det_.forward(in, grad ? &cache : nullptr);
  const int rh = region_.y1 - region_.y0 + 1, rw = region_.x1 - region_.x0 + 1;
  const double inv_n = 1.0 / (static_cast<double>(rh) * rw);
  nn::Tensor<float> dz(z.shape);
  double loss = 0.0;
  for (int y = region_.y0; y <= region_.y1; ++y)
    for (int xx = region_.x0; xx <= region_.x1; ++xx) {
      const std::size_t k = static_cast<std::size_t>(y - crop_.y0) * cw + (xx - crop_.x0);
      const nn::LossGrad lg = nn::bce_with_logits(z.data[k], target_.at(y, xx) ? 1.0 : 0.0);
      loss += lg.loss;
      dz.data[k] = static_cast<float>(lg.dlogit * inv_n);
    }
  if (grad) {
    const nn::Tensor<float> gx = det_.backward(cache, dz, nullptr, true);
    *grad = Image(C, height_, width_);
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < ch; ++y) {
        const float* src = &gx.data[(static_cast<std::size_t>(c) * ch + y) * cw];
        std::copy(src, src + cw, &grad->data[(static_cast<std::size_t>(c) * height_ + crop_.y0 + y) * width_ + crop_.x0]);
      }
  }
  return loss * inv_n;
}

AttackResult attack_bounded(const Detector& det, const Image& clean, const TargetLane& target,
                            const AttackConfig& cfg) {
  return run_nonadaptive(det, clean, target, bounded_setup(det, clean, target, cfg), cfg);
}

AttackResult attack_patch(const Detector& det, const Image& clean, const TargetLane& target, const PatchSpec& patch,
                          const synth::SceneConfig& scene, const AttackConfig& cfg) {
  return run_nonadaptive(det, clean, target, patch_setup(clean, patch, scene, cfg), cfg);
}

Stage2Result stage2_verifier_attack(const nn::Classifier<float>& verifier, const Image& current, const Box& box,
                                    const PolyLane& target_poly, const StabilizationConfig& stab, double step,
                                    const AttackConfig& cfg, const Mask* region) {
  if (box.lo.size() != current.size()) throw Error(Errc::kShapeMismatch, "stage 2: box does not match the scene");
  const StabilizedLane base = stabilize_lane(current, target_poly, stab);
  const std::size_t plane = current.plane_size();

  auto logit_and_grad = [&](const Image& s, Image* g) {
    nn::Tensor<float> x({1, 1, s.height, s.width});
    x.data = s.data;
    std::unique_ptr<nn::ClassifierCache<float>> cache;
    const std::vector<float> z = verifier.forward(x, nn::Mode::kEval, g ? &cache : nullptr);
    if (g) {
      const nn::Tensor<float> dx = verifier.backward(*cache, {1.0f}, nullptr);
      *g = Image(1, s.height, s.width);
      g->data = dx.data;
    }
    return static_cast<double>(z[0]);
  };

  Stage2Result res;
  res.image = current;
  Image scene = current;
  StabilizedLane stab_now = base;
  Image delta(1, base.image.height, base.image.width);
  Image g;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> changes;
  double prev = std::numeric_limits<double>::quiet_NaN();
  const float fstep = static_cast<float>(step);
  for (int it = 0;; ++it) {
    const double logit = logit_and_grad(stab_now.image, &g);
    for (float v : g.data)
      if (!std::isfinite(v) || !std::isfinite(logit))
        throw Error(Errc::kNonFiniteGradient, "stage 2: verifier gradient is not finite at iteration " + std::to_string(it));
    if (it == 0) res.logit_before = logit;
    if (logit < best) {
      best = logit;
      res.image = scene;
    }
    if (!std::isnan(prev)) changes.push_back(std::abs(logit - prev) / std::max(std::abs(prev), 1e-12));
    prev = logit;
    if (it >= cfg.max_iters) break;
    if (static_cast<int>(changes.size()) >= cfg.window) {
      double mean = 0.0;
      for (std::size_t k = changes.size() - cfg.window; k < changes.size(); ++k) mean += changes[k];
      if (mean / cfg.window < cfg.tolerance) break;
    }
    for (std::size_t i = 0; i < delta.size(); ++i) {
      const float s = g.data[i] > 0.0f ? 1.0f : (g.data[i] < 0.0f ? -1.0f : 0.0f);
      delta.data[i] -= fstep * s;
    }
    const Image d_scene = write_back(current, base, delta, region);
    for (int c = 0; c < current.channels; ++c)
      for (std::size_t k = 0; k < plane; ++k) {
        const std::size_t i = c * plane + k;
        scene.data[i] = std::clamp(current.data[i] + d_scene.data[k], box.lo[i], box.hi[i]);
      }
    stab_now = stabilize_lane(scene, target_poly, stab);
    // Keep the stabilized-space iterate consistent with what projection
    // allowed.
    for (std::size_t i = 0; i < delta.size(); ++i) delta.data[i] = stab_now.image.data[i] - base.image.data[i];
    ++res.iterations;
  }
  res.logit_after = best;
  return res;
}

AttackResult attack_adaptive(const Detector& det, const nn::Classifier<float>& verifier, const Image& clean,
                             const TargetLane& target, const synth::SceneConfig& scene, const AdaptiveOptions& opt,
                             const AttackConfig& cfg) {
  if (opt.cycles < 1 || opt.cycles > 4) throw Error(Errc::kInvalidConfig, "cycles must be in [1, 4]");
  Setup s;
  if (opt.mode == Mode::kBounded) {
    s = bounded_setup(det, clean, target, cfg);
  } else {
    if (!opt.patch) throw Error(Errc::kInvalidConfig, "patch mode needs a patch");
    PatchSpec p = *opt.patch;
    p.kind = opt.mode == Mode::kFixedPatch ? PatchKind::kFixed : PatchKind::kVariable;
    s = patch_setup(clean, p, scene, cfg);
  }
  const DetectorObjective obj(det.model, target.seg, s.region, clean.height, clean.width);
  const Objective f = detector_objective(obj, clean.channels, clean.height, clean.width);

  AttackResult r;
  r.patch = s.patch;
  std::vector<float> x = clean.data;
  for (int c = 0; c < opt.cycles; ++c) {
    Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(c));
    const PgdResult p = pgd(f, x, s.box, stage_options(cfg, s.step, c == 0 && cfg.random_start), rng);
    r.iterations += p.iterations;
    r.detector_loss = p.loss;
    const Stage2Result s2 =
        stage2_verifier_attack(verifier, as_image(p.x, clean.channels, clean.height, clean.width), s.box, target.poly,
                               opt.stab, s.step, cfg, s.patch_mask ? &*s.patch_mask : nullptr);
    r.iterations += s2.iterations;
    r.stage1_scores.push_back(nn::sigmoid(s2.logit_before));
    r.stage2_scores.push_back(nn::sigmoid(s2.logit_after));
    x = s2.image.data;
  }
  r.adv_image = as_image(x, clean.channels, clean.height, clean.width);
  r.detector_loss = obj(r.adv_image, nullptr);
  finish(r, det, clean, target);
  return r;
}

bool within_linf(const Image& adv, const Image& clean, double eps, double slack) {
  if (!adv.same_shape(clean)) return false;
  for (std::size_t i = 0; i < adv.size(); ++i)
    if (std::abs(static_cast<double>(adv.data[i]) - static_cast<double>(clean.data[i])) > eps + slack) return false;
  return true;
}

bool within_unit_range(const Image& adv) {
  return std::all_of(adv.data.begin(), adv.data.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

bool outside_patch_unchanged(const Image& adv, const Image& clean, const PatchRect& r) {
  if (!adv.same_shape(clean)) return false;
  for (int c = 0; c < adv.channels; ++c)
    for (int y = 0; y < adv.height; ++y)
      for (int x = 0; x < adv.width; ++x) {
        const bool inside = y >= r.y0 && y <= r.y1 && x >= r.x0 && x <= r.x1;
        if (!inside && adv.at(c, y, x) != clean.at(c, y, x)) return false;
      }
  return true;
}

}  // namespace lanesentinel::attacks
