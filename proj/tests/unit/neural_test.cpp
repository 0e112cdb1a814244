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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "lanesentinel/common/error.hpp"
#include "lanesentinel/common/io.hpp"
#include "lanesentinel/neural/extract.hpp"
#include "lanesentinel/neural/layers.hpp"
#include "lanesentinel/neural/loss.hpp"
#include "lanesentinel/neural/model_io.hpp"
#include "lanesentinel/neural/models.hpp"
#include "lanesentinel/neural/train.hpp"

namespace fs = std::filesystem;

namespace lanesentinel::nn {
namespace {

constexpr double kH = 1e-3;

template <class T>
void randomize(Tensor<T>& t, std::mt19937& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data) v = static_cast<T>(u(rng));
}

double rel_err(double a, double n) {
  const double d = std::abs(a - n);
  if (d < 1e-8) return 0.0;
  return d / std::max(std::abs(a), std::abs(n));
}

double dot_loss(const Tensor<double>& y, const Tensor<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += y.data[i] * r.data[i];
  return s;
}

// Central differences of loss() w.r.t. up to `limit` entries of t, compared
// against analytic gradient g.
template <class F>
void check_fd(Tensor<double>& t, const Tensor<double>& g, F&& loss, std::mt19937& rng, const std::string& what,
              std::size_t limit = 24) {
  ASSERT_EQ(t.numel(), g.numel()) << what;
  std::vector<std::size_t> idx(t.numel());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(limit, idx.size()));
  for (std::size_t i : idx) {
    const double keep = t.data[i];
    t.data[i] = keep + kH;
    const double lp = loss();
    t.data[i] = keep - kH;
    const double lm = loss();
    t.data[i] = keep;
    const double num = (lp - lm) / (2 * kH);
    ASSERT_LT(rel_err(g.data[i], num), 1e-3) << what << " index " << i << " analytic " << g.data[i] << " numeric " << num;
  }
}

TEST(GradientCheck, Conv2dSamePadding) {
  std::mt19937 rng(100);
  for (int trial = 0; trial < 50; ++trial) {
    const int cin = 1 + trial % 3, cout = 1 + (trial / 3) % 4, h = 3 + trial % 5, w = 4 + trial % 6;
    Conv2d<double> conv(cin, cout, 1, 1);
    randomize(conv.weight, rng);
    randomize(conv.bias, rng);
    Tensor<double> x({2, cin, h, w});
    randomize(x, rng);
    Tensor<double> r({2, cout, h, w});
    randomize(r, rng);
    Tensor<double> gw(conv.weight.shape), gb(conv.bias.shape);
    const Tensor<double> gx = conv.backward(x, r, &gw, &gb);
    auto loss = [&] { return dot_loss(conv.forward(x), r); };
    check_fd(x, gx, loss, rng, "conv same dx");
    check_fd(conv.weight, gw, loss, rng, "conv same dw");
    check_fd(conv.bias, gb, loss, rng, "conv same db");
  }
}

TEST(GradientCheck, Conv2dStrided) {
  std::mt19937 rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const int cin = 1 + trial % 3, cout = 1 + trial % 4, h = 6 + trial % 7, w = 5 + trial % 8;
    Conv2d<double> conv(cin, cout, 2 + trial % 2, trial % 2);
    randomize(conv.weight, rng);
    randomize(conv.bias, rng);
    Tensor<double> x({2, cin, h, w});
    randomize(x, rng);
    const Tensor<double> y0 = conv.forward(x);
    Tensor<double> r(y0.shape);
    randomize(r, rng);
    Tensor<double> gw(conv.weight.shape), gb(conv.bias.shape);
    const Tensor<double> gx = conv.backward(x, r, &gw, &gb);
    auto loss = [&] { return dot_loss(conv.forward(x), r); };
    check_fd(x, gx, loss, rng, "conv strided dx");
    check_fd(conv.weight, gw, loss, rng, "conv strided dw");
    check_fd(conv.bias, gb, loss, rng, "conv strided db");
  }
}

TEST(GradientCheck, BatchNormTrainAndEval) {
  std::mt19937 rng(102);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 1 + trial % 4;
    BatchNorm2d<double> bn(c);
    randomize(bn.gamma, rng, 0.5, 1.5);
    randomize(bn.beta, rng);
    randomize(bn.running_mean, rng);
    randomize(bn.running_var, rng, 0.5, 2.0);
    const Mode mode = trial % 2 ? Mode::kTrain : Mode::kEval;
    Tensor<double> x({3, c, 3, 4});
    randomize(x, rng, -2.0, 2.0);
    Tensor<double> r(x.shape);
    randomize(r, rng);
    BatchNormCache<double> cache;
    bn.forward(x, mode, &cache);
    Tensor<double> gg(bn.gamma.shape), gbt(bn.beta.shape);
    const Tensor<double> gx = bn.backward(cache, r, &gg, &gbt);
    auto loss = [&] { return dot_loss(bn.forward(x, mode, nullptr), r); };
    check_fd(x, gx, loss, rng, "bn dx");
    check_fd(bn.gamma, gg, loss, rng, "bn dgamma");
    check_fd(bn.beta, gbt, loss, rng, "bn dbeta");
  }
}

TEST(GradientCheck, Linear) {
  std::mt19937 rng(103);
  for (int trial = 0; trial < 50; ++trial) {
    Linear<double> fc(3 + trial % 17, 1 + trial % 3);
    randomize(fc.weight, rng);
    randomize(fc.bias, rng);
    Tensor<double> x({2, fc.in_features});
    randomize(x, rng);
    Tensor<double> r({2, fc.out_features});
    randomize(r, rng);
    Tensor<double> gw(fc.weight.shape), gb(fc.bias.shape);
    const Tensor<double> gx = fc.backward(x, r, &gw, &gb);
    auto loss = [&] { return dot_loss(fc.forward(x), r); };
    check_fd(x, gx, loss, rng, "linear dx");
    check_fd(fc.weight, gw, loss, rng, "linear dw");
    check_fd(fc.bias, gb, loss, rng, "linear db");
  }
}

TEST(GradientCheck, Relu) {
  std::mt19937 rng(104);
  std::uniform_real_distribution<double> mag(0.01, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> x({1, 2, 3, 5});
    for (auto& v : x.data) v = (rng() % 2 ? 1 : -1) * mag(rng);  // stay clear of the kink
    Tensor<double> r(x.shape);
    randomize(r, rng);
    const Tensor<double> gx = relu_backward(x, r);
    auto loss = [&] { return dot_loss(relu(x), r); };
    check_fd(x, gx, loss, rng, "relu dx", 30);
  }
}

TEST(GradientCheck, FocalAndBce) {
  std::mt19937 rng(105);
  std::uniform_real_distribution<double> z(-6.0, 6.0), g(0.0, 4.0), a(0.1, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const FocalParams p{g(rng), a(rng), a(rng)};
    const double logit = z(rng);
    for (LaneLabel lab : {LaneLabel::kReal, LaneLabel::kFake}) {
      const double num = (focal_loss(logit + kH, lab, p).loss - focal_loss(logit - kH, lab, p).loss) / (2 * kH);
      EXPECT_LT(rel_err(focal_loss(logit, lab, p).dlogit, num), 1e-3);
    }
    const double t = trial % 2;
    const double num = (bce_with_logits(logit + kH, t).loss - bce_with_logits(logit - kH, t).loss) / (2 * kH);
    EXPECT_LT(rel_err(bce_with_logits(logit, t).dlogit, num), 1e-3);
  }
}

// Full networks are piecewise smooth, so a finite difference across a ReLU
// kink measures a different function. These checks difference the network
// with its activation pattern frozen at the evaluation point; that function
// is smooth there and its exact gradient is what backward must return.
Tensor<double> apply_mask(Tensor<double> y, const std::vector<char>& mask) {
  for (std::size_t i = 0; i < y.numel(); ++i)
    if (!mask[i]) y.data[i] = 0.0;
  return y;
}

std::vector<char> positive(const Tensor<double>& y) {
  std::vector<char> m(y.numel());
  for (std::size_t i = 0; i < y.numel(); ++i) m[i] = y.data[i] > 0.0;
  return m;
}

struct FrozenVerifier {
  std::vector<char> m1, m2;
  std::vector<double> operator()(const VerifierCNN<double>& m, const Tensor<double>& x, Mode mode, bool record) {
    Tensor<double> y1 = m.bn1.forward(m.conv1.forward(x), mode, nullptr);
    if (record) m1 = positive(y1);
    Tensor<double> y2 = m.bn2.forward(m.conv2.forward(apply_mask(y1, m1)), mode, nullptr);
    if (record) m2 = positive(y2);
    Tensor<double> flat = apply_mask(y2, m2);
    flat.shape = {x.dim(0), m.flat_features()};
    return m.fc.forward(flat).data;
  }
};

void check_verifier_fd(VerifierCNN<double>& model, Mode mode, int batch, unsigned seed) {
  std::mt19937 rng(seed);
  Tensor<double> x({batch, 1, model.input_height(), model.input_width()});
  randomize(x, rng, 0.0, 1.0);
  std::vector<double> r(batch);
  for (auto& v : r) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  std::unique_ptr<ClassifierCache<double>> cache;
  const auto logits = model.forward(x, mode, &cache);
  FrozenVerifier frozen;
  const auto same = frozen(model, x, mode, true);
  for (int i = 0; i < batch; ++i) ASSERT_NEAR(same[i], logits[i], 1e-12);
  auto grads = model.zero_grads();
  const Tensor<double> gx = model.backward(*cache, r, &grads);
  auto loss = [&] {
    const auto y = frozen(model, x, mode, false);
    double s = 0.0;
    for (int i = 0; i < batch; ++i) s += y[i] * r[i];
    return s;
  };
  auto params = model.parameters();
  const auto names = model.parameter_names();
  for (std::size_t p = 0; p < params.size(); ++p) check_fd(*params[p], grads[p], loss, rng, names[p], 40);
  check_fd(x, gx, loss, rng, "input", 40);
}

TEST(GradientCheck, VerifierEveryParameter) {
  VerifierCNN<double> m({}, 3);
  std::mt19937 rng(9);
  randomize(m.bn1.gamma, rng, 0.5, 1.5);
  randomize(m.bn2.beta, rng, -0.2, 0.2);
  randomize(m.bn1.running_var, rng, 0.5, 1.5);
  check_verifier_fd(m, Mode::kTrain, 3, 11);
  check_verifier_fd(m, Mode::kEval, 2, 12);
}

TEST(GradientCheck, LinearVerifier) {
  LinearVerifier<double> m(128, 40, 4);
  std::mt19937 rng(13);
  Tensor<double> x({2, 1, 128, 40});
  randomize(x, rng, 0.0, 1.0);
  const std::vector<double> r{0.7, -1.3};
  std::unique_ptr<ClassifierCache<double>> cache;
  m.forward(x, Mode::kEval, &cache);
  auto grads = m.zero_grads();
  const Tensor<double> gx = m.backward(*cache, r, &grads);
  auto loss = [&] {
    const auto y = m.forward(x, Mode::kEval);
    return y[0] * r[0] + y[1] * r[1];
  };
  check_fd(m.fc.weight, grads[0], loss, rng, "fc.weight", 60);
  check_fd(m.fc.bias, grads[1], loss, rng, "fc.bias");
  check_fd(x, gx, loss, rng, "input", 60);
}

TEST(GradientCheck, DetectorOnSmallCrop) {
  ToyDetector<double> det(5);
  std::mt19937 rng(14);
  Tensor<double> x({1, 3, 8, 8});
  randomize(x, rng, 0.0, 1.0);
  Tensor<double> r({1, 1, 8, 8});
  randomize(r, rng);
  ToyDetector<double>::Cache cache;
  const Tensor<double> out = det.forward(x, &cache);
  auto grads = det.zero_grads();
  const Tensor<double> gx = det.backward(cache, r, &grads);
  const auto m1 = positive(cache.a1), m2 = positive(cache.a2), m3 = positive(cache.a3);
  auto frozen = [&] {
    Tensor<double> a = apply_mask(det.conv1.forward(x), m1);
    a = apply_mask(det.conv2.forward(a), m2);
    a = apply_mask(det.conv3.forward(a), m3);
    return det.conv4.forward(a);
  };
  const Tensor<double> same = frozen();
  for (std::size_t i = 0; i < out.numel(); ++i) ASSERT_NEAR(same.data[i], out.data[i], 1e-12);
  auto loss = [&] { return dot_loss(frozen(), r); };
  auto params = det.parameters();
  const auto names = det.parameter_names();
  for (std::size_t p = 0; p < params.size(); ++p) check_fd(*params[p], grads[p], loss, rng, names[p], 40);
  check_fd(x, gx, loss, rng, "input", 64);
}

TEST(GradientCheck, ZeroUpstreamGivesZeroGradients) {
  VerifierCNN<float> m({}, 1);
  Tensor<float> x({2, 1, 128, 40}, 0.3f);
  std::unique_ptr<ClassifierCache<float>> cache;
  m.forward(x, Mode::kTrain, &cache);
  auto grads = m.zero_grads();
  const Tensor<float> gx = m.backward(*cache, {0.0f, 0.0f}, &grads);
  for (float v : gx.data) ASSERT_EQ(v, 0.0f);
  for (const auto& g : grads)
    for (float v : g.data) ASSERT_EQ(v, 0.0f);
}

TEST(GradientCheck, StaleCacheRejected) {
  VerifierCNN<float> m({}, 1);
  LinearVerifier<float> lin;
  std::unique_ptr<ClassifierCache<float>> cache;
  lin.forward(Tensor<float>({1, 1, 128, 40}), Mode::kEval, &cache);
  try {
    m.backward(*cache, {1.0f}, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kStaleCache);
  }
  EXPECT_THROW(lin.backward(*cache, {1.0f, 2.0f}, nullptr), Error);
}

TEST(Verifier, ShapeLaw) {
  VerifierCNN<float> m;
  EXPECT_EQ(m.conv1_height(), 42);
  EXPECT_EQ(m.conv1_width(), 13);
  EXPECT_EQ(m.conv2_height(), 14);
  EXPECT_EQ(m.conv2_width(), 4);
  EXPECT_EQ(m.flat_features(), 896);
  std::unique_ptr<ClassifierCache<float>> cache;
  m.forward(Tensor<float>({1, 1, 128, 40}, 0.5f), Mode::kEval, &cache);
  const auto& c = dynamic_cast<const VerifierCNN<float>::Cache&>(*cache);
  EXPECT_EQ(c.z1.shape, (std::vector<int>{1, 8, 42, 13}));
  EXPECT_EQ(c.z2.shape, (std::vector<int>{1, 16, 14, 4}));
  EXPECT_THROW(m.forward(Tensor<float>({1, 1, 64, 40}), Mode::kEval), Error);
}

TEST(Verifier, ZeroNetworkScoresHalf) {
  VerifierCNN<float> m;
  for (auto* p : m.parameters()) p->fill(0.0f);
  Tensor<float> x({1, 1, 128, 40}, 0.7f);
  EXPECT_EQ(m.forward(x, Mode::kEval).at(0), 0.0f);
  EXPECT_DOUBLE_EQ(m.score(x), 0.5);
}

// Straight six-loop convolution, independent of the layer code.
std::vector<double> naive_conv(const std::vector<double>& x, int cin, int h, int w, const Conv2d<float>& c, int& oh,
                               int& ow) {
  oh = (h + 2 * c.padding - 3) / c.stride + 1;
  ow = (w + 2 * c.padding - 3) / c.stride + 1;
  std::vector<double> y(static_cast<std::size_t>(c.out_channels) * oh * ow);
  for (int o = 0; o < c.out_channels; ++o)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = c.bias.data[o];
        for (int i = 0; i < cin; ++i)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy * c.stride - c.padding + ky, ix = ox * c.stride - c.padding + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += static_cast<double>(c.weight.data[((o * cin + i) * 3 + ky) * 3 + kx]) * x[(i * h + iy) * w + ix];
            }
        y[(o * oh + oy) * ow + ox] = acc;
      }
  return y;
}

TEST(Verifier, LogitMatchesNaiveOracle) {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    VerifierCNN<float> m({}, trial);
    randomize(m.bn1.running_mean, rng, -0.2, 0.2);
    randomize(m.bn2.running_var, rng, 0.5, 2.0);
    Tensor<float> x({1, 1, 128, 40});
    randomize(x, rng, 0.0, 1.0);
    std::vector<double> a(x.data.begin(), x.data.end());
    int h = 128, w = 40, oh, ow;
    auto bn_relu = [](std::vector<double>& v, const BatchNorm2d<float>& bn, int plane) {
      for (int c = 0; c < bn.channels; ++c)
        for (int k = 0; k < plane; ++k) {
          double& e = v[c * plane + k];
          e = bn.gamma.data[c] * (e - bn.running_mean.data[c]) / std::sqrt(bn.running_var.data[c] + 1e-5) +
              bn.beta.data[c];
          e = std::max(0.0, e);
        }
    };
    a = naive_conv(a, 1, h, w, m.conv1, oh, ow);
    bn_relu(a, m.bn1, oh * ow);
    h = oh;
    w = ow;
    a = naive_conv(a, 8, h, w, m.conv2, oh, ow);
    bn_relu(a, m.bn2, oh * ow);
    double logit = m.fc.bias.data[0];
    for (std::size_t i = 0; i < a.size(); ++i) logit += m.fc.weight.data[i] * a[i];
    EXPECT_NEAR(m.forward(x, Mode::kEval).at(0), logit, 1e-5);
  }
}

TEST(Conv2d, FastPathMatchesNaiveOracle) {
  std::mt19937 rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const int cin = 1 + trial % 4, cout = 1 + trial % 9, h = 5 + trial, w = 3 + 2 * trial;
    Conv2d<float> conv(cin, cout, 1, 1);
    randomize(conv.weight, rng);
    randomize(conv.bias, rng);
    Tensor<float> x({1, cin, h, w});
    randomize(x, rng);
    int oh, ow;
    const auto ref = naive_conv(std::vector<double>(x.data.begin(), x.data.end()), cin, h, w, conv, oh, ow);
    const auto y = conv.forward(x);
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(y.data[i], ref[i], 1e-5);
  }
}

TEST(BatchNorm, EvalForwardIsDeterministic) {
  VerifierCNN<float> m({}, 2);
  Tensor<float> x({3, 1, 128, 40});
  std::mt19937 rng(3);
  randomize(x, rng, 0.0, 1.0);
  EXPECT_EQ(m.forward(x, Mode::kEval), m.forward(x, Mode::kEval));
}

TEST(BatchNorm, RunningStatsUpdate) {
  BatchNorm2d<double> bn(1);
  Tensor<double> x({2, 1, 1, 2});
  x.data = {1, 2, 3, 4};
  BatchNormCache<double> c;
  bn.forward(x, Mode::kTrain, &c);
  bn.update_running_stats(c);
  EXPECT_NEAR(bn.running_mean.data[0], 0.1 * 2.5, 1e-12);
  EXPECT_NEAR(bn.running_var.data[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-12);
}

TEST(LinearVerifier, InputGradientIsWeight) {
  LinearVerifier<float> m(128, 40, 8);
  std::mt19937 rng(4);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor<float> x({1, 1, 128, 40});
    randomize(x, rng, 0.0, 1.0);
    std::unique_ptr<ClassifierCache<float>> cache;
    m.forward(x, Mode::kEval, &cache);
    const auto gx = m.backward(*cache, {1.0f}, nullptr);
    EXPECT_EQ(gx.shape, x.shape);
    EXPECT_EQ(gx.data, m.fc.weight.data);
  }
}

TEST(Focal, ReducesToCrossEntropy) {
  EXPECT_NEAR(focal_loss(0.0, LaneLabel::kFake, {0.0, 1.0, 1.0}).loss, std::log(2.0), 1e-12);
  EXPECT_NEAR(focal_loss(0.0, LaneLabel::kFake, {0.0, 1.0, 1.0}).loss, 0.693147, 1e-6);
}

TEST(Focal, ConfidentCorrectIsNearZero) {
  EXPECT_LE(focal_loss(40.0, LaneLabel::kFake, {}).loss, 1e-12);
  EXPECT_LE(focal_loss(-40.0, LaneLabel::kReal, {}).loss, 1e-12);
}

TEST(Focal, FormulaValue) {
  const double logit = std::log(0.9 / 0.1);  // p_t = 0.9
  EXPECT_NEAR(focal_loss(logit, LaneLabel::kFake, {2.0, 1.0, 1.0}).loss, -0.01 * std::log(0.9), 1e-12);
  EXPECT_NEAR(focal_loss(-logit, LaneLabel::kReal, {2.0, 1.0, 1.0}).loss, -0.01 * std::log(0.9), 1e-12);
}

TEST(Focal, GammaZeroIsWeightedBce) {
  std::mt19937 rng(6);
  std::uniform_real_distribution<double> z(-10, 10);
  const FocalParams p{0.0, 0.75, 0.25};
  for (int i = 0; i < 200; ++i) {
    const double l = z(rng);
    EXPECT_NEAR(focal_loss(l, LaneLabel::kFake, p).loss, 0.75 * bce_with_logits(l, 1.0).loss, 1e-12);
    EXPECT_NEAR(focal_loss(l, LaneLabel::kReal, p).loss, 0.25 * bce_with_logits(l, 0.0).loss, 1e-12);
  }
}

TEST(Focal, StrictlyDecreasingInPt) {
  double prev = INFINITY;
  for (int i = 1; i < 1000; ++i) {
    const double pt = i / 1000.0;
    const double loss = focal_loss(std::log(pt / (1 - pt)), LaneLabel::kFake, {}).loss;
    EXPECT_LT(loss, prev);
    prev = loss;
  }
}

TEST(Detector, ZeroWeightsGiveHalfProbability) {
  ToyDetector<float> det;
  for (auto* p : det.parameters()) p->fill(0.0f);
  const Image p = probability_map(det, Image(3, 20, 30, 0.4f));
  for (float v : p.data) ASSERT_EQ(v, 0.5f);
}

TEST(Detector, OutputMatchesInputResolution) {
  ToyDetector<float> det(1);
  EXPECT_EQ(det.forward(Tensor<float>({1, 3, 17, 23})).shape, (std::vector<int>{1, 1, 17, 23}));
}

TEST(Extract, SeparatesStripesAndDropsShortOnes) {
  Mask m(100, 60);
  for (int y = 10; y < 100; ++y) {
    for (int x = 40; x < 43; ++x) m.at(y, x) = 1;  // right stripe
    for (int x = 10; x < 12; ++x) m.at(y, x) = 1;  // left stripe
  }
  for (int y = 0; y < 20; ++y) m.at(y, 25) = 1;  // too short
  const auto lanes = extract_lanes(m);
  ASSERT_EQ(lanes.size(), 2u);
  EXPECT_DOUBLE_EQ(lanes[0].bottom_x(), 10.5);
  EXPECT_DOUBLE_EQ(lanes[1].bottom_x(), 41.0);
  EXPECT_EQ(lanes[0].row_min(), 10);
  EXPECT_EQ(lanes[0].row_max(), 99);
  EXPECT_TRUE(lanes[0].rows_strictly_increasing());
}

TEST(Extract, ConvergingLanesStaySeparate) {
  Mask m(120, 100);
  for (int y = 0; y < 120; ++y) {
    const int xl = 50 - y / 3, xr = 52 + y / 3;
    for (int x = xl - 1; x <= xl; ++x) m.at(y, x) = 1;
    for (int x = xr; x <= xr + 1; ++x) m.at(y, x) = 1;
  }
  const auto lanes = extract_lanes(m);
  ASSERT_EQ(lanes.size(), 2u);
  for (const auto& l : lanes) EXPECT_GE(l.row_max() - l.row_min() + 1, 100);
  EXPECT_EQ(extract_lanes(m)[1].samples, lanes[1].samples);
}

TEST(ModelIo, RoundTripAndValidation) {
  const fs::path dir = fs::temp_directory_path() / "lanesentinel_model_io";
  fs::create_directories(dir);
  VerifierCNN<float> m({}, 7);
  m.bn1.running_mean.data[2] = 0.125f;
  save_classifier(dir / "v.lsnt", m, "abc123");
  std::string hash;
  auto back = load_classifier(dir / "v.lsnt", &hash);
  EXPECT_EQ(hash, "abc123");
  EXPECT_EQ(back->kind(), "verifier_cnn");
  Tensor<float> x({1, 1, 128, 40}, 0.4f);
  EXPECT_EQ(back->forward(x, Mode::kEval), m.forward(x, Mode::kEval));

  ToyDetector<float> det(3);
  save_detector(dir / "d.lsnt", det, "h");
  const auto det2 = load_detector(dir / "d.lsnt");
  EXPECT_EQ(det2.conv3.weight, det.conv3.weight);

  LinearVerifier<float> lin(128, 40, 2);
  save_classifier(dir / "l.lsnt", lin, "h");
  EXPECT_EQ(load_classifier(dir / "l.lsnt")->kind(), "verifier_linear");

  auto expect_incompatible = [](const fs::path& p) {
    try {
      load_classifier(p);
      FAIL() << p;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::kIncompatibleModelFile);
    }
  };
  std::string bytes = io::read_text(dir / "v.lsnt");
  io::write_text(dir / "bad_magic.lsnt", "XSNT1" + bytes.substr(5));
  expect_incompatible(dir / "bad_magic.lsnt");
  io::write_text(dir / "short.lsnt", bytes.substr(0, bytes.size() - 4));
  expect_incompatible(dir / "short.lsnt");
  io::write_text(dir / "long.lsnt", bytes + "xxxx");
  expect_incompatible(dir / "long.lsnt");
  expect_incompatible(dir / "d.lsnt");  // detector is not a verifier

  ModelFile f = read_model_file(dir / "v.lsnt");
  f.tensors[0].second = Tensor<float>({4, 1, 3, 3});
  write_model_file(dir / "shape.lsnt", f);
  expect_incompatible(dir / "shape.lsnt");
  fs::remove_all(dir);
}

synth::LabeledImages tiny_set(int n, std::uint64_t seed) {
  synth::LabeledImages s;
  std::mt19937 rng(static_cast<unsigned>(seed));
  for (int i = 0; i < n; ++i) {
    Image img(1, 128, 40);
    std::uniform_real_distribution<float> u(0.2f, 0.4f);
    for (auto& v : img.data) v = u(rng);
    const bool fake = i % 3 != 0;
    const int col = fake ? 8 + i % 20 : 19;
    for (int y = 0; y < 128; ++y) img.at(0, y, col) = img.at(0, y, col + 1) = 0.9f;
    s.images.push_back(img);
    s.labels.push_back(fake ? LaneLabel::kFake : LaneLabel::kReal);
  }
  return s;
}

TEST(Train, ZeroLearningRateKeepsWeights) {
  VerifierCNN<float> m({}, 5);
  const auto before = m.conv2.weight;
  const auto fc_before = m.fc.weight;
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 1;
  cfg.adv_steps = 2;
  train_classifier(m, tiny_set(40, 1), tiny_set(12, 2), cfg, {});
  EXPECT_EQ(m.conv2.weight, before);
  EXPECT_EQ(m.fc.weight, fc_before);
}

TEST(Train, DeterministicAndLearnsToySet) {
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 16;
  cfg.adv_steps = 3;
  cfg.seed = 3;
  const auto train = tiny_set(96, 1), val = tiny_set(30, 2);
  VerifierCNN<float> a({}, 5), b({}, 5);
  const auto ra = train_classifier(a, train, val, cfg, {});
  train_classifier(b, train, val, cfg, {});
  for (std::size_t p = 0; p < a.parameters().size(); ++p) EXPECT_EQ(*a.parameters()[p], *b.parameters()[p]);
  for (std::size_t p = 0; p < a.buffers().size(); ++p) EXPECT_EQ(*a.buffers()[p], *b.buffers()[p]);
  EXPECT_GE(ra.best_val_balanced_accuracy, 0.9);
}

TEST(Train, EmptyClassRejected) {
  VerifierCNN<float> m;
  auto train = tiny_set(12, 1);
  for (auto& l : train.labels) l = LaneLabel::kFake;
  try {
    train_classifier(m, train, tiny_set(6, 2), {}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kEmptyClass);
  }
}

}  // namespace
}  // namespace lanesentinel::nn
