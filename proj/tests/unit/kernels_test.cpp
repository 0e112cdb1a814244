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
#include <random>
#include <vector>

#include "lanesentinel/kernels/kernels.hpp"

namespace lanesentinel::kernels {
namespace {

std::vector<float> random_vec(std::mt19937& rng, std::size_t n, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<float> padded_random(std::mt19937& rng, int c, int h, int w) {
  std::vector<float> v(static_cast<std::size_t>(c) * (h + 2) * (w + 2), 0.0f);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  for (int i = 0; i < c; ++i)
    for (int y = 1; y <= h; ++y)
      for (int x = 1; x <= w; ++x) v[(static_cast<std::size_t>(i) * (h + 2) + y) * (w + 2) + x] = d(rng);
  return v;
}

TEST(KernelDispatch, ScalarAlwaysAvailable) {
  const auto tables = available_tables();
  ASSERT_FALSE(tables.empty());
  EXPECT_EQ(tables.front()->name, "scalar");
  EXPECT_FALSE(active().name.empty());
}

// Every SIMD variant must agree with the scalar reference on odd shapes that
// exercise both the vector body and the scalar tails.
TEST(KernelEquivalence, Conv3x3SameMatchesScalar) {
  std::mt19937 rng(7);
  const int shapes[][4] = {{3, 8, 17, 13}, {8, 16, 9, 24}, {16, 8, 5, 8}, {8, 1, 12, 31}, {2, 7, 3, 3}};
  for (const auto* table : available_tables()) {
    for (const auto& s : shapes) {
      const int cin = s[0], cout = s[1], h = s[2], w = s[3];
      const auto input = padded_random(rng, cin, h, w);
      const auto weights = random_vec(rng, static_cast<std::size_t>(cout) * cin * 9);
      const auto bias = random_vec(rng, cout);
      std::vector<float> ref(static_cast<std::size_t>(cout) * h * w), got(ref.size());
      Conv3x3Problem<float> p{input.data(), cin, h, w, weights.data(), bias.data(), ref.data(), cout};
      reference::conv3x3_same(p);
      p.output = got.data();
      table->conv3x3_same(p);
      for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(ref[i], got[i], 1e-5) << table->name << " @" << i;
    }
  }
}

TEST(KernelEquivalence, WeightGradMatchesScalar) {
  std::mt19937 rng(11);
  const int shapes[][4] = {{3, 8, 17, 13}, {8, 16, 9, 24}, {1, 2, 4, 4}};
  for (const auto* table : available_tables()) {
    for (const auto& s : shapes) {
      const int cin = s[0], cout = s[1], h = s[2], w = s[3];
      const auto input = padded_random(rng, cin, h, w);
      const auto gout = random_vec(rng, static_cast<std::size_t>(cout) * h * w);
      std::vector<float> gw_ref(static_cast<std::size_t>(cout) * cin * 9, 0.5f), gw(gw_ref);
      std::vector<float> gb_ref(cout, -0.25f), gb(gb_ref);
      Conv3x3GradProblem<float> p{input.data(), cin, h, w, gout.data(), cout, gw_ref.data(), gb_ref.data()};
      reference::conv3x3_weight_grad(p);
      p.grad_weights = gw.data();
      p.grad_bias = gb.data();
      table->conv3x3_weight_grad(p);
      for (std::size_t i = 0; i < gw.size(); ++i) ASSERT_NEAR(gw_ref[i], gw[i], 1e-4) << table->name;
      for (std::size_t i = 0; i < gb.size(); ++i) ASSERT_NEAR(gb_ref[i], gb[i], 1e-4) << table->name;
    }
  }
}

TEST(KernelEquivalence, ElementwiseKernelsAreBitExact) {
  std::mt19937 rng(3);
  for (const auto* table : available_tables()) {
    for (std::size_t n : {1u, 7u, 8u, 37u, 1024u}) {
      auto x = random_vec(rng, n);
      x[0] = 0.0f;
      auto g = random_vec(rng, n);
      g[n - 1] = 0.0f;
      std::vector<float> y_ref(n), y(n);
      reference::relu(x.data(), y_ref.data(), n);
      table->relu(x.data(), y.data(), n);
      EXPECT_EQ(y_ref, y) << table->name;

      reference::relu_backward(x.data(), g.data(), y_ref.data(), n);
      table->relu_backward(x.data(), g.data(), y.data(), n);
      EXPECT_EQ(y_ref, y) << table->name;

      const auto lo = random_vec(rng, n, -0.5f, 0.0f);
      const auto hi = random_vec(rng, n, 0.0f, 0.5f);
      auto a = x, b = x;
      reference::sign_step_box(a.data(), g.data(), lo.data(), hi.data(), 0.03f, n);
      table->sign_step_box(b.data(), g.data(), lo.data(), hi.data(), 0.03f, n);
      EXPECT_EQ(a, b) << table->name;
      for (std::size_t i = 0; i < n; ++i) {
        EXPECT_GE(b[i], lo[i]);
        EXPECT_LE(b[i], hi[i]);
      }
    }
  }
}

TEST(KernelEquivalence, DotMatchesScalar) {
  std::mt19937 rng(5);
  for (const auto* table : available_tables()) {
    for (std::size_t n : {0u, 3u, 16u, 33u, 5000u}) {
      const auto a = random_vec(rng, n), b = random_vec(rng, n);
      double exact = 0.0;
      for (std::size_t i = 0; i < n; ++i) exact += static_cast<double>(a[i]) * b[i];
      EXPECT_NEAR(table->dot(a.data(), b.data(), n), exact, 1e-3) << table->name;
    }
  }
}

TEST(Kernels, SignStepZeroGradientLeavesPointFixed) {
  std::vector<float> x{0.2f, 0.4f}, g{0.0f, 0.0f}, lo{0.0f, 0.0f}, hi{1.0f, 1.0f};
  active().sign_step_box(x.data(), g.data(), lo.data(), hi.data(), 0.1f, 2);
  EXPECT_EQ(x[0], 0.2f);
  EXPECT_EQ(x[1], 0.4f);
}

}  // namespace
}  // namespace lanesentinel::kernels
