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

#include "lanesentinel/common/error.hpp"
#include "lanesentinel/geometry/lane.hpp"
#include "lanesentinel/geometry/stabilize.hpp"

namespace lanesentinel {
namespace {

Lane lane_from(const std::vector<std::pair<int, double>>& pts) {
  Lane l;
  for (auto [r, x] : pts) l.samples.push_back({r, x});
  return l;
}

// Independent oracle: explicit normal equations X^T X a = X^T y solved by
// Gaussian elimination with partial pivoting, in raw (unscaled) rows.
std::vector<double> normal_equations_fit(const Lane& lane, int degree) {
  const int m = degree + 1;
  std::vector<std::vector<double>> A(m, std::vector<double>(m + 1, 0.0));
  for (const auto& s : lane.samples) {
    std::vector<double> p(m);
    p[0] = 1.0;
    for (int k = 1; k < m; ++k) p[k] = p[k - 1] * s.row;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) A[i][j] += p[i] * p[j];
      A[i][m] += p[i] * s.x;
    }
  }
  for (int c = 0; c < m; ++c) {
    int piv = c;
    for (int r = c + 1; r < m; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    for (int r = c + 1; r < m; ++r) {
      const double f = A[r][c] / A[c][c];
      for (int k = c; k <= m; ++k) A[r][k] -= f * A[c][k];
    }
  }
  std::vector<double> a(m);
  for (int r = m - 1; r >= 0; --r) {
    double s = A[r][m];
    for (int k = r + 1; k < m; ++k) s -= A[r][k] * a[k];
    a[r] = s / A[r][r];
  }
  return a;
}

TEST(FitPolynomial, ExactLine) {
  const auto p = fit_polynomial(lane_from({{0, 1}, {1, 3}, {2, 5}, {3, 7}}), 3);
  const double want[] = {1, 2, 0, 0};
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(p.coeffs[k], want[k], 1e-9);
  EXPECT_EQ(p.row_min, 0);
  EXPECT_EQ(p.row_max, 3);
}

TEST(FitPolynomial, ExactCubicMonomial) {
  const auto p = fit_polynomial(lane_from({{0, 0}, {1, 1}, {2, 8}, {3, 27}}), 3);
  const double want[] = {0, 0, 0, 1};
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(p.coeffs[k], want[k], 1e-9);
}

TEST(FitPolynomial, NoisyCubicMatchesNormalEquations) {
  std::mt19937 rng(42);
  std::normal_distribution<double> noise(0.0, 1.5);
  Lane lane;
  for (int i = 0; i < 50; ++i) {
    const int r = 2 * i;  // rows 0..98 keep the raw normal equations well conditioned
    const double t = r;
    lane.samples.push_back({r, 30.0 + 0.8 * t - 0.01 * t * t + 4e-5 * t * t * t + noise(rng)});
  }
  const auto p = fit_polynomial(lane, 3);
  const auto oracle = normal_equations_fit(lane, 3);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(p.coeffs[k], oracle[k], 1e-6) << "k=" << k;
}

TEST(FitPolynomial, ResidualMatchesReportedRms) {
  const Lane lane = lane_from({{0, 0}, {1, 2}, {2, 1}, {3, 4}, {4, 3}, {5, 7}});
  const auto p = fit_polynomial(lane, 1);
  double ss = 0.0;
  for (const auto& s : lane.samples) ss += std::pow(s.x - p.x_at(s.row), 2);
  EXPECT_NEAR(p.fit_rms, std::sqrt(ss / lane.samples.size()), 1e-12);
}

TEST(FitPolynomial, Errors) {
  try {
    fit_polynomial(lane_from({{0, 1}, {1, 2}, {2, 3}}), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kTooFewSamples);
  }
  try {
    fit_polynomial(lane_from({{5, 1}, {5, 2}, {5, 3}, {5, 4}}), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kDegenerateSystem);
  }
}

// Property: refitting points sampled from a cubic returns that cubic.
TEST(FitPolynomial, IdempotentOnRandomCubics) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    PolyLane truth;
    truth.coeffs = {250.0 * (1 + u(rng)), 0.5 * u(rng), 2e-3 * u(rng), 5e-6 * u(rng)};
    truth.row_min = 100 + static_cast<int>(50 * (1 + u(rng)));
    truth.row_max = 287;
    const auto fitted = fit_polynomial(sample_poly(truth), 3);
    for (int r = truth.row_min; r <= truth.row_max; r += 7) EXPECT_NEAR(fitted.x_at(r), truth.x_at(r), 1e-7);
    for (int k = 0; k < 4; ++k)
      EXPECT_NEAR(fitted.coeffs[k], truth.coeffs[k], 1e-7 * std::max(1.0, std::abs(truth.coeffs[0])));
  }
}

TEST(TangentNormal, VerticalLane) {
  PolyLane p{{37.0, 0, 0, 0}, 0, 100, 3, 0};
  const auto f = curve_tangent_normal(p, 50);
  EXPECT_DOUBLE_EQ(f.tangent.x, 0.0);
  EXPECT_DOUBLE_EQ(f.tangent.y, 1.0);
  EXPECT_DOUBLE_EQ(f.normal.x, 1.0);
  EXPECT_DOUBLE_EQ(f.normal.y, 0.0);
}

TEST(TangentNormal, DiagonalLane) {
  PolyLane p{{0, 1, 0, 0}, 0, 100, 3, 0};
  const auto f = curve_tangent_normal(p, 10);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(f.tangent.x, r, 1e-15);
  EXPECT_NEAR(f.tangent.y, r, 1e-15);
  EXPECT_NEAR(f.normal.x, r, 1e-15);
  EXPECT_NEAR(f.normal.y, -r, 1e-15);
}

TEST(TangentNormal, DerivativeMatchesFiniteDifferenceAndIsOrthogonal) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    PolyLane p{{200 * u(rng), u(rng), 1e-2 * u(rng), 1e-4 * u(rng)}, 0, 287, 3, 0};
    const double row = 143.5 + 140 * u(rng);
    const double h = 1e-4;
    const double fd = (p.x_at(row + h) - p.x_at(row - h)) / (2 * h);
    EXPECT_NEAR(p.dx_dy(row), fd, 1e-5);
    const auto f = curve_tangent_normal(p, row);
    EXPECT_NEAR(f.tangent.x * f.normal.x + f.tangent.y * f.normal.y, 0.0, 1e-12);
    EXPECT_NEAR(std::hypot(f.tangent.x, f.tangent.y), 1.0, 1e-12);
    EXPECT_GE(f.normal.x, 0.0);
    EXPECT_NEAR(f.tangent.x / f.tangent.y, p.dx_dy(row), 1e-9 * std::max(1.0, std::abs(p.dx_dy(row))));
  }
}

Image random_gray(std::mt19937& rng, int h, int w) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(1, h, w);
  for (auto& v : img.data) v = u(rng);
  return img;
}

TEST(Stabilize, VerticalLaneEqualsCenteredSlice) {
  Image img(1, 288, 512);
  for (int y = 0; y < 288; ++y)
    for (int x = 0; x < 512; ++x) img.at(0, y, x) = static_cast<float>((x * 37 % 101) / 100.0);
  PolyLane p{{100.0, 0, 0, 0}, 120, 287, 3, 0};
  const auto s = stabilize_lane(img, p);
  ASSERT_EQ(s.image.height, 128);
  ASSERT_EQ(s.image.width, 40);
  for (int c = 0; c < 40; ++c) {
    const double x = 100.0 + c - 19.5;
    const double want = 0.5 * (img.at(0, 0, static_cast<int>(std::floor(x))) + img.at(0, 0, static_cast<int>(std::ceil(x))));
    for (int r = 0; r < 128; ++r) ASSERT_NEAR(s.image.at(0, r, c), want, 1e-6);
  }
}

TEST(Stabilize, ConstantImageStaysConstant) {
  Image img(1, 288, 512, 0.5f);
  PolyLane p{{260.0, -0.4, 1.5e-3, -2e-6}, 110, 280, 3, 0};
  const auto s = stabilize_lane(img, p);
  for (float v : s.image.data) EXPECT_NEAR(v, 0.5, 1e-6);
}

// Brute-force oracle: recompute each stabilized pixel from the closed-form
// frame of x = y (normal (1,-1)/sqrt 2) with a separately written bilinear.
TEST(Stabilize, DiagonalLaneMatchesDirectResampling) {
  Image img(1, 288, 512, 0.0f);
  for (int y = 0; y < 288; ++y)
    for (int x = 0; x < 512; ++x)
      if (std::abs(x - y) <= 2) img.at(0, y, x) = 1.0f;
  PolyLane p{{0, 1, 0, 0}, 20, 260, 3, 0};
  const auto s = stabilize_lane(img, p);
  auto oracle_bilinear = [&](double y, double x) {
    const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
    const double fy = y - y0, fx = x - x0;
    auto px = [&](int yy, int xx) { return static_cast<double>(img.at(0, std::min(yy, 287), std::min(xx, 511))); };
    return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) + fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
  };
  const double r2 = 1.0 / std::sqrt(2.0);
  for (int r = 0; r < 128; ++r) {
    const double yc = 20 + r * (240.0 / 127.0);
    for (int c = 0; c < 40; ++c) {
      const double off = c - 19.5;
      const double want = oracle_bilinear(yc - off * r2, yc + off * r2);
      ASSERT_NEAR(s.image.at(0, r, c), want, 1e-6) << r << "," << c;
      if (std::abs(off) > 6.0) {
        EXPECT_LE(s.image.at(0, r, c), 0.1);
      }
    }
    EXPECT_GE(s.image.at(0, r, 19), 0.9);
    EXPECT_GE(s.image.at(0, r, 20), 0.9);
  }
}

TEST(Stabilize, OutOfImageSamplesAreAbsentAndZero) {
  Image img(1, 50, 60, 1.0f);
  PolyLane p{{2.0, 0, 0, 0}, -10, 49, 3, 0};
  const auto s = stabilize_lane(img, p);
  EXPECT_EQ(s.row_first, 0);
  for (int r = 0; r < 128; ++r) {
    EXPECT_FALSE(s.provenance[r * 40 + 0].valid);
    EXPECT_EQ(s.image.at(0, r, 0), 0.0f);
    EXPECT_TRUE(s.provenance[r * 40 + 39].valid);
  }
}

TEST(Stabilize, EmptyExtentThrows) {
  Image img(1, 50, 60, 1.0f);
  PolyLane p{{20.0, 0, 0, 0}, 49, 80, 3, 0};
  try {
    stabilize_lane(img, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kEmptyExtent);
  }
}

TEST(Stabilize, ProvenanceReproducesPixelsExactly) {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Image img = random_gray(rng, 96, 128);
    PolyLane p{{64 + 40 * u(rng), 0.3 * u(rng), 2e-3 * u(rng), 1e-5 * u(rng)}, 10 + trial % 20, 95, 3, 0};
    const auto s = stabilize_lane(img, p);
    for (std::size_t i = 0; i < s.provenance.size(); ++i) {
      const auto& pv = s.provenance[i];
      if (!pv.valid) {
        ASSERT_EQ(s.image.data[i], 0.0f);
        continue;
      }
      ASSERT_TRUE(in_image(img, pv.y, pv.x));
      ASSERT_EQ(sample_bilinear(img, 0, pv.y, pv.x), s.image.data[i]);
    }
    for (float v : s.image.data) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(Stabilize, RgbInputUsesLuminance) {
  Image rgb(3, 40, 60);
  for (std::size_t i = 0; i < rgb.plane_size(); ++i) {
    rgb.data[i] = 1.0f;
    rgb.data[rgb.plane_size() + i] = 0.5f;
  }
  PolyLane p{{30.0, 0, 0, 0}, 0, 39, 3, 0};
  const auto s = stabilize_lane(rgb, p);
  EXPECT_NEAR(s.image.at(0, 64, 20), 0.299 + 0.587 * 0.5, 1e-6);
}

// Vertical lanes commute with axis-aligned cropping (translation).
TEST(Stabilize, VerticalLaneCommutesWithCrop) {
  std::mt19937 rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    const Image img = random_gray(rng, 120, 160);
    const int top = trial % 17, left = trial % 23;
    Image crop(1, 100, 120);
    for (int y = 0; y < 100; ++y)
      for (int x = 0; x < 120; ++x) crop.at(0, y, x) = img.at(0, y + top, x + left);
    const double x0 = 60.0 + (trial % 7) * 0.37;
    PolyLane full{{x0 + left, 0, 0, 0}, top + 5, top + 90, 3, 0};
    PolyLane local{{x0, 0, 0, 0}, 5, 90, 3, 0};
    const auto a = stabilize_lane(img, full), b = stabilize_lane(crop, local);
    for (std::size_t i = 0; i < a.image.size(); ++i) ASSERT_NEAR(a.image.data[i], b.image.data[i], 1e-6);
  }
}

TEST(WriteBack, ZeroDeltaGivesZeroSceneDelta) {
  std::mt19937 rng(2);
  const Image img = random_gray(rng, 64, 80);
  const auto s = stabilize_lane(img, PolyLane{{40, 0.1, 0, 0}, 3, 60, 3, 0});
  const Image d = write_back(img, s, Image(1, 128, 40));
  for (float v : d.data) EXPECT_EQ(v, 0.0f);
}

TEST(WriteBack, SingleIntegerProvenanceHitsOnePixel) {
  Image scene(1, 20, 30);
  StabilizedLane s;
  s.image = Image(1, 2, 2);
  s.provenance = {{5.0, 7.0, true}, {0, 0, false}, {0, 0, false}, {0, 0, false}};
  Image delta(1, 2, 2);
  delta.data[0] = 0.25f;
  const Image out = write_back(scene, s, delta);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 30; ++x) EXPECT_EQ(out.at(0, y, x), (y == 5 && x == 7) ? 0.25f : 0.0f);
}

// Oracle: accumulate weight*delta and weight separately, then normalize.
TEST(WriteBack, OverlappingDepositsAreWeightAveraged) {
  Image scene(1, 10, 10);
  StabilizedLane s;
  s.image = Image(1, 1, 3);
  s.provenance = {{4.0, 4.0, true}, {4.0, 4.0, true}, {4.5, 4.25, true}};
  Image delta(1, 1, 3);
  delta.data = {0.1f, 0.3f, -0.2f};
  const Image out = write_back(scene, s, delta);
  double num[10][10] = {}, den[10][10] = {};
  for (int i = 0; i < 3; ++i) {
    const double y = s.provenance[i].y, x = s.provenance[i].x;
    const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
    const double fy = y - y0, fx = x - x0;
    const double w[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
    const int yy[4] = {y0, y0, y0 + 1, y0 + 1}, xx[4] = {x0, x0 + 1, x0, x0 + 1};
    for (int k = 0; k < 4; ++k) {
      num[yy[k]][xx[k]] += w[k] * delta.data[i];
      den[yy[k]][xx[k]] += w[k];
    }
  }
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      const double want = den[y][x] > 0 ? num[y][x] / den[y][x] : 0.0;
      EXPECT_NEAR(out.at(0, y, x), want, 1e-7);
    }
  // Two identical provenances alone give the plain mean.
  s.provenance[2].valid = false;
  EXPECT_NEAR(write_back(scene, s, delta).at(0, 4, 4), 0.2, 1e-7);
}

TEST(WriteBack, RegionMaskZeroesOutside) {
  std::mt19937 rng(4);
  const Image img = random_gray(rng, 64, 80);
  const auto s = stabilize_lane(img, PolyLane{{40, 0, 0, 0}, 0, 63, 3, 0});
  Mask region(64, 80);
  for (int y = 10; y < 20; ++y)
    for (int x = 0; x < 80; ++x) region.at(y, x) = 1;
  const Image out = write_back(img, s, Image(1, 128, 40, 0.5f), &region);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 80; ++x) {
      if (!region.at(y, x)) {
        EXPECT_EQ(out.at(0, y, x), 0.0f);
      }
    }
  EXPECT_NEAR(out.at(0, 15, 40), 0.5f, 1e-6);
}

TEST(WriteBack, ShapeMismatchThrows) {
  Image img(1, 64, 80, 0.2f);
  const auto s = stabilize_lane(img, PolyLane{{40, 0, 0, 0}, 0, 63, 3, 0});
  try {
    write_back(img, s, Image(1, 10, 10));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kShapeMismatch);
  }
}

// Property: stabilize then write back a zero perturbation leaves any scene
// unchanged.
TEST(WriteBack, ZeroRoundTripPreservesScene) {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Image scene = random_gray(rng, 72, 96);
    const Image before = scene;
    PolyLane p{{48 + 30 * u(rng), 0.4 * u(rng), 3e-3 * u(rng), 0}, trial % 30, 71, 3, 0};
    const auto s = stabilize_lane(scene, p);
    const Image d = write_back(scene, s, Image(1, 128, 40));
    for (std::size_t i = 0; i < scene.size(); ++i) scene.data[i] += d.data[i];
    ASSERT_EQ(scene, before);
  }
}

}  // namespace
}  // namespace lanesentinel
