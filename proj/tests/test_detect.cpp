#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "shapesel/shapesel.hpp"

using namespace shapesel;

TEST(Sigma, Examples) {
  EXPECT_DOUBLE_EQ(gaussian_sigma(24, 24), 1.0);
  EXPECT_DOUBLE_EQ(gaussian_sigma(240, 120), 5.0);
  EXPECT_DOUBLE_EQ(gaussian_sigma(4, 4), 1.0);
  SigmaRule r;
  r.stride = 2;
  EXPECT_DOUBLE_EQ(gaussian_sigma(240, 120, r), 10.0);
  EXPECT_THROW(gaussian_sigma(0, 3), InvalidArgument);
}

TEST(Targets, SingleCenter) {
  const Heatmap y = make_targets({{5, 7, 1, 2.0}}, 16, 12, 2);
  EXPECT_EQ(y.at(1, 7, 5), 1.0);
  EXPECT_DOUBLE_EQ(y.at(1, 7, 8), std::exp(-9.0 / 8.0));
  EXPECT_DOUBLE_EQ(y.at(1, 3, 2), std::exp(-25.0 / 8.0));
  for (double v : std::vector<double>(y.values.begin(), y.values.begin() + 16 * 12)) EXPECT_EQ(v, 0.0);
}

TEST(Targets, OverlapsUseElementwiseMax) {
  const std::vector<CenterTarget> centers = {{4, 4, 0, 2.0}, {7, 5, 0, 1.5}};
  const Heatmap y = make_targets(centers, 12, 10, 1);
  for (int py = 0; py < 10; ++py)
    for (int px = 0; px < 12; ++px) {
      double expected = 0.0;
      for (const auto& c : centers) {
        const double r2 = (px - c.x) * (px - c.x) + (py - c.y) * (py - c.y);
        const double g = std::exp(-r2 / (2 * c.sigma * c.sigma));
        if (g > expected) expected = g;
      }
      EXPECT_EQ(y.at(0, py, px), expected);
    }
}

TEST(Targets, RejectsOutOfBounds) {
  EXPECT_THROW(make_targets({{20, 1, 0, 1}}, 10, 10, 1), InvalidArgument);
  EXPECT_THROW(make_targets({{1, 1, 3, 1}}, 10, 10, 1), InvalidArgument);
}

TEST(Focal, WorkedExample) {
  Heatmap pred(1, 1, 1, 0.5), target(1, 1, 1, 1.0);
  EXPECT_NEAR(focal_loss(pred, target, 1), 0.17329, 1e-5);
  EXPECT_NEAR(focal_loss(pred, target, 1), -0.25 * std::log(0.5), 1e-15);
}

TEST(Focal, PerfectPredictionLimit) {
  Heatmap target(5, 5, 1, 0.0);
  target.at(0, 2, 2) = 1.0;
  double previous = 1e300;
  for (double clamp : {1e-3, 1e-5, 1e-7, 1e-9}) {
    FocalLossParams p;
    p.clamp = clamp;
    const double l = focal_loss(target, target, 1, p);
    EXPECT_LT(l, previous);
    EXPECT_GE(l, 0.0);
    previous = l;
  }
  EXPECT_LT(previous, 1e-8);
}

TEST(Focal, MatchesPixelLoop) {
  Rng rng(3);
  Heatmap pred(9, 7, 3), target(9, 7, 3);
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    pred.values[i] = uniform(rng, 0.01, 0.99);
    target.values[i] = uniform(rng) < 0.05 ? 1.0 : uniform(rng, 0.0, 0.95);
  }
  double expected = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 9; ++x) expected += oracle::focal_pixel(pred.at(c, y, x), target.at(c, y, x));
  EXPECT_NEAR(focal_loss(pred, target, 4), expected / 4, 1e-10);
}

TEST(Focal, NonNegativeAndMonotoneTowardTarget) {
  const Heatmap target = make_targets({{3, 3, 0, 1.0}, {10, 6, 1, 2.0}}, 14, 10, 2);
  const Heatmap uniform_pred(14, 10, 2, 0.5);
  double previous = 1e300;
  for (int i = 0; i < 10; ++i) {
    const double lambda = 0.09 * i;
    Heatmap p = uniform_pred;
    for (std::size_t k = 0; k < p.values.size(); ++k) p.values[k] = (1 - lambda) * 0.5 + lambda * target.values[k];
    const double l = focal_loss(p, target, 2);
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, previous);
    previous = l;
  }
}

TEST(Focal, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  Heatmap pred(6, 5, 2), target(6, 5, 2);
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    pred.values[i] = uniform(rng, 0.05, 0.95);
    target.values[i] = uniform(rng) < 0.1 ? 1.0 : uniform(rng, 0.0, 0.9);
  }
  const FocalLossResult r = focal_loss_with_gradient(pred, target, 3);
  auto f = [&](const Eigen::VectorXd& v) {
    Heatmap p = pred;
    for (std::size_t i = 0; i < p.values.size(); ++i) p.values[i] = v(static_cast<Eigen::Index>(i));
    return focal_loss(p, target, 3);
  };
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(pred.values.data(), static_cast<Eigen::Index>(pred.values.size()));
  const Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(r.gradient.data(), static_cast<Eigen::Index>(r.gradient.size()));
  EXPECT_LT(oracle::relative_error(g, oracle::fd_gradient(f, x, 1e-6)), 1e-4);
}

TEST(Focal, Errors) {
  Heatmap a(2, 2, 1, 0.5), b(3, 2, 1, 0.5);
  EXPECT_THROW(focal_loss(a, b, 1), MismatchedLengths);
  EXPECT_THROW(focal_loss(a, a, 0), InvalidArgument);
}

TEST(Peaks, SinglePlantedPeak) {
  Heatmap h = make_targets({{6, 4, 0, 1.5}}, 12, 9, 1);
  for (auto& v : h.values) v *= 0.9;
  const auto d = extract_peaks(h, 0.1);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].x, 6);
  EXPECT_EQ(d[0].y, 4);
  EXPECT_DOUBLE_EQ(d[0].score, 0.9);
  for (auto& v : h.values) v *= 0.05 / 0.9;
  EXPECT_TRUE(extract_peaks(h, 0.1).empty());
}

TEST(Peaks, FivePlantedPeaks) {
  const std::vector<CenterTarget> centers = {{2, 2, 0, 1}, {5, 2, 0, 1}, {2, 5, 0, 1}, {9, 8, 0, 2}, {14, 3, 1, 1}};
  const Heatmap h = make_targets(centers, 16, 12, 2);
  const auto d = extract_peaks(h, 1e-2);
  ASSERT_EQ(d.size(), centers.size());
  std::set<std::tuple<int, int, int>> got, want;
  for (const auto& x : d) got.emplace(x.class_id, x.y, x.x);
  for (const auto& c : centers) want.emplace(c.class_id, int(c.y), int(c.x));
  EXPECT_EQ(got, want);
}

TEST(Peaks, PlateauKeepsLexicographicallySmallest) {
  Heatmap h(5, 5, 1, 0.0);
  h.at(0, 2, 2) = h.at(0, 2, 3) = h.at(0, 3, 2) = 0.7;
  const auto d = extract_peaks(h, 0.1);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].y, 2);
  EXPECT_EQ(d[0].x, 2);
}

TEST(Peaks, MatchesExhaustiveScan) {
  Rng rng(5);
  Heatmap h(20, 15, 2);
  for (auto& v : h.values) v = uniform(rng);
  std::set<std::tuple<int, int, int>> want;
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 15; ++y)
      for (int x = 0; x < 20; ++x) {
        bool ok = h.at(c, y, x) >= 0.3;
        for (int ny = std::max(0, y - 1); ny <= std::min(14, y + 1); ++ny)
          for (int nx = std::max(0, x - 1); nx <= std::min(19, x + 1); ++nx)
            if (h.at(c, ny, nx) > h.at(c, y, x)) ok = false;
        if (ok) want.emplace(c, y, x);
      }
  std::set<std::tuple<int, int, int>> got;
  for (const auto& d : extract_peaks(h, 0.3)) got.emplace(d.class_id, d.y, d.x);
  EXPECT_EQ(got, want);
}

TEST(HeatmapIo, RoundTripAndLayout) {
  Heatmap h(3, 2, 2);
  for (std::size_t i = 0; i < h.values.size(); ++i) h.values[i] = static_cast<float>(0.1 * i);
  std::stringstream s;
  write_heatmap(s, h);
  EXPECT_EQ(s.str().size(), 4u + 4 * 4 + 4 * 12);
  EXPECT_EQ(s.str()[4], 2);
  const Heatmap r = read_heatmap(s);
  EXPECT_EQ(r.width, 3);
  EXPECT_EQ(r.channels, 2);
  EXPECT_EQ(r.values, h.values);
  std::stringstream v1;
  write_sdfg(v1, SdfGrid{GridSpec{}, {0.0}});
  EXPECT_THROW(read_heatmap(v1), FormatError);
}
