#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "test_support.hpp"

using namespace wildface;

namespace {

RgbImage random_image(std::mt19937_64& rng, long w, long h) {
  std::uniform_int_distribution<int> byte(0, 255);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w * h * 3));
  for (auto& v : px) v = static_cast<std::uint8_t>(byte(rng));
  return RgbImage(w, h, std::move(px));
}

RgbImage checkerboard(long n) {
  RgbImage img(n, n);
  for (long y = 0; y < n; ++y)
    for (long x = 0; x < n; ++x)
      if ((x + y) % 2) img.set(x, y, {255, 255, 255});
  return img;
}

double grey(RgbImage::Pixel p) { return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]; }

// Straight double-precision convolution with two-pass variance.
double brute_force_blurriness(const RgbImage& img) {
  std::vector<double> r;
  for (long y = 1; y + 1 < img.height(); ++y) {
    for (long x = 1; x + 1 < img.width(); ++x) {
      r.push_back(grey(img.at(x, y - 1)) + grey(img.at(x - 1, y)) + grey(img.at(x + 1, y)) +
                  grey(img.at(x, y + 1)) - 4.0 * grey(img.at(x, y)));
    }
  }
  const double mean = std::accumulate(r.begin(), r.end(), 0.0) / double(r.size());
  double ss = 0.0;
  for (double v : r) ss += (v - mean) * (v - mean);
  return ss / double(r.size());
}

// Same quantity through OpenCV's 4-neighbour Laplacian (ksize 1), interior only.
double opencv_blurriness(const RgbImage& img) {
  cv::Mat g(static_cast<int>(img.height()), static_cast<int>(img.width()), CV_64F);
  for (long y = 0; y < img.height(); ++y)
    for (long x = 0; x < img.width(); ++x) g.at<double>(int(y), int(x)) = grey(img.at(x, y));
  cv::Mat lap;
  cv::Laplacian(g, lap, CV_64F, 1);
  const cv::Mat valid = lap(cv::Rect(1, 1, g.cols - 2, g.rows - 2));
  cv::Scalar mean, stddev;
  cv::meanStdDev(valid, mean, stddev);
  return stddev[0] * stddev[0];
}

}  // namespace

TEST(Resolution, Examples) {
  EXPECT_EQ(resolution(RgbImage(192, 256)), 49152.0);
  EXPECT_EQ(resolution(RgbImage(1, 1)), 1.0);
  EXPECT_EQ(resolution(RgbImage(80, 160)), 12800.0);
}

TEST(Luminosity, Examples) {
  EXPECT_DOUBLE_EQ(luminosity(RgbImage(4, 3, RgbImage::Pixel{255, 255, 255})), 1.0);
  EXPECT_DOUBLE_EQ(luminosity(RgbImage(4, 3, RgbImage::Pixel{0, 0, 0})), 0.0);
  EXPECT_NEAR(luminosity(RgbImage(4, 3, RgbImage::Pixel{255, 0, 0})), 0.54681, 1e-5);
  EXPECT_NEAR(luminosity(RgbImage(4, 3, RgbImage::Pixel{255, 0, 0})), std::sqrt(0.299), 1e-12);
}

TEST(LuminosityProperty, PermutationInvariantAndMonotone) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    const RgbImage img = random_image(rng, 7, 5);
    const double base = luminosity(img);
    EXPECT_GE(base, 0.0);
    EXPECT_LE(base, 1.0);

    std::vector<long> order(35);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    RgbImage shuffled(7, 5);
    for (long k = 0; k < 35; ++k) shuffled.set(k % 7, k / 7, img.at(order[k] % 7, order[k] / 7));
    EXPECT_NEAR(luminosity(shuffled), base, 1e-12);

    RgbImage brighter = img;
    const long x = long(rng() % 7), y = long(rng() % 5);
    auto p = brighter.at(x, y);
    const std::size_t ch = rng() % 3;
    p[ch] = static_cast<std::uint8_t>(std::min(255, p[ch] + 1 + int(rng() % 40)));
    brighter.set(x, y, p);
    EXPECT_GE(luminosity(brighter), base);
  }
}

TEST(Blurriness, ConstantImageIsZero) { EXPECT_EQ(blurriness(RgbImage(10, 6, RgbImage::Pixel{90, 30, 200})), 0.0); }

TEST(Blurriness, CheckerboardFixture) {
  EXPECT_EQ(blurriness(checkerboard(4)), 1040400.0);
  EXPECT_NEAR(brute_force_blurriness(checkerboard(4)), 1040400.0, 1e-6);
}

TEST(Blurriness, TooSmall) {
  try {
    blurriness(RgbImage(2, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::too_small);
  }
}

TEST(Blurriness, MatchesBruteForceAndOpenCv) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 40; ++i) {
    const long w = 3 + long(rng() % 30), h = 3 + long(rng() % 30);
    const RgbImage img = random_image(rng, w, h);
    const double mine = blurriness(img);
    EXPECT_NEAR(mine, brute_force_blurriness(img), 1e-9 * std::max(1.0, mine)) << w << "x" << h;
    EXPECT_NEAR(mine, opencv_blurriness(img), 1e-7 * std::max(1.0, mine)) << w << "x" << h;
  }
}

TEST(BlurrinessProperty, OffsetAndMirrorInvariant) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 50; ++i) {
    const long w = 3 + long(rng() % 12), h = 3 + long(rng() % 12);
    // Keep headroom so a uniform grey offset stays in range.
    std::uniform_int_distribution<int> byte(0, 200);
    RgbImage img(w, h), lifted(w, h), mirrored(w, h);
    const int offset = 1 + int(rng() % 55);
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        const RgbImage::Pixel p{std::uint8_t(byte(rng)), std::uint8_t(byte(rng)), std::uint8_t(byte(rng))};
        img.set(x, y, p);
        lifted.set(x, y, {std::uint8_t(p[0] + offset), std::uint8_t(p[1] + offset), std::uint8_t(p[2] + offset)});
        mirrored.set(w - 1 - x, y, p);
      }
    }
    EXPECT_EQ(blurriness(lifted), blurriness(img));
    EXPECT_EQ(blurriness(mirrored), blurriness(img));
    EXPECT_GE(blurriness(img), 0.0);
  }
}

TEST(DatasetStats, TwoGroupsHandComputed) {
  const auto s = pooled_normalized_stats({{2.0, 4.0}, {6.0}});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s[0].mean, 0.25);
  EXPECT_DOUBLE_EQ(s[0].std, 0.25);
  EXPECT_DOUBLE_EQ(s[1].mean, 1.0);
  EXPECT_DOUBLE_EQ(s[1].std, 0.0);
}

TEST(DatasetStats, DegenerateRanges) {
  const auto single = pooled_normalized_stats({{7.0}});
  EXPECT_EQ(single[0].mean, 0.0);
  EXPECT_EQ(single[0].std, 0.0);
  const auto same = pooled_normalized_stats({{3.0, 3.0}, {3.0}});
  for (const auto& m : same) {
    EXPECT_EQ(m.mean, 0.0);
    EXPECT_EQ(m.std, 0.0);
  }
  EXPECT_THROW(pooled_normalized_stats({}), Error);
  EXPECT_THROW(dataset_stats({}), Error);
}

TEST(DatasetStats, PerFeatureRecords) {
  std::vector<QualityGroup> groups = {
      {"A", {{"a1", 100, 0.2, 10}, {"a2", 300, 0.4, 30}}},
      {"B", {{"b1", 500, 0.6, 50}}},
  };
  const auto stats = dataset_stats(groups);
  EXPECT_EQ(stats[0].count, 2u);
  EXPECT_DOUBLE_EQ(stats[0].resolution.normalized.mean, 0.25);
  EXPECT_DOUBLE_EQ(stats[1].blurriness.normalized.mean, 1.0);
  EXPECT_DOUBLE_EQ(stats[0].luminosity.pooled_min, 0.2);
  EXPECT_DOUBLE_EQ(stats[0].luminosity.pooled_max, 0.6);
  const std::string csv = stats_to_csv(stats);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "dataset,feature,mean,std,count,pooled_min,pooled_max");
  EXPECT_NE(csv.find("A,resolution,0.250000,0.250000,2,100.000000,500.000000"), std::string::npos);
}

TEST(DatasetStatsProperty, RangeAndOrdering) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> d(0.0, 50.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::vector<double>> groups(1 + rng() % 4);
    for (auto& g : groups) {
      g.resize(1 + rng() % 20);
      for (double& v : g) v = d(rng);
    }
    const auto stats = pooled_normalized_stats(groups);
    for (std::size_t a = 0; a < groups.size(); ++a) {
      EXPECT_GE(stats[a].mean, 0.0);
      EXPECT_LE(stats[a].mean, 1.0);
      EXPECT_GE(stats[a].std, 0.0);
      const double raw_a = std::accumulate(groups[a].begin(), groups[a].end(), 0.0) / double(groups[a].size());
      for (std::size_t b = 0; b < groups.size(); ++b) {
        const double raw_b = std::accumulate(groups[b].begin(), groups[b].end(), 0.0) / double(groups[b].size());
        if (raw_a < raw_b - 1e-9) {
          EXPECT_LE(stats[a].mean, stats[b].mean);
        }
      }
    }
  }
}
