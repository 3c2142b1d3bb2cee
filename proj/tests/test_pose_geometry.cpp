#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace wildface;
using wildface::testing::random_skeleton;
using wildface::testing::torso;
using wildface::testing::with_ears;

namespace {

std::string pose_json(const std::string& id, std::size_t numbers) {
  std::string s = R"([{"image_id": ")" + id + R"(", "keypoints": [)";
  for (std::size_t i = 0; i < numbers; ++i) {
    // triple k holds (k, 100 + k, 0.5)
    const std::size_t k = i / 3;
    const double v = i % 3 == 0 ? double(k) : i % 3 == 1 ? 100.0 + double(k) : 0.5;
    s += (i ? ", " : "") + std::to_string(v);
  }
  return s + "]}]";
}

Errc error_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no wildface::Error thrown";
  return Errc::io;
}

}  // namespace

TEST(PoseFile, EmptyArray) { EXPECT_TRUE(parse_pose_file("[]").empty()); }

TEST(PoseFile, JointFiveIsSixthTriple) {
  const auto poses = parse_pose_file(pose_json("a.png", 51));
  ASSERT_EQ(poses.size(), 1u);
  EXPECT_EQ(poses[0].image_id, "a.png");
  EXPECT_DOUBLE_EQ(poses[0][Joint::left_shoulder].x, 5.0);
  EXPECT_DOUBLE_EQ(poses[0][Joint::left_shoulder].y, 105.0);
  EXPECT_DOUBLE_EQ(poses[0][Joint::left_shoulder].score, 0.5);
}

TEST(PoseFile, WrongKeypointCountIsSchemaError) {
  try {
    parse_pose_file(pose_json("short.png", 48));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::schema);
    EXPECT_NE(std::string(e.what()).find("short.png"), std::string::npos);
  }
}

TEST(PoseFile, MalformedJsonIsParseError) {
  EXPECT_EQ(error_code([] { parse_pose_file("[{"); }), Errc::parse);
  EXPECT_EQ(error_code([] { parse_pose_file("{}"); }), Errc::schema);
}

TEST(PoseFile, ScoresClampedToUnitRange) {
  std::string doc = pose_json("c", 51);
  doc.replace(doc.find("0.500000"), 8, "1.700000");
  EXPECT_DOUBLE_EQ(parse_pose_file(doc)[0][Joint::nose].score, 1.0);
}

TEST(PoseFile, JsonRoundTrip) {
  std::mt19937_64 rng(3);
  const auto s = random_skeleton(rng, "rt");
  const auto back = parse_pose_file("[" + to_json(s).dump() + "]");
  ASSERT_EQ(back.size(), 1u);
  for (std::size_t j = 0; j < kJointCount; ++j) {
    EXPECT_DOUBLE_EQ(back[0].keypoints[j].x, s.keypoints[j].x);
    EXPECT_DOUBLE_EQ(back[0].keypoints[j].y, s.keypoints[j].y);
  }
}

TEST(Orientation, FrontalExample) {
  const auto s = torso("f", {70, 50}, {30, 50}, {60, 110}, {40, 110});
  EXPECT_NEAR(shoulder_torso_ratio(s), 40.0 / 60.0, 1e-12);
  EXPECT_EQ(classify_orientation(s), Orientation::frontal);
}

TEST(Orientation, SwappedShouldersAreBackside) {
  const auto s = torso("b", {30, 50}, {70, 50}, {60, 110}, {40, 110});
  EXPECT_EQ(classify_orientation(s), Orientation::backside);
}

TEST(Orientation, NarrowShouldersAreSideways) {
  const auto s = torso("s", {62, 50}, {38, 50}, {55, 110}, {45, 110});
  EXPECT_NEAR(shoulder_torso_ratio(s), 0.4, 1e-12);
  EXPECT_EQ(classify_orientation(s), Orientation::sideways);
}

TEST(Orientation, RatioExactlyHalfIsNotSideways) {
  const auto s = torso("h", {65, 50}, {35, 50}, {55, 110}, {45, 110});
  EXPECT_EQ(shoulder_torso_ratio(s), 0.5);
  EXPECT_EQ(classify_orientation(s), Orientation::frontal);
}

TEST(Orientation, LowConfidenceHipIsUndetectable) {
  auto s = torso("u", {70, 50}, {30, 50}, {60, 110}, {40, 110});
  s[Joint::right_hip].score = 0.01;
  EXPECT_EQ(error_code([&] { classify_orientation(s); }), Errc::undetectable_pose);
  GeometryOptions lax;
  lax.confidence_threshold = 0.0;
  EXPECT_EQ(classify_orientation(s, lax), Orientation::frontal);
}

TEST(Orientation, ZeroTorsoIsUndetectable) {
  const auto s = torso("z", {70, 50}, {30, 50}, {70, 50}, {30, 50});
  EXPECT_EQ(error_code([&] { classify_orientation(s); }), Errc::undetectable_pose);
}

TEST(OrientationProperty, MirrorTranslationScale) {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> shift(-500.0, 500.0);
  std::uniform_real_distribution<double> factor(0.25, 8.0);
  int frontal = 0, backside = 0, sideways = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto s = random_skeleton(rng);
    const Orientation o = classify_orientation(s);
    frontal += o == Orientation::frontal;
    backside += o == Orientation::backside;
    sideways += o == Orientation::sideways;

    auto mirrored = s;
    for (auto& k : mirrored.keypoints) k.x = 200.0 - k.x;
    const Orientation expected_mirror = o == Orientation::frontal    ? Orientation::backside
                                        : o == Orientation::backside ? Orientation::frontal
                                                                     : Orientation::sideways;
    EXPECT_EQ(classify_orientation(mirrored), expected_mirror) << "case " << i;

    auto moved = s;
    const double dx = shift(rng), dy = shift(rng);
    for (auto& k : moved.keypoints) {
      k.x += dx;
      k.y += dy;
    }
    EXPECT_EQ(classify_orientation(moved), o) << "case " << i;

    auto scaled = s;
    const double f = factor(rng);
    for (auto& k : scaled.keypoints) {
      k.x *= f;
      k.y *= f;
    }
    EXPECT_EQ(classify_orientation(scaled), o) << "case " << i;
  }
  // The generator must exercise all three labels.
  EXPECT_GT(frontal, 50);
  EXPECT_GT(backside, 50);
  EXPECT_GT(sideways, 50);
}

TEST(HeadCenter, Examples) {
  const auto base = torso("h", {70, 50}, {30, 50}, {60, 110}, {40, 110});
  EXPECT_EQ(head_center(with_ears(base, {10, 20}, {30, 20})), (Point{20, 20}));
  EXPECT_EQ(head_center(with_ears(base, {15, 15}, {15, 15})), (Point{15, 15}));
  auto deaf = with_ears(base, {10, 20}, {30, 20});
  deaf[Joint::left_ear].score = 0.0;
  EXPECT_EQ(error_code([&] { head_center(deaf); }), Errc::head_undetectable);
}

TEST(HeadCenter, TranslatesWithKeypoints) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    auto s = random_skeleton(rng);
    const Point c = head_center(s);
    for (auto& k : s.keypoints) {
      k.x += 13.25;
      k.y -= 7.5;
    }
    const Point moved = head_center(s);
    EXPECT_NEAR(moved.x, c.x + 13.25, 1e-9);
    EXPECT_NEAR(moved.y, c.y - 7.5, 1e-9);
  }
}

TEST(HeadRoi, WorkedExample) {
  const auto s = with_ears(torso("w", {120, 80}, {72, 80}, {110, 160}, {80, 160}), {106, 40}, {86, 40});
  const HeadRoi roi = head_roi(s, 192, 256);
  EXPECT_EQ(roi.side, 57);
  EXPECT_EQ(roi.x0, 67);
  EXPECT_EQ(roi.x1, 124);
  EXPECT_EQ(roi.y0, 11);
  EXPECT_EQ(roi.y1, 68);
}

TEST(HeadRoi, ClippedAtTop) {
  const auto s = with_ears(torso("t", {120, 80}, {72, 80}, {110, 160}, {80, 160}), {106, 5}, {86, 5});
  const HeadRoi roi = head_roi(s, 192, 256);
  EXPECT_EQ(roi.y0, 0);
  EXPECT_EQ(roi.height(), 33);
  EXPECT_EQ(roi.width(), 57);
}

TEST(HeadRoi, NinePixelImage) {
  const auto s = with_ears(torso("n", {6, 3}, {2, 3}, {5, 8}, {3, 8}), {5, 4}, {3, 4});
  const HeadRoi roi = head_roi(s, 9, 9);
  EXPECT_EQ(roi.side, 2);
  EXPECT_EQ(roi.x0, 3);
  EXPECT_EQ(roi.y0, 3);
  EXPECT_EQ(roi.width(), 2);
  EXPECT_EQ(roi.height(), 2);
}

TEST(HeadRoi, OutsideImageIsDegenerate) {
  const auto s = with_ears(torso("o", {6, 3}, {2, 3}, {5, 8}, {3, 8}), {500, 4}, {520, 4});
  EXPECT_EQ(error_code([&] { head_roi(s, 90, 90); }), Errc::degenerate_roi);
}

TEST(HeadRoi, KeypointExtentHeight) {
  auto s = with_ears(torso("k", {70, 50}, {30, 50}, {60, 110}, {40, 110}), {55, 30}, {45, 30});
  s[Joint::left_ankle] = {50, 210, 0.9};
  GeometryOptions opt;
  opt.body_height = BodyHeightSource::keypoints;
  // extent 30..210 = 180, side 40
  EXPECT_EQ(head_roi(s, 400, 400, opt).side, 40);
}

TEST(HeadRoiProperty, SideWithinOnePixelAndSquareBeforeClipping) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<long> dim(9, 2000);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const long w = dim(rng), h = dim(rng);
    const Point c{unit(rng) * static_cast<double>(w), unit(rng) * static_cast<double>(h)};
    const long side = head_side(static_cast<double>(h));
    EXPECT_LE(std::abs(static_cast<double>(side) - 2.0 * static_cast<double>(h) / 9.0), 0.5 + 1e-9);
    const long x0 = static_cast<long>(std::floor(c.x - static_cast<double>(side) / 2.0));
    const long y0 = static_cast<long>(std::floor(c.y - static_cast<double>(side) / 2.0));
    const HeadRoi roi = square_roi(c, side, w, h);
    EXPECT_EQ(roi.x0, std::max(0L, x0));
    EXPECT_EQ(roi.y0, std::max(0L, y0));
    EXPECT_EQ(roi.x1, std::min(w, x0 + side));
    EXPECT_EQ(roi.y1, std::min(h, y0 + side));
    EXPECT_TRUE(0 <= roi.x0 && roi.x0 < roi.x1 && roi.x1 <= w);
    EXPECT_TRUE(0 <= roi.y0 && roi.y0 < roi.y1 && roi.y1 <= h);
  }
}
