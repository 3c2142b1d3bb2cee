#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wildface/error.hpp"

namespace wildface {

// COCO 17-keypoint convention.
enum class Joint : std::size_t {
  nose = 0,
  left_eye = 1,
  right_eye = 2,
  left_ear = 3,
  right_ear = 4,
  left_shoulder = 5,
  right_shoulder = 6,
  left_elbow = 7,
  right_elbow = 8,
  left_wrist = 9,
  right_wrist = 10,
  left_hip = 11,
  right_hip = 12,
  left_knee = 13,
  right_knee = 14,
  left_ankle = 15,
  right_ankle = 16,
};

inline constexpr std::size_t kJointCount = 17;

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
};

struct PoseSkeleton {
  std::string image_id;
  std::array<Keypoint, kJointCount> keypoints{};

  const Keypoint& operator[](Joint j) const { return keypoints[static_cast<std::size_t>(j)]; }
  Keypoint& operator[](Joint j) { return keypoints[static_cast<std::size_t>(j)]; }
};

enum class Orientation { frontal, sideways, backside };

constexpr std::string_view to_string(Orientation o) {
  switch (o) {
    case Orientation::frontal: return "Frontal";
    case Orientation::sideways: return "Sideways";
    case Orientation::backside: return "Backside";
  }
  return "";
}

inline std::optional<Orientation> parse_orientation(std::string_view s) {
  if (s == "Frontal") return Orientation::frontal;
  if (s == "Sideways") return Orientation::sideways;
  if (s == "Backside") return Orientation::backside;
  return std::nullopt;
}

/// Where the body-silhouette height used for the head box comes from.
enum class BodyHeightSource {
  image,      // person crops: the image height is the silhouette height
  keypoints,  // vertical extent of the confident keypoints
};

struct GeometryOptions {
  double confidence_threshold = 0.05;
  BodyHeightSource body_height = BodyHeightSource::image;
  double sideways_ratio = 0.5;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Half-open pixel box [x0, x1) x [y0, y1) plus the geometry it came from.
struct HeadRoi {
  Point center;
  long side = 0;
  long x0 = 0;
  long y0 = 0;
  long x1 = 0;
  long y1 = 0;

  long width() const { return x1 - x0; }
  long height() const { return y1 - y0; }
  friend bool operator==(const HeadRoi&, const HeadRoi&) = default;
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Parses an AlphaPose-style result array:
///   [{"image_id": "0001.png", "keypoints": [x0, y0, s0, ..., x16, y16, s16]}, ...]
/// Extra members (category_id, score, box) are ignored. Scores are clamped to
/// [0, 1]; AlphaPose heatmap maxima occasionally exceed 1.
inline std::vector<PoseSkeleton> parse_pose_file(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::parse, e.what());
  }
  if (!doc.is_array()) throw Error(Errc::schema, "pose document must be a JSON array");

  std::vector<PoseSkeleton> out;
  out.reserve(doc.size());
  for (std::size_t r = 0; r < doc.size(); ++r) {
    const auto& rec = doc[r];
    const auto where = [&] {
      std::string s = "record " + std::to_string(r);
      if (rec.is_object() && rec.contains("image_id") && rec["image_id"].is_string()) {
        s += " (image_id '" + rec["image_id"].get<std::string>() + "')";
      }
      return s;
    };
    if (!rec.is_object()) throw Error(Errc::schema, where() + ": not an object");
    if (!rec.contains("image_id") || !rec["image_id"].is_string()) {
      throw Error(Errc::schema, where() + ": missing string image_id");
    }
    if (!rec.contains("keypoints") || !rec["keypoints"].is_array()) {
      throw Error(Errc::schema, where() + ": missing keypoints array");
    }
    const auto& kp = rec["keypoints"];
    if (kp.size() != 3 * kJointCount) {
      throw Error(Errc::schema, where() + ": expected " + std::to_string(3 * kJointCount) +
                                    " keypoint values, got " + std::to_string(kp.size()));
    }
    PoseSkeleton skel;
    skel.image_id = rec["image_id"].get<std::string>();
    for (std::size_t j = 0; j < kJointCount; ++j) {
      double v[3];
      for (std::size_t k = 0; k < 3; ++k) {
        const auto& num = kp[3 * j + k];
        if (!num.is_number()) throw Error(Errc::schema, where() + ": non-numeric keypoint value");
        v[k] = num.get<double>();
        if (!std::isfinite(v[k])) throw Error(Errc::schema, where() + ": non-finite keypoint value");
      }
      skel.keypoints[j] = {v[0], v[1], std::clamp(v[2], 0.0, 1.0)};
    }
    out.push_back(std::move(skel));
  }
  return out;
}

inline nlohmann::json to_json(const PoseSkeleton& skel) {
  nlohmann::json kp = nlohmann::json::array();
  for (const auto& k : skel.keypoints) {
    kp.push_back(k.x);
    kp.push_back(k.y);
    kp.push_back(k.score);
  }
  return {{"image_id", skel.image_id}, {"keypoints", std::move(kp)}};
}

// ---------------------------------------------------------------------------
// Orientation
// ---------------------------------------------------------------------------

namespace detail {

inline bool confident(const Keypoint& k, double threshold) { return k.score >= threshold; }

inline Point midpoint(const Keypoint& a, const Keypoint& b) {
  return {(a.x + b.x) / 2.0, (a.y + b.y) / 2.0};
}

}  // namespace detail

/// Ratio of shoulder length to upper-body height (shoulder midpoint to hip
/// midpoint). Requires confident shoulders and hips.
inline double shoulder_torso_ratio(const PoseSkeleton& skel, const GeometryOptions& opt = {}) {
  for (Joint j : {Joint::left_shoulder, Joint::right_shoulder, Joint::left_hip, Joint::right_hip}) {
    if (!detail::confident(skel[j], opt.confidence_threshold)) {
      throw Error(Errc::undetectable_pose,
                  skel.image_id + ": joint " + std::to_string(static_cast<std::size_t>(j)) +
                      " below confidence threshold");
    }
  }
  const auto& ls = skel[Joint::left_shoulder];
  const auto& rs = skel[Joint::right_shoulder];
  const double shoulder_len = std::hypot(ls.x - rs.x, ls.y - rs.y);
  const Point sh = detail::midpoint(ls, rs);
  const Point hip = detail::midpoint(skel[Joint::left_hip], skel[Joint::right_hip]);
  const double torso = std::hypot(sh.x - hip.x, sh.y - hip.y);
  if (!(torso > 0.0)) throw Error(Errc::undetectable_pose, skel.image_id + ": zero upper-body height");
  return shoulder_len / torso;
}

/// Sideways when the shoulder/torso ratio is below the threshold; otherwise
/// Frontal iff the left shoulder lies strictly to the right (larger x) of the
/// right shoulder in image coordinates.
inline Orientation classify_orientation(const PoseSkeleton& skel, const GeometryOptions& opt = {}) {
  if (shoulder_torso_ratio(skel, opt) < opt.sideways_ratio) return Orientation::sideways;
  return skel[Joint::left_shoulder].x > skel[Joint::right_shoulder].x ? Orientation::frontal
                                                                       : Orientation::backside;
}

// ---------------------------------------------------------------------------
// Head ROI
// ---------------------------------------------------------------------------

inline Point head_center(const PoseSkeleton& skel, const GeometryOptions& opt = {}) {
  const auto& le = skel[Joint::left_ear];
  const auto& re = skel[Joint::right_ear];
  if (!detail::confident(le, opt.confidence_threshold) || !detail::confident(re, opt.confidence_threshold)) {
    throw Error(Errc::head_undetectable, skel.image_id + ": ear keypoint below confidence threshold");
  }
  return detail::midpoint(le, re);
}

inline double body_silhouette_height(const PoseSkeleton& skel, long image_h, const GeometryOptions& opt) {
  if (opt.body_height == BodyHeightSource::image) return static_cast<double>(image_h);
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& k : skel.keypoints) {
    if (!detail::confident(k, opt.confidence_threshold)) continue;
    lo = any ? std::min(lo, k.y) : k.y;
    hi = any ? std::max(hi, k.y) : k.y;
    any = true;
  }
  return any ? hi - lo : 0.0;
}

/// Side of the square head box: 2/9 of the silhouette height, rounded half up.
inline long head_side(double silhouette_height) {
  return static_cast<long>(std::floor(2.0 * silhouette_height / 9.0 + 0.5));
}

/// Square box of the given side centred on `center`, origin floored, then
/// clipped to the image.
inline HeadRoi square_roi(Point center, long side, long image_w, long image_h) {
  HeadRoi roi;
  roi.center = center;
  roi.side = side;
  roi.x0 = static_cast<long>(std::floor(center.x - static_cast<double>(side) / 2.0));
  roi.y0 = static_cast<long>(std::floor(center.y - static_cast<double>(side) / 2.0));
  roi.x1 = roi.x0 + side;
  roi.y1 = roi.y0 + side;
  roi.x0 = std::clamp(roi.x0, 0L, image_w);
  roi.x1 = std::clamp(roi.x1, 0L, image_w);
  roi.y0 = std::clamp(roi.y0, 0L, image_h);
  roi.y1 = std::clamp(roi.y1, 0L, image_h);
  if (roi.x0 >= roi.x1 || roi.y0 >= roi.y1) {
    throw Error(Errc::degenerate_roi, "head box of side " + std::to_string(side) + " is empty after clipping");
  }
  return roi;
}

inline HeadRoi head_roi(const PoseSkeleton& skel, long image_w, long image_h, const GeometryOptions& opt = {}) {
  if (image_w < 1 || image_h < 1) throw Error(Errc::invalid_input, "image dimensions must be positive");
  const Point c = head_center(skel, opt);
  const long side = head_side(body_silhouette_height(skel, image_h, opt));
  if (side < 1) throw Error(Errc::degenerate_roi, skel.image_id + ": head box side rounds to zero");
  return square_roi(c, side, image_w, image_h);
}

}  // namespace wildface
