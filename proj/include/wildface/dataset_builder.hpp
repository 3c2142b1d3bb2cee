#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wildface/error.hpp"
#include "wildface/image_quality.hpp"
#include "wildface/parallel.hpp"
#include "wildface/pose_geometry.hpp"
#include "wildface/text.hpp"

namespace wildface {

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

enum class Split { train, test };

constexpr std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

struct ManifestEntry {
  std::string image_id;
  int label = 0;  // 0 male, 1 female
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct SplitManifest {
  std::string dataset;
  Split split = Split::train;
  std::vector<ManifestEntry> entries;

  std::size_t size() const { return entries.size(); }
};

/// Two-column CSV (image_id, gender). A leading "image_id,gender" header is
/// optional.
inline SplitManifest parse_manifest_csv(std::string_view doc, std::string dataset, Split split) {
  SplitManifest m{std::move(dataset), split, {}};
  std::unordered_set<std::string> seen;
  const auto rows = text::lines(doc);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (text::is_blank(rows[i])) continue;
    const auto fields = text::csv_split(rows[i]);
    const std::string where = "manifest line " + std::to_string(i + 1);
    if (!fields || fields->size() != 2) throw Error(Errc::parse, where + ": expected 2 columns");
    if (i == 0 && (*fields)[0] == "image_id") continue;
    const auto label = text::parse_binary_label((*fields)[1]);
    if (!label) throw Error(Errc::parse, where + ": gender must be 0 or 1");
    if (!seen.insert((*fields)[0]).second) {
      throw Error(Errc::invalid_input, where + ": duplicate image_id '" + (*fields)[0] + "'");
    }
    m.entries.push_back({(*fields)[0], *label});
  }
  return m;
}

inline std::string write_manifest_csv(const SplitManifest& m) {
  std::ostringstream os;
  os << "image_id,gender\n";
  for (const auto& e : m.entries) os << text::csv_escape(e.image_id) << ',' << e.label << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Metadata
// ---------------------------------------------------------------------------

struct PixelBox {
  long x0 = 0;
  long y0 = 0;
  long x1 = 0;
  long y1 = 0;

  long width() const { return x1 - x0; }
  long height() const { return y1 - y0; }
  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

struct MetadataRecord {
  std::string image_id;
  std::optional<Orientation> orientation;
  std::optional<Point> head_center;
  std::optional<PixelBox> head_box;

  friend bool operator==(const MetadataRecord&, const MetadataRecord&) = default;
};

/// Centres are stored at 0.01 px so the CSV form is lossless.
inline double quantize_centi(double v) { return std::round(v * 100.0) / 100.0; }

inline constexpr std::string_view kMetadataHeader = "image_id,orientation,cx,cy,x0,y0,x1,y1";

inline std::string write_metadata(const std::vector<MetadataRecord>& records) {
  std::ostringstream os;
  os << kMetadataHeader << '\n';
  for (const auto& r : records) {
    os << text::csv_escape(r.image_id) << ',';
    if (r.orientation) os << to_string(*r.orientation);
    os << ',';
    if (r.head_center) os << text::fixed(r.head_center->x, 2) << ',' << text::fixed(r.head_center->y, 2);
    else os << ',';
    os << ',';
    if (r.head_box) os << r.head_box->x0 << ',' << r.head_box->y0 << ',' << r.head_box->x1 << ',' << r.head_box->y1;
    else os << ",,,";
    os << '\n';
  }
  return os.str();
}

inline std::vector<MetadataRecord> read_metadata(std::string_view doc) {
  const auto rows = text::lines(doc);
  if (rows.empty() || rows[0] != kMetadataHeader) {
    throw Error(Errc::parse, "metadata line 1: expected header '" + std::string(kMetadataHeader) + "'");
  }
  std::vector<MetadataRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].empty()) continue;
    const std::string where = "metadata line " + std::to_string(i + 1);
    const auto f = text::csv_split(rows[i]);
    if (!f || f->size() != 8) throw Error(Errc::parse, where + ": expected 8 columns");
    MetadataRecord r;
    r.image_id = (*f)[0];
    if (!(*f)[1].empty()) {
      r.orientation = parse_orientation((*f)[1]);
      if (!r.orientation) throw Error(Errc::parse, where + ": unknown orientation '" + (*f)[1] + "'");
    }
    if (!(*f)[2].empty() || !(*f)[3].empty()) {
      const auto cx = text::parse_double((*f)[2]);
      const auto cy = text::parse_double((*f)[3]);
      if (!cx || !cy) throw Error(Errc::parse, where + ": bad head centre");
      r.head_center = Point{*cx, *cy};
    }
    const bool any_box = !(*f)[4].empty() || !(*f)[5].empty() || !(*f)[6].empty() || !(*f)[7].empty();
    if (any_box) {
      long v[4];
      for (int k = 0; k < 4; ++k) {
        const auto n = text::parse_int((*f)[4 + k]);
        if (!n) throw Error(Errc::parse, where + ": bad head box");
        v[k] = static_cast<long>(*n);
      }
      r.head_box = PixelBox{v[0], v[1], v[2], v[3]};
      if (r.head_box->x0 >= r.head_box->x1 || r.head_box->y0 >= r.head_box->y1) {
        throw Error(Errc::parse, where + ": empty head box");
      }
      if (r.orientation != Orientation::frontal) throw Error(Errc::parse, where + ": head box on non-frontal record");
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frontal subset
// ---------------------------------------------------------------------------

struct ImageSize {
  long width = 0;
  long height = 0;
};

/// Returns the dimensions of an image, or nullopt when it is unavailable.
using ImageSizeLookup = std::function<std::optional<ImageSize>(const std::string& image_id)>;

/// Labels one skeleton and, for frontal poses with a known image size,
/// attaches the head box. Failures leave the corresponding fields empty.
inline MetadataRecord describe_pose(const PoseSkeleton& pose, std::optional<ImageSize> size,
                                    const GeometryOptions& opt = {}) {
  MetadataRecord rec;
  rec.image_id = pose.image_id;
  try {
    rec.orientation = classify_orientation(pose, opt);
  } catch (const Error&) {
    return rec;
  }
  if (rec.orientation != Orientation::frontal || !size) return rec;
  try {
    const HeadRoi roi = head_roi(pose, size->width, size->height, opt);
    rec.head_center = Point{quantize_centi(roi.center.x), quantize_centi(roi.center.y)};
    rec.head_box = PixelBox{roi.x0, roi.y0, roi.x1, roi.y1};
  } catch (const Error&) {
    // Frontal without a detectable head: kept, no box.
  }
  return rec;
}

struct FrontalSubset {
  SplitManifest manifest;
  std::vector<MetadataRecord> metadata;  // one per input image, sorted by image_id
};

/// Keeps the manifest entries whose pose is Frontal. `image_size` may be empty,
/// in which case no head boxes are computed.
inline FrontalSubset build_frontal_subset(const SplitManifest& manifest, const std::vector<PoseSkeleton>& poses,
                                          const GeometryOptions& opt = {}, const ImageSizeLookup& image_size = {}) {
  std::unordered_map<std::string, const PoseSkeleton*> by_id;
  for (const auto& p : poses) {
    if (!by_id.emplace(p.image_id, &p).second) {
      throw Error(Errc::ambiguity, "more than one pose record for image_id '" + p.image_id + "'");
    }
  }
  FrontalSubset out;
  out.manifest.dataset = manifest.dataset;
  out.manifest.split = manifest.split;
  out.metadata.reserve(manifest.size());
  for (const auto& e : manifest.entries) {
    const auto it = by_id.find(e.image_id);
    if (it == by_id.end()) {
      out.metadata.push_back({e.image_id, std::nullopt, std::nullopt, std::nullopt});
      continue;
    }
    std::optional<ImageSize> size;
    if (image_size) size = image_size(e.image_id);
    auto rec = describe_pose(*it->second, size, opt);
    if (rec.orientation == Orientation::frontal) out.manifest.entries.push_back(e);
    out.metadata.push_back(std::move(rec));
  }
  std::stable_sort(out.metadata.begin(), out.metadata.end(),
                   [](const MetadataRecord& a, const MetadataRecord& b) { return a.image_id < b.image_id; });
  return out;
}

// ---------------------------------------------------------------------------
// Head crops
// ---------------------------------------------------------------------------

struct HeadCrop {
  std::string image_id;
  RgbImage crop;
};

struct HeadCropResult {
  std::vector<HeadCrop> crops;        // metadata order
  std::vector<std::string> skipped;   // frontal records without a box
};

/// Returns the image for an id, or nullptr when it is unavailable.
using ImageLookup = std::function<const RgbImage*(const std::string& image_id)>;

inline HeadCropResult extract_head_crops(const ImageLookup& images, const std::vector<MetadataRecord>& metadata,
                                         std::size_t workers = 1) {
  std::vector<const MetadataRecord*> todo;
  HeadCropResult out;
  for (const auto& r : metadata) {
    if (r.orientation != Orientation::frontal) continue;
    if (!r.head_box) {
      out.skipped.push_back(r.image_id);
      continue;
    }
    todo.push_back(&r);
  }
  std::vector<const RgbImage*> sources(todo.size());
  std::string missing;
  for (std::size_t i = 0; i < todo.size(); ++i) {
    sources[i] = images(todo[i]->image_id);
    if (!sources[i]) missing += (missing.empty() ? "" : ", ") + todo[i]->image_id;
  }
  if (!missing.empty()) throw Error(Errc::missing_asset, "no image for: " + missing);

  out.crops.resize(todo.size());
  parallel_for(todo.size(), workers, [&](std::size_t i) {
    const PixelBox& b = *todo[i]->head_box;
    const RgbImage& src = *sources[i];
    if (b.x0 < 0 || b.y0 < 0 || b.x1 > src.width() || b.y1 > src.height()) {
      throw Error(Errc::invalid_input, todo[i]->image_id + ": head box outside image");
    }
    out.crops[i] = {todo[i]->image_id, src.crop(b.x0, b.y0, b.x1, b.y1)};
  });
  return out;
}

// ---------------------------------------------------------------------------
// Ratio report
// ---------------------------------------------------------------------------

/// Exact non-negative rational with decimal rendering.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  /// Decimal string rounded half-to-even at `decimals` places, computed
  /// exactly from the integers.
  std::string format(int decimals = 3) const {
    unsigned __int128 scale = 1;
    for (int i = 0; i < decimals; ++i) scale *= 10;
    const unsigned __int128 scaled = static_cast<unsigned __int128>(num) * scale;
    unsigned __int128 q = scaled / den;
    const unsigned __int128 r = scaled % den;
    if (2 * r > den || (2 * r == den && (q % 2 == 1))) ++q;
    const auto whole = static_cast<std::uint64_t>(q / scale);
    auto frac = static_cast<std::uint64_t>(q % scale);
    std::string digits(static_cast<std::size_t>(decimals), '0');
    for (int i = decimals - 1; i >= 0; --i) {
      digits[static_cast<std::size_t>(i)] = static_cast<char>('0' + frac % 10);
      frac /= 10;
    }
    return std::to_string(whole) + (decimals > 0 ? "." + digits : "");
  }
};

inline Ratio make_ratio(std::uint64_t num, std::uint64_t den, std::string_view what) {
  if (den == 0) throw Error(Errc::undefined_ratio, std::string(what) + " has a zero denominator");
  return {num, den};
}

struct SplitCounts {
  std::uint64_t train = 0;
  std::uint64_t test = 0;
  std::uint64_t frontal_train = 0;
  std::uint64_t frontal_test = 0;
};

struct RatioRow {
  std::string dataset;
  SplitCounts counts;
  Ratio frontal_train;     // frontal / PAR, train split
  Ratio frontal_test;      // frontal / PAR, test split
  Ratio test_all;          // test / (train + test), original
  Ratio test_all_frontal;  // test / (train + test), frontal
};

inline RatioRow ratio_row(std::string dataset, const SplitCounts& c) {
  if (c.frontal_train > c.train || c.frontal_test > c.test) {
    throw Error(Errc::invalid_input, dataset + ": frontal split larger than original");
  }
  RatioRow row{std::move(dataset), c, {}, {}, {}, {}};
  row.frontal_train = make_ratio(c.frontal_train, c.train, row.dataset + " frontal/PAR train ratio");
  row.frontal_test = make_ratio(c.frontal_test, c.test, row.dataset + " frontal/PAR test ratio");
  row.test_all = make_ratio(c.test, c.train + c.test, row.dataset + " test/all ratio");
  row.test_all_frontal =
      make_ratio(c.frontal_test, c.frontal_train + c.frontal_test, row.dataset + " frontal test/all ratio");
  return row;
}

struct ManifestPair {
  SplitManifest train;
  SplitManifest test;
};

inline RatioRow ratio_report(const ManifestPair& original, const ManifestPair& frontal) {
  return ratio_row(original.train.dataset,
                   {original.train.size(), original.test.size(), frontal.train.size(), frontal.test.size()});
}

inline std::string ratio_report_csv(const std::vector<RatioRow>& rows) {
  std::ostringstream os;
  os << "dataset,train_images,frontal_train_images,train_ratio,test_images,frontal_test_images,test_ratio,"
        "test_all_ratio,frontal_test_all_ratio\n";
  for (const auto& r : rows) {
    os << text::csv_escape(r.dataset) << ',' << r.counts.train << ',' << r.counts.frontal_train << ','
       << r.frontal_train.format() << ',' << r.counts.test << ',' << r.counts.frontal_test << ','
       << r.frontal_test.format() << ',' << r.test_all.format() << ',' << r.test_all_frontal.format() << '\n';
  }
  return os.str();
}

inline nlohmann::ordered_json ratio_report_json(const std::vector<RatioRow>& rows) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    out.push_back({{"dataset", r.dataset},
                   {"train_images", r.counts.train},
                   {"frontal_train_images", r.counts.frontal_train},
                   {"train_ratio", r.frontal_train.format()},
                   {"test_images", r.counts.test},
                   {"frontal_test_images", r.counts.frontal_test},
                   {"test_ratio", r.frontal_test.format()},
                   {"test_all_ratio", r.test_all.format()},
                   {"frontal_test_all_ratio", r.test_all_frontal.format()}});
  }
  return out;
}

}  // namespace wildface
