#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wildface/error.hpp"
#include "wildface/text.hpp"

namespace wildface {

/// Decoded 8-bit RGB image, row-major, channels interleaved.
class RgbImage {
 public:
  using Pixel = std::array<std::uint8_t, 3>;

  RgbImage() = default;
  RgbImage(long width, long height, Pixel fill = {0, 0, 0}) : width_(width), height_(height) {
    if (width < 1 || height < 1) throw Error(Errc::invalid_input, "image dimensions must be positive");
    data_.resize(static_cast<std::size_t>(width * height) * 3);
    for (std::size_t i = 0; i < data_.size(); i += 3) {
      data_[i] = fill[0];
      data_[i + 1] = fill[1];
      data_[i + 2] = fill[2];
    }
  }
  RgbImage(long width, long height, std::vector<std::uint8_t> interleaved)
      : width_(width), height_(height), data_(std::move(interleaved)) {
    if (width < 1 || height < 1) throw Error(Errc::invalid_input, "image dimensions must be positive");
    if (data_.size() != static_cast<std::size_t>(width * height) * 3) {
      throw Error(Errc::invalid_input, "pixel buffer size does not match dimensions");
    }
  }

  long width() const { return width_; }
  long height() const { return height_; }
  bool empty() const { return data_.empty(); }

  Pixel at(long x, long y) const {
    const std::size_t i = index(x, y);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set(long x, long y, Pixel p) {
    const std::size_t i = index(x, y);
    data_[i] = p[0];
    data_[i + 1] = p[1];
    data_[i + 2] = p[2];
  }

  const std::vector<std::uint8_t>& data() const { return data_; }

  /// Copy of the half-open region [x0, x1) x [y0, y1).
  RgbImage crop(long x0, long y0, long x1, long y1) const {
    if (x0 < 0 || y0 < 0 || x1 > width_ || y1 > height_ || x0 >= x1 || y0 >= y1) {
      throw Error(Errc::invalid_input, "crop box outside image");
    }
    std::vector<std::uint8_t> out;
    out.reserve(static_cast<std::size_t>((x1 - x0) * (y1 - y0)) * 3);
    for (long y = y0; y < y1; ++y) {
      const auto row = data_.begin() + static_cast<std::ptrdiff_t>(index(x0, y));
      out.insert(out.end(), row, row + (x1 - x0) * 3);
    }
    return RgbImage(x1 - x0, y1 - y0, std::move(out));
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  std::size_t index(long x, long y) const { return (static_cast<std::size_t>(y * width_ + x)) * 3; }

  long width_ = 0;
  long height_ = 0;
  std::vector<std::uint8_t> data_;
};

struct QualityRecord {
  std::string image_id;
  double resolution = 0.0;
  double luminosity = 0.0;
  double blurriness = 0.0;
};

enum class QualityFeature { resolution, luminosity, blurriness };

inline constexpr std::array<QualityFeature, 3> kQualityFeatures = {
    QualityFeature::resolution, QualityFeature::luminosity, QualityFeature::blurriness};

constexpr const char* to_string(QualityFeature f) {
  switch (f) {
    case QualityFeature::resolution: return "resolution";
    case QualityFeature::luminosity: return "luminosity";
    case QualityFeature::blurriness: return "blurriness";
  }
  return "";
}

inline double feature_value(const QualityRecord& r, QualityFeature f) {
  switch (f) {
    case QualityFeature::resolution: return r.resolution;
    case QualityFeature::luminosity: return r.luminosity;
    case QualityFeature::blurriness: return r.blurriness;
  }
  return 0.0;
}

inline double resolution(const RgbImage& img) {
  return static_cast<double>(img.width()) * static_cast<double>(img.height());
}

/// Perceived brightness of one pixel in [0, 1]. Swap this out to change the
/// brightness model used by luminosity().
struct PerceivedBrightness {
  double operator()(RgbImage::Pixel p) const {
    const double r = p[0], g = p[1], b = p[2];
    return std::min(1.0, std::sqrt(0.299 * r * r + 0.587 * g * g + 0.114 * b * b) / 255.0);
  }
};

template <typename Brightness = PerceivedBrightness>
double luminosity(const RgbImage& img, Brightness brightness = {}) {
  if (img.empty()) throw Error(Errc::invalid_input, "empty image");
  const auto& d = img.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < d.size(); i += 3) sum += brightness({d[i], d[i + 1], d[i + 2]});
  return sum / (resolution(img));
}

namespace detail {

// BT.601 grey scaled by 1000 so the Laplacian runs in exact integer arithmetic.
inline std::int64_t grey_milli(RgbImage::Pixel p) {
  return 299 * std::int64_t{p[0]} + 587 * std::int64_t{p[1]} + 114 * std::int64_t{p[2]};
}

}  // namespace detail

/// Population variance of the 4-neighbour Laplacian response over the valid
/// (unpadded) region of the BT.601 grey image.
inline double blurriness(const RgbImage& img) {
  const long w = img.width(), h = img.height();
  if (w < 3 || h < 3) {
    throw Error(Errc::too_small, "blurriness needs at least 3x3 pixels, got " + std::to_string(w) + "x" +
                                     std::to_string(h));
  }
  std::vector<std::int64_t> grey(static_cast<std::size_t>(w * h));
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) grey[static_cast<std::size_t>(y * w + x)] = detail::grey_milli(img.at(x, y));

  const auto g = [&](long x, long y) { return grey[static_cast<std::size_t>(y * w + x)]; };
  __int128 sum = 0;
  __int128 sum_sq = 0;
  for (long y = 1; y + 1 < h; ++y) {
    for (long x = 1; x + 1 < w; ++x) {
      const std::int64_t r = g(x, y - 1) + g(x - 1, y) + g(x + 1, y) + g(x, y + 1) - 4 * g(x, y);
      sum += r;
      sum_sq += static_cast<__int128>(r) * r;
    }
  }
  const __int128 n = static_cast<__int128>(w - 2) * (h - 2);
  // var = (n*S2 - S1^2) / n^2, then undo the 1000x grey scale.
  const __int128 numer = n * sum_sq - sum * sum;
  return static_cast<double>(static_cast<long double>(numer) / (static_cast<long double>(n) * n * 1e6L));
}

inline QualityRecord quality_record(std::string image_id, const RgbImage& img) {
  return {std::move(image_id), resolution(img), luminosity(img), blurriness(img)};
}

// ---------------------------------------------------------------------------
// Dataset statistics
// ---------------------------------------------------------------------------

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct FeatureStats {
  MeanStd normalized;
  double pooled_min = 0.0;
  double pooled_max = 0.0;
};

struct DatasetQualityStats {
  std::string dataset;
  std::size_t count = 0;
  FeatureStats resolution;
  FeatureStats luminosity;
  FeatureStats blurriness;

  const FeatureStats& operator[](QualityFeature f) const {
    switch (f) {
      case QualityFeature::resolution: return resolution;
      case QualityFeature::luminosity: return luminosity;
      case QualityFeature::blurriness: return blurriness;
    }
    return resolution;
  }
  FeatureStats& operator[](QualityFeature f) {
    return const_cast<FeatureStats&>(std::as_const(*this)[f]);
  }
};

struct PooledRange {
  double min = 0.0;
  double max = 0.0;

  double normalize(double v) const { return max > min ? (v - min) / (max - min) : 0.0; }
};

/// Min-max normalises every value against the range pooled over all groups and
/// returns the per-group mean and population standard deviation.
inline std::vector<MeanStd> pooled_normalized_stats(const std::vector<std::vector<double>>& groups,
                                                    PooledRange* range_out = nullptr) {
  PooledRange range;
  bool any = false;
  for (const auto& g : groups) {
    for (double v : g) {
      range.min = any ? std::min(range.min, v) : v;
      range.max = any ? std::max(range.max, v) : v;
      any = true;
    }
  }
  if (!any) throw Error(Errc::empty_stats, "no values to normalise");

  std::vector<MeanStd> out;
  out.reserve(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    if (g.empty()) throw Error(Errc::empty_stats, "group " + std::to_string(gi) + " is empty");
    double sum = 0.0;
    for (double v : g) sum += range.normalize(v);
    const double mean = sum / static_cast<double>(g.size());
    double ss = 0.0;
    for (double v : g) {
      const double d = range.normalize(v) - mean;
      ss += d * d;
    }
    out.push_back({mean, std::sqrt(ss / static_cast<double>(g.size()))});
  }
  if (range_out) *range_out = range;
  return out;
}

struct QualityGroup {
  std::string dataset;
  std::vector<QualityRecord> records;
};

inline std::vector<DatasetQualityStats> dataset_stats(const std::vector<QualityGroup>& groups) {
  std::vector<DatasetQualityStats> out(groups.size());
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    out[gi].dataset = groups[gi].dataset;
    out[gi].count = groups[gi].records.size();
  }
  for (QualityFeature f : kQualityFeatures) {
    std::vector<std::vector<double>> values(groups.size());
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      for (const auto& r : groups[gi].records) values[gi].push_back(feature_value(r, f));
    }
    PooledRange range;
    const auto stats = pooled_normalized_stats(values, &range);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      out[gi][f] = {stats[gi], range.min, range.max};
    }
  }
  return out;
}

/// Table-style report: one row per (dataset, feature).
inline std::string stats_to_csv(const std::vector<DatasetQualityStats>& stats) {
  std::ostringstream os;
  os << "dataset,feature,mean,std,count,pooled_min,pooled_max\n";
  for (const auto& s : stats) {
    for (QualityFeature f : kQualityFeatures) {
      const auto& fs = s[f];
      os << text::csv_escape(s.dataset) << ',' << to_string(f) << ',' << text::fixed(fs.normalized.mean, 6) << ','
         << text::fixed(fs.normalized.std, 6) << ',' << s.count << ',' << text::fixed(fs.pooled_min, 6) << ','
         << text::fixed(fs.pooled_max, 6) << '\n';
    }
  }
  return os.str();
}

inline nlohmann::ordered_json stats_to_json(const std::vector<DatasetQualityStats>& stats) {
  auto rows = nlohmann::ordered_json::array();
  for (const auto& s : stats) {
    for (QualityFeature f : kQualityFeatures) {
      const auto& fs = s[f];
      rows.push_back({{"dataset", s.dataset},
                      {"feature", to_string(f)},
                      {"mean", fs.normalized.mean},
                      {"std", fs.normalized.std},
                      {"count", s.count},
                      {"pooled_min", fs.pooled_min},
                      {"pooled_max", fs.pooled_max}});
    }
  }
  return rows;
}

}  // namespace wildface
