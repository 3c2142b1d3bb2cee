// wildface: frontal/face dataset tooling, quality statistics, gender metrics and
// face-attention-module self checks.
//
// Exit codes: 0 success, 1 verification or metric failure, 2 usage or I/O error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "CLI11.hpp"
#include "wildface/wildface.hpp"

namespace fs = std::filesystem;
using namespace wildface;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::undefined_ratio:
    case Errc::undefined_class:
    case Errc::non_finite:
    case Errc::training_failure:
      return kExitFailure;
    default:
      return kExitUsage;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io, "cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::io, "cannot write " + path);
  os << content;
  if (!os) throw Error(Errc::io, "failed writing " + path);
}

std::optional<RgbImage> load_rgb(const fs::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty() || bgr.type() != CV_8UC3) return std::nullopt;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(bgr.rows) * bgr.cols * 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * bgr.cols + x) * 3;
      rgb[i] = row[x][2];
      rgb[i + 1] = row[x][1];
      rgb[i + 2] = row[x][0];
    }
  }
  return RgbImage(bgr.cols, bgr.rows, std::move(rgb));
}

bool save_png(const fs::path& path, const RgbImage& img) {
  cv::Mat bgr(static_cast<int>(img.height()), static_cast<int>(img.width()), CV_8UC3);
  for (long y = 0; y < img.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(static_cast<int>(y));
    for (long x = 0; x < img.width(); ++x) {
      const auto p = img.at(x, y);
      row[x] = cv::Vec3b(p[2], p[1], p[0]);
    }
  }
  return cv::imwrite(path.string(), bgr);
}

/// `<dir>/<id>`, or the id with a common image extension appended.
std::optional<fs::path> resolve_image(const fs::path& dir, const std::string& image_id) {
  const fs::path direct = dir / image_id;
  if (fs::is_regular_file(direct)) return direct;
  for (const char* ext : {".png", ".jpg", ".jpeg", ".bmp"}) {
    const fs::path p = dir / (image_id + ext);
    if (fs::is_regular_file(p)) return p;
  }
  return std::nullopt;
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" || ext == ".tiff";
}

/// First pose per image id wins; order of first appearance is kept.
std::vector<PoseSkeleton> first_pose_per_image(std::vector<PoseSkeleton> poses) {
  std::unordered_set<std::string> seen;
  std::vector<PoseSkeleton> out;
  for (auto& p : poses)
    if (seen.insert(p.image_id).second) out.push_back(std::move(p));
  return out;
}

void add_geometry_options(CLI::App* cmd, GeometryOptions& geo) {
  cmd->add_option("--conf-threshold", geo.confidence_threshold, "Minimum keypoint confidence")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--body-height", geo.body_height, "Body silhouette height source")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, BodyHeightSource>{{"image", BodyHeightSource::image},
                                                  {"keypoints", BodyHeightSource::keypoints}},
          CLI::ignore_case))
      ->default_str("image");
}

// ---------------------------------------------------------------------------

struct OrientArgs {
  std::string poses;
  std::string out;
  GeometryOptions geo;
};

int cmd_orient(const OrientArgs& a) {
  const auto poses = first_pose_per_image(parse_pose_file(read_file(a.poses)));
  std::ostringstream csv;
  csv << "image_id,orientation\n";
  std::map<std::string, std::size_t> counts{{"Frontal", 0}, {"Sideways", 0}, {"Backside", 0}, {"Undetectable", 0}};
  for (const auto& p : poses) {
    csv << text::csv_escape(p.image_id) << ',';
    try {
      const Orientation o = classify_orientation(p, a.geo);
      csv << to_string(o);
      ++counts[std::string(to_string(o))];
    } catch (const Error& e) {
      ++counts["Undetectable"];
      std::cerr << "warning: " << e.what() << '\n';
    }
    csv << '\n';
  }
  write_output(a.out, csv.str());
  std::ostream& summary = a.out.empty() || a.out == "-" ? std::cerr : std::cout;
  for (const char* k : {"Frontal", "Sideways", "Backside", "Undetectable"}) summary << k << ": " << counts[k] << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct HeadsArgs {
  std::string poses;
  std::string images;
  std::string out;
  std::string metadata;
  GeometryOptions geo;
};

int cmd_heads(const HeadsArgs& a) {
  const auto poses = first_pose_per_image(parse_pose_file(read_file(a.poses)));
  const fs::path out_dir(a.out);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw Error(Errc::io, "cannot create output directory " + a.out);
  if (!fs::is_directory(a.images)) throw Error(Errc::io, "image directory " + a.images + " does not exist");

  struct Outcome {
    MetadataRecord record;
    std::string warning;
    bool cropped = false;
  };
  std::vector<Outcome> outcomes(poses.size());
  parallel_for(poses.size(), default_worker_count(), [&](std::size_t i) {
    const PoseSkeleton& pose = poses[i];
    Outcome& o = outcomes[i];
    o.record = describe_pose(pose, std::nullopt, a.geo);
    if (o.record.orientation != Orientation::frontal) return;

    const auto path = resolve_image(a.images, pose.image_id);
    if (!path) {
      o.warning = pose.image_id + ": image not found";
      return;
    }
    const auto img = load_rgb(*path);
    if (!img) {
      o.warning = pose.image_id + ": cannot decode " + path->string();
      return;
    }
    o.record = describe_pose(pose, ImageSize{img->width(), img->height()}, a.geo);
    if (!o.record.head_box) {
      o.warning = pose.image_id + ": head not detectable";
      return;
    }
    const auto& b = *o.record.head_box;
    const fs::path crop_path = out_dir / (fs::path(pose.image_id).stem().string() + "_head.png");
    if (!save_png(crop_path, img->crop(b.x0, b.y0, b.x1, b.y1))) {
      o.warning = pose.image_id + ": cannot write " + crop_path.string();
      return;
    }
    o.cropped = true;
  });

  std::vector<MetadataRecord> records;
  std::size_t crops = 0, frontal = 0;
  for (auto& o : outcomes) {
    if (!o.warning.empty()) std::cerr << "warning: " << o.warning << '\n';
    crops += o.cropped;
    frontal += o.record.orientation == Orientation::frontal;
    records.push_back(std::move(o.record));
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const MetadataRecord& x, const MetadataRecord& y) { return x.image_id < y.image_id; });
  const std::string meta_path = a.metadata.empty() ? (out_dir / "metadata.csv").string() : a.metadata;
  write_output(meta_path, write_metadata(records));
  std::cout << "images: " << poses.size() << "\nfrontal: " << frontal << "\ncrops: " << crops
            << "\nskipped: " << frontal - crops << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct QualityArgs {
  std::vector<std::string> dirs;
  std::string out;
  std::string format = "csv";
};

int cmd_quality(const QualityArgs& a) {
  std::vector<QualityGroup> groups;
  for (const auto& spec : a.dirs) {
    QualityGroup g;
    fs::path dir;
    if (const auto eq = spec.find('='); eq != std::string::npos) {
      g.dataset = spec.substr(0, eq);
      dir = spec.substr(eq + 1);
    } else {
      dir = spec;
      g.dataset = fs::path(spec).lexically_normal().filename().string();
      if (g.dataset.empty()) g.dataset = fs::path(spec).lexically_normal().parent_path().filename().string();
    }
    if (!fs::is_directory(dir)) throw Error(Errc::io, "image directory " + dir.string() + " does not exist");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<std::optional<QualityRecord>> records(files.size());
    std::vector<std::string> warnings(files.size());
    parallel_for(files.size(), default_worker_count(), [&](std::size_t i) {
      const auto img = load_rgb(files[i]);
      if (!img) {
        warnings[i] = files[i].string() + ": cannot decode";
        return;
      }
      try {
        records[i] = quality_record(files[i].filename().string(), *img);
      } catch (const Error& e) {
        warnings[i] = files[i].string() + ": " + e.what();
      }
    });
    for (std::size_t i = 0; i < files.size(); ++i) {
      if (!warnings[i].empty()) std::cerr << "warning: " << warnings[i] << '\n';
      if (records[i]) g.records.push_back(std::move(*records[i]));
    }
    if (g.records.empty()) throw Error(Errc::empty_stats, "no usable images in " + dir.string());
    groups.push_back(std::move(g));
  }
  const auto stats = dataset_stats(groups);
  write_output(a.out, a.format == "json" ? stats_to_json(stats).dump(2) + "\n" : stats_to_csv(stats));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct RatiosArgs {
  std::vector<std::string> manifests;
  std::vector<std::string> counts;
  std::string out;
  std::string format = "csv";
};

int cmd_ratios(const RatiosArgs& a) {
  std::vector<RatioRow> rows;
  for (const auto& spec : a.manifests) {
    // name:train.csv:test.csv:frontal_train.csv:frontal_test.csv
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
    if (parts.size() != 5) {
      throw Error(Errc::config, "manifest set must be NAME:TRAIN:TEST:FRONTAL_TRAIN:FRONTAL_TEST, got '" + spec + "'");
    }
    const auto load = [&](const std::string& path, Split split) {
      return parse_manifest_csv(read_file(path), parts[0], split);
    };
    ManifestPair original{load(parts[1], Split::train), load(parts[2], Split::test)};
    ManifestPair frontal{load(parts[3], Split::train), load(parts[4], Split::test)};
    rows.push_back(ratio_report(original, frontal));
  }
  for (const auto& spec : a.counts) {
    // NAME=train,test,frontal_train,frontal_test
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw Error(Errc::config, "counts must be NAME=TRAIN,TEST,FTRAIN,FTEST");
    const auto fields = text::csv_split(spec.substr(eq + 1));
    if (!fields || fields->size() != 4) throw Error(Errc::config, "counts must be NAME=TRAIN,TEST,FTRAIN,FTEST");
    std::uint64_t v[4];
    for (int i = 0; i < 4; ++i) {
      const auto n = text::parse_int((*fields)[static_cast<std::size_t>(i)]);
      if (!n || *n < 0) throw Error(Errc::config, "counts must be non-negative integers");
      v[i] = static_cast<std::uint64_t>(*n);
    }
    rows.push_back(ratio_row(spec.substr(0, eq), {v[0], v[1], v[2], v[3]}));
  }
  if (rows.empty()) throw Error(Errc::config, "give at least one manifest set or --counts entry");
  write_output(a.out, a.format == "json" ? ratio_report_json(rows).dump(2) + "\n" : ratio_report_csv(rows));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct MaArgs {
  std::string predictions;
  std::optional<double> baseline;
  std::vector<std::string> pairs;
  std::string out;
  std::string format = "csv";
};

int cmd_ma(const MaArgs& a) {
  if (a.predictions.empty() && a.pairs.empty()) throw Error(Errc::config, "give --predictions and/or --pair");
  nlohmann::ordered_json js;
  std::ostringstream csv;
  csv << "metric,value\n";

  std::optional<double> ma_percent;
  if (!a.predictions.empty()) {
    const auto rows = parse_predictions_csv(read_file(a.predictions));
    const auto c = confusion(rows);
    const double ma = mean_accuracy(c);
    ma_percent = 100.0 * ma;
    js["samples"] = rows.size();
    js["tp"] = c.tp;
    js["p"] = c.p;
    js["tn"] = c.tn;
    js["n"] = c.n_neg;
    js["mA"] = ma;
    csv << "samples," << rows.size() << "\ntp," << c.tp << "\np," << c.p << "\ntn," << c.tn << "\nn," << c.n_neg
        << "\nmA," << text::fixed(ma, 3) << "\nmA_percent," << text::fixed(*ma_percent, 2) << '\n';
  }

  std::vector<std::pair<double, double>> pairs;
  if (a.baseline) {
    if (!ma_percent) throw Error(Errc::config, "--baseline needs --predictions");
    pairs.emplace_back(*a.baseline, *ma_percent);
  }
  for (const auto& p : a.pairs) {
    const auto colon = p.find(':');
    const auto base = colon == std::string::npos ? std::nullopt : text::parse_double(p.substr(0, colon));
    const auto next = colon == std::string::npos ? std::nullopt : text::parse_double(p.substr(colon + 1));
    if (!base || !next) throw Error(Errc::config, "--pair must be BASE:NEW in percent, got '" + p + "'");
    pairs.emplace_back(*base, *next);
  }
  auto reductions = nlohmann::ordered_json::array();
  for (const auto& [base, next] : pairs) {
    const double r = error_reduction(base, next);
    const std::string base_s = text::fixed(base, 2), next_s = text::fixed(next, 2);
    csv << "error_reduction(" << base_s << "->" << next_s << ")," << text::fixed(r, 2) << '\n';
    reductions.push_back({{"base_percent", base}, {"new_percent", next}, {"error_reduction_percent", r}});
  }
  if (!pairs.empty()) js["error_reductions"] = reductions;
  write_output(a.out, a.format == "json" ? js.dump(2) + "\n" : csv.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct FamcheckArgs {
  std::string dims = "8x4x3";
  std::size_t reduction = 4;
  std::uint64_t seed = 42;
  std::size_t seeds = 1;
  std::size_t cases = 100;
  double step = 1e-4;
  bool corrupt = false;
  bool share_head = false;
  std::string out;
  std::string checkpoint;
};

int cmd_famcheck(const FamcheckArgs& a) {
  const FamDims dims = FamDims::parse(a.dims, a.reduction);
  dims.validate();

  nlohmann::ordered_json js;
  js["dims"] = {{"channels", dims.channels}, {"height", dims.height}, {"width", dims.width},
                {"reduction", dims.reduction}};
  js["seed"] = a.seed;
  bool pass = true;
  auto checks = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < a.seeds; ++k) {
    for (Mode mode : {Mode::eval, Mode::train}) {
      auto [params, cs] = random_check_case(dims, a.seed + k, mode, a.share_head);
      std::optional<GradCorruption> corruption;
      if (a.corrupt) corruption = GradCorruption{};
      const GradReport rep = grad_check(params, cs, a.step, corruption);
      pass = pass && rep.pass;
      auto entry = rep.to_json();
      entry["seed"] = a.seed + k;
      entry["mode"] = mode == Mode::eval ? "eval" : "train";
      checks.push_back(entry);
      if (k == 0 && mode == Mode::eval && !a.checkpoint.empty()) save_checkpoint(a.checkpoint, params);
    }
  }
  js["grad_checks"] = checks;
  const InvariantReport inv = check_fam_invariants(dims, a.seed, a.cases);
  js["invariants"] = inv.to_json();
  pass = pass && inv.pass();
  js["pass"] = pass;
  write_output(a.out, js.dump(2) + "\n");
  std::cerr << (pass ? "famcheck: PASS" : "famcheck: FAIL") << '\n';
  return pass ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frontal/face dataset tooling and face-attention-module checks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "wildface 0.1.0");

  OrientArgs orient;
  auto* c_orient = app.add_subcommand("orient", "Label each pose as Frontal, Sideways or Backside");
  c_orient->add_option("--poses", orient.poses, "Pose JSON file")->required();
  c_orient->add_option("--out", orient.out, "Output CSV ('-' for stdout)")->required();
  add_geometry_options(c_orient, orient.geo);

  HeadsArgs heads;
  auto* c_heads = app.add_subcommand("heads", "Crop head regions from frontal images and write metadata");
  c_heads->add_option("--poses", heads.poses, "Pose JSON file")->required();
  c_heads->add_option("--images", heads.images, "Directory holding the person crops")->required();
  c_heads->add_option("--out", heads.out, "Output directory for crops")->required();
  c_heads->add_option("--metadata", heads.metadata, "Metadata CSV path (default <out>/metadata.csv)");
  add_geometry_options(c_heads, heads.geo);

  QualityArgs quality;
  auto* c_quality = app.add_subcommand("quality", "Resolution/luminosity/blurriness statistics per dataset");
  c_quality->add_option("dirs", quality.dirs, "Image directories, optionally NAME=DIR")->required();
  c_quality->add_option("--out", quality.out, "Output file (default stdout)");
  c_quality->add_option("--format", quality.format)->check(CLI::IsMember({"csv", "json"}))->capture_default_str();

  RatiosArgs ratios;
  auto* c_ratios = app.add_subcommand("ratios", "Test/all and frontal/original image ratios");
  c_ratios->add_option("manifests", ratios.manifests, "NAME:TRAIN:TEST:FRONTAL_TRAIN:FRONTAL_TEST manifest CSVs");
  c_ratios->add_option("--counts", ratios.counts, "NAME=TRAIN,TEST,FRONTAL_TRAIN,FRONTAL_TEST image counts");
  c_ratios->add_option("--out", ratios.out, "Output file (default stdout)");
  c_ratios->add_option("--format", ratios.format)->check(CLI::IsMember({"csv", "json"}))->capture_default_str();

  MaArgs ma;
  auto* c_ma = app.add_subcommand("ma", "Mean accuracy and error reduction");
  c_ma->add_option("--predictions", ma.predictions, "CSV with image_id,prediction,label");
  c_ma->add_option("--baseline", ma.baseline, "Baseline mA in percent to compare against");
  c_ma->add_option("--pair", ma.pairs, "BASE:NEW mA pair in percent (repeatable)");
  c_ma->add_option("--out", ma.out, "Output file (default stdout)");
  c_ma->add_option("--format", ma.format)->check(CLI::IsMember({"csv", "json"}))->capture_default_str();

  FamcheckArgs fam;
  auto* c_fam = app.add_subcommand("famcheck", "Gradient and invariant self-check of the attention module");
  c_fam->add_option("--dims", fam.dims, "Feature dimensions CxHxW")->capture_default_str();
  c_fam->add_option("--reduction", fam.reduction, "Channel reduction of the attention bottleneck")
      ->capture_default_str();
  c_fam->add_option("--seed", fam.seed)->capture_default_str();
  c_fam->add_option("--seeds", fam.seeds, "Number of consecutive seeds to check")->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_fam->add_option("--cases", fam.cases, "Randomised invariant cases")->capture_default_str();
  c_fam->add_option("--step", fam.step, "Finite-difference step")->capture_default_str();
  c_fam->add_flag("--corrupt", fam.corrupt, "Corrupt one analytic gradient (negative control)");
  c_fam->add_flag("--share-head", fam.share_head, "Share the classifier head between both paths");
  c_fam->add_option("--out", fam.out, "Report JSON path (default stdout)");
  c_fam->add_option("--checkpoint", fam.checkpoint, "Write the checked parameters to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_orient->parsed()) return cmd_orient(orient);
    if (c_heads->parsed()) return cmd_heads(heads);
    if (c_quality->parsed()) return cmd_quality(quality);
    if (c_ratios->parsed()) return cmd_ratios(ratios);
    if (c_ma->parsed()) return cmd_ma(ma);
    if (c_fam->parsed()) return cmd_famcheck(fam);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
