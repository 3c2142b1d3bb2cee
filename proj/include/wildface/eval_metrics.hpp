#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "wildface/error.hpp"
#include "wildface/text.hpp"

namespace wildface {

/// Counts for one binary attribute; positives are label 1 (female).
struct GenderConfusion {
  std::size_t tp = 0;     // correctly predicted positives
  std::size_t p = 0;      // positives
  std::size_t tn = 0;     // correctly predicted negatives
  std::size_t n_neg = 0;  // negatives

  friend bool operator==(const GenderConfusion&, const GenderConfusion&) = default;
};

inline GenderConfusion confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw Error(Errc::invalid_input, "prediction/label length mismatch: " + std::to_string(predictions.size()) +
                                         " vs " + std::to_string(labels.size()));
  }
  if (labels.empty()) throw Error(Errc::invalid_input, "no predictions");
  GenderConfusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if ((labels[i] != 0 && labels[i] != 1) || (predictions[i] != 0 && predictions[i] != 1)) {
      throw Error(Errc::invalid_input, "labels and predictions must be 0 or 1");
    }
    if (labels[i] == 1) {
      ++c.p;
      c.tp += predictions[i] == 1;
    } else {
      ++c.n_neg;
      c.tn += predictions[i] == 0;
    }
  }
  return c;
}

/// Label-based mean accuracy for a single attribute: the average of the
/// positive-class and negative-class recall.
inline double mean_accuracy(const GenderConfusion& c) {
  if (c.p == 0 || c.n_neg == 0) {
    throw Error(Errc::undefined_class, "mean accuracy needs both classes (p=" + std::to_string(c.p) +
                                           ", n=" + std::to_string(c.n_neg) + ")");
  }
  return (static_cast<double>(c.tp) / static_cast<double>(c.p) +
          static_cast<double>(c.tn) / static_cast<double>(c.n_neg)) /
         2.0;
}

/// Share of the baseline's remaining error removed by the new model, in
/// percent. Inputs are accuracies in percent.
inline double error_reduction(double base_percent, double new_percent) {
  if (!(base_percent >= 0.0 && base_percent < 100.0)) {
    throw Error(Errc::undefined_ratio, "baseline accuracy must lie in [0, 100)");
  }
  if (!(new_percent <= 100.0)) throw Error(Errc::invalid_input, "new accuracy above 100%");
  return 100.0 * (new_percent - base_percent) / (100.0 - base_percent);
}

struct PredictionRow {
  std::string image_id;
  int prediction = 0;
  int label = 0;
};

/// Predictions CSV: header "image_id,prediction,label", one row per image.
inline std::vector<PredictionRow> parse_predictions_csv(std::string_view doc) {
  const auto rows = text::lines(doc);
  if (rows.empty()) throw Error(Errc::parse, "predictions file is empty");
  const auto header = text::csv_split(rows[0]);
  if (!header || *header != std::vector<std::string>{"image_id", "prediction", "label"}) {
    throw Error(Errc::parse, "predictions line 1: expected header 'image_id,prediction,label'");
  }
  std::vector<PredictionRow> out;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (text::is_blank(rows[i])) continue;
    const std::string where = "predictions line " + std::to_string(i + 1);
    const auto f = text::csv_split(rows[i]);
    if (!f || f->size() != 3) throw Error(Errc::parse, where + ": expected 3 columns");
    const auto pred = text::parse_binary_label((*f)[1]);
    const auto label = text::parse_binary_label((*f)[2]);
    if (!pred || !label) throw Error(Errc::parse, where + ": prediction and label must be 0 or 1");
    if (!seen.insert((*f)[0]).second) throw Error(Errc::parse, where + ": duplicate image_id '" + (*f)[0] + "'");
    out.push_back({(*f)[0], *pred, *label});
  }
  return out;
}

inline GenderConfusion confusion(const std::vector<PredictionRow>& rows) {
  std::vector<int> preds, labels;
  preds.reserve(rows.size());
  labels.reserve(rows.size());
  for (const auto& r : rows) {
    preds.push_back(r.prediction);
    labels.push_back(r.label);
  }
  return confusion(preds, labels);
}

}  // namespace wildface
