#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace wildface;

namespace {

// Recount from scratch with exact rational comparison in mind: returns the
// two recall numerators/denominators.
struct Recount {
  long tp = 0, p = 0, tn = 0, n = 0;
};

Recount recount(const std::vector<int>& pred, const std::vector<int>& label) {
  Recount r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (label[i] == 1) {
      ++r.p;
      if (pred[i] == 1) ++r.tp;
    } else {
      ++r.n;
      if (pred[i] == 0) ++r.tn;
    }
  }
  return r;
}

}  // namespace

TEST(Confusion, Examples) {
  const std::vector<int> y{1, 0, 1};
  EXPECT_EQ(confusion(y, y), (GenderConfusion{2, 2, 1, 1}));
  const std::vector<int> flipped{0, 1, 0};
  const auto c = confusion(flipped, y);
  EXPECT_EQ(c.tp, 0u);
  EXPECT_EQ(c.tn, 0u);
  EXPECT_THROW(confusion(std::vector<int>{1}, y), Error);
  EXPECT_THROW(confusion(std::vector<int>{}, std::vector<int>{}), Error);
}

TEST(MeanAccuracy, Examples) {
  EXPECT_EQ(mean_accuracy({5, 5, 7, 7}), 1.0);
  EXPECT_EQ(mean_accuracy({5, 5, 0, 7}), 0.5);
  EXPECT_DOUBLE_EQ(mean_accuracy({90, 100, 80, 100}), 0.85);
  try {
    mean_accuracy({3, 3, 0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::undefined_class);
  }
}

TEST(MeanAccuracyProperty, BruteForceAndInvariances) {
  std::mt19937_64 rng(55);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng() % 300;
    std::vector<int> pred(n), label(n);
    for (std::size_t k = 0; k < n; ++k) {
      pred[k] = int(rng() % 2);
      label[k] = int(rng() % 2);
    }
    label[0] = 1;
    label[1] = 0;
    const Recount r = recount(pred, label);
    const auto c = confusion(pred, label);
    EXPECT_EQ(c, (GenderConfusion{std::size_t(r.tp), std::size_t(r.p), std::size_t(r.tn), std::size_t(r.n)}));
    const double ma = mean_accuracy(c);
    EXPECT_EQ(ma, (double(r.tp) / double(r.p) + double(r.tn) / double(r.n)) / 2.0);

    const std::size_t k = 2 + rng() % 4;
    std::vector<int> pred_k, label_k;
    for (std::size_t rep = 0; rep < k; ++rep) {
      pred_k.insert(pred_k.end(), pred.begin(), pred.end());
      label_k.insert(label_k.end(), label.begin(), label.end());
    }
    EXPECT_DOUBLE_EQ(mean_accuracy(confusion(pred_k, label_k)), ma);

    std::vector<int> pred_s(n), label_s(n);
    for (std::size_t j = 0; j < n; ++j) {
      pred_s[j] = 1 - pred[j];
      label_s[j] = 1 - label[j];
    }
    EXPECT_DOUBLE_EQ(mean_accuracy(confusion(pred_s, label_s)), ma);
  }
}

TEST(ErrorReduction, PublishedPairs) {
  const struct {
    double base, next, expect;
  } cases[] = {{92.62, 93.45, 11.25}, {92.05, 92.79, 9.31}, {96.14, 97.07, 24.09},
               {93.13, 93.39, 3.79},  {91.05, 91.20, 1.68}, {96.74, 96.86, 3.68}};
  for (const auto& c : cases) {
    EXPECT_NEAR(error_reduction(c.base, c.next), c.expect, 0.01) << c.base << " -> " << c.next;
  }
}

TEST(ErrorReduction, Edges) {
  EXPECT_EQ(error_reduction(80.0, 80.0), 0.0);
  EXPECT_DOUBLE_EQ(error_reduction(80.0, 100.0), 100.0);
  try {
    error_reduction(100.0, 100.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::undefined_ratio);
  }
}

TEST(PredictionsCsv, ParseAndErrors) {
  const auto rows = parse_predictions_csv("image_id,prediction,label\na,1,1\nb,0,1\nc,0,0\n");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(confusion(rows), (GenderConfusion{1, 2, 1, 1}));
  EXPECT_THROW(parse_predictions_csv("id,p,l\n"), Error);
  EXPECT_THROW(parse_predictions_csv("image_id,prediction,label\na,2,1\n"), Error);
  EXPECT_THROW(parse_predictions_csv("image_id,prediction,label\na,1,1\na,0,0\n"), Error);
}
