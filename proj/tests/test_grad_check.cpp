#include <gtest/gtest.h>

#include <algorithm>

#include "test_support.hpp"

using namespace wildface;

namespace {

void expect_pass_over_seeds(const FamDims& d, Mode mode, bool share_head) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto [p, cs] = random_check_case(d, seed, mode, share_head);
    const GradReport rep = grad_check(p, cs, 1e-4);
    EXPECT_TRUE(rep.pass) << "seed " << seed << ": " << rep.to_json().dump();
    EXPECT_LT(rep.max_rel_error, 1e-5);
  }
}

}  // namespace

TEST(GradCheck, EvalModeDeskDims) { expect_pass_over_seeds({8, 4, 3, 4}, Mode::eval, false); }
TEST(GradCheck, TrainModeDeskDims) { expect_pass_over_seeds({8, 4, 3, 4}, Mode::train, false); }
TEST(GradCheck, EvalModeWideDims) { expect_pass_over_seeds({16, 2, 2, 4}, Mode::eval, false); }
TEST(GradCheck, TrainModeWideDims) { expect_pass_over_seeds({16, 2, 2, 4}, Mode::train, false); }
TEST(GradCheck, SharedHead) { expect_pass_over_seeds({8, 4, 3, 4}, Mode::train, true); }

TEST(GradCheck, CoversEveryGroup) {
  const auto [p, cs] = random_check_case({8, 4, 3, 4}, 42, Mode::eval);
  const GradReport rep = grad_check(p, cs);
  std::vector<std::string> names;
  for (const auto& g : rep.groups) names.push_back(g.name);
  const std::vector<std::string> expected = {"fusion",           "se_w1",           "se_b1",
                                             "se_w2",            "se_b2",           "fused_head.fc_w",
                                             "fused_head.fc_b",  "fused_head.bn_gamma", "fused_head.bn_beta",
                                             "body_head.fc_w",   "body_head.fc_b",  "body_head.bn_gamma",
                                             "body_head.bn_beta", "x_body",         "x_face"};
  EXPECT_EQ(names, expected);
  EXPECT_EQ(rep.groups.back().coordinates, 5u * 8 * 4 * 3);
}

TEST(GradCheck, CorruptionDetected) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto [p, cs] = random_check_case({8, 4, 3, 4}, seed, Mode::train);
    EXPECT_FALSE(grad_check(p, cs, 1e-4, GradCorruption{}).pass);
    // Aim at a live se_w1 entry; a dead ReLU unit has exactly zero gradient.
    const FamGradients grads = batch_backward(cs.samples, cs.labels, p, cs.mode);
    const auto g = grads.params.se_w1.values();
    const auto live = std::size_t(std::max_element(g.begin(), g.end(), [](double a, double b) {
                                    return std::abs(a) < std::abs(b);
                                  }) - g.begin());
    EXPECT_FALSE(grad_check(p, cs, 1e-4, GradCorruption{"se_w1", live, 2.0}).pass);
  }
}

TEST(GradCheck, ZeroParametersAndInputs) {
  const FamDims d{8, 4, 3, 4};
  FeatureSample s{Tensor(d.feature_shape()), Tensor(d.feature_shape()), Orientation::frontal};
  const GradReport rep = grad_check(FamParams::zeros(d), {{s}, {1}, Mode::eval});
  EXPECT_TRUE(rep.pass);
}

TEST(GradCheck, StepOutOfRange) {
  const auto [p, cs] = random_check_case({8, 4, 3, 4}, 1, Mode::eval);
  EXPECT_THROW(grad_check(p, cs, 1e-2), Error);
  EXPECT_THROW(grad_check(p, cs, 1e-7), Error);
}

TEST(GradCheck, NonFiniteLossAborts) {
  auto [p, cs] = random_check_case({8, 4, 3, 4}, 1, Mode::eval);
  p.fused_head.bn_gamma = std::numeric_limits<double>::infinity();
  try {
    grad_check(p, cs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::non_finite);
  }
}

TEST(Invariants, HoldOnRandomCases) {
  const InvariantReport rep = check_fam_invariants({8, 4, 3, 4}, 7, 200);
  EXPECT_TRUE(rep.pass()) << rep.to_json().dump();
  EXPECT_EQ(rep.cases, 200u);
}
