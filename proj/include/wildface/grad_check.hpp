#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wildface/error.hpp"
#include "wildface/fam.hpp"

namespace wildface {

struct GroupError {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradReport {
  double step = 1e-4;
  double threshold = 1e-5;
  std::vector<GroupError> groups;
  double max_rel_error = 0.0;
  bool pass = true;

  nlohmann::ordered_json to_json() const {
    auto gs = nlohmann::ordered_json::array();
    for (const auto& g : groups) {
      gs.push_back({{"name", g.name},
                    {"coordinates", g.coordinates},
                    {"max_rel_error", g.max_rel_error},
                    {"pass", g.pass}});
    }
    return {{"step", step}, {"threshold", threshold}, {"max_rel_error", max_rel_error}, {"pass", pass},
            {"groups", gs}};
  }
};

/// Labelled mini-batch evaluated in a fixed mode.
struct GradCheckCase {
  std::vector<FeatureSample> samples;
  std::vector<int> labels;
  Mode mode = Mode::eval;
};

/// Negative control: scales one analytic coordinate before comparison. With
/// no group given, the largest-magnitude analytic coordinate is used.
struct GradCorruption {
  std::optional<std::string> group;
  std::size_t index = 0;
  double factor = 2.0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

namespace detail {

// Second evaluation of the batch loss, carried in extended precision. Central
// differences at h = 1e-4 divide the loss round-off by 2h, which in double
// swamps coordinates whose true gradient sits near zero.
inline long double precise_batch_loss(std::span<const FeatureSample> batch, std::span<const int> labels,
                                      const FamParams& p, Mode mode) {
  using ld = long double;
  const std::size_t c = p.dims.channels, r = p.dims.hidden(), hw = p.dims.height * p.dims.width;
  std::vector<ld> z(batch.size());
  std::array<std::vector<std::size_t>, 2> members;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    check_sample(s, p);
    std::vector<ld> x(s.body.values().begin(), s.body.values().end());
    if (s.path() == HeadPath::fused) {
      std::vector<ld> xc(x.size());
      for (std::size_t k = 0; k < x.size(); ++k) xc[k] = x[k] * ld(p.fusion[k]) * ld((*s.face)[k]);
      std::vector<ld> pooled(c, 0.0L), hidden(r, 0.0L);
      for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t q = 0; q < hw; ++q) pooled[k] += xc[k * hw + q];
        pooled[k] /= ld(hw);
      }
      for (std::size_t j = 0; j < r; ++j) {
        ld u = p.se_b1[j];
        for (std::size_t k = 0; k < c; ++k) u += ld(p.se_w1(j, k)) * pooled[k];
        hidden[j] = u > 0.0L ? u : 0.0L;
      }
      for (std::size_t k = 0; k < c; ++k) {
        ld a = p.se_b2[k];
        for (std::size_t j = 0; j < r; ++j) a += ld(p.se_w2(k, j)) * hidden[j];
        const ld gate = 1.0L / (1.0L + std::exp(-a));
        for (std::size_t q = 0; q < hw; ++q) x[k * hw + q] += gate * xc[k * hw + q];
      }
    }
    const HeadParams& h = p.head(s.path());
    ld acc = h.fc_b;
    for (std::size_t k = 0; k < c; ++k) {
      ld m = 0.0L;
      for (std::size_t q = 0; q < hw; ++q) m += x[k * hw + q];
      acc += ld(h.fc_w[k]) * (m / ld(hw));
    }
    z[i] = acc;
    members[head_slot(s.path(), p)].push_back(i);
  }
  ld total = 0.0L;
  for (std::size_t slot = 0; slot < 2; ++slot) {
    if (members[slot].empty()) continue;
    const HeadParams& h = slot == 0 ? p.fused_head : p.body_head;
    ld mean = h.bn_running_mean, var = h.bn_running_var;
    if (mode == Mode::train) {
      if (members[slot].size() < 2) throw Error(Errc::degenerate_batch, "train-mode batch norm needs at least 2 samples");
      mean = var = 0.0L;
      for (std::size_t i : members[slot]) mean += z[i];
      mean /= ld(members[slot].size());
      for (std::size_t i : members[slot]) var += (z[i] - mean) * (z[i] - mean);
      var /= ld(members[slot].size());
    }
    const ld inv_std = 1.0L / std::sqrt(var + ld(kBatchNormEps));
    for (std::size_t i : members[slot]) {
      const ld logit = ld(h.bn_gamma) * (z[i] - mean) * inv_std + ld(h.bn_beta);
      total += std::max(logit, 0.0L) - logit * ld(labels[i]) + std::log1p(std::exp(-std::abs(logit)));
    }
  }
  return total / ld(batch.size());
}

}  // namespace detail

/// Compares batch_backward against central differences on every learnable
/// parameter and every input coordinate.
inline GradReport grad_check(const FamParams& params, const GradCheckCase& cs, double step = 1e-4,
                             const std::optional<GradCorruption>& corruption = std::nullopt) {
  if (!(step >= 1e-6 && step <= 1e-3)) throw Error(Errc::config, "finite-difference step must lie in [1e-6, 1e-3]");
  params.validate();

  FamGradients analytic = batch_backward(cs.samples, cs.labels, params, cs.mode);
  if (!std::isfinite(analytic.loss)) throw Error(Errc::non_finite, "loss is not finite at the check point");

  FamParams probe = params;
  std::vector<FeatureSample> samples = cs.samples;

  struct Slot {
    std::string name;
    std::span<double> point;     // coordinate being perturbed
    std::span<double> gradient;  // analytic values
  };
  std::vector<Slot> slots;
  {
    auto pg = learnable_groups(probe);
    auto ag = learnable_groups(analytic.params);
    for (std::size_t i = 0; i < pg.size(); ++i) slots.push_back({pg[i].name, pg[i].values, ag[i].values});
  }
  // Inputs, grouped across samples.
  std::vector<std::pair<std::span<double>, std::span<double>>> body_slots, face_slots;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    body_slots.emplace_back(samples[i].body.values(), analytic.body[i].values());
    if (samples[i].face) face_slots.emplace_back(samples[i].face->values(), analytic.face[i].values());
  }

  if (corruption) {
    std::span<double> target;
    std::size_t index = 0;
    if (corruption->group) {
      for (auto& s : slots)
        if (s.name == *corruption->group) target = s.gradient;
      if (target.empty() || corruption->index >= target.size()) {
        throw Error(Errc::config, "unknown corruption target " + *corruption->group);
      }
      index = corruption->index;
    } else {
      double best = -1.0;
      for (auto& s : slots) {
        for (std::size_t k = 0; k < s.gradient.size(); ++k) {
          if (std::abs(s.gradient[k]) > best) {
            best = std::abs(s.gradient[k]);
            target = s.gradient;
            index = k;
          }
        }
      }
    }
    target[index] *= corruption->factor;
  }

  const auto loss_at = [&] {
    const long double l = detail::precise_batch_loss(samples, cs.labels, probe, cs.mode);
    if (!std::isfinite(l)) throw Error(Errc::non_finite, "loss is not finite under perturbation");
    return l;
  };
  const auto check = [&](std::span<double> point, std::span<const double> grad, GroupError& ge) {
    for (std::size_t k = 0; k < point.size(); ++k) {
      const double saved = point[k];
      point[k] = saved + step;
      const long double up = loss_at();
      point[k] = saved - step;
      const long double down = loss_at();
      point[k] = saved;
      const double numeric = static_cast<double>((up - down) / (2.0L * step));
      ge.max_rel_error = std::max(ge.max_rel_error, relative_error(grad[k], numeric));
      ++ge.coordinates;
    }
  };

  GradReport report;
  report.step = step;
  for (auto& s : slots) {
    GroupError ge{s.name};
    check(s.point, s.gradient, ge);
    report.groups.push_back(ge);
  }
  for (auto* group : {&body_slots, &face_slots}) {
    if (group->empty()) continue;
    GroupError ge{group == &body_slots ? "x_body" : "x_face"};
    for (auto& [point, grad] : *group) check(point, grad, ge);
    report.groups.push_back(ge);
  }
  for (auto& g : report.groups) {
    g.pass = g.max_rel_error < report.threshold;
    report.max_rel_error = std::max(report.max_rel_error, g.max_rel_error);
  }
  report.pass = report.max_rel_error < report.threshold;
  return report;
}

inline constexpr double kKinkMargin = 1e-2;
inline constexpr double kMinGroupVariance = 1e-1;

/// Random parameters away from their initial values plus a mixed batch:
/// frontal and non-frontal samples, at least two of each so train-mode batch
/// norm is defined for both heads.
inline std::pair<FamParams, GradCheckCase> random_check_case(const FamDims& dims, std::uint64_t seed, Mode mode,
                                                             bool share_head = false) {
  std::mt19937_64 rng(seed);
  FamParams p = FamParams::initialize(dims, rng(), share_head);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : p.fusion.values()) v = 1.0 + 0.5 * u(rng);
  for (double& v : p.se_b1.values()) v = 0.1 * u(rng);
  for (double& v : p.se_b2.values()) v = 0.1 * u(rng);
  for (HeadParams* h : {&p.fused_head, &p.body_head}) {
    // Batch norm makes the loss nearly invariant to the FC scale, so small
    // weights mean high curvature per unit step; keep them O(1).
    for (double& v : h->fc_w.values()) v = u(rng);
    h->fc_b = 0.1 * u(rng);
    h->bn_gamma = 1.0 + 0.5 * u(rng);
    h->bn_beta = 0.5 * u(rng);
    h->bn_running_mean = 0.5 * u(rng);
    h->bn_running_var = 1.25 + 0.75 * u(rng);
  }
  GradCheckCase cs;
  cs.mode = mode;
  const Orientation orient[] = {Orientation::frontal, Orientation::backside, Orientation::frontal,
                                Orientation::sideways, Orientation::frontal};
  // Redraw the batch until it sits away from the ReLU kink and, in train mode,
  // away from near-equal logits inside a head group, where the batch-norm eps
  // makes the loss so curved that central differences lose their accuracy.
  bool smooth = false;
  for (int attempt = 0; attempt < 10000 && !smooth; ++attempt) {
    cs.samples.clear();
    cs.labels.clear();
    for (Orientation o : orient) {
      FeatureSample s;
      s.orientation = o;
      s.body = Tensor(dims.feature_shape());
      for (double& v : s.body.values()) v = normal(rng);
      s.face = Tensor(dims.feature_shape());
      for (double& v : s.face->values()) v = normal(rng);
      cs.samples.push_back(std::move(s));
      cs.labels.push_back(static_cast<int>(rng() & 1u));
    }
    const BatchTrace t = forward_batch(cs.samples, p, mode);
    smooth = true;
    for (const auto& st : t.samples) {
      if (!st.attention) continue;
      for (double u : st.attention->hidden_pre) smooth = smooth && std::abs(u) >= kKinkMargin;
    }
    if (mode == Mode::train) {
      for (std::size_t slot = 0; slot < 2; ++slot) {
        if (!t.members[slot].empty()) smooth = smooth && t.stats[slot].var >= kMinGroupVariance;
      }
    }
  }
  if (!smooth) throw Error(Errc::config, "could not draw a well-conditioned gradient-check batch");
  return {std::move(p), std::move(cs)};
}

struct InvariantReport {
  std::size_t cases = 0;
  std::size_t fusion_identity_failures = 0;   // F = 0 must return the body features bit for bit
  std::size_t gating_failures = 0;            // non-frontal logits must ignore the face features
  std::size_t scale_range_failures = 0;       // attention gates must lie in (0, 1)
  std::size_t shape_failures = 0;             // FAM output shape equals input shape

  bool pass() const {
    return fusion_identity_failures + gating_failures + scale_range_failures + shape_failures == 0;
  }

  nlohmann::ordered_json to_json() const {
    return {{"cases", cases},
            {"fusion_identity_failures", fusion_identity_failures},
            {"gating_failures", gating_failures},
            {"scale_range_failures", scale_range_failures},
            {"shape_failures", shape_failures},
            {"pass", pass()}};
  }
};

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  }
  return true;
}

/// Structural properties of the module on randomised parameters and inputs.
inline InvariantReport check_fam_invariants(const FamDims& dims, std::uint64_t seed, std::size_t cases) {
  dims.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  InvariantReport rep;
  rep.cases = cases;
  const auto random_tensor = [&](double scale) {
    Tensor t(dims.feature_shape());
    for (double& v : t.values()) v = scale * normal(rng);
    return t;
  };
  for (std::size_t k = 0; k < cases; ++k) {
    auto [params, unused] = random_check_case(dims, rng(), Mode::eval);
    (void)unused;
    const Tensor body = random_tensor(1.0 + 2.0 * std::abs(normal(rng)));
    const Tensor face = random_tensor(1.0 + 2.0 * std::abs(normal(rng)));

    const Tensor out = fam_forward(body, face, params);
    if (out.shape() != body.shape()) ++rep.shape_failures;

    for (double s : channel_scales(hadamard_fuse(body, face, params.fusion), params)) {
      if (!(s > 0.0 && s < 1.0)) {
        ++rep.scale_range_failures;
        break;
      }
    }

    FamParams zero_fusion = params;
    zero_fusion.fusion.fill(0.0);
    if (!bitwise_equal(fam_forward(body, face, zero_fusion), body)) ++rep.fusion_identity_failures;

    const Orientation gated = (k % 2 == 0) ? Orientation::backside : Orientation::sideways;
    FeatureSample a{body, face, gated};
    FeatureSample b{body, random_tensor(10.0), gated};
    const double la = predict(a, params), lb = predict(b, params);
    FeatureSample c{body, std::nullopt, gated};
    const double lc = predict(c, params);
    if (std::bit_cast<std::uint64_t>(la) != std::bit_cast<std::uint64_t>(lb) ||
        std::bit_cast<std::uint64_t>(la) != std::bit_cast<std::uint64_t>(lc)) {
      ++rep.gating_failures;
    }
  }
  return rep;
}

}  // namespace wildface
