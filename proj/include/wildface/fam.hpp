#pragma once

// Face attention module: weighted face/body Hadamard fusion, squeeze-and-
// excitation channel attention with a residual body link, and the gated
// pooling/FC/batch-norm classifier head, with hand-written backward passes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wildface/error.hpp"
#include "wildface/pose_geometry.hpp"
#include "wildface/tensor.hpp"
#include "wildface/text.hpp"

namespace wildface {

inline constexpr double kBatchNormEps = 1e-5;

struct FamDims {
  std::size_t channels = 8;
  std::size_t height = 4;
  std::size_t width = 3;
  std::size_t reduction = 4;

  std::size_t hidden() const { return channels / reduction; }
  Shape feature_shape() const { return {channels, height, width}; }
  std::size_t plane() const { return height * width; }

  void validate() const {
    if (channels == 0 || height == 0 || width == 0) throw Error(Errc::config, "feature dimensions must be positive");
    if (reduction == 0 || channels % reduction != 0) {
      throw Error(Errc::config, "reduction " + std::to_string(reduction) + " does not divide channel count " +
                                    std::to_string(channels));
    }
  }

  /// Parses "CxHxW".
  static FamDims parse(std::string_view s, std::size_t reduction = 4) {
    FamDims d;
    d.reduction = reduction;
    std::size_t vals[3];
    for (int i = 0; i < 3; ++i) {
      const auto x = s.find('x');
      const auto part = i < 2 ? s.substr(0, x) : s;
      const auto v = text::parse_int(part);
      if (!v || *v <= 0 || (i < 2 && x == std::string_view::npos)) {
        throw Error(Errc::config, "dimensions must look like CxHxW");
      }
      vals[i] = static_cast<std::size_t>(*v);
      if (i < 2) s.remove_prefix(x + 1);
    }
    d.channels = vals[0];
    d.height = vals[1];
    d.width = vals[2];
    return d;
  }

  friend bool operator==(const FamDims&, const FamDims&) = default;
};

/// Pooling -> FC -> batch norm over the single logit.
struct HeadParams {
  Tensor fc_w;  // length C
  double fc_b = 0.0;
  double bn_gamma = 1.0;
  double bn_beta = 0.0;
  double bn_running_mean = 0.0;
  double bn_running_var = 1.0;

  friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

enum class Mode { train, eval };

enum class HeadPath : std::size_t { fused = 0, body = 1 };

struct FamParams {
  FamDims dims;
  bool share_head = false;  // body-only samples reuse the fused head
  Tensor fusion;            // C x H x W
  Tensor se_w1;             // (C/r) x C
  Tensor se_b1;             // C/r
  Tensor se_w2;             // C x (C/r)
  Tensor se_b2;             // C
  HeadParams fused_head;
  HeadParams body_head;

  /// Every learnable value zero; batch-norm running variance stays 1.
  static FamParams zeros(FamDims dims, bool share_head = false) {
    dims.validate();
    FamParams p;
    p.dims = dims;
    p.share_head = share_head;
    const std::size_t c = dims.channels, r = dims.hidden();
    p.fusion = Tensor(dims.feature_shape());
    p.se_w1 = Tensor({r, c});
    p.se_b1 = Tensor({r});
    p.se_w2 = Tensor({c, r});
    p.se_b2 = Tensor({c});
    for (HeadParams* h : {&p.fused_head, &p.body_head}) {
      *h = HeadParams{Tensor({c}), 0.0, 0.0, 0.0, 0.0, 1.0};
    }
    return p;
  }

  /// Fusion starts at all-ones; linear weights uniform in +-1/sqrt(fan_in);
  /// biases zero; identity batch norm.
  static FamParams initialize(FamDims dims, std::uint64_t seed, bool share_head = false) {
    FamParams p = zeros(dims, share_head);
    std::mt19937_64 rng(seed);
    const auto uniform = [&](Tensor& t, std::size_t fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : t.values()) v = dist(rng);
    };
    p.fusion.fill(1.0);
    uniform(p.se_w1, dims.channels);
    uniform(p.se_w2, dims.hidden());
    for (HeadParams* h : {&p.fused_head, &p.body_head}) {
      uniform(h->fc_w, dims.channels);
      h->bn_gamma = 1.0;
    }
    return p;
  }

  HeadParams& head(HeadPath path) {
    return path == HeadPath::fused || share_head ? fused_head : body_head;
  }
  const HeadParams& head(HeadPath path) const {
    return path == HeadPath::fused || share_head ? fused_head : body_head;
  }

  void validate() const {
    dims.validate();
    const std::size_t c = dims.channels, r = dims.hidden();
    require_shape(fusion, dims.feature_shape(), "fusion matrix");
    require_shape(se_w1, {r, c}, "se_w1");
    require_shape(se_b1, {r}, "se_b1");
    require_shape(se_w2, {c, r}, "se_w2");
    require_shape(se_b2, {c}, "se_b2");
    for (const HeadParams* h : {&fused_head, &body_head}) {
      require_shape(h->fc_w, {c}, "fc_w");
      if (!(h->bn_running_var > 0.0)) throw Error(Errc::config, "batch-norm running variance must be positive");
    }
  }

  friend bool operator==(const FamParams&, const FamParams&) = default;
};

/// Named view over one learnable parameter group.
struct ParamGroup {
  std::string name;
  std::span<double> values;
};

/// Learnable groups in a fixed order. The body head is omitted when shared.
inline std::vector<ParamGroup> learnable_groups(FamParams& p) {
  std::vector<ParamGroup> g = {
      {"fusion", p.fusion.values()}, {"se_w1", p.se_w1.values()}, {"se_b1", p.se_b1.values()},
      {"se_w2", p.se_w2.values()},   {"se_b2", p.se_b2.values()},
  };
  const auto head = [&](const std::string& prefix, HeadParams& h) {
    g.push_back({prefix + ".fc_w", h.fc_w.values()});
    g.push_back({prefix + ".fc_b", std::span<double>(&h.fc_b, 1)});
    g.push_back({prefix + ".bn_gamma", std::span<double>(&h.bn_gamma, 1)});
    g.push_back({prefix + ".bn_beta", std::span<double>(&h.bn_beta, 1)});
  };
  head("fused_head", p.fused_head);
  if (!p.share_head) head("body_head", p.body_head);
  return g;
}

/// One sample: body features, optional face features and the pose label that
/// gates the face path.
struct FeatureSample {
  Tensor body;
  std::optional<Tensor> face;
  Orientation orientation = Orientation::frontal;

  HeadPath path() const { return orientation == Orientation::frontal ? HeadPath::fused : HeadPath::body; }
};

// ---------------------------------------------------------------------------
// Forward pieces
// ---------------------------------------------------------------------------

inline Tensor hadamard_fuse(const Tensor& body, const Tensor& face, const Tensor& fusion) {
  require_shape(face, body.shape(), "face features");
  require_shape(fusion, body.shape(), "fusion matrix");
  Tensor out(body.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = body[i] * fusion[i] * face[i];
  return out;
}

inline std::vector<double> spatial_mean(const Tensor& x) {
  std::vector<double> out(x.dim(0));
  for (std::size_t c = 0; c < out.size(); ++c) {
    double s = 0.0;
    for (double v : x.channel(c)) s += v;
    out[c] = s / static_cast<double>(x.dim(1) * x.dim(2));
  }
  return out;
}

inline double logistic(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

struct AttentionTrace {
  std::vector<double> pooled;      // squeeze
  std::vector<double> hidden_pre;  // before ReLU
  std::vector<double> hidden;
  std::vector<double> scales;      // logistic gates, one per channel
  Tensor output;                   // input rescaled channel-wise
};

inline AttentionTrace attention_trace(const Tensor& xc, const FamParams& p) {
  require_shape(xc, p.dims.feature_shape(), "attention input");
  const std::size_t c = p.dims.channels, r = p.dims.hidden();
  AttentionTrace t;
  t.pooled = spatial_mean(xc);
  t.hidden_pre.assign(r, 0.0);
  t.hidden.assign(r, 0.0);
  for (std::size_t j = 0; j < r; ++j) {
    double u = p.se_b1[j];
    for (std::size_t k = 0; k < c; ++k) u += p.se_w1(j, k) * t.pooled[k];
    t.hidden_pre[j] = u;
    t.hidden[j] = u > 0.0 ? u : 0.0;
  }
  t.scales.assign(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    double a = p.se_b2[k];
    for (std::size_t j = 0; j < r; ++j) a += p.se_w2(k, j) * t.hidden[j];
    t.scales[k] = logistic(a);
  }
  t.output = xc;
  for (std::size_t k = 0; k < c; ++k)
    for (double& v : t.output.channel(k)) v *= t.scales[k];
  return t;
}

inline std::vector<double> channel_scales(const Tensor& xc, const FamParams& p) {
  return attention_trace(xc, p).scales;
}

inline Tensor channel_attention(const Tensor& xc, const FamParams& p) { return attention_trace(xc, p).output; }

inline Tensor fam_forward(const Tensor& body, const Tensor& face, const FamParams& p) {
  require_shape(body, p.dims.feature_shape(), "body features");
  Tensor out = channel_attention(hadamard_fuse(body, face, p.fusion), p);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += body[i];
  return out;
}

/// Pre-normalisation logit: FC over the spatially pooled features.
inline double head_linear(const Tensor& features, const HeadParams& h) {
  if (features.rank() != 3 || features.dim(0) != h.fc_w.size()) {
    throw Error(Errc::shape, "classifier input has shape " + shape_string(features.shape()) + ", expected " +
                                 std::to_string(h.fc_w.size()) + " channels");
  }
  const auto v = spatial_mean(features);
  double z = h.fc_b;
  for (std::size_t c = 0; c < v.size(); ++c) z += h.fc_w[c] * v[c];
  return z;
}

inline double batch_norm_eval(double z, const HeadParams& h) {
  const double inv_std = 1.0 / std::sqrt(h.bn_running_var + kBatchNormEps);
  return h.bn_gamma * ((z - h.bn_running_mean) * inv_std) + h.bn_beta;
}

/// Eval-mode head on a single feature map.
inline double classifier_head(const Tensor& features, const HeadParams& h) {
  return batch_norm_eval(head_linear(features, h), h);
}

struct BatchNormStats {
  double mean = 0.0;
  double var = 0.0;  // biased
  std::size_t count = 0;
};

/// Train-mode batch norm over a mini-batch of logits.
inline BatchNormStats batch_stats(std::span<const double> z) {
  if (z.size() < 2) throw Error(Errc::degenerate_batch, "train-mode batch norm needs at least 2 samples");
  BatchNormStats s;
  s.count = z.size();
  for (double v : z) s.mean += v;
  s.mean /= static_cast<double>(z.size());
  for (double v : z) s.var += (v - s.mean) * (v - s.mean);
  s.var /= static_cast<double>(z.size());
  return s;
}

/// Head applied to a mini-batch; train mode normalises with batch statistics.
inline std::vector<double> classifier_head(std::span<const Tensor> features, const HeadParams& h, Mode mode) {
  std::vector<double> z;
  z.reserve(features.size());
  for (const auto& f : features) z.push_back(head_linear(f, h));
  if (mode == Mode::eval) {
    for (double& v : z) v = batch_norm_eval(v, h);
    return z;
  }
  const auto s = batch_stats(z);
  const double inv_std = 1.0 / std::sqrt(s.var + kBatchNormEps);
  for (double& v : z) v = h.bn_gamma * (v - s.mean) * inv_std + h.bn_beta;
  return z;
}

namespace detail {

inline void check_sample(const FeatureSample& s, const FamParams& p) {
  require_shape(s.body, p.dims.feature_shape(), "body features");
  if (s.path() == HeadPath::fused) {
    if (!s.face) throw Error(Errc::missing_face, "frontal sample without face features");
    require_shape(*s.face, p.dims.feature_shape(), "face features");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Batched forward with the intermediates the backward pass needs
// ---------------------------------------------------------------------------

struct SampleTrace {
  HeadPath path = HeadPath::body;
  std::optional<Tensor> fused;           // X_c, fused path only
  std::optional<AttentionTrace> attention;
  Tensor head_input;                     // FAM output or body features
  std::vector<double> pooled;            // head pooling
  double z = 0.0;                        // pre-BN logit
  double z_hat = 0.0;                    // normalised logit
  double logit = 0.0;
};

struct BatchTrace {
  Mode mode = Mode::eval;
  std::vector<SampleTrace> samples;
  // Per head (index by HeadPath, shared heads use slot 0).
  std::array<std::vector<std::size_t>, 2> members;
  std::array<BatchNormStats, 2> stats;

  std::vector<double> logits() const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.logit);
    return out;
  }
};

inline std::size_t head_slot(HeadPath path, const FamParams& p) {
  return p.share_head ? 0 : static_cast<std::size_t>(path);
}

inline BatchTrace forward_batch(std::span<const FeatureSample> batch, const FamParams& p, Mode mode) {
  BatchTrace t;
  t.mode = mode;
  t.samples.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    detail::check_sample(s, p);
    auto& st = t.samples[i];
    st.path = s.path();
    if (st.path == HeadPath::fused) {
      st.fused = hadamard_fuse(s.body, *s.face, p.fusion);
      st.attention = attention_trace(*st.fused, p);
      st.head_input = st.attention->output;
      for (std::size_t k = 0; k < st.head_input.size(); ++k) st.head_input[k] += s.body[k];
    } else {
      st.head_input = s.body;
    }
    st.pooled = spatial_mean(st.head_input);
    const HeadParams& h = p.head(st.path);
    st.z = h.fc_b;
    for (std::size_t c = 0; c < st.pooled.size(); ++c) st.z += h.fc_w[c] * st.pooled[c];
    t.members[head_slot(st.path, p)].push_back(i);
  }
  for (std::size_t slot = 0; slot < 2; ++slot) {
    if (t.members[slot].empty()) continue;
    const HeadParams& h = slot == 0 ? p.fused_head : p.body_head;
    if (mode == Mode::eval) {
      t.stats[slot] = {h.bn_running_mean, h.bn_running_var, t.members[slot].size()};
    } else {
      std::vector<double> z;
      for (std::size_t i : t.members[slot]) z.push_back(t.samples[i].z);
      t.stats[slot] = batch_stats(z);
    }
    const double inv_std = 1.0 / std::sqrt(t.stats[slot].var + kBatchNormEps);
    for (std::size_t i : t.members[slot]) {
      auto& st = t.samples[i];
      st.z_hat = (st.z - t.stats[slot].mean) * inv_std;
      st.logit = h.bn_gamma * st.z_hat + h.bn_beta;
    }
  }
  return t;
}

/// Gated prediction for one sample (eval mode).
inline double predict(const FeatureSample& s, const FamParams& p) {
  return forward_batch(std::span(&s, 1), p, Mode::eval).samples[0].logit;
}

inline std::vector<double> predict_batch(std::span<const FeatureSample> batch, const FamParams& p, Mode mode) {
  return forward_batch(batch, p, mode).logits();
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Binary cross-entropy on a logit, stable for large |z|.
inline double bce_logits_loss(double z, int label) {
  return std::max(z, 0.0) - z * static_cast<double>(label) + std::log1p(std::exp(-std::abs(z)));
}

inline double mean_loss(std::span<const double> logits, std::span<const int> labels) {
  if (logits.size() != labels.size() || logits.empty()) throw Error(Errc::invalid_input, "logit/label count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += bce_logits_loss(logits[i], labels[i]);
  return s / static_cast<double>(logits.size());
}

inline double batch_loss(std::span<const FeatureSample> batch, std::span<const int> labels, const FamParams& p,
                         Mode mode) {
  const auto logits = predict_batch(batch, p, mode);
  return mean_loss(logits, labels);
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

struct FamGradients {
  double loss = 0.0;
  FamParams params;                // same layout as the parameters
  std::vector<Tensor> body;        // d loss / d body features, per sample
  std::vector<Tensor> face;        // zero tensor for gated-off samples, empty if no face given
  std::array<BatchNormStats, 2> batch_stats;  // statistics used per head slot (count 0 if unused)
};

/// Gradient of the mean BCE loss over the batch.
inline FamGradients batch_backward(std::span<const FeatureSample> batch, std::span<const int> labels,
                                   const FamParams& p, Mode mode) {
  if (labels.size() != batch.size() || batch.empty()) throw Error(Errc::invalid_input, "sample/label count mismatch");
  const BatchTrace t = forward_batch(batch, p, mode);
  const std::size_t n = batch.size();
  const std::size_t C = p.dims.channels, R = p.dims.hidden(), plane = p.dims.plane();
  const double inv_plane = 1.0 / static_cast<double>(plane);

  FamGradients g;
  g.params = FamParams::zeros(p.dims, p.share_head);
  g.params.fused_head.bn_running_var = p.fused_head.bn_running_var;
  g.params.body_head.bn_running_var = p.body_head.bn_running_var;
  g.body.resize(n);
  g.face.resize(n);

  std::vector<double> d_logit(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y != 0 && y != 1) throw Error(Errc::invalid_input, "labels must be 0 or 1");
    loss += bce_logits_loss(t.samples[i].logit, y);
    d_logit[i] = (logistic(t.samples[i].logit) - y) / static_cast<double>(n);
  }
  g.loss = loss / static_cast<double>(n);
  for (std::size_t slot = 0; slot < 2; ++slot)
    if (!t.members[slot].empty()) g.batch_stats[slot] = t.stats[slot];

  // Batch-norm backward, per head.
  std::vector<double> d_z(n, 0.0);
  for (std::size_t slot = 0; slot < 2; ++slot) {
    const auto& members = t.members[slot];
    if (members.empty()) continue;
    const HeadParams& h = slot == 0 ? p.fused_head : p.body_head;
    HeadParams& gh = slot == 0 ? g.params.fused_head : g.params.body_head;
    const double inv_std = 1.0 / std::sqrt(t.stats[slot].var + kBatchNormEps);
    double sum_d = 0.0, sum_d_zhat = 0.0;
    for (std::size_t i : members) {
      gh.bn_gamma += d_logit[i] * t.samples[i].z_hat;
      gh.bn_beta += d_logit[i];
      sum_d += d_logit[i] * h.bn_gamma;
      sum_d_zhat += d_logit[i] * h.bn_gamma * t.samples[i].z_hat;
    }
    const double m = static_cast<double>(members.size());
    for (std::size_t i : members) {
      const double d_zhat = d_logit[i] * h.bn_gamma;
      if (mode == Mode::eval) {
        d_z[i] = d_zhat * inv_std;
      } else {
        d_z[i] = (d_zhat - sum_d / m - t.samples[i].z_hat * sum_d_zhat / m) * inv_std;
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& st = t.samples[i];
    const auto& s = batch[i];
    const HeadParams& h = p.head(st.path);
    HeadParams& gh = g.params.head(st.path);
    for (std::size_t c = 0; c < C; ++c) gh.fc_w[c] += d_z[i] * st.pooled[c];
    gh.fc_b += d_z[i];

    // d loss / d head input: uniform over each channel's plane.
    Tensor d_in(p.dims.feature_shape());
    for (std::size_t c = 0; c < C; ++c) {
      const double v = d_z[i] * h.fc_w[c] * inv_plane;
      for (double& x : d_in.channel(c)) x = v;
    }

    if (st.path == HeadPath::body) {
      g.body[i] = d_in;
      if (s.face) g.face[i] = Tensor(s.face->shape(), 0.0);
      continue;
    }

    const Tensor& xc = *st.fused;
    const AttentionTrace& at = *st.attention;
    // Residual: d body gets d_in directly; attention output gets d_in.
    Tensor d_xc(p.dims.feature_shape());
    std::vector<double> d_a(C);
    for (std::size_t c = 0; c < C; ++c) {
      const auto din = d_in.channel(c);
      const auto xcc = xc.channel(c);
      auto dxc = d_xc.channel(c);
      double d_scale = 0.0;
      for (std::size_t k = 0; k < plane; ++k) {
        d_scale += din[k] * xcc[k];
        dxc[k] = at.scales[c] * din[k];
      }
      d_a[c] = d_scale * at.scales[c] * (1.0 - at.scales[c]);
      g.params.se_b2[c] += d_a[c];
    }
    std::vector<double> d_u(R, 0.0);
    for (std::size_t j = 0; j < R; ++j) {
      double d_h = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        g.params.se_w2(c, j) += d_a[c] * at.hidden[j];
        d_h += p.se_w2(c, j) * d_a[c];
      }
      d_u[j] = at.hidden_pre[j] > 0.0 ? d_h : 0.0;
      g.params.se_b1[j] += d_u[j];
    }
    for (std::size_t c = 0; c < C; ++c) {
      double d_g = 0.0;
      for (std::size_t j = 0; j < R; ++j) {
        g.params.se_w1(j, c) += d_u[j] * at.pooled[c];
        d_g += p.se_w1(j, c) * d_u[j];
      }
      for (double& x : d_xc.channel(c)) x += d_g * inv_plane;
    }

    Tensor d_body = d_in;
    Tensor d_face(p.dims.feature_shape());
    for (std::size_t k = 0; k < d_xc.size(); ++k) {
      const double b = s.body[k], f = (*s.face)[k], w = p.fusion[k];
      g.params.fusion[k] += d_xc[k] * b * f;
      d_body[k] += d_xc[k] * w * f;
      d_face[k] = d_xc[k] * b * w;
    }
    g.body[i] = std::move(d_body);
    g.face[i] = std::move(d_face);
  }
  return g;
}

/// Eval-mode gradient for a single labelled sample.
inline FamGradients backward(const FeatureSample& s, int label, const FamParams& p) {
  return batch_backward(std::span(&s, 1), std::span(&label, 1), p, Mode::eval);
}

}  // namespace wildface
