#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "wildface/error.hpp"
#include "wildface/fam.hpp"

namespace wildface {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  double plateau_factor = 0.1;
  std::size_t plateau_patience = 4;
  double bn_momentum = 0.1;
  std::uint64_t seed = 42;

  void validate() const {
    if (!(learning_rate >= 0.0) || !(momentum >= 0.0) || !(weight_decay >= 0.0)) {
      throw Error(Errc::config, "learning rate, momentum and weight decay must be non-negative");
    }
    if (batch_size < 2) throw Error(Errc::config, "batch size must be at least 2");
    if (epochs == 0) throw Error(Errc::config, "epochs must be positive");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw Error(Errc::config, "plateau factor must be in (0, 1)");
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw Error(Errc::config, "bn momentum must be in (0, 1]");
  }
};

inline void to_json(nlohmann::ordered_json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"momentum", c.momentum},     {"weight_decay", c.weight_decay},
       {"batch_size", c.batch_size},       {"epochs", c.epochs},         {"plateau_factor", c.plateau_factor},
       {"plateau_patience", c.plateau_patience}, {"bn_momentum", c.bn_momentum}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::ordered_json& j, TrainConfig& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.plateau_factor = j.at("plateau_factor").get<double>();
  c.plateau_patience = j.at("plateau_patience").get<std::size_t>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
///   buf = momentum * buf + (g + wd * w);  w -= lr * buf
/// The first step initialises buf with the raw direction.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum, double weight_decay)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

  void step(FamParams& params, FamParams& grads) {
    auto pg = learnable_groups(params);
    auto gg = learnable_groups(grads);
    if (buffers_.empty()) {
      for (const auto& g : pg) buffers_.emplace_back(g.values.size(), 0.0);
    }
    for (std::size_t i = 0; i < pg.size(); ++i) {
      auto& buf = buffers_[i];
      for (std::size_t k = 0; k < pg[i].values.size(); ++k) {
        const double d = gg[i].values[k] + weight_decay_ * pg[i].values[k];
        buf[k] = started_ ? momentum_ * buf[k] + d : d;
        pg[i].values[k] -= lr_ * buf[k];
      }
    }
    started_ = true;
  }

 private:
  double lr_;
  double momentum_;
  double weight_decay_;
  bool started_ = false;
  std::vector<std::vector<double>> buffers_;
};

/// Reduce-on-plateau for a minimised metric. An epoch counts as an
/// improvement when it beats the best value by a relative 1e-4; after
/// `patience` consecutive non-improving epochs the rate is multiplied by
/// `factor` and the counter restarts.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, std::size_t patience, double threshold = 1e-4)
      : lr_(lr), factor_(factor), patience_(patience), threshold_(threshold) {}

  double learning_rate() const { return lr_; }

  /// Returns true when this step reduced the rate.
  bool step(double metric) {
    if (!has_best_ || metric < best_ * (1.0 - threshold_)) {
      best_ = metric;
      has_best_ = true;
      bad_epochs_ = 0;
      return false;
    }
    if (++bad_epochs_ >= patience_) {
      lr_ *= factor_;
      bad_epochs_ = 0;
      return true;
    }
    return false;
  }

 private:
  double lr_;
  double factor_;
  std::size_t patience_;
  double threshold_;
  double best_ = 0.0;
  bool has_best_ = false;
  std::size_t bad_epochs_ = 0;
};

struct LabeledSet {
  std::vector<FeatureSample> samples;
  std::vector<int> labels;
};

struct SyntheticSpec {
  FamDims dims;
  std::size_t samples = 200;
  double class_mean = 1.0;  // class 1 centred at +mean, class 0 at -mean
  double noise = 0.1;
  double frontal_fraction = 0.5;
  std::uint64_t seed = 42;
};

/// Linearly separable features: every body and face element is drawn around
/// +-class_mean with Gaussian noise. Labels alternate so both classes appear.
inline LabeledSet make_separable_set(const SyntheticSpec& spec) {
  spec.dims.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LabeledSet set;
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const int label = static_cast<int>(i % 2);
    const double mean = label == 1 ? spec.class_mean : -spec.class_mean;
    FeatureSample s;
    s.orientation = unit(rng) < spec.frontal_fraction ? Orientation::frontal : Orientation::backside;
    s.body = Tensor(spec.dims.feature_shape());
    for (double& v : s.body.values()) v = mean + noise(rng);
    s.face = Tensor(spec.dims.feature_shape());
    for (double& v : s.face->values()) v = mean + noise(rng);
    set.samples.push_back(std::move(s));
    set.labels.push_back(label);
  }
  return set;
}

/// Fraction of samples whose eval-mode logit has the sign of the label.
inline double accuracy(const LabeledSet& set, const FamParams& p) {
  const auto logits = predict_batch(set.samples, p, Mode::eval);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) correct += static_cast<int>(logits[i] > 0.0) == set.labels[i];
  return static_cast<double>(correct) / static_cast<double>(logits.size());
}

/// Splits sample indices into mini-batches whose members all take the same
/// head path, so train-mode batch norm always sees at least two logits per
/// head. Chunks of one are merged into their predecessor.
inline std::vector<std::vector<std::size_t>> path_homogeneous_batches(const LabeledSet& set, const FamParams& p,
                                                                      std::size_t batch_size, std::mt19937_64& rng) {
  std::array<std::vector<std::size_t>, 2> by_head;
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    by_head[head_slot(set.samples[i].path(), p)].push_back(i);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (auto& ids : by_head) {
    if (ids.empty()) continue;
    if (ids.size() < 2) throw Error(Errc::degenerate_batch, "a head path has a single training sample");
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t first = batches.size();
    for (std::size_t s = 0; s < ids.size(); s += batch_size) {
      batches.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(s),
                           ids.begin() + static_cast<std::ptrdiff_t>(std::min(s + batch_size, ids.size())));
    }
    if (batches.size() - first > 1 && batches.back().size() < 2) {
      auto tail = std::move(batches.back());
      batches.pop_back();
      batches.back().insert(batches.back().end(), tail.begin(), tail.end());
    }
  }
  return batches;
}

struct TrainResult {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // mean per-sample loss, one entry per epoch
  std::vector<double> epoch_lr;    // rate in effect during each epoch
  double final_accuracy = 0.0;
  FamParams params;
};

namespace detail {

inline double gather_batch_loss(const LabeledSet& set, const std::vector<std::size_t>& ids, const FamParams& p,
                                std::vector<FeatureSample>& scratch, std::vector<int>& labels) {
  scratch.clear();
  labels.clear();
  for (std::size_t i : ids) {
    scratch.push_back(set.samples[i]);
    labels.push_back(set.labels[i]);
  }
  return batch_loss(scratch, labels, p, Mode::train) * static_cast<double>(ids.size());
}

}  // namespace detail

/// Mini-batch training of every learnable parameter with SGD + momentum +
/// weight decay and a reduce-on-plateau schedule on the epoch loss. The batch
/// partition is drawn once from the seed; each epoch visits the batches in a
/// freshly shuffled order.
inline TrainResult toy_train(const TrainConfig& cfg, const LabeledSet& set, FamParams params) {
  cfg.validate();
  params.validate();
  if (set.samples.size() != set.labels.size()) throw Error(Errc::invalid_input, "sample/label count mismatch");
  if (set.samples.size() < 2 * cfg.batch_size) {
    throw Error(Errc::invalid_input, "dataset must hold at least two batches");
  }
  const auto ones = std::count(set.labels.begin(), set.labels.end(), 1);
  if (ones == 0 || ones == static_cast<std::ptrdiff_t>(set.labels.size())) {
    throw Error(Errc::invalid_input, "both classes must be present");
  }

  std::mt19937_64 rng(cfg.seed);
  const auto batches = path_homogeneous_batches(set, params, cfg.batch_size, rng);
  const double n = static_cast<double>(set.samples.size());

  std::vector<FeatureSample> scratch;
  std::vector<int> labels;
  const auto epoch_loss_of = [&](const std::vector<double>& per_batch) {
    double s = 0.0;
    for (double v : per_batch) s += v;  // partition order, independent of visit order
    return s / n;
  };

  TrainResult result;
  {
    std::vector<double> per_batch;
    for (const auto& b : batches) per_batch.push_back(detail::gather_batch_loss(set, b, params, scratch, labels));
    result.initial_loss = epoch_loss_of(per_batch);
  }

  SgdMomentum opt(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
  PlateauScheduler sched(cfg.learning_rate, cfg.plateau_factor, cfg.plateau_patience);
  std::vector<std::size_t> order(batches.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_learning_rate(sched.learning_rate());
    result.epoch_lr.push_back(sched.learning_rate());
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> per_batch(batches.size(), 0.0);
    for (std::size_t b : order) {
      scratch.clear();
      labels.clear();
      for (std::size_t i : batches[b]) {
        scratch.push_back(set.samples[i]);
        labels.push_back(set.labels[i]);
      }
      FamGradients g = batch_backward(scratch, labels, params, Mode::train);
      if (!std::isfinite(g.loss)) {
        throw Error(Errc::training_failure, "loss diverged in epoch " + std::to_string(epoch + 1));
      }
      per_batch[b] = g.loss * static_cast<double>(batches[b].size());

      // Running statistics for eval mode, from this batch's statistics.
      for (std::size_t slot = 0; slot < 2; ++slot) {
        const auto& st = g.batch_stats[slot];
        if (st.count < 2) continue;
        HeadParams& h = slot == 0 ? params.fused_head : params.body_head;
        const double unbiased = st.var * static_cast<double>(st.count) / static_cast<double>(st.count - 1);
        h.bn_running_mean = (1.0 - cfg.bn_momentum) * h.bn_running_mean + cfg.bn_momentum * st.mean;
        h.bn_running_var = (1.0 - cfg.bn_momentum) * h.bn_running_var + cfg.bn_momentum * unbiased;
      }
      opt.step(params, g.params);
    }
    const double loss = epoch_loss_of(per_batch);
    if (!std::isfinite(loss)) throw Error(Errc::training_failure, "epoch loss is not finite");
    result.epoch_loss.push_back(loss);
    sched.step(loss);
  }
  result.final_accuracy = accuracy(set, params);
  result.params = std::move(params);
  return result;
}

}  // namespace wildface
