#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "awb/data.hpp"
#include "awb/error.hpp"
#include "awb/metrics.hpp"
#include "awb/nn.hpp"
#include "awb/parallel.hpp"
#include "awb/rng.hpp"
#include "awb/tensor.hpp"

namespace awb::train {

struct TrainConfig {
  int64_t epochs = 10;
  int64_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  uint64_t seed = 42;
  bool shuffle = true;
};

inline void validate_config(const TrainConfig& c) {
  if (c.epochs < 0)
    throw Error(ErrorKind::InvalidConfig, "epochs must be >= 0");
  if (c.batch_size < 1)
    throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  if (c.learning_rate < 0.0 || !std::isfinite(c.learning_rate))
    throw Error(ErrorKind::InvalidConfig, "learning_rate must be >= 0");
  if (c.momentum < 0.0 || c.momentum >= 1.0)
    throw Error(ErrorKind::InvalidConfig, "momentum must lie in [0, 1)");
}

struct EpochRecord {
  int64_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct History {
  std::vector<EpochRecord> entries;
};

/// Thrown when the training loss goes NaN/Inf; carries the epochs completed
/// before the abort so callers can persist the partial curve.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, History partial)
      : Error(ErrorKind::DivergenceDetected, msg),
        partial_history(std::move(partial)) {}
  History partial_history;
};

/// One raw-pixel image (already resized to the model input side) plus label.
struct LabeledImage {
  Tensor image;
  int label = 0;
  std::string path;
};

using ImageSet = std::vector<LabeledImage>;

/// Loads and resizes every sample of a split, in manifest order. Decoding is
/// spread over the worker pool; outputs land in preassigned slots so worker
/// count never changes the result.
inline ImageSet load_images(const data::DatasetManifest& manifest,
                            data::Split split, int64_t side,
                            size_t workers = 1) {
  auto idx = manifest.split_indices(split);
  ImageSet images(idx.size());
  parallel_for(idx.size(), workers, [&](size_t i) {
    const auto& sample = manifest.samples[idx[i]];
    Tensor raw = data::load_image(sample.path);
    images[i] = {data::resize(raw, side), sample.label, sample.path};
  });
  return images;
}

/// Stacks C x H x W images into one N x C x H x W batch tensor.
inline Tensor stack_images(const ImageSet& images, std::span<const size_t> which) {
  if (which.empty())
    throw Error(ErrorKind::EmptyDataset, "cannot stack an empty batch");
  const Shape& s = images[which[0]].image.shape();
  int64_t plane = shape_numel(s);
  std::vector<double> values(which.size() * plane);
  for (size_t i = 0; i < which.size(); ++i) {
    const auto& img = images[which[i]].image;
    if (img.shape() != s)
      throw Error(ErrorKind::ShapeMismatch,
                  "batch mixes image shapes " + shape_str(s) + " and " +
                      shape_str(img.shape()));
    std::copy(img.values().begin(), img.values().end(),
              values.begin() + i * plane);
  }
  return Tensor({static_cast<int64_t>(which.size()), s[0], s[1], s[2]},
                std::move(values));
}

// ---------------------------------------------------------------------------
// Optimizer

/// v <- momentum * v + g; theta <- theta - lr * v.
inline void sgd_step(std::span<double> param, std::span<const double> grad,
                     double learning_rate, double momentum,
                     std::span<double> velocity) {
  if (param.size() != grad.size() || param.size() != velocity.size())
    throw Error(ErrorKind::ShapeMismatch,
                "sgd_step: param/grad/velocity sizes differ");
  for (size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    param[i] -= learning_rate * velocity[i];
  }
}

/// Velocity buffers matching a parameter list.
class SgdOptimizer {
 public:
  SgdOptimizer(double learning_rate, double momentum)
      : lr_(learning_rate), momentum_(momentum) {}

  void step(std::vector<nn::Param>& params) {
    if (velocity_.empty()) {
      velocity_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i)
        velocity_[i].assign(params[i].tensor.numel(), 0.0);
    }
    for (size_t i = 0; i < params.size(); ++i) {
      auto g = params[i].tensor.grad();
      if (g.empty()) continue;  // parameter unreachable from the loss
      sgd_step(params[i].tensor.mutable_values(), g, lr_, momentum_,
               {velocity_[i].data(), velocity_[i].size()});
    }
  }

 private:
  double lr_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOutputs {
  std::vector<int> labels;
  std::vector<double> p_positive;   // p(class 1), binary models only
  std::vector<int> predictions;
  int64_t correct = 0;
  double mean_ce = 0.0;  // mean softmax cross-entropy
};

namespace detail {

inline constexpr size_t kEvalBatch = 32;

/// Per-sample probabilities and predictions; batched for speed but with
/// per-sample arithmetic identical to predict_proba.
inline EvalOutputs eval_outputs(const nn::Model& model, const ImageSet& images,
                                double threshold) {
  if (images.empty())
    throw Error(ErrorKind::EmptyDataset, "evaluate over zero samples");
  const int64_t k = model.spec.num_classes;
  EvalOutputs out;
  out.labels.reserve(images.size());
  double ce_total = 0.0;
  for (size_t begin = 0; begin < images.size(); begin += kEvalBatch) {
    size_t end = std::min(begin + kEvalBatch, images.size());
    std::vector<size_t> which(end - begin);
    std::iota(which.begin(), which.end(), begin);
    Tensor batch = stack_images(images, which);
    Tensor logits = nn::forward(model, batch);
    Tensor probs = softmax(logits);
    auto pv = probs.values();
    std::vector<int> labels(end - begin);
    for (size_t i = begin; i < end; ++i) labels[i - begin] = images[i].label;
    ce_total += cross_entropy(logits, labels).item() *
                static_cast<double>(end - begin);
    for (size_t i = 0; i < end - begin; ++i) {
      const double* row = pv.data() + i * k;
      int pred;
      if (k == 2) {
        pred = row[1] >= threshold ? 1 : 0;
        out.p_positive.push_back(row[1]);
      } else {
        pred = 0;
        for (int64_t c = 1; c < k; ++c)
          if (row[c] > row[pred]) pred = static_cast<int>(c);
      }
      out.predictions.push_back(pred);
      out.labels.push_back(labels[i]);
      out.correct += (pred == labels[i]);
    }
  }
  out.mean_ce = ce_total / static_cast<double>(images.size());
  return out;
}

}  // namespace detail

/// Confusion counts and derived metrics. Binary models threshold p(real);
/// multi-class models use the argmax, folding correct/incorrect counts into
/// tp/fn. log_loss terms are summed in a canonical (sorted) order so the
/// result is invariant to sample order.
inline Metrics evaluate(const nn::Model& model, const ImageSet& images,
                        double threshold = 0.5) {
  auto out = detail::eval_outputs(model, images, threshold);
  Metrics m;
  const bool binary = model.spec.num_classes == 2;
  if (binary) {
    for (size_t i = 0; i < out.labels.size(); ++i) {
      bool actual = out.labels[i] == 1, predicted = out.predictions[i] == 1;
      if (actual && predicted) m.tp++;
      else if (!actual && !predicted) m.tn++;
      else if (!actual && predicted) m.fp++;
      else m.fn++;
    }
    Metrics counts = metrics_from_counts(m.tp, m.tn, m.fp, m.fn);
    m.accuracy = counts.accuracy;
    m.precision = counts.precision;
    m.recall = counts.recall;

    std::vector<std::pair<double, int>> pairs(out.labels.size());
    for (size_t i = 0; i < out.labels.size(); ++i)
      pairs[i] = {out.p_positive[i], out.labels[i]};
    std::sort(pairs.begin(), pairs.end());
    std::vector<int> sl(pairs.size());
    std::vector<double> sp(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
      sp[i] = pairs[i].first;
      sl[i] = pairs[i].second;
    }
    m.log_loss = log_loss(sl, sp);
    m.auc = roc_auc(sl, sp).auc;
  } else {
    for (size_t i = 0; i < out.labels.size(); ++i)
      (out.predictions[i] == out.labels[i] ? m.tp : m.fn)++;
    m.accuracy =
        static_cast<double>(m.tp) / static_cast<double>(out.labels.size());
  }
  return m;
}

/// ROC curve for a binary model over an image set.
inline RocResult roc_for(const nn::Model& model, const ImageSet& images,
                         double threshold = 0.5) {
  auto out = detail::eval_outputs(model, images, threshold);
  return roc_auc(out.labels, out.p_positive);
}

// ---------------------------------------------------------------------------
// Training

/// Shuffled mini-batch SGD with momentum on softmax cross-entropy. Validation
/// runs after every epoch. The model is updated in place; the returned history
/// has one entry per completed epoch.
inline History train(nn::Model& model, const ImageSet& train_set,
                     const ImageSet& val_set, const TrainConfig& config) {
  validate_config(config);
  if (train_set.empty())
    throw Error(ErrorKind::EmptyDataset, "training set is empty");

  History history;
  Rng rng(config.seed);
  SgdOptimizer optimizer(config.learning_rate, config.momentum);
  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) rng.shuffle(order);
    double loss_total = 0.0;
    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(config.batch_size)) {
      size_t end = std::min(begin + static_cast<size_t>(config.batch_size),
                            order.size());
      std::span<const size_t> which(order.data() + begin, end - begin);
      Tensor batch = stack_images(train_set, which);
      std::vector<int> labels(which.size());
      for (size_t i = 0; i < which.size(); ++i)
        labels[i] = train_set[which[i]].label;

      Tensor loss = cross_entropy(nn::forward(model, batch), labels);
      double loss_value = loss.item();
      if (!std::isfinite(loss_value))
        throw DivergenceError("training loss became non-finite at epoch " +
                                  std::to_string(epoch),
                              history);
      for (auto& p : model.params) p.tensor.zero_grad();
      backward(loss);
      optimizer.step(model.params);
      loss_total += loss_value * static_cast<double>(which.size());
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_total / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      auto val = detail::eval_outputs(model, val_set, 0.5);
      record.val_loss = val.mean_ce;
      record.val_accuracy = static_cast<double>(val.correct) /
                            static_cast<double>(val_set.size());
      if (!std::isfinite(record.val_loss))
        throw DivergenceError("validation loss became non-finite at epoch " +
                                  std::to_string(epoch),
                              history);
    }
    history.entries.push_back(record);
  }
  return history;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CvSummary {
  std::vector<Metrics> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
};

/// Rotating k-fold training: fold i validates a model trained on the rest,
/// with a fresh seeded init per fold. Normalization stats come from the
/// training portion of each fold.
inline CvSummary cross_validate(const nn::ModelSpec& spec,
                                const data::DatasetManifest& manifest,
                                size_t k, const TrainConfig& config,
                                size_t workers = 1) {
  auto folds = data::kfold(manifest, k, config.seed);

  // load every referenced image once, at the model input side
  ImageSet all(manifest.samples.size());
  parallel_for(manifest.samples.size(), workers, [&](size_t i) {
    Tensor raw = data::load_image(manifest.samples[i].path);
    all[i] = {data::resize(raw, spec.in_height), manifest.samples[i].label,
              manifest.samples[i].path};
  });

  CvSummary summary;
  for (size_t f = 0; f < folds.size(); ++f) {
    std::vector<char> in_val(manifest.samples.size(), 0);
    for (size_t i : folds[f]) in_val[i] = 1;
    ImageSet train_set, val_set;
    for (size_t i = 0; i < all.size(); ++i)
      (in_val[i] ? val_set : train_set).push_back(all[i]);

    nn::Model model = nn::build_model(spec, config.seed + f);
    model.class_names = manifest.class_names;

    // per-fold stats over the raw (unresized) train images
    data::DatasetManifest fold_manifest = manifest;
    for (size_t i = 0; i < fold_manifest.samples.size(); ++i)
      fold_manifest.samples[i].split =
          in_val[i] ? data::Split::Val : data::Split::Train;
    model.norm_stats = data::compute_stats(fold_manifest, data::Split::Train);

    train(model, train_set, val_set, config);
    summary.folds.push_back(evaluate(model, val_set));
  }

  double mean = 0.0;
  for (const auto& m : summary.folds) mean += m.accuracy;
  mean /= static_cast<double>(summary.folds.size());
  double var = 0.0;
  for (const auto& m : summary.folds)
    var += (m.accuracy - mean) * (m.accuracy - mean);
  var /= static_cast<double>(summary.folds.size());
  summary.mean_accuracy = mean;
  summary.std_accuracy = std::sqrt(var);
  return summary;
}

}  // namespace awb::train
