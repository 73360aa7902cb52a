#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "awb/data.hpp"
#include "awb/error.hpp"
#include "awb/nn.hpp"
#include "awb/parallel.hpp"
#include "awb/tensor.hpp"
#include "awb/train.hpp"

namespace awb::attack {

enum class Kind { Fgsm, Pgd, Targeted };

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Fgsm: return "fgsm";
    case Kind::Pgd: return "pgd";
    case Kind::Targeted: return "targeted";
  }
  return "fgsm";
}

inline Kind parse_kind(const std::string& name) {
  if (name == "fgsm") return Kind::Fgsm;
  if (name == "pgd") return Kind::Pgd;
  if (name == "targeted") return Kind::Targeted;
  throw Error(ErrorKind::InvalidConfig, "unknown attack kind '" + name + "'");
}

/// Perturbation budget description. epsilon is an L-infinity bound in [0,1]
/// pixel units; budgets/clipping always apply in raw pixel space even though
/// gradients flow through the model's baked normalization.
struct AttackConfig {
  Kind kind = Kind::Pgd;
  double epsilon = 0.1;
  int64_t steps = 10;
  double step_size = 0.02;
  std::optional<int> target_class;
  uint64_t seed = 42;
};

inline void validate_config(const AttackConfig& c) {
  if (c.epsilon < 0.0 || c.epsilon > 1.0 || !std::isfinite(c.epsilon))
    throw Error(ErrorKind::InvalidConfig, "epsilon must lie in [0, 1]");
  if (c.kind != Kind::Fgsm) {
    if (c.steps < 1)
      throw Error(ErrorKind::InvalidConfig, "iterative attacks need steps >= 1");
    if (c.step_size <= 0.0)
      throw Error(ErrorKind::InvalidConfig, "step_size must be > 0");
  }
}

/// One attacked image with its degradation bookkeeping.
struct AdvExample {
  Tensor original;
  Tensor perturbed;
  Tensor delta;  // perturbed - original
  double clean_logit_true = 0.0;
  double adv_logit_true = 0.0;
  double clean_prob_true = 0.0;
  double adv_prob_true = 0.0;
  int clean_pred = 0;
  int adv_pred = 0;
  double linf = 0.0;
  double l2 = 0.0;
  bool flipped = false;
  // targeted runs additionally track the target class probability
  std::optional<int> target_class;
  std::optional<double> clean_prob_target;
  std::optional<double> adv_prob_target;
};

/// L2 or L-infinity norm over all elements (p in {2, inf}).
inline double lp_norm(const Tensor& delta, double p) {
  auto v = delta.values();
  if (std::isinf(p)) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }
  if (p == 2.0) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  }
  throw Error(ErrorKind::InvalidConfig, "lp_norm supports p = 2 or infinity");
}

namespace detail {

inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// Shared gradient-sign iterate: ascends (untargeted) or descends (targeted)
/// the cross-entropy of `label`, projecting every step onto the L-inf ball
/// around the original and onto [0,1]. Zero start; fully deterministic.
inline Tensor gradient_sign_iterate(const nn::Model& frozen,
                                    const Tensor& original, int label,
                                    bool ascend, double epsilon, int64_t steps,
                                    double step_size) {
  const Shape& s = original.shape();
  Shape batched = {1, s[0], s[1], s[2]};
  std::vector<double> base(original.values().begin(), original.values().end());
  std::vector<double> current = base;

  for (int64_t step = 0; step < steps; ++step) {
    Tensor leaf(batched, current, true);
    Tensor loss = cross_entropy(nn::forward(frozen, leaf), {label});
    backward(loss);
    auto g = leaf.grad();
    const double direction = ascend ? step_size : -step_size;
    for (size_t i = 0; i < current.size(); ++i) {
      double x = current[i] + direction * sign0(g.empty() ? 0.0 : g[i]);
      x = std::min(base[i] + epsilon, std::max(base[i] - epsilon, x));
      current[i] = std::min(1.0, std::max(0.0, x));
    }
  }
  return Tensor(s, std::move(current));
}

inline AdvExample finish_example(const nn::Model& frozen,
                                 const Tensor& original,
                                 const Tensor& perturbed, int true_label,
                                 std::optional<int> target) {
  AdvExample ex;
  ex.original = original;
  ex.perturbed = perturbed;
  std::vector<double> d(original.numel());
  auto ov = original.values(), pv = perturbed.values();
  for (size_t i = 0; i < d.size(); ++i) d[i] = pv[i] - ov[i];
  ex.delta = Tensor(original.shape(), std::move(d));

  nn::Prediction clean = nn::predict_proba(frozen, original);
  nn::Prediction adv = nn::predict_proba(frozen, perturbed);
  ex.clean_logit_true = clean.logits[true_label];
  ex.adv_logit_true = adv.logits[true_label];
  ex.clean_prob_true = clean.probs[true_label];
  ex.adv_prob_true = adv.probs[true_label];
  ex.clean_pred = clean.argmax();
  ex.adv_pred = adv.argmax();
  ex.linf = lp_norm(ex.delta, std::numeric_limits<double>::infinity());
  ex.l2 = lp_norm(ex.delta, 2.0);
  ex.flipped = ex.clean_pred == true_label && ex.adv_pred != true_label;
  if (target) {
    ex.target_class = target;
    ex.clean_prob_target = clean.probs[*target];
    ex.adv_prob_target = adv.probs[*target];
  }
  return ex;
}

inline void check_image(const nn::Model& model, const Tensor& image) {
  if (image.shape().size() != 3 ||
      image.shape()[0] != model.spec.in_channels ||
      image.shape()[1] != model.spec.in_height ||
      image.shape()[2] != model.spec.in_width)
    throw Error(ErrorKind::ShapeMismatch,
                "attack image " + shape_str(image.shape()) +
                    " does not match model input");
}

}  // namespace detail

/// Single gradient-sign step of size epsilon (parameters frozen, sign(0)=0),
/// clipped to valid pixels.
inline AdvExample fgsm(const nn::Model& model, const Tensor& image,
                       int true_label, double epsilon) {
  detail::check_image(model, image);
  if (epsilon < 0.0)
    throw Error(ErrorKind::InvalidConfig, "epsilon must be >= 0");
  nn::Model frozen = model.frozen();
  Tensor perturbed = detail::gradient_sign_iterate(frozen, image, true_label,
                                                   /*ascend=*/true, epsilon,
                                                   /*steps=*/1, epsilon);
  return detail::finish_example(frozen, image, perturbed, true_label, {});
}

/// Iterated gradient-sign ascent with per-step projection onto the epsilon
/// ball and pixel range. steps=1 with step_size=epsilon collapses to fgsm.
inline AdvExample pgd(const nn::Model& model, const Tensor& image,
                      int true_label, double epsilon, int64_t steps,
                      double step_size) {
  detail::check_image(model, image);
  if (steps < 1 || step_size <= 0.0)
    throw Error(ErrorKind::InvalidConfig, "pgd needs steps >= 1, step_size > 0");
  nn::Model frozen = model.frozen();
  Tensor perturbed = detail::gradient_sign_iterate(
      frozen, image, true_label, /*ascend=*/true, epsilon, steps, step_size);
  return detail::finish_example(frozen, image, perturbed, true_label, {});
}

/// Gradient-sign descent on the target class loss under the same projections.
inline AdvExample targeted(const nn::Model& model, const Tensor& image,
                           int target_class, double epsilon, int64_t steps,
                           double step_size) {
  detail::check_image(model, image);
  if (target_class < 0 || target_class >= model.spec.num_classes)
    throw Error(ErrorKind::InvalidTarget,
                "target class " + std::to_string(target_class) +
                    " outside [0, " + std::to_string(model.spec.num_classes) +
                    ")");
  if (steps < 1 || step_size <= 0.0)
    throw Error(ErrorKind::InvalidConfig,
                "targeted needs steps >= 1, step_size > 0");
  nn::Model frozen = model.frozen();
  Tensor perturbed = detail::gradient_sign_iterate(frozen, image, target_class,
                                                   /*ascend=*/false, epsilon,
                                                   steps, step_size);
  // the "true" bookkeeping still tracks the clean argmax class
  nn::Prediction clean = nn::predict_proba(frozen, image);
  return detail::finish_example(frozen, image, perturbed, clean.argmax(),
                                target_class);
}

/// Dispatches one sample through the configured attack.
inline AdvExample run_attack(const nn::Model& model, const Tensor& image,
                             int true_label, const AttackConfig& config) {
  validate_config(config);
  switch (config.kind) {
    case Kind::Fgsm:
      return fgsm(model, image, true_label, config.epsilon);
    case Kind::Pgd:
      return pgd(model, image, true_label, config.epsilon, config.steps,
                 config.step_size);
    case Kind::Targeted: {
      if (!config.target_class)
        throw Error(ErrorKind::InvalidTarget,
                    "targeted attack needs a target class");
      return targeted(model, image, *config.target_class, config.epsilon,
                      config.steps, config.step_size);
    }
  }
  throw Error(ErrorKind::InvalidConfig, "unreachable attack kind");
}

// ---------------------------------------------------------------------------
// Dataset-level reports

struct SampleSummary {
  std::string path;
  int label = 0;
  double clean_logit_true = 0.0;
  double adv_logit_true = 0.0;
  double clean_prob_true = 0.0;
  double adv_prob_true = 0.0;
  int clean_pred = 0;
  int adv_pred = 0;
  double linf = 0.0;
  double l2 = 0.0;
  bool flipped = false;
};

struct RobustnessReport {
  AttackConfig config;
  int64_t count = 0;
  double clean_accuracy = 0.0;
  double adversarial_accuracy = 0.0;
  double mean_clean_true_logit = 0.0;
  double mean_adv_true_logit = 0.0;
  double mean_clean_true_prob = 0.0;
  double mean_adv_true_prob = 0.0;
  double flip_rate = 0.0;  // among correctly classified clean samples
  std::vector<SampleSummary> samples;
};

/// Attacks an evaluation split (never train) and aggregates the degradation.
/// Per-image attacks run on the worker pool; reduction is in sample order.
inline RobustnessReport evaluate_robustness(const nn::Model& model,
                                            const train::ImageSet& images,
                                            data::Split split,
                                            const AttackConfig& config,
                                            size_t workers = 1) {
  if (split == data::Split::Train)
    throw Error(ErrorKind::WrongSplit,
                "robustness evaluation refuses the train split; attack "
                "held-out data only");
  if (images.empty())
    throw Error(ErrorKind::EmptyDataset, "robustness evaluation over zero samples");
  validate_config(config);

  nn::Model frozen = model.frozen();
  std::vector<AdvExample> examples(images.size());
  parallel_for(images.size(), workers, [&](size_t i) {
    examples[i] = run_attack(frozen, images[i].image, images[i].label, config);
  });

  RobustnessReport report;
  report.config = config;
  report.count = static_cast<int64_t>(images.size());
  int64_t clean_correct = 0, adv_correct = 0, flips = 0;
  double sum_cl = 0.0, sum_al = 0.0, sum_cp = 0.0, sum_ap = 0.0;
  for (size_t i = 0; i < images.size(); ++i) {
    const auto& ex = examples[i];
    clean_correct += (ex.clean_pred == images[i].label);
    adv_correct += (ex.adv_pred == images[i].label);
    flips += ex.flipped;
    sum_cl += ex.clean_logit_true;
    sum_al += ex.adv_logit_true;
    sum_cp += ex.clean_prob_true;
    sum_ap += ex.adv_prob_true;
    report.samples.push_back({images[i].path, images[i].label,
                              ex.clean_logit_true, ex.adv_logit_true,
                              ex.clean_prob_true, ex.adv_prob_true,
                              ex.clean_pred, ex.adv_pred, ex.linf, ex.l2,
                              ex.flipped});
  }
  double n = static_cast<double>(images.size());
  report.clean_accuracy = clean_correct / n;
  report.adversarial_accuracy = adv_correct / n;
  report.mean_clean_true_logit = sum_cl / n;
  report.mean_adv_true_logit = sum_al / n;
  report.mean_clean_true_prob = sum_cp / n;
  report.mean_adv_true_prob = sum_ap / n;
  report.flip_rate =
      clean_correct > 0 ? static_cast<double>(flips) / clean_correct : 0.0;
  return report;
}

struct SweepRow {
  double delta = 0.0;  // budget in 1/255 pixel steps
  double mean_true_logit = 0.0;
  double mean_true_prob = 0.0;
  double flip_rate = 0.0;
};

struct SweepReport {
  Kind kind = Kind::Pgd;
  std::vector<SweepRow> rows;
};

inline constexpr int64_t kSweepPgdSteps = 10;

/// Table-I-shaped budget sweep. Budgets are in 1/255 pixel steps (delta 5
/// means epsilon 5/255), ascending from 0; the 0 row reproduces the clean
/// statistics bitwise. PGD sweeps use 10 steps of 2.5 * epsilon / steps.
inline SweepReport delta_sweep(const nn::Model& model,
                               const train::ImageSet& images,
                               const std::vector<double>& budgets, Kind kind,
                               size_t workers = 1) {
  if (images.empty())
    throw Error(ErrorKind::EmptySampleSet, "delta_sweep over zero samples");
  if (budgets.empty() || budgets.front() != 0.0)
    throw Error(ErrorKind::InvalidConfig, "budgets must start at 0");
  if (!std::is_sorted(budgets.begin(), budgets.end()))
    throw Error(ErrorKind::InvalidConfig, "budgets must be ascending");
  if (kind == Kind::Targeted)
    throw Error(ErrorKind::InvalidConfig, "sweeps use fgsm or pgd");

  nn::Model frozen = model.frozen();
  SweepReport report;
  report.kind = kind;
  for (double budget : budgets) {
    double eps = budget / 255.0;
    AttackConfig config;
    config.kind = kind;
    config.epsilon = eps;
    if (kind == Kind::Pgd) {
      config.steps = kSweepPgdSteps;
      config.step_size = eps > 0.0
                             ? 2.5 * eps / static_cast<double>(kSweepPgdSteps)
                             : 1.0;  // unused at budget 0 but must be valid
    }
    std::vector<AdvExample> examples(images.size());
    parallel_for(images.size(), workers, [&](size_t i) {
      examples[i] =
          run_attack(frozen, images[i].image, images[i].label, config);
    });
    SweepRow row;
    row.delta = budget;
    int64_t clean_correct = 0, flips = 0;
    double sum_logit = 0.0, sum_prob = 0.0;
    for (size_t i = 0; i < images.size(); ++i) {
      const auto& ex = examples[i];
      sum_logit += ex.adv_logit_true;
      sum_prob += ex.adv_prob_true;
      clean_correct += (ex.clean_pred == images[i].label);
      flips += ex.flipped;
    }
    row.mean_true_logit = sum_logit / static_cast<double>(images.size());
    row.mean_true_prob = sum_prob / static_cast<double>(images.size());
    row.flip_rate =
        clean_correct > 0 ? static_cast<double>(flips) / clean_correct : 0.0;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace awb::attack
