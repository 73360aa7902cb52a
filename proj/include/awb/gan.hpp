#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "awb/error.hpp"
#include "awb/nn.hpp"
#include "awb/rng.hpp"
#include "awb/tensor.hpp"
#include "awb/train.hpp"

namespace awb::gan {

/// Small dense stack: hidden layers with relu, linear output layer. The GAN
/// nets are vector-in / vector-out, so they live outside the image-shaped
/// ModelSpec machinery.
struct Mlp {
  int64_t in_dim = 0;
  int64_t out_dim = 0;
  std::vector<int64_t> hidden;
  std::vector<nn::Param> params;

  /// x is N x in_dim; returns N x out_dim.
  Tensor forward(const Tensor& x) const {
    if (x.shape().size() != 2 || x.shape()[1] != in_dim)
      throw Error(ErrorKind::ShapeMismatch,
                  "mlp forward: " + shape_str(x.shape()) + " vs in_dim " +
                      std::to_string(in_dim));
    Tensor h = x;
    size_t p = 0;
    for (size_t layer = 0; layer < hidden.size(); ++layer) {
      h = relu(bias_add(matmul(h, params[p].tensor), params[p + 1].tensor));
      p += 2;
    }
    return bias_add(matmul(h, params[p].tensor), params[p + 1].tensor);
  }

  void zero_grads() {
    for (auto& p : params) p.tensor.zero_grad();
  }
};

inline Mlp build_mlp(int64_t in_dim, const std::vector<int64_t>& hidden,
                     int64_t out_dim, uint64_t seed) {
  if (in_dim < 1 || out_dim < 1)
    throw Error(ErrorKind::InvalidConfig, "mlp dimensions must be positive");
  for (int64_t h : hidden)
    if (h < 1)
      throw Error(ErrorKind::InvalidConfig, "mlp hidden sizes must be positive");
  Mlp mlp;
  mlp.in_dim = in_dim;
  mlp.out_dim = out_dim;
  mlp.hidden = hidden;
  Rng rng(seed);
  auto dense = [&](int64_t in, int64_t out, const std::string& id) {
    double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::vector<double> w(in * out);
    for (auto& x : w) x = rng.uniform(-bound, bound);
    mlp.params.push_back({id + ".weight", Tensor({in, out}, std::move(w), true)});
    mlp.params.push_back({id + ".bias", Tensor::zeros({out}, true)});
  };
  int64_t cur = in_dim;
  for (size_t i = 0; i < hidden.size(); ++i) {
    dense(cur, hidden[i], "dense" + std::to_string(i));
    cur = hidden[i];
  }
  dense(cur, out_dim, "dense" + std::to_string(hidden.size()));
  return mlp;
}

// ---------------------------------------------------------------------------
// Synthetic data sources

enum class DistKind { Gaussian1d, Mixture2d };

/// Low-dimensional synthetic target distribution for desk-scale runs.
struct DataSource {
  DistKind kind = DistKind::Gaussian1d;
  double mu = 3.0;     // gaussian1d
  double sigma = 1.0;  // gaussian1d
  double separation = 2.0;  // mixture2d: components at (+-separation, 0)

  int64_t dim() const { return kind == DistKind::Gaussian1d ? 1 : 2; }

  void draw(Rng& rng, double* out) const {
    if (kind == DistKind::Gaussian1d) {
      out[0] = rng.normal(mu, sigma);
    } else {
      double cx = rng.uniform() < 0.5 ? -separation : separation;
      out[0] = rng.normal(cx, 0.5);
      out[1] = rng.normal(0.0, 0.5);
    }
  }
};

struct GanConfig {
  int64_t latent_dim = 4;
  std::vector<int64_t> generator_layers = {16, 16};
  std::vector<int64_t> discriminator_layers = {16, 16};
  int64_t steps = 2000;
  int64_t batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.0;
  uint64_t seed = 7;
  DataSource data_source;
};

inline void validate_config(const GanConfig& c) {
  if (c.latent_dim < 1)
    throw Error(ErrorKind::InvalidConfig, "latent_dim must be >= 1");
  if (c.steps < 0)
    throw Error(ErrorKind::InvalidConfig, "steps must be >= 0");
  if (c.batch_size < 1)
    throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  if (c.learning_rate <= 0.0)
    throw Error(ErrorKind::InvalidConfig, "learning_rate must be > 0");
}

struct StepRecord {
  int64_t step = 0;  // 1-based
  double d_loss = 0.0;
  double g_loss = 0.0;
  double d_accuracy = 0.0;
};

struct GanHistory {
  std::vector<StepRecord> entries;
};

// Real samples carry label 1, generated samples label 0, matching the
// dataset convention; the discriminator is a two-logit classifier, so both
// BCE objectives are expressed through softmax cross-entropy.
inline constexpr int kRealLabel = 1;
inline constexpr int kFakeLabel = 0;

namespace detail {

inline Tensor draw_latents(Rng& rng, int64_t n, int64_t latent_dim) {
  std::vector<double> z(n * latent_dim);
  for (auto& x : z) x = rng.normal();
  return Tensor({n, latent_dim}, std::move(z));
}

inline Tensor draw_real(Rng& rng, int64_t n, const DataSource& src) {
  std::vector<double> v(n * src.dim());
  for (int64_t i = 0; i < n; ++i) src.draw(rng, v.data() + i * src.dim());
  return Tensor({n, src.dim()}, std::move(v));
}

inline Tensor vstack(const Tensor& a, const Tensor& b) {
  std::vector<double> v;
  v.reserve(a.numel() + b.numel());
  v.insert(v.end(), a.values().begin(), a.values().end());
  v.insert(v.end(), b.values().begin(), b.values().end());
  return Tensor({a.shape()[0] + b.shape()[0], a.shape()[1]}, std::move(v));
}

}  // namespace detail

/// One discriminator update on a balanced batch: `real_batch` labelled real
/// plus an equal number of fresh generated samples labelled fake. The
/// generator is untouched (its side of the graph is detached).
inline double discriminator_step(Mlp& d, const Mlp& g, const Tensor& real_batch,
                                 train::SgdOptimizer& optimizer, Rng& rng) {
  int64_t n = real_batch.shape()[0];
  Tensor z = detail::draw_latents(rng, n, g.in_dim);
  Tensor fake = g.forward(z).detached();
  Tensor batch = detail::vstack(real_batch, fake);
  std::vector<int> labels(2 * n, kRealLabel);
  for (int64_t i = n; i < 2 * n; ++i) labels[i] = kFakeLabel;
  Tensor loss = cross_entropy(d.forward(batch), labels);
  double value = loss.item();
  if (!std::isfinite(value))
    throw Error(ErrorKind::DivergenceDetected, "discriminator loss non-finite");
  d.zero_grads();
  backward(loss);
  optimizer.step(d.params);
  return value;
}

/// One generator update through the frozen discriminator on the
/// non-saturating objective (drive D's real logit up on generated samples).
inline double generator_step(Mlp& g, const Mlp& d,
                             train::SgdOptimizer& optimizer, Rng& rng,
                             int64_t batch_size) {
  Tensor z = detail::draw_latents(rng, batch_size, g.in_dim);
  Tensor fake = g.forward(z);
  // freeze D: route the generated batch through parameter-detached copies
  Mlp d_frozen;
  d_frozen.in_dim = d.in_dim;
  d_frozen.out_dim = d.out_dim;
  d_frozen.hidden = d.hidden;
  for (const auto& p : d.params)
    d_frozen.params.push_back({p.name, p.tensor.detached()});
  std::vector<int> labels(batch_size, kRealLabel);
  Tensor loss = cross_entropy(d_frozen.forward(fake), labels);
  double value = loss.item();
  if (!std::isfinite(value))
    throw Error(ErrorKind::DivergenceDetected, "generator loss non-finite");
  g.zero_grads();
  backward(loss);
  optimizer.step(g.params);
  return value;
}

/// Discriminator accuracy on a balanced held-out batch: fixed real samples
/// and fixed latents pushed through the current generator.
inline double discriminator_accuracy(const Mlp& d, const Mlp& g,
                                     const Tensor& held_real,
                                     const Tensor& held_latents) {
  Tensor fake = g.forward(held_latents).detached();
  int64_t n_real = held_real.shape()[0], n_fake = fake.shape()[0];
  Tensor logits_real = d.forward(held_real);
  Tensor logits_fake = d.forward(fake);
  int64_t correct = 0;
  auto lr = logits_real.values();
  for (int64_t i = 0; i < n_real; ++i)
    correct += lr[i * 2 + kRealLabel] > lr[i * 2 + kFakeLabel];
  auto lf = logits_fake.values();
  for (int64_t i = 0; i < n_fake; ++i)
    correct += lf[i * 2 + kFakeLabel] >= lf[i * 2 + kRealLabel];
  return static_cast<double>(correct) / static_cast<double>(n_real + n_fake);
}

struct GanResult {
  Mlp generator;
  Mlp discriminator;
  GanHistory history;
};

/// Alternating single-step training: D on a balanced batch, then G through
/// the frozen D. History records one row per step.
inline GanResult train_gan(const GanConfig& config) {
  validate_config(config);
  const auto& src = config.data_source;

  Rng rng(config.seed);
  uint64_t g_seed = rng.fork_seed();
  uint64_t d_seed = rng.fork_seed();
  GanResult result;
  result.generator =
      build_mlp(config.latent_dim, config.generator_layers, src.dim(), g_seed);
  result.discriminator =
      build_mlp(src.dim(), config.discriminator_layers, 2, d_seed);

  train::SgdOptimizer d_opt(config.learning_rate, config.momentum);
  train::SgdOptimizer g_opt(config.learning_rate, config.momentum);

  // held-out evaluation batch, fixed for the whole run
  constexpr int64_t kHeldOut = 128;
  Tensor held_real = detail::draw_real(rng, kHeldOut, src);
  Tensor held_latents = detail::draw_latents(rng, kHeldOut, config.latent_dim);

  for (int64_t step = 1; step <= config.steps; ++step) {
    Tensor real = detail::draw_real(rng, config.batch_size, src);
    StepRecord record;
    record.step = step;
    record.d_loss = discriminator_step(result.discriminator, result.generator,
                                       real, d_opt, rng);
    record.g_loss = generator_step(result.generator, result.discriminator,
                                   g_opt, rng, config.batch_size);
    record.d_accuracy = discriminator_accuracy(
        result.discriminator, result.generator, held_real, held_latents);
    result.history.entries.push_back(record);
  }
  return result;
}

/// n generated vectors from seeded standard-normal latents.
inline std::vector<std::vector<double>> sample(const Mlp& generator, int64_t n,
                                               uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::InvalidConfig, "sample needs n >= 1");
  Rng rng(seed);
  Tensor z = detail::draw_latents(rng, n, generator.in_dim);
  Tensor out = generator.forward(z);
  std::vector<std::vector<double>> samples(n);
  auto v = out.values();
  for (int64_t i = 0; i < n; ++i)
    samples[i].assign(v.begin() + i * generator.out_dim,
                      v.begin() + (i + 1) * generator.out_dim);
  return samples;
}

}  // namespace awb::gan
