#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "awb/data.hpp"
#include "awb/error.hpp"
#include "awb/rng.hpp"
#include "awb/tensor.hpp"

namespace awb::nn {

enum class ActKind { Relu, Sigmoid };

inline const char* act_name(ActKind k) {
  return k == ActKind::Relu ? "relu" : "sigmoid";
}

struct Conv {
  int64_t filters;
  int64_t kernel;
  int64_t stride = 1;
  int64_t padding = 0;
};
struct MaxPool {
  int64_t kernel;
  int64_t stride;
};
struct Flatten {};
struct Dense {
  int64_t units;
};
struct Activation {
  ActKind kind;
};

using Layer = std::variant<Conv, MaxPool, Flatten, Dense, Activation>;

/// Declarative architecture: input planes and an ordered layer list ending in
/// a Dense(num_classes) classification head.
struct ModelSpec {
  int64_t in_channels = 1;
  int64_t in_height = 224;
  int64_t in_width = 224;
  std::vector<Layer> layers;
  int64_t num_classes = 2;
};

/// Output shape of every layer in order. Conv/pool sides follow
/// floor((n + 2p - k) / s) + 1; Flatten collapses to a single axis; Dense
/// maps to its unit count. Throws IncompatibleLayer naming the layer index.
inline std::vector<Shape> infer_shapes(const ModelSpec& spec) {
  if (spec.in_channels < 1 || spec.in_height < 1 || spec.in_width < 1)
    throw Error(ErrorKind::IncompatibleLayer, "model input must be positive");
  std::vector<Shape> shapes;
  Shape cur = {spec.in_channels, spec.in_height, spec.in_width};
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    auto fail = [&](const std::string& why) -> Error {
      return Error(ErrorKind::IncompatibleLayer,
                   "layer " + std::to_string(i) + ": " + why);
    };
    try {
      if (auto* c = std::get_if<Conv>(&layer)) {
        if (cur.size() != 3) throw fail("conv requires C x H x W input");
        if (c->filters < 1) throw fail("conv needs at least one filter");
        int64_t h = conv_output_size(cur[1], c->kernel, c->padding, c->stride);
        int64_t w = conv_output_size(cur[2], c->kernel, c->padding, c->stride);
        cur = {c->filters, h, w};
      } else if (auto* p = std::get_if<MaxPool>(&layer)) {
        if (cur.size() != 3) throw fail("pool requires C x H x W input");
        if (p->kernel > cur[1] || p->kernel > cur[2])
          throw fail("pool window does not fit");
        int64_t h = conv_output_size(cur[1], p->kernel, 0, p->stride);
        int64_t w = conv_output_size(cur[2], p->kernel, 0, p->stride);
        cur = {cur[0], h, w};
      } else if (std::get_if<Flatten>(&layer)) {
        cur = {shape_numel(cur)};
      } else if (auto* d = std::get_if<Dense>(&layer)) {
        if (cur.size() != 1) throw fail("dense requires flattened input");
        if (d->units < 1) throw fail("dense needs at least one unit");
        cur = {d->units};
      } else if (std::get_if<Activation>(&layer)) {
        // shape preserved
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::IncompatibleLayer) throw;
      throw fail(e.what());
    }
    shapes.push_back(cur);
  }
  return shapes;
}

/// Named parameter tensor in declaration order.
struct Param {
  std::string name;
  Tensor tensor;
};

/// A spec plus its parameter store and optional baked normalization stats.
/// forward() applies the stats (as graph ops, so attack gradients flow back
/// to raw pixels) before the first layer.
struct Model {
  ModelSpec spec;
  std::vector<Param> params;
  std::vector<std::string> class_names;
  std::optional<data::NormStats> norm_stats;

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& p : params) n += p.tensor.numel();
    return n;
  }

  Tensor* find_param(const std::string& name) {
    for (auto& p : params)
      if (p.name == name) return &p.tensor;
    return nullptr;
  }

  /// Parameter-frozen view sharing nothing with this model's graph; used by
  /// attacks so backward passes stop at the layer inputs.
  Model frozen() const {
    Model m;
    m.spec = spec;
    m.class_names = class_names;
    m.norm_stats = norm_stats;
    m.params.reserve(params.size());
    for (const auto& p : params) m.params.push_back({p.name, p.tensor.detached()});
    return m;
  }
};

/// Builds a model with fan-in-scaled uniform weights (+-sqrt(6/fan_in)) and
/// zero biases, drawn in declaration order from the seeded generator.
inline Model build_model(const ModelSpec& spec, uint64_t seed) {
  auto shapes = infer_shapes(spec);
  if (spec.num_classes < 2)
    throw Error(ErrorKind::IncompatibleLayer, "num_classes must be >= 2");
  if (shapes.empty() || shapes.back() != Shape{spec.num_classes})
    throw Error(ErrorKind::IncompatibleLayer,
                "final layer must emit exactly " +
                    std::to_string(spec.num_classes) + " logits");

  Model model;
  model.spec = spec;
  Rng rng(seed);
  auto draw = [&rng](Shape shape, int64_t fan_in) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(v), true);
  };

  Shape cur = {spec.in_channels, spec.in_height, spec.in_width};
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const std::string id = "layer" + std::to_string(i);
    if (auto* c = std::get_if<Conv>(&spec.layers[i])) {
      int64_t fan_in = cur[0] * c->kernel * c->kernel;
      model.params.push_back(
          {id + ".kernel", draw({c->filters, cur[0], c->kernel, c->kernel}, fan_in)});
      model.params.push_back({id + ".bias", Tensor::zeros({c->filters}, true)});
    } else if (auto* d = std::get_if<Dense>(&spec.layers[i])) {
      model.params.push_back({id + ".weight", draw({cur[0], d->units}, cur[0])});
      model.params.push_back({id + ".bias", Tensor::zeros({d->units}, true)});
    }
    cur = shapes[i];
  }
  return model;
}

namespace detail {

// Normalization constants expanded to the batch shape so exact-shape
// elementwise ops can apply them inside the graph.
inline std::pair<Tensor, Tensor> norm_constants(const data::NormStats& stats,
                                                const Shape& batch_shape) {
  const int64_t N = batch_shape[0], C = batch_shape[1],
                plane = batch_shape[2] * batch_shape[3];
  std::vector<double> mean(N * C * plane), inv_std(N * C * plane);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      double m = stats.mean[c], is = 1.0 / stats.std[c];
      double* mp = mean.data() + (n * C + c) * plane;
      double* sp = inv_std.data() + (n * C + c) * plane;
      for (int64_t j = 0; j < plane; ++j) {
        mp[j] = m;
        sp[j] = is;
      }
    }
  return {Tensor(batch_shape, std::move(mean)),
          Tensor(batch_shape, std::move(inv_std))};
}

}  // namespace detail

/// Forward pass over a raw-pixel batch of N x C x H x W, producing N x k
/// logits. Gradient tracking follows the inputs/parameters; inference with
/// constant inputs records no graph.
inline Tensor forward(const Model& model, const Tensor& batch) {
  const auto& spec = model.spec;
  if (batch.shape().size() != 4 || batch.shape()[1] != spec.in_channels ||
      batch.shape()[2] != spec.in_height || batch.shape()[3] != spec.in_width)
    throw Error(ErrorKind::ShapeMismatch,
                "forward: batch " + shape_str(batch.shape()) +
                    " does not match model input (" +
                    std::to_string(spec.in_channels) + "," +
                    std::to_string(spec.in_height) + "," +
                    std::to_string(spec.in_width) + ")");
  const int64_t N = batch.shape()[0];

  Tensor x = batch;
  if (model.norm_stats) {
    if (model.norm_stats->mean.size() != static_cast<size_t>(spec.in_channels))
      throw Error(ErrorKind::ShapeMismatch,
                  "model norm_stats channel count mismatch");
    auto [mean_t, inv_std_t] =
        detail::norm_constants(*model.norm_stats, batch.shape());
    x = mul(sub(x, mean_t), inv_std_t);
  }

  size_t param_idx = 0;
  auto next_param = [&](const char* suffix) -> const Tensor& {
    (void)suffix;
    return model.params[param_idx++].tensor;
  };
  for (const auto& layer : spec.layers) {
    if (auto* c = std::get_if<Conv>(&layer)) {
      const Tensor& kernel = next_param("kernel");
      const Tensor& bias = next_param("bias");
      x = conv2d(x, kernel, bias, c->stride, c->padding);
    } else if (auto* p = std::get_if<MaxPool>(&layer)) {
      x = maxpool2d(x, p->kernel, p->stride);
    } else if (std::get_if<Flatten>(&layer)) {
      x = reshape(x, {N, x.numel() / N});
    } else if (std::get_if<Dense>(&layer)) {
      const Tensor& weight = next_param("weight");
      const Tensor& bias = next_param("bias");
      x = bias_add(matmul(x, weight), bias);
    } else if (auto* a = std::get_if<Activation>(&layer)) {
      x = a->kind == ActKind::Relu ? relu(x) : sigmoid(x);
    }
  }
  return x;
}

struct Prediction {
  std::vector<double> probs;
  std::vector<double> logits;

  int argmax() const {
    int best = 0;
    for (size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[best]) best = static_cast<int>(i);
    return best;
  }
};

/// Softmax probabilities (plus the raw logits, for attack reporting) for one
/// raw-pixel C x H x W image.
inline Prediction predict_proba(const Model& model, const Tensor& image) {
  if (image.shape().size() != 3)
    throw Error(ErrorKind::ShapeMismatch,
                "predict_proba expects a single C x H x W image");
  Shape batched = {1, image.shape()[0], image.shape()[1], image.shape()[2]};
  Tensor logits = forward(model, reshape(image, batched));
  Tensor probs = softmax(logits);
  Prediction pred;
  pred.logits.assign(logits.values().begin(), logits.values().end());
  pred.probs.assign(probs.values().begin(), probs.values().end());
  return pred;
}

// ---------------------------------------------------------------------------
// Presets

/// Three conv blocks and three dense layers ending in the k-way head.
inline ModelSpec custom7_spec(int64_t channels, int64_t side, int64_t k = 2) {
  ModelSpec spec;
  spec.in_channels = channels;
  spec.in_height = side;
  spec.in_width = side;
  spec.num_classes = k;
  spec.layers = {
      Conv{16, 3, 1, 1}, Activation{ActKind::Relu}, MaxPool{2, 2},
      Conv{32, 3, 1, 1}, Activation{ActKind::Relu}, MaxPool{2, 2},
      Conv{64, 3, 1, 1}, Activation{ActKind::Relu}, MaxPool{2, 2},
      Flatten{},
      Dense{128},        Activation{ActKind::Relu},
      Dense{64},         Activation{ActKind::Relu},
      Dense{k},
  };
  return spec;
}

/// Four conv blocks and two dense layers.
inline ModelSpec alt6_spec(int64_t channels, int64_t side, int64_t k = 2) {
  ModelSpec spec;
  spec.in_channels = channels;
  spec.in_height = side;
  spec.in_width = side;
  spec.num_classes = k;
  spec.layers = {
      Conv{16, 3, 1, 1}, Activation{ActKind::Relu}, MaxPool{2, 2},
      Conv{32, 3, 1, 1}, Activation{ActKind::Relu}, MaxPool{2, 2},
      Conv{64, 3, 1, 1}, Activation{ActKind::Relu}, MaxPool{2, 2},
      Conv{64, 3, 1, 1}, Activation{ActKind::Relu}, MaxPool{2, 2},
      Flatten{},
      Dense{128},        Activation{ActKind::Relu},
      Dense{k},
  };
  return spec;
}

inline ModelSpec preset_spec(const std::string& name, int64_t channels,
                             int64_t side, int64_t k = 2) {
  if (name == "custom7") return custom7_spec(channels, side, k);
  if (name == "alt6") return alt6_spec(channels, side, k);
  throw Error(ErrorKind::InvalidConfig, "unknown preset '" + name + "'");
}

}  // namespace awb::nn
