#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "awb/error.hpp"

namespace awb {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Output side of a convolution/pooling window, floor((n + 2p - k) / s) + 1.
inline int64_t conv_output_size(int64_t n, int64_t k, int64_t p, int64_t s) {
  if (s < 1) throw Error(ErrorKind::InvalidHyperparam, "stride must be >= 1");
  if (p < 0) throw Error(ErrorKind::InvalidHyperparam, "padding must be >= 0");
  if (k < 1) throw Error(ErrorKind::InvalidHyperparam, "kernel must be >= 1");
  if (k > n + 2 * p)
    throw Error(ErrorKind::ShapeMismatch,
                "kernel " + std::to_string(k) + " exceeds padded input " +
                    std::to_string(n + 2 * p));
  return (n + 2 * p - k) / s + 1;
}

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One grad buffer pointer per parent; nullptr when that parent is off every
// gradient path.
using BackwardFn =
    std::function<void(const std::vector<double>& gout,
                       const std::vector<std::vector<double>*>& parent_grads)>;

struct Node {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  bool is_leaf = false;
  std::vector<double> grad;  // leaves only; allocated on first accumulation
  std::vector<NodePtr> parents;
  BackwardFn backward;
  const char* op = "leaf";

  int64_t numel() const { return static_cast<int64_t>(values.size()); }
};

inline void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 4)
    throw Error(ErrorKind::ShapeMismatch,
                "tensors have 1-4 dimensions, got " + shape_str(shape));
  for (int64_t d : shape)
    if (d <= 0)
      throw Error(ErrorKind::ShapeMismatch,
                  "dimension sizes must be positive, got " + shape_str(shape));
}

inline void validate_finite(const std::vector<double>& values) {
  for (double v : values)
    if (!std::isfinite(v))
      throw Error(ErrorKind::NonFiniteValue,
                  "tensor construction with NaN/Inf rejected");
}

}  // namespace detail

/// Dense row-major tensor participating in a reverse-mode differentiation
/// graph. Copies share the underlying node; values are immutable after
/// construction except through mutable_values() (parameter updates) and grad
/// accumulation via backward().
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false) {
    detail::validate_shape(shape);
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
      throw Error(ErrorKind::ShapeMismatch,
                  "shape " + shape_str(shape) + " expects " +
                      std::to_string(shape_numel(shape)) + " values, got " +
                      std::to_string(values.size()));
    detail::validate_finite(values);
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->values = std::move(values);
    node_->requires_grad = requires_grad;
    node_->is_leaf = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value),
                  requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const char* op_name() const { return node_->op; }

  std::span<const double> values() const {
    return {node_->values.data(), node_->values.size()};
  }
  /// Direct write access to the stored scalars (optimizer updates). Any graph
  /// recorded against the previous values is stale after this.
  std::span<double> mutable_values() {
    return {node_->values.data(), node_->values.size()};
  }

  double item() const {
    if (numel() != 1)
      throw Error(ErrorKind::NotScalar,
                  "item() on tensor of shape " + shape_str(shape()));
    return node_->values[0];
  }

  /// Gradient accumulated by backward(); empty span until first accumulation.
  std::span<const double> grad() const {
    return {node_->grad.data(), node_->grad.size()};
  }

  void zero_grad() {
    if (!node_->grad.empty())
      std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  /// Value copy detached from any graph; never requires grad.
  Tensor detached() const {
    Tensor t;
    t.node_ = std::make_shared<detail::Node>();
    t.node_->shape = node_->shape;
    t.node_->values = node_->values;
    return t;
  }

  detail::NodePtr node() const { return node_; }

  static Tensor wrap(detail::NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  detail::NodePtr node_;
};

namespace detail {

/// Creates an op node. Gradient tracking is recorded only when some input
/// requires grad; otherwise the result is a plain constant.
inline Tensor make_op(const char* op, Shape shape, std::vector<double> values,
                      std::vector<NodePtr> parents, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->op = op;
  bool track = false;
  for (const auto& p : parents)
    if (p->requires_grad) track = true;
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor::wrap(std::move(node));
}

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw Error(ErrorKind::ShapeMismatch,
                std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops (no broadcasting; shapes must match exactly)

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return detail::make_op(
      "add", a.shape(), std::move(out), {a.node(), b.node()},
      [](const std::vector<double>& g,
         const std::vector<std::vector<double>*>& pg) {
        for (size_t i = 0; i < g.size(); ++i) {
          if (pg[0]) (*pg[0])[i] += g[i];
          if (pg[1]) (*pg[1])[i] += g[i];
        }
      });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return detail::make_op(
      "sub", a.shape(), std::move(out), {a.node(), b.node()},
      [](const std::vector<double>& g,
         const std::vector<std::vector<double>*>& pg) {
        for (size_t i = 0; i < g.size(); ++i) {
          if (pg[0]) (*pg[0])[i] += g[i];
          if (pg[1]) (*pg[1])[i] -= g[i];
        }
      });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op(
      "mul", a.shape(), std::move(out), {an, bn},
      [an, bn](const std::vector<double>& g,
               const std::vector<std::vector<double>*>& pg) {
        for (size_t i = 0; i < g.size(); ++i) {
          if (pg[0]) (*pg[0])[i] += g[i] * bn->values[i];
          if (pg[1]) (*pg[1])[i] += g[i] * an->values[i];
        }
      });
}

inline Tensor scalar_mul(double c, const Tensor& a) {
  if (!std::isfinite(c))
    throw Error(ErrorKind::NonFiniteValue, "scalar_mul with non-finite scalar");
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = c * av[i];
  return detail::make_op(
      "scalar_mul", a.shape(), std::move(out), {a.node()},
      [c](const std::vector<double>& g,
          const std::vector<std::vector<double>*>& pg) {
        if (!pg[0]) return;
        for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += c * g[i];
      });
}

/// Sum of all elements; scalar result. The reduction the grad-check harness
/// uses to scalarize non-scalar ops.
inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return detail::make_op(
      "sum", {1}, {acc}, {a.node()},
      [](const std::vector<double>& g,
         const std::vector<std::vector<double>*>& pg) {
        if (!pg[0]) return;
        for (double& gi : *pg[0]) gi += g[0];
      });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  detail::validate_shape(shape);
  if (shape_numel(shape) != a.numel())
    throw Error(ErrorKind::ShapeMismatch,
                "reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                    " changes element count");
  std::vector<double> out(a.values().begin(), a.values().end());
  return detail::make_op(
      "reshape", std::move(shape), std::move(out), {a.node()},
      [](const std::vector<double>& g,
         const std::vector<std::vector<double>*>& pg) {
        if (!pg[0]) return;
        for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
      });
}

/// Adds a length-k bias vector to every row of an N x k matrix.
inline Tensor bias_add(const Tensor& mat, const Tensor& bias) {
  if (mat.shape().size() != 2 || bias.shape().size() != 1 ||
      mat.shape()[1] != bias.shape()[0])
    throw Error(ErrorKind::ShapeMismatch,
                "bias_add: " + shape_str(mat.shape()) + " vs " +
                    shape_str(bias.shape()));
  int64_t rows = mat.shape()[0], cols = mat.shape()[1];
  std::vector<double> out(mat.numel());
  auto mv = mat.values(), bv = bias.values();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c)
      out[r * cols + c] = mv[r * cols + c] + bv[c];
  return detail::make_op(
      "bias_add", mat.shape(), std::move(out), {mat.node(), bias.node()},
      [rows, cols](const std::vector<double>& g,
                   const std::vector<std::vector<double>*>& pg) {
        if (pg[0])
          for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
        if (pg[1])
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c)
              (*pg[1])[c] += g[r * cols + c];
      });
}

// ---------------------------------------------------------------------------
// Matrix multiply

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[0])
    throw Error(ErrorKind::ShapeMismatch,
                "matmul: " + shape_str(a.shape()) + " x " +
                    shape_str(b.shape()));
  int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t l = 0; l < k; ++l) {
      double ail = av[i * k + l];
      for (int64_t j = 0; j < n; ++j) out[i * n + j] += ail * bv[l * n + j];
    }
  auto an = a.node(), bn = b.node();
  return detail::make_op(
      "matmul", {m, n}, std::move(out), {an, bn},
      [an, bn, m, k, n](const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& pg) {
        const double* avd = an->values.data();
        const double* bvd = bn->values.data();
        if (pg[0]) {  // dA = dC * B^T
          double* da = pg[0]->data();
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) {
              double gij = g[i * n + j];
              for (int64_t l = 0; l < k; ++l)
                da[i * k + l] += gij * bvd[l * n + j];
            }
        }
        if (pg[1]) {  // dB = A^T * dC
          double* db = pg[1]->data();
          for (int64_t i = 0; i < m; ++i)
            for (int64_t l = 0; l < k; ++l) {
              double ail = avd[i * k + l];
              for (int64_t j = 0; j < n; ++j)
                db[l * n + j] += ail * g[i * n + j];
            }
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, zero padding) and max pooling

/// 2-D convolution of N x C x H x W input with F x C x k x k kernels plus an
/// optional per-filter bias (pass a default-constructed Tensor for none).
inline Tensor conv2d(const Tensor& input, const Tensor& kernel,
                     const Tensor& bias, int64_t stride, int64_t padding) {
  if (input.shape().size() != 4 || kernel.shape().size() != 4)
    throw Error(ErrorKind::ShapeMismatch,
                "conv2d expects 4-D input and kernel, got " +
                    shape_str(input.shape()) + " and " +
                    shape_str(kernel.shape()));
  if (stride < 1)
    throw Error(ErrorKind::InvalidHyperparam, "conv2d stride must be >= 1");
  if (padding < 0)
    throw Error(ErrorKind::InvalidHyperparam, "conv2d padding must be >= 0");
  const int64_t N = input.shape()[0], C = input.shape()[1],
                H = input.shape()[2], W = input.shape()[3];
  const int64_t F = kernel.shape()[0], KC = kernel.shape()[1],
                kh = kernel.shape()[2], kw = kernel.shape()[3];
  if (KC != C)
    throw Error(ErrorKind::ShapeMismatch,
                "conv2d channel mismatch: input has " + std::to_string(C) +
                    ", kernel expects " + std::to_string(KC));
  if (kh != kw)
    throw Error(ErrorKind::ShapeMismatch, "conv2d kernels must be square");
  const bool has_bias = bias.defined();
  if (has_bias &&
      (bias.shape().size() != 1 || bias.shape()[0] != F))
    throw Error(ErrorKind::ShapeMismatch,
                "conv2d bias must have one entry per filter");
  const int64_t Ho = conv_output_size(H, kh, padding, stride);
  const int64_t Wo = conv_output_size(W, kw, padding, stride);

  std::vector<double> out(N * F * Ho * Wo, 0.0);
  const double* in = input.values().data();
  const double* ker = kernel.values().data();
  const double* bv = has_bias ? bias.values().data() : nullptr;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t f = 0; f < F; ++f)
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow) {
          double acc = has_bias ? bv[f] : 0.0;
          for (int64_t c = 0; c < C; ++c)
            for (int64_t r = 0; r < kh; ++r) {
              int64_t ih = oh * stride - padding + r;
              if (ih < 0 || ih >= H) continue;
              const double* in_row = in + ((n * C + c) * H + ih) * W;
              const double* ker_row = ker + ((f * C + c) * kh + r) * kw;
              for (int64_t q = 0; q < kw; ++q) {
                int64_t iw = ow * stride - padding + q;
                if (iw < 0 || iw >= W) continue;
                acc += in_row[iw] * ker_row[q];
              }
            }
          out[((n * F + f) * Ho + oh) * Wo + ow] = acc;
        }

  std::vector<detail::NodePtr> parents = {input.node(), kernel.node()};
  if (has_bias) parents.push_back(bias.node());
  auto in_node = input.node();
  auto ker_node = kernel.node();
  return detail::make_op(
      "conv2d", {N, F, Ho, Wo}, std::move(out), std::move(parents),
      [=](const std::vector<double>& g,
          const std::vector<std::vector<double>*>& pg) {
        const double* inv = in_node->values.data();
        const double* kerv = ker_node->values.data();
        double* din = pg[0] ? pg[0]->data() : nullptr;
        double* dker = pg[1] ? pg[1]->data() : nullptr;
        double* dbias = (has_bias && pg[2]) ? pg[2]->data() : nullptr;
        for (int64_t n = 0; n < N; ++n)
          for (int64_t f = 0; f < F; ++f)
            for (int64_t oh = 0; oh < Ho; ++oh)
              for (int64_t ow = 0; ow < Wo; ++ow) {
                double go = g[((n * F + f) * Ho + oh) * Wo + ow];
                if (go == 0.0) continue;
                if (dbias) dbias[f] += go;
                for (int64_t c = 0; c < C; ++c)
                  for (int64_t r = 0; r < kh; ++r) {
                    int64_t ih = oh * stride - padding + r;
                    if (ih < 0 || ih >= H) continue;
                    const int64_t in_off = ((n * C + c) * H + ih) * W;
                    const int64_t ker_off = ((f * C + c) * kh + r) * kw;
                    for (int64_t q = 0; q < kw; ++q) {
                      int64_t iw = ow * stride - padding + q;
                      if (iw < 0 || iw >= W) continue;
                      if (din) din[in_off + iw] += kerv[ker_off + q] * go;
                      if (dker) dker[ker_off + q] += inv[in_off + iw] * go;
                    }
                  }
              }
      });
}

inline Tensor conv2d(const Tensor& input, const Tensor& kernel, int64_t stride,
                     int64_t padding) {
  return conv2d(input, kernel, Tensor(), stride, padding);
}

/// Per-window maximum over N x C x H x W. Gradient routes to the first
/// (row-major) maximum of each window.
inline Tensor maxpool2d(const Tensor& input, int64_t k, int64_t s) {
  if (input.shape().size() != 4)
    throw Error(ErrorKind::ShapeMismatch,
                "maxpool2d expects 4-D input, got " + shape_str(input.shape()));
  const int64_t N = input.shape()[0], C = input.shape()[1],
                H = input.shape()[2], W = input.shape()[3];
  if (k > H || k > W)
    throw Error(ErrorKind::ShapeMismatch,
                "maxpool2d window " + std::to_string(k) +
                    " does not fit input " + shape_str(input.shape()));
  const int64_t Ho = conv_output_size(H, k, 0, s);
  const int64_t Wo = conv_output_size(W, k, 0, s);

  std::vector<double> out(N * C * Ho * Wo);
  std::vector<int64_t> argmax(out.size());
  const double* in = input.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow) {
          double best = -std::numeric_limits<double>::infinity();
          int64_t best_idx = -1;
          for (int64_t r = 0; r < k; ++r)
            for (int64_t q = 0; q < k; ++q) {
              int64_t idx =
                  ((n * C + c) * H + oh * s + r) * W + ow * s + q;
              if (in[idx] > best) {  // strict: first occurrence wins ties
                best = in[idx];
                best_idx = idx;
              }
            }
          int64_t o = ((n * C + c) * Ho + oh) * Wo + ow;
          out[o] = best;
          argmax[o] = best_idx;
        }

  return detail::make_op(
      "maxpool2d", {N, C, Ho, Wo}, std::move(out), {input.node()},
      [argmax](const std::vector<double>& g,
               const std::vector<std::vector<double>*>& pg) {
        if (!pg[0]) return;
        for (size_t i = 0; i < g.size(); ++i) (*pg[0])[argmax[i]] += g[i];
      });
}

// ---------------------------------------------------------------------------
// Nonlinearities

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  auto xn = x.node();
  return detail::make_op(
      "relu", x.shape(), std::move(out), {xn},
      [xn](const std::vector<double>& g,
           const std::vector<std::vector<double>*>& pg) {
        if (!pg[0]) return;
        // derivative defined as 0 at x == 0
        for (size_t i = 0; i < g.size(); ++i)
          if (xn->values[i] > 0.0) (*pg[0])[i] += g[i];
      });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(xv[i]);
  // capture the outputs; dsigma = sigma * (1 - sigma)
  auto saved = std::make_shared<std::vector<double>>(out);
  return detail::make_op(
      "sigmoid", x.shape(), std::move(out), {x.node()},
      [saved](const std::vector<double>& g,
              const std::vector<std::vector<double>*>& pg) {
        if (!pg[0]) return;
        for (size_t i = 0; i < g.size(); ++i) {
          double s = (*saved)[i];
          (*pg[0])[i] += g[i] * s * (1.0 - s);
        }
      });
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy

namespace detail {

// Row-wise softmax values with per-row max subtraction.
inline std::vector<double> softmax_values(std::span<const double> logits,
                                          int64_t rows, int64_t cols) {
  std::vector<double> out(logits.size());
  for (int64_t r = 0; r < rows; ++r) {
    const double* z = logits.data() + r * cols;
    double* o = out.data() + r * cols;
    double m = z[0];
    for (int64_t c = 1; c < cols; ++c) m = std::max(m, z[c]);
    double denom = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      o[c] = std::exp(z[c] - m);
      denom += o[c];
    }
    for (int64_t c = 0; c < cols; ++c) o[c] /= denom;
  }
  return out;
}

}  // namespace detail

/// Row-wise softmax over N x k logits.
inline Tensor softmax(const Tensor& logits) {
  if (logits.shape().size() != 2 || logits.shape()[1] < 2)
    throw Error(ErrorKind::ShapeMismatch,
                "softmax expects N x k logits with k >= 2, got " +
                    shape_str(logits.shape()));
  const int64_t rows = logits.shape()[0], cols = logits.shape()[1];
  auto out = detail::softmax_values(logits.values(), rows, cols);
  auto saved = std::make_shared<std::vector<double>>(out);
  return detail::make_op(
      "softmax", logits.shape(), std::move(out), {logits.node()},
      [saved, rows, cols](const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& pg) {
        if (!pg[0]) return;
        for (int64_t r = 0; r < rows; ++r) {
          const double* s = saved->data() + r * cols;
          const double* go = g.data() + r * cols;
          double dot = 0.0;
          for (int64_t c = 0; c < cols; ++c) dot += go[c] * s[c];
          for (int64_t c = 0; c < cols; ++c)
            (*pg[0])[r * cols + c] += s[c] * (go[c] - dot);
        }
      });
}

/// Mean over the batch of log-sum-exp(logits) - logit[label], the softmax
/// cross-entropy. Backward yields (softmax - onehot) / N.
inline Tensor cross_entropy(const Tensor& logits,
                            const std::vector<int>& labels) {
  if (logits.shape().size() != 2)
    throw Error(ErrorKind::ShapeMismatch,
                "cross_entropy expects N x k logits, got " +
                    shape_str(logits.shape()));
  const int64_t rows = logits.shape()[0], cols = logits.shape()[1];
  if (static_cast<int64_t>(labels.size()) != rows)
    throw Error(ErrorKind::ShapeMismatch,
                "cross_entropy: " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(rows) + " rows");
  for (int y : labels)
    if (y < 0 || y >= cols)
      throw Error(ErrorKind::LabelOutOfRange,
                  "label " + std::to_string(y) + " outside [0, " +
                      std::to_string(cols) + ")");
  auto zv = logits.values();
  double total = 0.0;
  for (int64_t r = 0; r < rows; ++r) {
    const double* z = zv.data() + r * cols;
    double m = z[0];
    for (int64_t c = 1; c < cols; ++c) m = std::max(m, z[c]);
    double denom = 0.0;
    for (int64_t c = 0; c < cols; ++c) denom += std::exp(z[c] - m);
    total += m + std::log(denom) - z[labels[r]];
  }
  double value = total / static_cast<double>(rows);
  auto probs = std::make_shared<std::vector<double>>(
      detail::softmax_values(zv, rows, cols));
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return detail::make_op(
      "cross_entropy", {1}, {value}, {logits.node()},
      [probs, labels_copy, rows, cols](
          const std::vector<double>& g,
          const std::vector<std::vector<double>*>& pg) {
        if (!pg[0]) return;
        const double scale = g[0] / static_cast<double>(rows);
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t c = 0; c < cols; ++c) {
            double p = (*probs)[r * cols + c];
            double onehot = (c == (*labels_copy)[r]) ? 1.0 : 0.0;
            (*pg[0])[r * cols + c] += scale * (p - onehot);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reverse-mode sweep

/// Topologically ordered operation records reachable from one output node.
/// Built by a deterministic post-order traversal; every node appears exactly
/// once, and each node's inputs precede it.
class Graph {
 public:
  static Graph trace(const Tensor& output) {
    Graph g;
    std::unordered_map<detail::Node*, bool> state;  // false=open, true=done
    std::vector<std::pair<detail::NodePtr, size_t>> stack;
    stack.emplace_back(output.node(), 0);
    state[output.node().get()] = false;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        auto parent = node->parents[next++];
        auto it = state.find(parent.get());
        if (it == state.end()) {
          state[parent.get()] = false;
          stack.emplace_back(parent, 0);
        }
      } else {
        state[node.get()] = true;
        g.order_.push_back(node);
        stack.pop_back();
      }
    }
    return g;
  }

  /// Nodes in topological order (inputs before consumers).
  const std::vector<detail::NodePtr>& nodes() const { return order_; }

 private:
  std::vector<detail::NodePtr> order_;
};

/// Accumulates d(loss)/d(leaf) into every requires-grad leaf reachable from
/// the scalar loss. Repeated calls keep accumulating (callers zero_grad
/// between steps). Unreachable leaves are simply left untouched.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw Error(ErrorKind::NotScalar,
                "backward requires a scalar loss, got " +
                    shape_str(loss.shape()));
  auto root = loss.node();
  if (root->parents.empty() && !root->requires_grad)
    throw Error(ErrorKind::DisconnectedGraph,
                "loss is not connected to any graph");

  Graph graph = Graph::trace(loss);

  // Temp grad buffers for interior nodes; leaves accumulate persistently.
  std::unordered_map<detail::Node*, std::vector<double>> interior;
  auto grad_buffer = [&](const detail::NodePtr& n) -> std::vector<double>* {
    if (!n->requires_grad) return nullptr;
    if (n->is_leaf) {
      if (n->grad.empty()) n->grad.assign(n->values.size(), 0.0);
      return &n->grad;
    }
    auto [it, inserted] = interior.try_emplace(n.get());
    if (inserted) it->second.assign(n->values.size(), 0.0);
    return &it->second;
  };

  std::vector<double> seed(1, 1.0);
  const std::vector<double>* root_grad = &seed;
  if (root->is_leaf) {
    // Degenerate one-node graph: d loss / d loss = 1.
    if (root->grad.empty()) root->grad.assign(1, 0.0);
    root->grad[0] += 1.0;
    return;
  }

  auto& order = graph.nodes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& node = *it;
    if (!node->backward) continue;
    const std::vector<double>* gout;
    if (node.get() == root.get()) {
      gout = root_grad;
    } else {
      auto found = interior.find(node.get());
      if (found == interior.end()) continue;  // off every gradient path
      gout = &found->second;
    }
    std::vector<std::vector<double>*> parent_grads;
    parent_grads.reserve(node->parents.size());
    for (const auto& p : node->parents) parent_grads.push_back(grad_buffer(p));
    node->backward(*gout, parent_grads);
  }
}

// ---------------------------------------------------------------------------
// Gradient checking

/// Compares the reverse-mode gradient of a scalar-valued function against
/// central finite differences. Returns max over coordinates of
/// |g_ad - g_fd| / max(1, |g_fd|).
inline double grad_check(const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& x, double h) {
  if (h <= 0.0)
    throw Error(ErrorKind::InvalidHyperparam, "grad_check step must be > 0");
  Tensor leaf(x.shape(), {x.values().begin(), x.values().end()}, true);
  Tensor y = f(leaf);
  if (y.numel() != 1)
    throw Error(ErrorKind::NotScalar, "grad_check requires scalar-valued f");
  backward(y);
  std::vector<double> g_ad(x.numel(), 0.0);
  if (!leaf.grad().empty())
    g_ad.assign(leaf.grad().begin(), leaf.grad().end());

  std::vector<double> base(x.values().begin(), x.values().end());
  double worst = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    std::vector<double> vp = base, vm = base;
    vp[i] += h;
    vm[i] -= h;
    double fp = f(Tensor(x.shape(), std::move(vp))).item();
    double fm = f(Tensor(x.shape(), std::move(vm))).item();
    double fd = (fp - fm) / (2.0 * h);
    double err = std::abs(g_ad[i] - fd) / std::max(1.0, std::abs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace awb
