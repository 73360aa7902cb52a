#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "awb/rng.hpp"
#include "awb/tensor.hpp"

using namespace awb;

namespace {

// Random values bounded away from zero so relu/maxpool kinks stay clear of
// the finite-difference step.
Tensor random_tensor(Shape shape, uint64_t seed, double lo = 0.2,
                     double hi = 1.5) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    double mag = rng.uniform(lo, hi);
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("tensor construction enforces invariants") {
  CHECK_THROWS_AS(Tensor({2}, {1.0}), Error);                       // count
  CHECK_THROWS_AS(Tensor({2, 2, 2, 2, 2}, std::vector<double>(32)), Error);
  CHECK_THROWS_AS(Tensor({0}, {}), Error);                          // dims
  CHECK_THROWS_AS(Tensor({1}, {std::nan("")}), Error);
  CHECK_THROWS_AS(Tensor({1}, {std::numeric_limits<double>::infinity()}),
                  Error);
  Tensor t({2, 2}, {1, 2, 3, 4});
  CHECK(t.numel() == 4);
  CHECK(t.values()[3] == 4.0);
}

TEST_CASE("elementwise ops") {
  Tensor a({2}, {1, 2}), b({2}, {3, 4});
  auto r = add(a, b);
  CHECK(r.values()[0] == 4.0);
  CHECK(r.values()[1] == 6.0);
  auto d = sub(b, a);
  CHECK(d.values()[0] == 2.0);
  auto m = mul(a, b);
  CHECK(m.values()[1] == 8.0);

  auto z = scalar_mul(0.0, random_tensor({3, 4}, 11));
  for (double v : z.values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(add(a, Tensor({3}, {1, 2, 3})), Error);
  CHECK_THROWS_AS(mul(a, Tensor({1, 2}, {1, 2})), Error);
}

TEST_CASE("gradient of mul wrt a equals b") {
  Tensor a = random_tensor({6}, 21);
  Tensor b = random_tensor({6}, 22);
  Tensor leaf(a.shape(), {a.values().begin(), a.values().end()}, true);
  backward(sum(mul(leaf, b)));
  for (size_t i = 0; i < 6; ++i)
    CHECK(leaf.grad()[i] == Catch::Approx(b.values()[i]).margin(1e-12));

  double err = grad_check([&](const Tensor& x) { return sum(mul(x, b)); }, a,
                          1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("matmul values and gradients") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  auto r = matmul(eye, m);
  for (size_t i = 0; i < 4; ++i) CHECK(r.values()[i] == m.values()[i]);

  Tensor row({1, 2}, {1, 0});
  Tensor col({2, 1}, {5, 7});
  CHECK(matmul(row, col).item() == 5.0);

  Tensor a = random_tensor({3, 4}, 31);
  Tensor b = random_tensor({4, 2}, 32);
  CHECK(grad_check([&](const Tensor& x) { return sum(matmul(x, b)); }, a,
                   1e-4) < 1e-6);
  CHECK(grad_check([&](const Tensor& x) { return sum(matmul(a, x)); }, b,
                   1e-4) < 1e-6);
  CHECK_THROWS_AS(matmul(a, a), Error);
}

TEST_CASE("conv2d forward values and shape law") {
  Tensor ones = Tensor::full({1, 1, 4, 4}, 1.0);
  Tensor kernel = Tensor::full({1, 1, 3, 3}, 1.0);
  auto out = conv2d(ones, kernel, 1, 0);
  CHECK(out.shape() == Shape{1, 1, 2, 2});
  for (double v : out.values()) CHECK(v == 9.0);

  CHECK(conv_output_size(256, 3, 0, 1) == 254);
  CHECK(conv_output_size(254, 2, 0, 2) == 127);
  CHECK(conv_output_size(224, 3, 0, 1) == 222);

  CHECK_THROWS_AS(conv2d(ones, kernel, 0, 0), Error);   // stride 0
  CHECK_THROWS_AS(conv2d(ones, kernel, 1, -1), Error);  // negative padding
  CHECK_THROWS_AS(conv2d(ones, Tensor::full({1, 2, 3, 3}, 1.0), 1, 0), Error);
  CHECK_THROWS_AS(conv2d(ones, Tensor::full({1, 1, 6, 6}, 1.0), 1, 0), Error);
}

TEST_CASE("conv2d gradients match finite differences") {
  Tensor input = random_tensor({1, 2, 5, 5}, 41);
  Tensor kernel = random_tensor({3, 2, 3, 3}, 42, 0.1, 0.8);
  Tensor bias = random_tensor({3}, 43, 0.1, 0.5);

  auto wrt_input = [&](const Tensor& x) {
    return sum(conv2d(x, kernel, bias, 1, 1));
  };
  auto wrt_kernel = [&](const Tensor& k) {
    return sum(conv2d(input, k, bias, 2, 0));
  };
  auto wrt_bias = [&](const Tensor& b) {
    return sum(conv2d(input, kernel, b, 1, 0));
  };
  CHECK(grad_check(wrt_input, input, 1e-4) < 1e-6);
  CHECK(grad_check(wrt_kernel, kernel, 1e-4) < 1e-6);
  CHECK(grad_check(wrt_bias, bias, 1e-4) < 1e-6);
}

TEST_CASE("maxpool2d values, tie routing, gradients") {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  auto out = maxpool2d(x, 2, 2);
  CHECK(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out.item() == 4.0);

  // constant input: gradient routes to the first window element
  Tensor flat = Tensor::full({1, 1, 2, 2}, 0.5);
  Tensor leaf(flat.shape(), {flat.values().begin(), flat.values().end()}, true);
  backward(maxpool2d(leaf, 2, 2));
  CHECK(leaf.grad()[0] == 1.0);
  CHECK(leaf.grad()[1] == 0.0);
  CHECK(leaf.grad()[2] == 0.0);
  CHECK(leaf.grad()[3] == 0.0);

  Tensor big = random_tensor({2, 3, 6, 6}, 51);
  CHECK(grad_check([](const Tensor& t) { return sum(maxpool2d(t, 2, 2)); },
                   big, 1e-4) < 1e-6);
  CHECK_THROWS_AS(maxpool2d(x, 3, 1), Error);  // window does not fit
}

TEST_CASE("activations") {
  Tensor zero = Tensor::scalar(0.0);
  CHECK(sigmoid(zero).item() == 0.5);

  Tensor x({3}, {-1, 0, 2});
  auto r = relu(x);
  CHECK(r.values()[0] == 0.0);
  CHECK(r.values()[1] == 0.0);
  CHECK(r.values()[2] == 2.0);

  Tensor s = random_tensor({8}, 61);
  CHECK(grad_check([](const Tensor& t) { return sum(sigmoid(t)); }, s, 1e-4) <
        1e-6);
  CHECK(grad_check([](const Tensor& t) { return sum(relu(t)); }, s, 1e-4) <
        1e-6);

  // relu derivative at exactly 0 is 0
  Tensor at_zero = Tensor::zeros({2}, true);
  backward(sum(relu(at_zero)));
  CHECK(at_zero.grad()[0] == 0.0);
}

TEST_CASE("softmax stability and invariances") {
  Tensor uniform({1, 2}, {0, 0});
  auto u = softmax(uniform);
  CHECK(u.values()[0] == 0.5);
  CHECK(u.values()[1] == 0.5);

  Tensor extreme({1, 2}, {1000, 0});
  auto e = softmax(extreme);
  CHECK(e.values()[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(e.values()[1] == Catch::Approx(0.0).margin(1e-12));
  for (double v : e.values()) CHECK(std::isfinite(v));

  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> z(6);
    for (auto& v : z) v = rng.uniform(-10.0, 10.0);
    Tensor logits({2, 3}, z);
    auto p = softmax(logits);
    for (int64_t r = 0; r < 2; ++r) {
      double s = 0.0;
      for (int64_t c = 0; c < 3; ++c) {
        double v = p.values()[r * 3 + c];
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        s += v;
      }
      CHECK(s == Catch::Approx(1.0).margin(1e-9));
    }
    // shift invariance
    double shift = rng.uniform(-50.0, 50.0);
    std::vector<double> zs = z;
    for (auto& v : zs) v += shift;
    auto p2 = softmax(Tensor({2, 3}, zs));
    for (size_t i = 0; i < 6; ++i)
      CHECK(p2.values()[i] == Catch::Approx(p.values()[i]).margin(1e-12));
  }

  Tensor sx = random_tensor({2, 4}, 72);
  Tensor w = random_tensor({2, 4}, 73);
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(softmax(t), w)); },
                   sx, 1e-4) < 1e-5);
}

TEST_CASE("cross_entropy against a direct evaluation oracle") {
  Tensor uniform({1, 2}, {0, 0});
  CHECK(cross_entropy(uniform, {0}).item() ==
        Catch::Approx(std::log(2.0)).margin(1e-12));
  Tensor uniform3({1, 3}, {0.5, 0.5, 0.5});
  CHECK(cross_entropy(uniform3, {2}).item() ==
        Catch::Approx(std::log(3.0)).margin(1e-12));

  // independent direct evaluation of log(sum exp) - z_y, long double accum
  Rng rng(81);
  for (int trial = 0; trial < 10; ++trial) {
    const int64_t n = 3, k = 4;
    std::vector<double> z(n * k);
    for (auto& v : z) v = rng.uniform(-5.0, 5.0);
    std::vector<int> labels = {static_cast<int>(rng.uniform_int(k)),
                               static_cast<int>(rng.uniform_int(k)),
                               static_cast<int>(rng.uniform_int(k))};
    long double expected = 0.0L;
    for (int64_t r = 0; r < n; ++r) {
      long double denom = 0.0L;
      for (int64_t c = 0; c < k; ++c) denom += std::exp((long double)z[r * k + c]);
      expected += std::log(denom) - (long double)z[r * k + labels[r]];
    }
    expected /= n;
    Tensor logits({n, k}, z);
    double got = cross_entropy(logits, labels).item();
    CHECK(got == Catch::Approx((double)expected).epsilon(1e-12));
    CHECK(got >= 0.0);
  }

  Tensor logits = random_tensor({4, 3}, 82);
  CHECK(grad_check(
            [](const Tensor& t) { return cross_entropy(t, {0, 2, 1, 1}); },
            logits, 1e-4) < 1e-6);

  CHECK_THROWS_AS(cross_entropy(logits, {0, 1, 2, 3}), Error);   // label 3
  CHECK_THROWS_AS(cross_entropy(logits, {0, -1, 1, 1}), Error);  // label -1
  CHECK_THROWS_AS(cross_entropy(logits, {0, 1}), Error);         // count
}

TEST_CASE("backward basics") {
  // f(x) = x * x at 3 -> grad 6
  Tensor x = Tensor::scalar(3.0, true);
  backward(mul(x, x));
  CHECK(x.grad()[0] == 6.0);

  // accumulation doubles without zeroing
  Tensor y = Tensor::scalar(2.0, true);
  Tensor loss = mul(y, y);
  backward(loss);
  double once = y.grad()[0];
  backward(loss);
  CHECK(y.grad()[0] == 2.0 * once);
  y.zero_grad();
  backward(loss);
  CHECK(y.grad()[0] == once);

  // shared subexpression (diamond): w = z + z with z = x*x -> dw/dx = 4x
  Tensor d = Tensor::scalar(3.0, true);
  Tensor z = mul(d, d);
  backward(add(z, z));
  CHECK(d.grad()[0] == 12.0);

  CHECK_THROWS_AS(backward(Tensor({2}, {1, 2}, true)), Error);  // not scalar
  CHECK_THROWS_AS(backward(Tensor::scalar(5.0)), Error);  // no graph

  // a leaf unreachable from the loss keeps a zero (absent) grad, no error
  Tensor used = Tensor::scalar(1.0, true);
  Tensor unused = Tensor::scalar(1.0, true);
  backward(mul(used, used));
  CHECK(unused.grad().empty());
}

TEST_CASE("backward through a composite conv net matches finite differences") {
  Tensor input = random_tensor({1, 2, 5, 5}, 91);
  Tensor kernel = random_tensor({3, 2, 3, 3}, 92, 0.1, 0.6);
  Tensor weight = random_tensor({75, 3}, 93, 0.1, 0.6);

  auto network = [&](const Tensor& in, const Tensor& ker, const Tensor& w) {
    Tensor h = relu(conv2d(in, ker, 1, 1));
    Tensor flat = reshape(h, {1, h.numel()});
    return cross_entropy(matmul(flat, w), {1});
  };
  CHECK(grad_check([&](const Tensor& t) { return network(t, kernel, weight); },
                   input, 1e-4) < 1e-4);
  CHECK(grad_check([&](const Tensor& t) { return network(input, t, weight); },
                   kernel, 1e-4) < 1e-4);
  CHECK(grad_check([&](const Tensor& t) { return network(input, kernel, t); },
                   weight, 1e-4) < 1e-4);
}

TEST_CASE("backward is bit-deterministic") {
  auto run = [] {
    Tensor input = random_tensor({2, 1, 6, 6}, 101);
    Tensor leaf(input.shape(), {input.values().begin(), input.values().end()},
                true);
    Tensor kernel = random_tensor({2, 1, 3, 3}, 102);
    Tensor h = relu(conv2d(leaf, kernel, 1, 0));
    backward(cross_entropy(reshape(h, {2, h.numel() / 2}), {0, 1}));
    return std::vector<double>(leaf.grad().begin(), leaf.grad().end());
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("grad_check harness") {
  // linear map: exact up to rounding
  Tensor w = random_tensor({5}, 111);
  Tensor x = random_tensor({5}, 112);
  CHECK(grad_check([&](const Tensor& t) { return sum(mul(t, w)); }, x, 1e-4) <
        1e-9);

  // seeded wrong backward: must be loudly caught
  auto bad_square = [](const Tensor& t) {
    std::vector<double> out(t.numel());
    auto tv = t.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] = tv[i] * tv[i];
    auto tn = t.node();
    Tensor y = detail::make_op(
        "bad_square", t.shape(), std::move(out), {tn},
        [tn](const std::vector<double>& g,
             const std::vector<std::vector<double>*>& pg) {
          if (!pg[0]) return;
          for (size_t i = 0; i < g.size(); ++i)
            (*pg[0])[i] += g[i] * tn->values[i];  // missing factor of 2
        });
    return sum(y);
  };
  CHECK(grad_check(bad_square, x, 1e-4) > 1e-2);

  CHECK_THROWS_AS(grad_check([](const Tensor& t) { return t; },
                             random_tensor({3}, 113), 1e-4),
                  Error);  // non-scalar f
  CHECK_THROWS_AS(grad_check([](const Tensor& t) { return sum(t); }, x, 0.0),
                  Error);  // bad step
}

TEST_CASE("bias_add and reshape gradients") {
  Tensor m = random_tensor({3, 4}, 121);
  Tensor b = random_tensor({4}, 122);
  auto r = bias_add(m, b);
  CHECK(r.values()[5] ==
        Catch::Approx(m.values()[5] + b.values()[1]).margin(1e-15));
  CHECK(grad_check([&](const Tensor& t) { return sum(bias_add(t, b)); }, m,
                   1e-4) < 1e-6);
  CHECK(grad_check([&](const Tensor& t) { return sum(bias_add(m, t)); }, b,
                   1e-4) < 1e-6);
  CHECK_THROWS_AS(bias_add(m, Tensor({3}, {1, 2, 3})), Error);

  CHECK_THROWS_AS(reshape(m, {5, 5}), Error);
  auto rs = reshape(m, {12});
  CHECK(rs.values()[7] == m.values()[7]);
}
