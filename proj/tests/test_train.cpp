#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "awb/synth.hpp"
#include "awb/train.hpp"
#include "support/test_util.hpp"

using namespace awb;
using testutil::TempDir;

namespace {

// left-half-bright = class 0, right-half-bright = class 1; linearly separable
train::ImageSet separable_set(size_t per_class, int64_t side, uint64_t seed) {
  Rng rng(seed);
  train::ImageSet images;
  for (int label = 0; label < 2; ++label) {
    for (size_t i = 0; i < per_class; ++i) {
      std::vector<double> v(side * side);
      for (int64_t y = 0; y < side; ++y)
        for (int64_t x = 0; x < side; ++x) {
          bool bright = (label == 0) ? (x < side / 2) : (x >= side / 2);
          v[y * side + x] = (bright ? 0.8 : 0.2) + rng.uniform(-0.05, 0.05);
        }
      images.push_back({Tensor({1, side, side}, v), label,
                        "mem/" + std::to_string(label) + "/" +
                            std::to_string(i)});
    }
  }
  return images;
}

nn::ModelSpec linear_spec(int64_t side) {
  nn::ModelSpec spec;
  spec.in_channels = 1;
  spec.in_height = side;
  spec.in_width = side;
  spec.num_classes = 2;
  spec.layers = {nn::Flatten{}, nn::Dense{2}};
  return spec;
}

}  // namespace

TEST_CASE("metrics golden values") {
  auto m1 = train::metrics_from_counts(3, 1, 0, 0);
  CHECK(m1.accuracy == 1.0);
  auto m2 = train::metrics_from_counts(50, 30, 10, 10);
  CHECK(m2.accuracy == 0.8);
  CHECK(m2.precision == Catch::Approx(50.0 / 60.0).margin(1e-12));
  CHECK(m2.recall == Catch::Approx(50.0 / 60.0).margin(1e-12));
  auto m3 = train::metrics_from_counts(0, 0, 4, 6);
  CHECK(m3.accuracy == 0.0);

  // accuracy + errors/total == 1 exactly
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    int64_t tp = rng.uniform_int(20), tn = rng.uniform_int(20);
    int64_t fp = rng.uniform_int(20), fn = 1 + rng.uniform_int(20);
    auto m = train::metrics_from_counts(tp, tn, fp, fn);
    double total = static_cast<double>(tp + tn + fp + fn);
    CHECK(m.accuracy + static_cast<double>(fp + fn) / total == 1.0);
  }
}

TEST_CASE("log_loss golden values and clamping") {
  CHECK(train::log_loss({1}, {1.0}) == Catch::Approx(0.0).margin(1e-9));
  CHECK(train::log_loss({1, 0}, {0.5, 0.5}) ==
        Catch::Approx(std::log(2.0)).margin(1e-12));
  CHECK(train::log_loss({1}, {0.0}) ==
        Catch::Approx(-std::log(1e-12)).margin(1e-9));
  CHECK(train::log_loss({1}, {0.0}) == Catch::Approx(27.6310).margin(1e-4));
  CHECK_THROWS_AS(train::log_loss({1, 0}, {0.5}), Error);

  // monotone toward the label
  double prev = train::log_loss({1}, {0.1});
  for (double p : {0.3, 0.5, 0.7, 0.9, 0.99}) {
    double cur = train::log_loss({1}, {p});
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("roc_auc golden cases and the concordance oracle") {
  // perfectly separated
  auto sep = train::roc_auc({0, 0, 1, 1}, {0.1, 0.2, 0.8, 0.9});
  CHECK(sep.auc == 1.0);
  // perfectly inverted
  auto inv = train::roc_auc({1, 1, 0, 0}, {0.1, 0.2, 0.8, 0.9});
  CHECK(inv.auc == 0.0);
  // curve endpoints
  CHECK(sep.curve.front().fpr == 0.0);
  CHECK(sep.curve.front().tpr == 0.0);
  CHECK(sep.curve.back().fpr == 1.0);
  CHECK(sep.curve.back().tpr == 1.0);

  CHECK_THROWS_AS(train::roc_auc({1, 1}, {0.5, 0.6}), Error);  // single class

  // pairwise concordance oracle: P(s+ > s-) + 0.5 P(tie)
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    size_t n = 10 + rng.uniform_int(90);
    std::vector<int> labels(n);
    std::vector<double> scores(n);
    bool has_pos = false, has_neg = false;
    for (size_t i = 0; i < n; ++i) {
      labels[i] = rng.uniform() < 0.5 ? 1 : 0;
      // coarse grid forces ties
      scores[i] = static_cast<double>(rng.uniform_int(8)) / 7.0;
      (labels[i] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;

    double concordant = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) {
        if (labels[i] != 1 || labels[j] != 0) continue;
        pairs++;
        if (scores[i] > scores[j]) concordant += 1.0;
        else if (scores[i] == scores[j]) concordant += 0.5;
      }
    double oracle = concordant / static_cast<double>(pairs);
    CHECK(train::roc_auc(labels, scores).auc ==
          Catch::Approx(oracle).margin(1e-9));
  }
}

TEST_CASE("sgd_step arithmetic") {
  std::vector<double> theta = {1.0, -2.0};
  std::vector<double> grad = {0.5, 0.5};
  std::vector<double> vel = {0.0, 0.0};
  train::sgd_step(theta, grad, 0.1, 0.0, vel);
  CHECK(theta[0] == Catch::Approx(0.95).margin(1e-15));
  CHECK(theta[1] == Catch::Approx(-2.05).margin(1e-15));

  std::vector<double> zero_g = {0.0, 0.0};
  std::vector<double> before = theta;
  train::sgd_step(theta, zero_g, 0.1, 0.9, vel);
  // velocity decays but was fed only zero grads after reset
  vel = {0.0, 0.0};
  theta = before;
  train::sgd_step(theta, zero_g, 0.1, 0.9, vel);
  CHECK(theta == before);

  // two momentum steps on f(theta) = theta^2 decrease f (hand computed)
  double t = 1.0, v = 0.0;
  auto quad_step = [&] {
    double g = 2.0 * t;
    v = 0.9 * v + g;
    t -= 0.1 * v;
  };
  quad_step();
  CHECK(t == Catch::Approx(0.8).margin(1e-15));
  quad_step();
  CHECK(t == Catch::Approx(0.46).margin(1e-15));
  CHECK(t * t < 0.8 * 0.8);

  std::vector<double> short_v = {0.0};
  CHECK_THROWS_AS(train::sgd_step(theta, grad, 0.1, 0.9, short_v), Error);
}

TEST_CASE("train reaches 100% on a separable set") {
  auto images = separable_set(20, 8, 42);
  auto model = nn::build_model(linear_spec(8), 42);
  train::TrainConfig config;
  config.epochs = 30;
  config.batch_size = 8;
  config.learning_rate = 0.5;
  config.momentum = 0.9;
  config.seed = 42;

  auto history = train::train(model, images, images, config);
  REQUIRE(history.entries.size() == 30);
  auto metrics = train::evaluate(model, images);
  CHECK(metrics.accuracy == 1.0);
  // loss went down
  CHECK(history.entries.back().train_loss < history.entries.front().train_loss);
}

TEST_CASE("train with zero learning rate is a null step") {
  auto images = separable_set(6, 8, 7);
  auto model = nn::build_model(linear_spec(8), 7);
  std::vector<std::vector<double>> before;
  for (const auto& p : model.params)
    before.emplace_back(p.tensor.values().begin(), p.tensor.values().end());

  train::TrainConfig config;
  config.epochs = 4;
  config.batch_size = 4;
  config.learning_rate = 0.0;
  config.shuffle = false;
  auto history = train::train(model, images, images, config);

  for (size_t i = 0; i < model.params.size(); ++i) {
    auto now = model.params[i].tensor.values();
    for (size_t j = 0; j < now.size(); ++j) CHECK(now[j] == before[i][j]);
  }
  for (const auto& e : history.entries) {
    CHECK(e.train_loss == history.entries[0].train_loss);
    CHECK(e.val_loss == history.entries[0].val_loss);
    CHECK(e.val_accuracy == history.entries[0].val_accuracy);
  }
}

TEST_CASE("train is bit-reproducible for a fixed seed") {
  auto run = [] {
    auto images = separable_set(10, 8, 3);
    auto model = nn::build_model(linear_spec(8), 3);
    train::TrainConfig config;
    config.epochs = 5;
    config.batch_size = 4;
    config.learning_rate = 0.2;
    config.seed = 99;
    return train::train(model, images, images, config);
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.entries.size() == b.entries.size());
  for (size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(a.entries[i].train_loss == b.entries[i].train_loss);
    CHECK(a.entries[i].val_loss == b.entries[i].val_loss);
    CHECK(a.entries[i].val_accuracy == b.entries[i].val_accuracy);
  }
}

TEST_CASE("divergence aborts with partial history") {
  auto images = separable_set(10, 8, 11);
  nn::ModelSpec deep;
  deep.in_channels = 1;
  deep.in_height = 8;
  deep.in_width = 8;
  deep.num_classes = 2;
  deep.layers = {nn::Flatten{},
                 nn::Dense{16}, nn::Activation{nn::ActKind::Relu},
                 nn::Dense{16}, nn::Activation{nn::ActKind::Relu},
                 nn::Dense{2}};
  auto model = nn::build_model(deep, 11);
  train::TrainConfig config;
  config.epochs = 50;
  config.batch_size = 10;
  config.learning_rate = 1e4;  // guaranteed blow-up through the deep stack
  try {
    train::train(model, images, images, config);
    FAIL("expected divergence");
  } catch (const train::DivergenceError& e) {
    CHECK(e.kind() == ErrorKind::DivergenceDetected);
    CHECK(e.partial_history.entries.size() < 50);
  }
}

TEST_CASE("evaluate is invariant to sample order") {
  auto images = separable_set(12, 8, 21);
  auto model = nn::build_model(linear_spec(8), 21);
  train::TrainConfig config;
  config.epochs = 3;
  config.batch_size = 6;
  train::train(model, images, {}, config);

  auto m1 = train::evaluate(model, images);

  train::ImageSet shuffled = images;
  Rng rng(22);
  rng.shuffle(shuffled);
  auto m2 = train::evaluate(model, shuffled);

  CHECK(m1.tp == m2.tp);
  CHECK(m1.tn == m2.tn);
  CHECK(m1.fp == m2.fp);
  CHECK(m1.fn == m2.fn);
  CHECK(m1.accuracy == m2.accuracy);
  CHECK(m1.log_loss == m2.log_loss);  // bitwise, thanks to canonical order
  CHECK(m1.auc == m2.auc);

  CHECK_THROWS_AS(train::evaluate(model, {}), Error);
}

TEST_CASE("cross_validate per-fold accounting") {
  TempDir dir;
  // separable on disk: class dirs a (dark) and b (bright)
  std::filesystem::create_directories(dir / "a");
  std::filesystem::create_directories(dir / "b");
  Rng rng(31);
  for (int label = 0; label < 2; ++label)
    for (int i = 0; i < 9; ++i) {
      data::Raster r;
      r.width = r.height = 8;
      r.channels = 1;
      r.pixels.resize(64);
      for (auto& p : r.pixels)
        p = static_cast<uint8_t>((label ? 200 : 60) + rng.uniform_int(20));
      char name[16];
      std::snprintf(name, sizeof(name), "%d.pgm", i);
      data::write_raster(dir.path() / (label ? "b" : "a") / name, r);
    }
  auto manifest = data::scan_dataset(dir.path());

  train::TrainConfig config;
  config.epochs = 15;
  config.batch_size = 6;
  config.learning_rate = 0.5;
  config.seed = 31;
  auto cv = train::cross_validate(linear_spec(8), manifest, 3, config);

  REQUIRE(cv.folds.size() == 3);
  double mean = 0.0;
  for (const auto& m : cv.folds) mean += m.accuracy;
  mean /= 3.0;
  CHECK(cv.mean_accuracy == Catch::Approx(mean).margin(1e-15));
  for (const auto& m : cv.folds) CHECK(m.accuracy >= 0.95);
}
