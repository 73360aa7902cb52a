#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include "awb/checkpoint.hpp"
#include "awb/nn.hpp"
#include "awb/rng.hpp"
#include "support/test_util.hpp"

using namespace awb;
using testutil::TempDir;

namespace {

nn::ModelSpec micro_spec() {
  nn::ModelSpec spec;
  spec.in_channels = 1;
  spec.in_height = 3;
  spec.in_width = 3;
  spec.num_classes = 2;
  spec.layers = {nn::Conv{1, 2, 1, 0}, nn::Flatten{}, nn::Dense{2}};
  return spec;
}

Tensor random_batch(Shape shape, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform();
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("infer_shapes follows the output-size law") {
  nn::ModelSpec spec;
  spec.in_channels = 3;
  spec.in_height = 224;
  spec.in_width = 224;
  spec.num_classes = 2;
  spec.layers = {nn::Conv{8, 3, 1, 0}};
  auto shapes = nn::infer_shapes(spec);
  CHECK(shapes[0] == Shape{8, 222, 222});

  spec.in_height = spec.in_width = 256;
  spec.layers = {nn::Conv{8, 3, 1, 0}, nn::MaxPool{2, 2}, nn::Flatten{},
                 nn::Dense{2}};
  shapes = nn::infer_shapes(spec);
  CHECK(shapes[0] == Shape{8, 254, 254});
  CHECK(shapes[1] == Shape{8, 127, 127});
  CHECK(shapes[2] == Shape{8 * 127 * 127});
  CHECK(shapes[3] == Shape{2});
}

TEST_CASE("infer_shapes names the offending layer") {
  nn::ModelSpec spec;
  spec.in_channels = 1;
  spec.in_height = 4;
  spec.in_width = 4;
  spec.layers = {nn::Conv{4, 3, 1, 0}, nn::Conv{4, 5, 1, 0}};  // 5 > 2+0
  try {
    nn::infer_shapes(spec);
    FAIL("expected IncompatibleLayer");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IncompatibleLayer);
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }

  nn::ModelSpec dense_first;
  dense_first.in_channels = 1;
  dense_first.in_height = 4;
  dense_first.in_width = 4;
  dense_first.layers = {nn::Dense{4}};
  CHECK_THROWS_AS(nn::infer_shapes(dense_first), Error);
}

TEST_CASE("presets build the documented stacks") {
  auto custom = nn::custom7_spec(1, 16, 2);
  int convs = 0, denses = 0;
  for (const auto& l : custom.layers) {
    convs += std::holds_alternative<nn::Conv>(l);
    denses += std::holds_alternative<nn::Dense>(l);
  }
  CHECK(convs == 3);
  CHECK(denses == 3);
  CHECK(std::get<nn::Dense>(custom.layers.back()).units == 2);
  CHECK_NOTHROW(nn::build_model(custom, 1));

  auto alt = nn::alt6_spec(1, 32, 2);
  convs = denses = 0;
  for (const auto& l : alt.layers) {
    convs += std::holds_alternative<nn::Conv>(l);
    denses += std::holds_alternative<nn::Dense>(l);
  }
  CHECK(convs == 4);
  CHECK(denses == 2);
  CHECK_NOTHROW(nn::build_model(alt, 1));

  CHECK_THROWS_AS(nn::preset_spec("resnet50", 1, 16, 2), Error);
}

TEST_CASE("build_model is deterministic and fan-in bounded") {
  auto spec = nn::custom7_spec(1, 16, 2);
  auto a = nn::build_model(spec, 42);
  auto b = nn::build_model(spec, 42);
  REQUIRE(a.params.size() == b.params.size());
  for (size_t i = 0; i < a.params.size(); ++i) {
    auto av = a.params[i].tensor.values();
    auto bv = b.params[i].tensor.values();
    REQUIRE(av.size() == bv.size());
    for (size_t j = 0; j < av.size(); ++j) CHECK(av[j] == bv[j]);
  }
  auto c = nn::build_model(spec, 43);
  bool differs = false;
  for (size_t j = 0; j < a.params[0].tensor.values().size(); ++j)
    differs = differs || a.params[0].tensor.values()[j] !=
                             c.params[0].tensor.values()[j];
  CHECK(differs);

  // kernel of the first conv: fan_in = 1*3*3 = 9 -> |w| <= sqrt(6/9)
  double bound = std::sqrt(6.0 / 9.0);
  for (double w : a.params[0].tensor.values()) {
    CHECK(std::abs(w) <= bound);
  }
  // biases start at zero
  for (double v : a.params[1].tensor.values()) CHECK(v == 0.0);
}

TEST_CASE("parameter count matches the closed form") {
  auto spec = nn::custom7_spec(1, 16, 2);
  auto model = nn::build_model(spec, 7);
  // conv: F*C*k*k + F ; dense: in*out + out, tracked independently
  int64_t expected = 0;
  int64_t c = 1, h = 16, w = 16;
  int64_t flat = 0;
  for (const auto& layer : spec.layers) {
    if (auto* conv = std::get_if<nn::Conv>(&layer)) {
      expected += conv->filters * c * conv->kernel * conv->kernel + conv->filters;
      c = conv->filters;
      h = (h + 2 * conv->padding - conv->kernel) / conv->stride + 1;
      w = (w + 2 * conv->padding - conv->kernel) / conv->stride + 1;
    } else if (auto* pool = std::get_if<nn::MaxPool>(&layer)) {
      h = (h - pool->kernel) / pool->stride + 1;
      w = (w - pool->kernel) / pool->stride + 1;
    } else if (std::get_if<nn::Flatten>(&layer)) {
      flat = c * h * w;
    } else if (auto* dense = std::get_if<nn::Dense>(&layer)) {
      expected += flat * dense->units + dense->units;
      flat = dense->units;
    }
  }
  CHECK(model.param_count() == expected);
  CHECK(expected == 64578);
}

TEST_CASE("forward: zero parameters give uniform probabilities") {
  auto spec = nn::custom7_spec(1, 16, 2);
  auto model = nn::build_model(spec, 3);
  for (auto& p : model.params)
    for (auto& v : p.tensor.mutable_values()) v = 0.0;

  Tensor batch = random_batch({2, 1, 16, 16}, 5);
  Tensor logits = nn::forward(model, batch);
  for (double v : logits.values()) CHECK(v == 0.0);

  auto pred = nn::predict_proba(
      model, Tensor({1, 16, 16}, {random_batch({1, 16, 16}, 6).values().begin(),
                                  random_batch({1, 16, 16}, 6).values().end()}));
  CHECK(pred.probs[0] == 0.5);
  CHECK(pred.probs[1] == 0.5);
}

TEST_CASE("forward is pure and shape-checked") {
  auto spec = nn::custom7_spec(1, 16, 2);
  auto model = nn::build_model(spec, 11);
  Tensor batch = random_batch({3, 1, 16, 16}, 12);
  auto a = nn::forward(model, batch);
  auto b = nn::forward(model, batch);
  for (size_t i = 0; i < a.values().size(); ++i)
    CHECK(a.values()[i] == b.values()[i]);

  CHECK_THROWS_AS(nn::forward(model, random_batch({3, 1, 8, 8}, 13)), Error);
  CHECK_THROWS_AS(nn::forward(model, random_batch({3, 2, 16, 16}, 13)), Error);
}

TEST_CASE("micro model output matches hand arithmetic") {
  auto model = nn::build_model(micro_spec(), 1);
  // overwrite with fixed parameters
  std::vector<double> kernel = {1.0, -1.0, 0.5, 0.25};
  std::vector<double> kbias = {0.1};
  std::vector<double> weight = {0.2, -0.1, 0.3, 0.0,
                                -0.2, 0.5, 0.1, 0.4};  // 4x2 row-major
  std::vector<double> dbias = {0.05, -0.05};
  std::copy(kernel.begin(), kernel.end(),
            model.params[0].tensor.mutable_values().begin());
  std::copy(kbias.begin(), kbias.end(),
            model.params[1].tensor.mutable_values().begin());
  std::copy(weight.begin(), weight.end(),
            model.params[2].tensor.mutable_values().begin());
  std::copy(dbias.begin(), dbias.end(),
            model.params[3].tensor.mutable_values().begin());

  std::vector<double> image = {0.1, 0.2, 0.3, 0.4, 0.5,
                               0.6, 0.7, 0.8, 0.9};

  // oracle: plain scalar arithmetic, no tensor machinery
  double conv[4];
  int oi = 0;
  for (int oy = 0; oy < 2; ++oy)
    for (int ox = 0; ox < 2; ++ox) {
      double acc = kbias[0];
      for (int ky = 0; ky < 2; ++ky)
        for (int kx = 0; kx < 2; ++kx)
          acc += image[(oy + ky) * 3 + (ox + kx)] * kernel[ky * 2 + kx];
      conv[oi++] = acc;
    }
  double expected[2];
  for (int j = 0; j < 2; ++j) {
    double acc = dbias[j];
    for (int i = 0; i < 4; ++i) acc += conv[i] * weight[i * 2 + j];
    expected[j] = acc;
  }

  auto pred = nn::predict_proba(model, Tensor({1, 3, 3}, image));
  CHECK(pred.logits[0] == Catch::Approx(expected[0]).margin(1e-12));
  CHECK(pred.logits[1] == Catch::Approx(expected[1]).margin(1e-12));
}

TEST_CASE("predict_proba invariants") {
  auto spec = nn::custom7_spec(1, 16, 2);
  auto model = nn::build_model(spec, 21);
  Rng rng(22);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> v(16 * 16);
    for (auto& x : v) x = rng.uniform();
    auto pred = nn::predict_proba(model, Tensor({1, 16, 16}, v));
    double s = pred.probs[0] + pred.probs[1];
    CHECK(s == Catch::Approx(1.0).margin(1e-9));
    int logit_argmax = pred.logits[1] > pred.logits[0] ? 1 : 0;
    CHECK(pred.argmax() == logit_argmax);
  }

  // argmax invariant to adding a constant to every logit (shift final bias)
  std::vector<double> img(16 * 16);
  for (auto& x : img) x = rng.uniform();
  auto before = nn::predict_proba(model, Tensor({1, 16, 16}, img));
  Tensor* bias = model.find_param("layer14.bias");
  REQUIRE(bias != nullptr);
  for (auto& b : bias->mutable_values()) b += 3.7;
  auto after = nn::predict_proba(model, Tensor({1, 16, 16}, img));
  CHECK(before.argmax() == after.argmax());
}

TEST_CASE("infer_shapes agrees with actual forward over random specs") {
  Rng rng(31);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    nn::ModelSpec spec;
    spec.in_channels = 1 + static_cast<int64_t>(rng.uniform_int(2));
    spec.in_height = spec.in_width = 6 + static_cast<int64_t>(rng.uniform_int(7));
    spec.num_classes = 2 + static_cast<int64_t>(rng.uniform_int(2));
    int64_t side = spec.in_height;
    int convs = 1 + static_cast<int>(rng.uniform_int(3));
    for (int i = 0; i < convs; ++i) {
      int64_t k = 1 + static_cast<int64_t>(rng.uniform_int(3));
      int64_t p = static_cast<int64_t>(rng.uniform_int(2));
      int64_t s = 1 + static_cast<int64_t>(rng.uniform_int(2));
      if (k > side + 2 * p) continue;
      spec.layers.push_back(
          nn::Conv{1 + static_cast<int64_t>(rng.uniform_int(6)), k, s, p});
      side = (side + 2 * p - k) / s + 1;
      if (rng.uniform() < 0.5)
        spec.layers.push_back(nn::Activation{nn::ActKind::Relu});
      if (side >= 2 && rng.uniform() < 0.4) {
        spec.layers.push_back(nn::MaxPool{2, 2});
        side = (side - 2) / 2 + 1;
      }
    }
    spec.layers.push_back(nn::Flatten{});
    if (rng.uniform() < 0.5) {
      spec.layers.push_back(
          nn::Dense{1 + static_cast<int64_t>(rng.uniform_int(16))});
      spec.layers.push_back(nn::Activation{nn::ActKind::Sigmoid});
    }
    spec.layers.push_back(nn::Dense{spec.num_classes});

    auto shapes = nn::infer_shapes(spec);
    auto model = nn::build_model(spec, rng.next_u64());
    Tensor batch =
        random_batch({2, spec.in_channels, spec.in_height, spec.in_width},
                     rng.next_u64());
    Tensor logits = nn::forward(model, batch);
    REQUIRE(shapes.back().size() == 1);
    CHECK(logits.shape() == Shape{2, shapes.back()[0]});

    // intermediate check: run layers one by one and compare each shape
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("checkpoint round trip is lossless") {
  TempDir dir;
  auto spec = nn::custom7_spec(1, 16, 2);
  auto model = nn::build_model(spec, 77);
  model.class_names = {"fake", "real"};
  data::NormStats stats;
  stats.mean = {0.5};
  stats.std = {0.25};
  model.norm_stats = stats;

  auto path = dir / "model.awb";
  nn::save_checkpoint(model, path);
  auto loaded = nn::load_checkpoint(path);

  CHECK(loaded.class_names == model.class_names);
  REQUIRE(loaded.norm_stats.has_value());
  CHECK(loaded.norm_stats->mean == stats.mean);
  CHECK(loaded.norm_stats->std == stats.std);
  REQUIRE(loaded.params.size() == model.params.size());
  CHECK(loaded.param_count() == model.param_count());
  for (size_t i = 0; i < loaded.params.size(); ++i) {
    CHECK(loaded.params[i].name == model.params[i].name);
    auto a = loaded.params[i].tensor.values();
    auto b = model.params[i].tensor.values();
    REQUIRE(a.size() == b.size());
    for (size_t j = 0; j < a.size(); ++j) CHECK(a[j] == b[j]);
  }

  Tensor batch = random_batch({2, 1, 16, 16}, 78);
  auto before = nn::forward(model, batch);
  auto after = nn::forward(loaded, batch);
  for (size_t i = 0; i < before.values().size(); ++i)
    CHECK(before.values()[i] == after.values()[i]);

  // save -> load -> save reproduces the same bytes
  auto path2 = dir / "model2.awb";
  nn::save_checkpoint(loaded, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)),
                 std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)),
                 std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
}

TEST_CASE("checkpoint rejects corruption") {
  TempDir dir;
  auto model = nn::build_model(micro_spec(), 5);
  model.class_names = {"fake", "real"};
  auto path = dir / "m.awb";
  nn::save_checkpoint(model, path);

  auto clobber = [&](std::streamoff pos, char byte, const std::string& name) {
    auto p = dir / name;
    std::filesystem::copy_file(path, p);
    std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(pos);
    f.put(byte);
    return p;
  };

  try {
    nn::load_checkpoint(clobber(0, 'X', "magic.awb"));
    FAIL("expected BadMagic");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BadMagic);
  }

  try {
    nn::load_checkpoint(clobber(4, 9, "version.awb"));
    FAIL("expected UnsupportedVersion");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnsupportedVersion);
  }

  // truncate the payload
  auto trunc = dir / "trunc.awb";
  std::filesystem::copy_file(path, trunc);
  std::filesystem::resize_file(trunc,
                               std::filesystem::file_size(path) - 12);
  try {
    nn::load_checkpoint(trunc);
    FAIL("expected ChecksumMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ChecksumMismatch);
  }

  // flip one payload byte
  auto fsize = static_cast<std::streamoff>(std::filesystem::file_size(path));
  try {
    nn::load_checkpoint(clobber(fsize - 20, '\x42', "flip.awb"));
    FAIL("expected ChecksumMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ChecksumMismatch);
  }
}
