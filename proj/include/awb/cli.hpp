#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "awb/attack.hpp"
#include "awb/checkpoint.hpp"
#include "awb/data.hpp"
#include "awb/error.hpp"
#include "awb/gan.hpp"
#include "awb/nn.hpp"
#include "awb/parallel.hpp"
#include "awb/reports.hpp"
#include "awb/train.hpp"
#include "awb/video.hpp"

namespace awb::cli {

namespace fs = std::filesystem;

/// Flags shared by every subcommand.
struct CommonArgs {
  uint64_t seed = 42;
  fs::path out = ".";
  size_t workers = 1;
};

inline void ensure_out_dir(const CommonArgs& common) {
  std::error_code ec;
  fs::create_directories(common.out, ec);
  if (ec)
    throw Error(ErrorKind::IoError,
                "cannot create output directory " + common.out.string() +
                    ": " + ec.message());
}

/// Recovers class names from manifest sample paths (the parent directory of
/// each file is its class).
inline std::vector<std::string> class_names_from_manifest(
    const data::DatasetManifest& manifest) {
  int max_label = 0;
  for (const auto& s : manifest.samples) max_label = std::max(max_label, s.label);
  std::vector<std::string> names(max_label + 1);
  for (const auto& s : manifest.samples) {
    if (names[s.label].empty()) {
      auto parent = fs::path(s.path).parent_path().filename().string();
      names[s.label] = parent.empty() ? "class" + std::to_string(s.label)
                                      : parent;
    }
  }
  for (int i = 0; i <= max_label; ++i)
    if (names[i].empty()) names[i] = "class" + std::to_string(i);
  return names;
}

// ---------------------------------------------------------------------------
// prepare

struct PrepareArgs {
  fs::path data_root;
  std::array<double, 3> ratios = {0.6, 0.2, 0.2};
};

/// Scans the class-directory tree, assigns stratified splits, and writes
/// manifest.csv plus train-split norm_stats.json.
inline void run_prepare(const CommonArgs& common, const PrepareArgs& args) {
  ensure_out_dir(common);
  data::DatasetManifest manifest = data::scan_dataset(args.data_root);
  manifest = data::split_dataset(manifest, args.ratios, common.seed);
  data::NormStats stats = data::compute_stats(manifest, data::Split::Train);
  data::write_manifest_csv(manifest, common.out / "manifest.csv");
  io::write_json_file(common.out / "norm_stats.json",
                      io::norm_stats_to_json(stats));
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  fs::path manifest = "manifest.csv";
  fs::path stats = "norm_stats.json";
  std::string preset = "custom7";
  int64_t input_side = 224;
  train::TrainConfig config;
};

/// Trains the preset on the manifest's train split, validating per epoch.
/// Writes checkpoint.awb, history.csv, and history.json; on divergence the
/// partial history is persisted before the error surfaces.
inline void run_train(const CommonArgs& common, const TrainArgs& args) {
  ensure_out_dir(common);
  data::DatasetManifest manifest = data::read_manifest_csv(args.manifest);
  manifest.class_names = class_names_from_manifest(manifest);
  data::NormStats stats =
      io::norm_stats_from_json(io::read_json_file(args.stats));

  train::ImageSet train_set = train::load_images(
      manifest, data::Split::Train, args.input_side, common.workers);
  train::ImageSet val_set = train::load_images(manifest, data::Split::Val,
                                               args.input_side, common.workers);
  if (train_set.empty())
    throw Error(ErrorKind::EmptySplit, "manifest has no train samples");

  nn::ModelSpec spec = nn::preset_spec(
      args.preset, static_cast<int64_t>(stats.mean.size()), args.input_side,
      static_cast<int64_t>(manifest.class_names.size()));
  train::TrainConfig config = args.config;
  config.seed = common.seed;
  nn::Model model = nn::build_model(spec, common.seed);
  model.class_names = manifest.class_names;
  model.norm_stats = stats;

  auto persist = [&](const train::History& history) {
    nn::save_checkpoint(model, common.out / "checkpoint.awb");
    io::write_text_file(common.out / "history.csv",
                        io::history_to_csv(history));
    io::write_json_file(common.out / "history.json",
                        io::history_to_json(history));
  };
  try {
    train::History history = train::train(model, train_set, val_set, config);
    persist(history);
  } catch (const train::DivergenceError& e) {
    persist(e.partial_history);
    throw;
  }
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  fs::path checkpoint = "checkpoint.awb";
  fs::path manifest = "manifest.csv";
  std::string split = "test";
  double threshold = 0.5;
};

inline void run_eval(const CommonArgs& common, const EvalArgs& args) {
  ensure_out_dir(common);
  nn::Model model = nn::load_checkpoint(args.checkpoint);
  data::DatasetManifest manifest = data::read_manifest_csv(args.manifest);
  data::Split split = data::parse_split(args.split);
  train::ImageSet images = train::load_images(manifest, split,
                                              model.spec.in_height,
                                              common.workers);
  if (images.empty())
    throw Error(ErrorKind::EmptySplit,
                "split '" + args.split + "' contains no samples");

  train::Metrics metrics = train::evaluate(model, images, args.threshold);
  io::json j = {{"split", args.split},
                {"count", static_cast<int64_t>(images.size())},
                {"threshold", args.threshold}};
  j.update(io::metrics_to_json(metrics));
  io::write_json_file(common.out / "metrics.json", j);
  if (model.spec.num_classes == 2) {
    train::RocResult roc = train::roc_for(model, images, args.threshold);
    io::write_text_file(common.out / "roc.csv", io::roc_to_csv(roc));
  }
}

// ---------------------------------------------------------------------------
// attack

struct AttackArgs {
  fs::path checkpoint = "checkpoint.awb";
  fs::path manifest = "manifest.csv";
  std::string split = "test";
  attack::AttackConfig config;
  std::vector<double> budgets = {0, 5, 10, 15, 20, 25};
};

/// Runs the robustness evaluation and the Table-I-style budget sweep on the
/// test split, writing robustness.json and sweep.csv.
inline void run_attack(const CommonArgs& common, const AttackArgs& args) {
  ensure_out_dir(common);
  if (args.split != "test")
    throw Error(ErrorKind::WrongSplit,
                "attacks run on the test split only; got '" + args.split + "'");
  nn::Model model = nn::load_checkpoint(args.checkpoint);
  data::DatasetManifest manifest = data::read_manifest_csv(args.manifest);
  train::ImageSet images = train::load_images(
      manifest, data::Split::Test, model.spec.in_height, common.workers);
  if (images.empty())
    throw Error(ErrorKind::EmptySplit, "manifest has no test samples");

  attack::AttackConfig config = args.config;
  config.seed = common.seed;
  attack::RobustnessReport report = attack::evaluate_robustness(
      model, images, data::Split::Test, config, common.workers);
  io::write_json_file(common.out / "robustness.json",
                      io::robustness_to_json(report));

  attack::Kind sweep_kind = config.kind == attack::Kind::Targeted
                                ? attack::Kind::Pgd
                                : config.kind;
  attack::SweepReport sweep = attack::delta_sweep(model, images, args.budgets,
                                                  sweep_kind, common.workers);
  io::write_text_file(common.out / "sweep.csv", io::sweep_to_csv(sweep));
}

// ---------------------------------------------------------------------------
// video

struct VideoArgs {
  fs::path checkpoint = "checkpoint.awb";
  fs::path frames_dir;
  std::string rule = "any_fake";
  double threshold = 0.5;
  double fraction_threshold = 0.5;
};

inline void run_video(const CommonArgs& common, const VideoArgs& args) {
  ensure_out_dir(common);
  nn::Model model = nn::load_checkpoint(args.checkpoint);
  video::VideoVerdict verdict = video::classify_frames(
      model, args.frames_dir, video::parse_rule(args.rule), args.threshold,
      args.fraction_threshold, common.workers);
  io::write_json_file(common.out / "verdict.json", io::verdict_to_json(verdict));
}

// ---------------------------------------------------------------------------
// gan

struct GanArgs {
  gan::GanConfig config;
};

/// Runs the adversarial training loop and writes gan_history.csv plus the
/// generator checkpoint (AWB1 container).
inline void run_gan(const CommonArgs& common, const GanArgs& args) {
  ensure_out_dir(common);
  gan::GanConfig config = args.config;
  config.seed = common.seed;
  gan::GanResult result = gan::train_gan(config);

  io::write_text_file(common.out / "gan_history.csv",
                      io::gan_history_to_csv(result.history));

  io::json meta;
  meta["spec"] = {{"kind", "gan_generator"},
                  {"latent_dim", result.generator.in_dim},
                  {"hidden", result.generator.hidden},
                  {"out_dim", result.generator.out_dim}};
  meta["class_names"] = io::json::array();
  meta["norm_stats"] = nullptr;
  std::vector<io::NamedBuffer> buffers;
  for (const auto& p : result.generator.params)
    buffers.push_back({p.name, p.tensor.shape(),
                       {p.tensor.values().begin(), p.tensor.values().end()}});
  io::write_container(common.out / "generator.awb", std::move(meta), buffers);
}

/// Reloads a generator written by run_gan.
inline gan::Mlp load_generator(const fs::path& path) {
  io::Container c = io::read_container(path);
  gan::Mlp g;
  try {
    const auto& spec = c.header.at("spec");
    if (spec.at("kind").get<std::string>() != "gan_generator")
      throw Error(ErrorKind::DecodeError,
                  path.string() + " is not a generator checkpoint");
    g.in_dim = spec.at("latent_dim").get<int64_t>();
    g.out_dim = spec.at("out_dim").get<int64_t>();
    g.hidden = spec.at("hidden").get<std::vector<int64_t>>();
  } catch (const io::json::exception& e) {
    throw Error(ErrorKind::DecodeError,
                path.string() + ": malformed generator header: " + e.what());
  }
  gan::Mlp fresh = gan::build_mlp(g.in_dim, g.hidden, g.out_dim, 0);
  if (fresh.params.size() != c.buffers.size())
    throw Error(ErrorKind::DecodeError,
                path.string() + ": parameter count does not match header");
  for (size_t i = 0; i < c.buffers.size(); ++i)
    g.params.push_back(
        {c.buffers[i].name,
         Tensor(c.buffers[i].shape, std::move(c.buffers[i].data), true)});
  return g;
}

}  // namespace awb::cli
