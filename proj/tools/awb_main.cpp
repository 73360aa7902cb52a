// awb: train small real/fake CNN classifiers, attack them with gradient-sign
// perturbations, and measure the damage.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "awb/awb.hpp"

namespace {

int exit_code_for(const awb::Error& e) {
  return e.kind() == awb::ErrorKind::DivergenceDetected ? 3 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial robustness workbench for deepfake-style "
               "real/fake image classifiers"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config file (one table per command)");

  awb::cli::CommonArgs common;
  common.workers = awb::default_workers();
  app.add_option("--seed", common.seed, "master RNG seed")->capture_default_str();
  app.add_option("--out", common.out, "output directory")->capture_default_str();
  app.add_option("--workers", common.workers,
                 "worker threads for data loading and per-image attacks")
      ->capture_default_str();

  // prepare
  awb::cli::PrepareArgs prepare_args;
  auto* prepare = app.add_subcommand(
      "prepare", "scan a class-directory dataset, split it, compute stats");
  prepare->add_option("--data", prepare_args.data_root,
                      "dataset root (<root>/<class>/*.png|ppm|pgm)")
      ->required();
  prepare
      ->add_option("--ratios", prepare_args.ratios,
                   "train/val/test ratios (sum to 1)")
      ->expected(3)
      ->capture_default_str();

  // train
  awb::cli::TrainArgs train_args;
  auto* trainc = app.add_subcommand("train", "train a CNN on the train split");
  trainc->add_option("--manifest", train_args.manifest, "manifest.csv path")
      ->capture_default_str();
  trainc->add_option("--stats", train_args.stats, "norm_stats.json path")
      ->capture_default_str();
  trainc->add_option("--preset", train_args.preset, "custom7 or alt6")
      ->capture_default_str();
  trainc->add_option("--size", train_args.input_side, "model input side")
      ->capture_default_str();
  trainc->add_option("--epochs", train_args.config.epochs, "training epochs")
      ->capture_default_str();
  trainc
      ->add_option("--batch-size", train_args.config.batch_size,
                   "mini-batch size")
      ->capture_default_str();
  trainc->add_option("--lr", train_args.config.learning_rate, "learning rate")
      ->capture_default_str();
  trainc->add_option("--momentum", train_args.config.momentum, "SGD momentum")
      ->capture_default_str();
  trainc->add_flag("--no-shuffle", [&](size_t) { train_args.config.shuffle = false; },
                   "disable per-epoch shuffling");

  // eval
  awb::cli::EvalArgs eval_args;
  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  evalc->add_option("--checkpoint", eval_args.checkpoint, "checkpoint path")
      ->capture_default_str();
  evalc->add_option("--manifest", eval_args.manifest, "manifest.csv path")
      ->capture_default_str();
  evalc->add_option("--split", eval_args.split, "train, val, or test")
      ->capture_default_str();
  evalc
      ->add_option("--threshold", eval_args.threshold,
                   "binary decision threshold on p(real)")
      ->capture_default_str();

  // attack
  awb::cli::AttackArgs attack_args;
  std::string attack_kind = "pgd";
  int target_class = -1;
  auto* attackc =
      app.add_subcommand("attack", "attack the test split and report damage");
  attackc->add_option("--checkpoint", attack_args.checkpoint, "checkpoint path")
      ->capture_default_str();
  attackc->add_option("--manifest", attack_args.manifest, "manifest.csv path")
      ->capture_default_str();
  attackc->add_option("--split", attack_args.split, "must be test")
      ->capture_default_str();
  attackc->add_option("--kind", attack_kind, "fgsm, pgd, or targeted")
      ->capture_default_str();
  attackc
      ->add_option("--epsilon", attack_args.config.epsilon,
                   "L-inf budget in [0,1] pixel units")
      ->capture_default_str();
  attackc->add_option("--steps", attack_args.config.steps, "iterations (pgd)")
      ->capture_default_str();
  attackc
      ->add_option("--step-size", attack_args.config.step_size,
                   "per-iteration magnitude (pgd)")
      ->capture_default_str();
  attackc->add_option("--target", target_class,
                      "target class index (targeted attacks)");
  attackc
      ->add_option("--budgets", attack_args.budgets,
                   "sweep budgets in 1/255 pixel steps, ascending from 0")
      ->capture_default_str();

  // video
  awb::cli::VideoArgs video_args;
  auto* videoc = app.add_subcommand(
      "video", "frame-by-frame verdict for a directory of stills");
  videoc->add_option("--checkpoint", video_args.checkpoint, "checkpoint path")
      ->capture_default_str();
  videoc->add_option("--frames", video_args.frames_dir, "frame directory")
      ->required();
  videoc->add_option("--rule", video_args.rule, "any_fake or fraction")
      ->capture_default_str();
  videoc
      ->add_option("--threshold", video_args.threshold,
                   "p(real) below this marks a frame fake")
      ->capture_default_str();
  videoc
      ->add_option("--fraction-threshold", video_args.fraction_threshold,
                   "fake-frame share that flips the fraction-rule verdict")
      ->capture_default_str();

  // gan
  awb::cli::GanArgs gan_args;
  std::string dist = "gaussian1d";
  auto* ganc = app.add_subcommand(
      "gan", "train a small GAN on a synthetic distribution");
  ganc->add_option("--dist", dist, "gaussian1d or mixture2d")
      ->capture_default_str();
  ganc->add_option("--mu", gan_args.config.data_source.mu,
                   "gaussian1d mean")
      ->capture_default_str();
  ganc->add_option("--sigma", gan_args.config.data_source.sigma,
                   "gaussian1d stddev")
      ->capture_default_str();
  ganc->add_option("--latent-dim", gan_args.config.latent_dim, "latent size")
      ->capture_default_str();
  ganc->add_option("--steps", gan_args.config.steps, "training steps")
      ->capture_default_str();
  ganc->add_option("--batch-size", gan_args.config.batch_size, "batch size")
      ->capture_default_str();
  ganc->add_option("--lr", gan_args.config.learning_rate, "learning rate")
      ->capture_default_str();
  ganc->add_option("--g-layers", gan_args.config.generator_layers,
                   "generator hidden widths")
      ->capture_default_str();
  ganc->add_option("--d-layers", gan_args.config.discriminator_layers,
                   "discriminator hidden widths")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) {
      awb::cli::run_prepare(common, prepare_args);
    } else if (trainc->parsed()) {
      train_args.config.seed = common.seed;
      awb::cli::run_train(common, train_args);
    } else if (evalc->parsed()) {
      awb::cli::run_eval(common, eval_args);
    } else if (attackc->parsed()) {
      attack_args.config.kind = awb::attack::parse_kind(attack_kind);
      if (target_class >= 0) attack_args.config.target_class = target_class;
      awb::cli::run_attack(common, attack_args);
    } else if (videoc->parsed()) {
      awb::cli::run_video(common, video_args);
    } else if (ganc->parsed()) {
      gan_args.config.data_source.kind =
          dist == "mixture2d" ? awb::gan::DistKind::Mixture2d
                              : awb::gan::DistKind::Gaussian1d;
      awb::cli::run_gan(common, gan_args);
    }
  } catch (const awb::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
