#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "awb/data.hpp"
#include "awb/error.hpp"
#include "awb/nn.hpp"
#include "awb/parallel.hpp"

namespace awb::video {

enum class Rule { AnyFake, Fraction };

inline const char* rule_name(Rule r) {
  return r == Rule::AnyFake ? "any_fake" : "fraction";
}

inline Rule parse_rule(const std::string& name) {
  if (name == "any_fake") return Rule::AnyFake;
  if (name == "fraction") return Rule::Fraction;
  throw Error(ErrorKind::InvalidConfig, "unknown video rule '" + name + "'");
}

/// Frame-by-frame decision for a video presented as a directory of stills.
struct VideoVerdict {
  std::vector<std::string> frames;     // lexicographic order
  std::vector<double> frame_scores;    // p(real) per frame
  Rule rule = Rule::AnyFake;
  double threshold = 0.5;              // p(real) below this marks a fake frame
  double fraction_threshold = 0.5;     // fraction rule only
  int64_t fake_frame_count = 0;
  bool is_fake = false;

  const char* verdict() const { return is_fake ? "fake" : "real"; }
};

/// Applies the whole-video rule to per-frame p(real) scores: any_fake flags
/// the video as fake if any frame scores below the threshold; fraction flags
/// it when the fake-frame share reaches fraction_threshold.
inline VideoVerdict apply_rule(std::vector<double> frame_scores, Rule rule,
                               double threshold, double fraction_threshold) {
  if (frame_scores.empty())
    throw Error(ErrorKind::NoFrames, "no frame scores to judge");
  VideoVerdict v;
  v.frame_scores = std::move(frame_scores);
  v.rule = rule;
  v.threshold = threshold;
  v.fraction_threshold = fraction_threshold;
  for (double s : v.frame_scores) v.fake_frame_count += (s < threshold);
  if (rule == Rule::AnyFake) {
    v.is_fake = v.fake_frame_count > 0;
  } else {
    double fraction = static_cast<double>(v.fake_frame_count) /
                      static_cast<double>(v.frame_scores.size());
    v.is_fake = fraction >= fraction_threshold;
  }
  return v;
}

/// Scores every decodable frame of the directory (lexicographic filename
/// order) with a binary model and applies the rule.
inline VideoVerdict classify_frames(const nn::Model& model,
                                    const std::filesystem::path& frames_dir,
                                    Rule rule, double threshold,
                                    double fraction_threshold,
                                    size_t workers = 1) {
  if (model.spec.num_classes != 2)
    throw Error(ErrorKind::InvalidConfig,
                "video verdicts need a binary (real/fake) model");
  std::error_code ec;
  if (!std::filesystem::is_directory(frames_dir, ec))
    throw Error(ErrorKind::UnreadableDirectory,
                frames_dir.string() + " is not a readable directory");
  std::vector<std::string> frames;
  for (const auto& entry : std::filesystem::directory_iterator(frames_dir, ec))
    if (entry.is_regular_file() && data::has_image_extension(entry.path()))
      frames.push_back(entry.path().string());
  std::sort(frames.begin(), frames.end());
  if (frames.empty())
    throw Error(ErrorKind::NoFrames,
                frames_dir.string() + " contains no decodable frames");

  std::vector<double> scores(frames.size());
  parallel_for(frames.size(), workers, [&](size_t i) {
    Tensor raw = data::load_image(frames[i]);
    Tensor image = data::resize(raw, model.spec.in_height);
    scores[i] = nn::predict_proba(model, image).probs[1];
  });
  VideoVerdict v = apply_rule(std::move(scores), rule, threshold,
                              fraction_threshold);
  v.frames = std::move(frames);
  return v;
}

}  // namespace awb::video
